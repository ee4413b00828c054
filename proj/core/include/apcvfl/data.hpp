#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "apcvfl/nn.hpp"
#include "apcvfl/tensor.hpp"

namespace apcvfl {

using IdSet = std::unordered_set<std::string>;

/// A participant's table: opaque sample IDs, features, and (on the active
/// participant only) integer class labels 0..C-1.
struct FeatureMatrix {
  std::vector<std::string> ids;
  Tensor2D features;
  std::vector<std::string> feature_names;
  std::optional<std::vector<int>> labels;

  std::size_t rows() const noexcept { return features.rows(); }
  std::size_t cols() const noexcept { return features.cols(); }
  bool has_labels() const noexcept { return labels.has_value(); }
  /// Number of classes implied by the labels (max + 1).
  int class_count() const;

  /// Throws ContractError when the invariants (unique IDs, matching lengths)
  /// do not hold.
  void validate() const;

  std::unordered_map<std::string, std::size_t> id_index() const;
  FeatureMatrix subset(std::span<const std::size_t> rows) const;
  /// Row indices whose ID is (or is not) in `ids`, in table order.
  std::vector<std::size_t> rows_in(const IdSet& ids) const;
  std::vector<std::size_t> rows_not_in(const IdSet& ids) const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Header row required; `id_column` holds opaque IDs, `label_column` (when
/// given) integer classes; every other column must be numeric.
FeatureMatrix parse_csv(std::istream& in, const std::string& id_column = "id",
                        const std::optional<std::string>& label_column = std::nullopt,
                        const std::string& source_name = "<stream>");

FeatureMatrix load_csv(const std::filesystem::path& path, const std::string& id_column = "id",
                       const std::optional<std::string>& label_column = std::nullopt);

void write_csv(std::ostream& out, const FeatureMatrix& m);

// ---------------------------------------------------------------------------
// Standardisation
// ---------------------------------------------------------------------------

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; 0 marks a constant column
};

ColumnStats fit_column_stats(const Tensor2D& train);
/// z-score with the given stats; zero-variance columns map to 0.
Tensor2D apply_column_stats(const ColumnStats& stats, const Tensor2D& x);

struct StandardizeResult {
  FeatureMatrix train;
  std::vector<FeatureMatrix> others;
  ColumnStats stats;
};

/// Fits statistics on `train` only and applies them to train and `others`.
StandardizeResult standardize(const FeatureMatrix& train, const std::vector<FeatureMatrix>& others);

// ---------------------------------------------------------------------------
// Scenarios and vertical partitioning
// ---------------------------------------------------------------------------

/// One cell of the experiment grid.
struct ScenarioConfig {
  std::string dataset_id;
  std::string csv_path;  // relative paths resolve against the data directory
  std::string id_column = "id";
  std::string label_column = "label";

  std::vector<std::string> active_features;
  std::size_t aligned_count = 0;
  std::size_t active_rows = 0;  // rows drawn for the active participant; 0 = all
  double val_fraction = 0.10;
  std::size_t test_count = 0;  // held-out aligned rows for the aligned-only methods

  double lambda = 0.01;
  LossKind distill_loss = LossKind::Mse;
  std::size_t batch_size = 128;  // encoder and split-model training
  std::size_t classifier_batch_size = 32;
  std::size_t classifier_epochs = 200;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t cv_folds = 10;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::uint64_t partition_seed = 0;

  void validate() const;
  TrainConfig encoder_train_config(std::uint64_t seed) const;

  std::string to_json() const;
  static ScenarioConfig from_json(const std::string& text);
  static ScenarioConfig load(const std::filesystem::path& path);
  /// FNV-1a of the canonical JSON form; both participants must agree on it.
  std::uint64_t hash() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct VerticalSplit {
  FeatureMatrix active;   // listed features + labels
  FeatureMatrix passive;  // complementary features, no labels
  IdSet aligned_ids;
  IdSet val_ids;
  IdSet test_ids;
  std::vector<std::string> aligned_order;  // aligned IDs in active table order
};

/// Suffix given to passive-only IDs so that intersecting the two ID lists
/// yields exactly the aligned set.
inline constexpr const char* kPassiveOnlySuffix = "#p";

/// Partitions `data` between the two participants. All random draws derive
/// from cfg.partition_seed; the validation IDs and the active row sample do
/// not depend on cfg.aligned_count, and aligned sets are nested across counts.
VerticalSplit vertical_split(const FeatureMatrix& data, const ScenarioConfig& cfg);

/// Plain intersection of two ID lists, in the order of `first`.
std::vector<std::string> intersect_ids(const std::vector<std::string>& first,
                                       const std::vector<std::string>& second);

// ---------------------------------------------------------------------------
// Registry of datasets and the scenario grid
// ---------------------------------------------------------------------------

struct DatasetEntry {
  ScenarioConfig base;  // everything except active_features / aligned_count
  std::vector<std::size_t> aligned_counts;
  std::vector<std::vector<std::string>> active_feature_sets;
};

class ScenarioRegistry {
 public:
  static ScenarioRegistry from_json(const std::string& text);
  static ScenarioRegistry load(const std::filesystem::path& path);

  const DatasetEntry& entry(const std::string& dataset_id) const;
  std::vector<std::string> dataset_ids() const;

 private:
  std::map<std::string, DatasetEntry> entries_;
};

/// Every (aligned count x active feature set) cell of a dataset, alignment
/// levels outermost.
std::vector<ScenarioConfig> scenario_grid(const ScenarioRegistry& registry,
                                          const std::string& dataset_id);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

enum class LabelRule : std::uint8_t { ActiveOnly, PassiveOnly, Mixed };

/// Deterministic two-party dataset. Feature names are a0.. (active side) and
/// p0.. (passive side). Under PassiveOnly the label is a linear function of
/// the passive features while the active features carry the same signal only
/// through a multiplicative mask (a0 * a1), so a linear model on the active
/// features alone sits near chance. Requires a_dim >= 2 for that rule.
FeatureMatrix synth_dataset(std::size_t n, std::size_t a_dim, std::size_t p_dim, int classes,
                            LabelRule rule, std::uint64_t seed);

}  // namespace apcvfl
