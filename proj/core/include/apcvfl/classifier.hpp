#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "apcvfl/nn.hpp"
#include "apcvfl/representation.hpp"

namespace apcvfl {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class Metric : std::uint8_t { Accuracy, F1Micro, F1Macro, F1Weighted };

const char* to_string(Metric m) noexcept;
Metric parse_metric(const std::string& name);
inline constexpr Metric kAllMetrics[] = {Metric::Accuracy, Metric::F1Micro, Metric::F1Macro,
                                         Metric::F1Weighted};

struct MetricSet {
  double accuracy = 0.0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  double get(Metric m) const noexcept;

  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

/// Single-label metrics over `classes` classes. A class with neither support
/// nor predictions contributes an F1 of 0 to the macro average.
MetricSet compute_metrics(std::span<const int> truth, std::span<const int> predicted, int classes);

// ---------------------------------------------------------------------------
// Logistic regression probe
// ---------------------------------------------------------------------------

/// Mean softmax cross-entropy of `logits` against class indices `y`. When
/// `grad` is given it receives d(loss)/d(logits).
double softmax_cross_entropy(const Tensor2D& logits, std::span<const int> y,
                             Tensor2D* grad = nullptr);

/// Row-wise argmax.
std::vector<int> argmax_rows(const Tensor2D& scores);

/// Multinomial logistic regression held as a one-layer identity Mlp.
struct LogisticModel {
  Mlp linear;  // features -> classes

  int classes() const noexcept { return static_cast<int>(linear.output_dim()); }
  Tensor2D probabilities(const Tensor2D& x) const;
  std::vector<int> predict(const Tensor2D& x) const;
};

/// Softmax cross-entropy minimised with Adam. Rows are put in a canonical
/// content order before the seeded shuffling, so the fitted model depends on
/// the set of training rows and the seed only. `classes` = 0 infers max(y)+1.
/// Early stopping, when enabled in cfg, needs `val_x`/`val_y`.
LogisticModel train_logreg(const Tensor2D& x, std::span<const int> y, const TrainConfig& cfg,
                           int classes = 0, const Tensor2D& val_x = {},
                           std::span<const int> val_y = {});

MetricSet evaluate(const LogisticModel& model, const Tensor2D& x, std::span<const int> y);

/// Training settings of the probe inside CV folds: fixed epochs, no early stop.
TrainConfig probe_train_config(std::size_t epochs, std::size_t batch_size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Pluggable classifiers (used by the encoder quality probe)
// ---------------------------------------------------------------------------

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Tensor2D& x, std::span<const int> y, int classes,
                   std::uint64_t seed) = 0;
  virtual std::vector<int> predict(const Tensor2D& x) const = 0;
};

using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;

class LogisticClassifier final : public Classifier {
 public:
  LogisticClassifier(std::size_t epochs, std::size_t batch_size)
      : epochs_(epochs), batch_size_(batch_size) {}

  void fit(const Tensor2D& x, std::span<const int> y, int classes, std::uint64_t seed) override;
  std::vector<int> predict(const Tensor2D& x) const override;

 private:
  std::size_t epochs_;
  std::size_t batch_size_;
  LogisticModel model_;
};

ClassifierFactory logistic_factory(std::size_t epochs, std::size_t batch_size);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Stratified k-fold assignment: each class is shuffled with `seed` and dealt
/// round-robin with one running counter, so fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> y, std::size_t k,
                                                       std::uint64_t seed);

/// One k-fold pass. Returns one MetricSet per fold. A fresh classifier is made
/// for every fold; fold f is fitted with derive_seed(seed, "fold/f").
std::vector<MetricSet> cross_validate(const Tensor2D& x, std::span<const int> y, std::size_t k,
                                      std::uint64_t seed, const ClassifierFactory& factory,
                                      int classes = 0);

struct MetricSummary {
  std::vector<double> run_means;  // mean over folds, one per repeat
  double mean_of_means = 0.0;
  double std = 0.0;  // population std of run_means
};

struct CvReport {
  std::vector<std::vector<MetricSet>> runs;  // [repeat][fold]
  std::vector<MetricSummary> summaries;      // indexed like kAllMetrics

  const MetricSummary& summary(Metric m) const;
};

CvReport aggregate_runs(std::vector<std::vector<MetricSet>> runs);
MetricSummary summarize(std::span<const double> run_means);

/// Repeated k-fold CV on a fixed dataset, one repeat per seed.
CvReport kfold_cv(const Tensor2D& x, std::span<const int> y, std::size_t k,
                  std::span<const std::uint64_t> seeds, const ClassifierFactory& factory);

// ---------------------------------------------------------------------------
// Ablation arm
// ---------------------------------------------------------------------------

struct AblationSettings {
  TrainConfig encoder;  // seed is overridden per run
  std::size_t folds = 10;
  std::size_t probe_epochs = 200;
  std::size_t probe_batch_size = 32;
};

/// Final encoder trained on the active data alone (no distillation term),
/// then CV of the probe on its codes, once per seed.
CvReport run_ablation(const FeatureMatrix& active_data, const IdSet& val_ids,
                      const AblationSettings& settings, std::span<const std::uint64_t> seeds);

/// The final-encoder stage shared by the ablation arm and the full pipeline.
DistillResult train_final_encoder(const FeatureMatrix& active_data,
                                  const AlignedRepresentations& joint, const IdSet& val_ids,
                                  const TrainConfig& encoder_cfg, const DistillConfig& dcfg,
                                  const PipelineSeeds& seeds);

// ---------------------------------------------------------------------------
// Encoder quality probe
// ---------------------------------------------------------------------------

struct QualityEpoch {
  double train_loss = 0.0;
  std::vector<double> fold_metrics;  // k values of the selected metric
};

struct QualityTrace {
  std::vector<QualityEpoch> epochs;
};

/// Trains `ae` on `x` one epoch at a time; after each epoch the whole of `x`
/// is encoded and a k-fold CV with fresh classifiers scores the codes. The
/// same fold assignment (cv_seed) is used every epoch.
QualityTrace train_with_quality(Autoencoder& ae, const Tensor2D& x, std::span<const int> y,
                                const ClassifierFactory& factory, std::size_t k, Metric metric,
                                const TrainConfig& cfg, std::uint64_t cv_seed,
                                const Tensor2D& val = {});

/// True when mean(on_features) - mean(on_codes) <= r (signed difference).
bool similarity_decision(std::span<const double> on_features, std::span<const double> on_codes,
                         double r);

}  // namespace apcvfl
