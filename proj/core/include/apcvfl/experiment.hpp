#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "apcvfl/classifier.hpp"
#include "apcvfl/data.hpp"
#include "apcvfl/participants.hpp"
#include "apcvfl/transport.hpp"

namespace apcvfl {

enum class TransportKind : std::uint8_t { InProcess, Tcp };

const char* to_string(TransportKind t) noexcept;
TransportKind parse_transport(const std::string& name);

struct RunOptions {
  TransportKind transport = TransportKind::InProcess;
  std::string tcp_host = "127.0.0.1";  // loopback harness; port is ephemeral
  bool keep_models = false;            // keep each seed's final encoder
};

struct SeedResult {
  std::uint64_t seed = 0;
  /// CV folds, or the single held-out evaluation of an aligned-only method.
  std::vector<MetricSet> folds;
  CommLedger ledger;
  std::size_t transmitted = 0;  // aligned rows whose passive codes were sent
  std::size_t n_train = 0;      // split learning training rows
  std::size_t epochs_run = 0;   // split learning epochs
  std::size_t batches_per_epoch = 0;
  /// Epochs run by each trained stage, e.g. {"g1A", 37}.
  std::vector<std::pair<std::string, std::size_t>> stage_epochs;
  std::optional<Autoencoder> final_encoder;

  friend bool operator==(const SeedResult&, const SeedResult&) = default;
};

struct MethodResult {
  Method method = Method::Local;
  ScenarioConfig scenario;
  std::size_t active_dim = 0;
  std::size_t passive_dim = 0;
  std::vector<SeedResult> seeds;
  CvReport summary;

  friend bool operator==(const MethodResult& a, const MethodResult& b) {
    return a.method == b.method && a.scenario == b.scenario && a.active_dim == b.active_dim &&
           a.passive_dim == b.passive_dim && a.seeds == b.seeds;
  }
};

/// Active participant's part of one seed. `channel` may be null for methods
/// without a passive participant.
SeedResult run_active_seed(Method method, const ScenarioConfig& cfg, const VerticalSplit& split,
                           std::uint64_t seed, Channel* channel, bool keep_models);

/// Every seed of cfg.seeds over one channel (one session per seed).
MethodResult run_active(Method method, const ScenarioConfig& cfg, const VerticalSplit& split,
                        Channel* channel, bool keep_models);

/// Passive participant's part: serves sessions until the channel closes.
void run_passive(const ScenarioConfig& cfg, const VerticalSplit& split, Channel& channel);

/// Both participants in this process, connected through opts.transport.
MethodResult run_method_on_split(Method method, const ScenarioConfig& cfg,
                                 const VerticalSplit& split, const RunOptions& opts = {});
MethodResult run_method(Method method, const ScenarioConfig& cfg, const FeatureMatrix& dataset,
                        const RunOptions& opts = {});

/// `flag` if given, else $APCVFL_DATA_DIR, else "data".
std::filesystem::path resolve_data_dir(const std::optional<std::string>& flag);
FeatureMatrix load_scenario_dataset(const ScenarioConfig& cfg,
                                    const std::filesystem::path& data_dir);

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct GridCell {
  ScenarioConfig scenario;
  Method method = Method::Local;
  std::optional<MethodResult> result;
  std::string error;  // set when the cell failed
};

using GridProgress = std::function<void(const GridCell&, std::size_t done, std::size_t total)>;

/// Runs every scenario x method. Failures are recorded per cell and the grid
/// carries on. Local and Ablation ignore the aligned count, so they run once
/// per active feature set and are reused for the other alignment levels.
std::vector<GridCell> run_grid(const std::vector<ScenarioConfig>& scenarios,
                               const std::vector<Method>& methods, const FeatureMatrix& dataset,
                               const RunOptions& opts = {}, const GridProgress& progress = {});

}  // namespace apcvfl
