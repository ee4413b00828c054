#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apcvfl/classifier.hpp"
#include "apcvfl/data.hpp"
#include "apcvfl/frame.hpp"
#include "apcvfl/representation.hpp"
#include "apcvfl/transport.hpp"

namespace apcvfl {

enum class Method : std::uint8_t {
  Local = 0,        // probe on the active participant's own features
  Ablation = 1,     // probe on final-encoder codes trained without distillation
  ApcVfl = 2,       // full pipeline, probe on the enhanced dataset
  ApcVflJoint = 3,  // aligned-only variant: classifier on the joint codes
  SplitNN = 4,      // iterative split learning on aligned rows
};

const char* to_string(Method m) noexcept;
/// Accepts the to_string spellings; throws ConfigError otherwise.
Method parse_method(const std::string& name);
bool needs_passive(Method m) noexcept;
/// Methods that only see aligned rows and report a held-out test score.
bool aligned_only(Method m) noexcept;

/// z-scores every row with statistics fitted on the rows whose ID is not in
/// `holdout`.
FeatureMatrix standardize_local(const FeatureMatrix& m, const IdSet& holdout);

/// Training settings for one pipeline stage: the scenario's epochs, patience
/// and batch size, with batches shuffled from a stream derived from
/// `stage_seed`.
TrainConfig stage_train_config(const ScenarioConfig& cfg, std::uint64_t stage_seed);

/// g1 on one participant, trained on the rows not in `holdout`; rows in
/// `val_ids` drive early stopping only.
Autoencoder learn_local_representation(const FeatureMatrix& standardized, EncoderRole role,
                                       const IdSet& val_ids, const IdSet& holdout,
                                       const TrainConfig& cfg, std::uint64_t seed);

/// Hash both participants must agree on. The seed list is excluded because
/// each session's seed travels in its Hello frame.
std::uint64_t session_hash(const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Passive participant
// ---------------------------------------------------------------------------

/// Feature-only participant. Holds its raw table and never sends features,
/// labels or weights; it answers ID requests with latent codes and applies
/// the gradients it receives.
class PassiveParty {
 public:
  PassiveParty(FeatureMatrix data, IdSet val_ids, IdSet test_ids, ScenarioConfig cfg);

  /// Serves Hello ... Close sessions until the peer closes the channel.
  /// Failures are reported to the peer in an Error frame, then rethrown.
  void serve(Channel& ch);

  /// Number of completed sessions.
  std::size_t sessions() const noexcept { return sessions_; }

 private:
  void start_session(const Hello& h);
  void handle_request(Channel& ch, const IdRequest& req);
  void handle_gradients(const Tensor2D& grad);
  std::vector<std::size_t> rows_for(const IdRequest& req) const;

  FeatureMatrix raw_;
  IdSet val_ids_;
  IdSet test_ids_;
  ScenarioConfig cfg_;
  std::uint64_t hash_;
  std::size_t sessions_ = 0;

  // Session state.
  std::optional<Method> method_;
  FeatureMatrix x_;  // standardized
  std::unordered_map<std::string, std::size_t> index_;
  IdSet holdout_;
  Autoencoder local_;  // ApcVfl / ApcVflJoint
  Mlp bottom_;         // SplitNN
  AdamState adam_;
  std::optional<Mlp> best_bottom_;
  Tensor2D pending_input_;
  std::vector<Tensor2D> pending_acts_;
};

// ---------------------------------------------------------------------------
// Active participant's view of a session
// ---------------------------------------------------------------------------

class ActiveSession {
 public:
  /// Sends Hello; the passive side's acknowledgement is awaited by the first
  /// request, so local work on both sides can overlap.
  ActiveSession(Channel& ch, Method method, std::uint64_t scenario_hash, std::uint64_t seed);

  /// Asks for the passive codes of `ids`, in that order.
  Tensor2D request(IdPurpose purpose, const std::vector<std::string>& ids,
                   std::uint8_t flags = 0);
  void send_gradients(const Tensor2D& grad);
  /// Sends Close. Further requests are an error.
  void close();

 private:
  Frame expect(MsgType type);
  void send(const Frame& frame);
  void await_ready();

  Channel& ch_;
  bool ready_ = false;
  bool closed_ = false;
};

/// The single exchange: the passive codes of `ids` (aligned training IDs),
/// returned in the order given.
AlignedRepresentations run_apcvfl_exchange(ActiveSession& session,
                                           const std::vector<std::string>& ids);

struct SplitNNResult {
  Mlp active_bottom;  // [a, 64, 128]
  Mlp head;           // [384, 256, 256, classes]
  TrainTrace trace;
  MetricSet test;
  std::size_t n_train = 0;
  std::size_t batches_per_epoch = 0;
};

/// Split learning over the session. `active` must be standardized and
/// labelled. Every batch costs one embeddings message and one gradient
/// message; validation and test embeddings are requested as evaluation
/// traffic. Rows in `val_ids` are used for early stopping only.
SplitNNResult run_splitnn(ActiveSession& session, const FeatureMatrix& active,
                          const std::vector<std::string>& train_ids,
                          const std::vector<std::string>& val_ids,
                          const std::vector<std::string>& test_ids, const TrainConfig& cfg,
                          std::uint64_t model_seed);

/// Passive bottom model of split learning (g1P's encoder widths).
Mlp make_passive_bottom(std::size_t passive_dim, std::uint64_t model_seed);

}  // namespace apcvfl
