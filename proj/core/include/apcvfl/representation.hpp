#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "apcvfl/data.hpp"
#include "apcvfl/nn.hpp"

namespace apcvfl {

/// Which of the four pipeline encoders an architecture belongs to.
enum class EncoderRole : std::uint8_t {
  LocalActive,   // g1 on the active participant:  [a, 64, 128]
  LocalPassive,  // g1 on the passive participant: [p, 128, 256]
  Joint,         // g2 on the active participant:  [384, 256, 256]
  Final,         // g3 on the active participant:  [a, 256, 256]
};

const char* to_string(EncoderRole role) noexcept;

inline constexpr std::size_t kLocalActiveLatent = 128;
inline constexpr std::size_t kLocalPassiveLatent = 256;
inline constexpr std::size_t kJointLatent = 256;

struct ArchitectureSpec {
  EncoderRole role = EncoderRole::Final;
  std::vector<std::size_t> widths;  // encoder widths, input first

  /// Standard widths for `role`. `input_dim` is ignored for Joint, whose
  /// input is always the 128 + 256 concatenation.
  static ArchitectureSpec for_role(EncoderRole role, std::size_t input_dim);
};

struct Autoencoder {
  Mlp encoder;
  Mlp decoder;

  std::size_t input_dim() const noexcept { return encoder.input_dim(); }
  std::size_t latent_dim() const noexcept { return encoder.output_dim(); }

  friend bool operator==(const Autoencoder&, const Autoencoder&) = default;
};

/// Symmetric autoencoder: SELU on every encoder layer and on the decoder's
/// hidden layers, identity on the reconstruction layer.
Autoencoder build_autoencoder(const ArchitectureSpec& spec, std::uint64_t seed);

/// Minimises MSE(x, decoder(encoder(x))). `val` may be empty when
/// cfg.early_stopping is false.
TrainTrace train_reconstruction(Autoencoder& ae, const Tensor2D& train, const Tensor2D& val,
                                const TrainConfig& cfg);

Tensor2D encode(const Autoencoder& ae, const Tensor2D& x);

/// Latent vectors keyed by sample ID.
struct AlignedRepresentations {
  std::vector<std::string> ids;
  Tensor2D z;

  void validate() const;
};

/// Per-stage seeds derived from one run seed. Every method of a run draws
/// from the same table, which is what makes a lambda = 0 run and the ablation
/// arm train identical final encoders.
struct PipelineSeeds {
  std::uint64_t local_active;   // g1 on the active side
  std::uint64_t local_passive;  // g1 on the passive side
  std::uint64_t joint;          // g2
  std::uint64_t final_encoder;  // g3
  std::uint64_t split_model;    // split-learning models
  std::uint64_t cv;             // fold assignment and probe classifiers

  static PipelineSeeds from(std::uint64_t run_seed) noexcept;
};

struct DistillConfig {
  double lambda = 0.01;
  LossKind loss = LossKind::Mse;
};

struct JointResult {
  Autoencoder teacher;
  AlignedRepresentations joint;
  TrainTrace trace;
};

/// Joins the two local representation sets by ID (the active side's order is
/// canonical), trains the joint autoencoder on the 384-wide concatenation and
/// returns its 256-wide codes. Rows whose ID is in `val_ids` are used for
/// early stopping only.
JointResult learn_joint_representation(const AlignedRepresentations& local_active,
                                       const AlignedRepresentations& local_passive,
                                       const IdSet& val_ids, const TrainConfig& cfg,
                                       std::uint64_t seed);

struct DistillResult {
  Autoencoder student;
  TrainTrace trace;
};

/// Trains the final autoencoder on every active sample. The per-batch loss is
/// the reconstruction MSE plus lambda times the distillation term, which is
/// averaged over the aligned rows of the batch only. Rows whose ID is in
/// `val_ids` form the validation set. The joint codes are read-only here: the
/// passive participant's data never enters this function.
DistillResult distill_final_encoder(const FeatureMatrix& active_data,
                                    const AlignedRepresentations& joint, const IdSet& val_ids,
                                    const TrainConfig& cfg, const DistillConfig& dcfg,
                                    std::uint64_t seed);

/// Replaces the features of every active sample by its final-encoder code;
/// IDs and labels are carried through.
FeatureMatrix build_enhanced_dataset(const Autoencoder& final_encoder,
                                     const FeatureMatrix& active_data);

// Objective used by the reconstruction and distillation trainers. Exposed for
// tests that inspect batch losses directly.
class AutoencoderObjective final : public Objective {
 public:
  struct Distillation {
    const Tensor2D* teacher = nullptr;               // rows of joint codes
    std::vector<std::ptrdiff_t> train_teacher_row;  // -1 when unaligned
    std::vector<std::ptrdiff_t> val_teacher_row;
    double lambda = 0.0;
    LossKind loss = LossKind::Mse;
  };

  AutoencoderObjective(Autoencoder& ae, const Tensor2D& train, const Tensor2D& val);
  AutoencoderObjective(Autoencoder& ae, const Tensor2D& train, const Tensor2D& val,
                       Distillation distill);

  std::size_t train_rows() const override { return train_.rows(); }
  bool has_validation() const override { return val_.rows() > 0; }
  double train_batch(std::span<const std::size_t> rows,
                     std::vector<ParamGradients>& grads) override;
  double validation_loss() override;

  /// Composite loss over explicit rows of the training set, without gradients.
  double evaluate_rows(std::span<const std::size_t> rows) const;

 private:
  double loss_and_grads(const Tensor2D& x, std::span<const std::ptrdiff_t> teacher_rows,
                        std::vector<ParamGradients>* grads) const;

  Autoencoder& ae_;
  const Tensor2D& train_;
  const Tensor2D& val_;
  std::optional<Distillation> distill_;
};

}  // namespace apcvfl
