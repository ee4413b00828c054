#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "apcvfl/rng.hpp"
#include "apcvfl/tensor.hpp"

namespace apcvfl {

// ---------------------------------------------------------------------------
// Activations and layers
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { Selu = 0, Identity = 1 };
enum class LossKind : std::uint8_t { Mse = 0, Mae = 1 };

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;

double selu(double x) noexcept;

struct DenseLayer {
  Tensor2D weights;  // out x in
  FloatBuffer bias;
  Activation activation = Activation::Selu;

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Ordered stack of dense layers. Every encoder, decoder and classification
/// head in the library is an Mlp.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// LeCun-normal weights (std = 1/sqrt(fan_in)), zero biases. `widths` lists
  /// input width followed by every layer's output width.
  static Mlp make(std::span<const std::size_t> widths, Activation hidden, Activation output,
                  std::uint64_t seed);

  std::size_t input_dim() const noexcept;
  std::size_t output_dim() const noexcept;
  std::size_t parameter_count() const noexcept;
  /// Input width followed by every layer's output width.
  std::vector<std::size_t> widths() const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Post-activation output of every layer, in order. The last entry is the
/// network output.
std::vector<Tensor2D> forward(const Mlp& model, const Tensor2D& batch);

/// Network output only.
Tensor2D predict(const Mlp& model, const Tensor2D& batch);

struct LayerGradient {
  Tensor2D weights;
  FloatBuffer bias;
};
using ParamGradients = std::vector<LayerGradient>;

struct BackwardResult {
  ParamGradients params;
  Tensor2D input_grad;
};

/// Reverse-mode pass for the activations produced by forward(model, input).
/// `upstream` is dLoss/dOutput.
BackwardResult backward(const Mlp& model, const Tensor2D& input,
                        std::span<const Tensor2D> activations, const Tensor2D& upstream);

/// backward() writing into caller-owned buffers, which are reshaped as needed
/// so repeated calls do not allocate. `input_grad` may be null.
void backward_into(const Mlp& model, const Tensor2D& input, std::span<const Tensor2D> activations,
                   const Tensor2D& upstream, ParamGradients& params, Tensor2D* input_grad);

/// Loss and parameter gradients evaluated entirely in 64-bit by the same
/// kernels the 32-bit training path uses (weights are widened exactly).
/// layers[i] holds layer i's weight gradient (row-major) followed by its bias
/// gradient. For numerical gradient checks.
struct LossGradient64 {
  double loss = 0.0;
  std::vector<std::vector<double>> layers;
};
LossGradient64 loss_and_gradient_f64(const Mlp& model, const Tensor2D& input,
                                     const Tensor2D& target, LossKind kind);

/// Zero-valued gradients shaped like the model's parameters.
ParamGradients zero_gradients(const Mlp& model);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossResult {
  double value = 0.0;
  Tensor2D grad;  // d value / d pred
};

/// Mean over all entries of the squared (MSE) or absolute (MAE) difference.
/// The MAE subgradient at zero difference is 0.
LossResult loss_value_and_grad(LossKind kind, const Tensor2D& pred, const Tensor2D& target);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of a flat parameter block. `step` is the
/// 1-based step index after increment. Moments share the parameter type.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamConfig& cfg);

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const Mlp& model, AdamConfig cfg = {});

  std::uint64_t step() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  friend void adam_step(Mlp& model, const ParamGradients& grads, AdamState& state);

  AdamConfig cfg_{};
  std::uint64_t step_ = 0;
  std::vector<FloatBuffer> m_;  // per layer: weights then bias
  std::vector<FloatBuffer> v_;
};

/// Applies one Adam step to every parameter. Throws TrainingError on
/// non-finite gradients; the model is left untouched in that case.
void adam_step(Mlp& model, const ParamGradients& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Mini-batch training with early stopping
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  bool early_stopping = true;
  LossKind loss = LossKind::Mse;
  std::uint64_t seed = 0;
  AdamConfig adam{};

  void validate() const;
};

struct TrainTrace {
  std::vector<double> train_loss;  // one entry per epoch run
  std::vector<double> val_loss;    // empty when there is no validation set
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 0-based index into val_loss
  double best_val = 0.0;

  friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

/// Loss provider for Trainer. Implementations own references to the models
/// they evaluate; the trainer only sees gradients.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t train_rows() const = 0;
  virtual bool has_validation() const = 0;

  /// Mean loss over the given training rows. `grads` holds one entry per
  /// trained model (same order as passed to Trainer) and must be overwritten.
  virtual double train_batch(std::span<const std::size_t> rows,
                             std::vector<ParamGradients>& grads) = 0;

  virtual double validation_loss() = 0;
};

/// Epoch-at-a-time driver. Each epoch shuffles the training rows with a
/// generator seeded once from cfg.seed, keeps the trailing partial batch, and
/// tracks the best validation loss (strict improvement). The best snapshot is
/// restored by finish().
class Trainer {
 public:
  Trainer(std::vector<Mlp*> models, Objective& objective, const TrainConfig& cfg);

  /// Runs one epoch. Returns false once no further epoch should be run.
  bool run_epoch();
  bool done() const noexcept { return done_; }
  const TrainTrace& trace() const noexcept { return trace_; }
  /// Whether the epoch just run improved the best validation loss.
  bool last_epoch_improved() const noexcept { return last_improved_; }

  /// Restores the best-validation weights (when validation is active) and
  /// returns the trace.
  TrainTrace finish();

 private:
  std::vector<Mlp*> models_;
  Objective& objective_;
  TrainConfig cfg_;
  Rng rng_;
  std::vector<AdamState> adam_;
  std::vector<Mlp> best_;
  std::vector<ParamGradients> grads_;
  TrainTrace trace_;
  std::size_t since_best_ = 0;
  bool done_ = false;
  bool last_improved_ = false;
};

TrainTrace train(std::vector<Mlp*> models, Objective& objective, const TrainConfig& cfg);

}  // namespace apcvfl
