#include "apcvfl/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "apcvfl/error.hpp"

namespace apcvfl {
namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Mat<float>;
using MapF = Eigen::Map<MatF>;
using CMapF = Eigen::Map<const MatF>;

CMapF view(const Tensor2D& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

MapF view(Tensor2D& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename S>
Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>> bias_view(const DenseLayer& l) {
  return {l.bias.data(), static_cast<Eigen::Index>(l.bias.size())};
}

std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// grad *= d selu / dx, written in terms of the output y: scale for x > 0,
// y + scale*alpha otherwise. Branch-free because the sign of y is random and
// a branch mispredicts on half the elements; each arm is reproduced exactly.
template <typename S>
void apply_selu_grad(S* __restrict grad, const S* __restrict y, std::size_t n) {
  constexpr S kPos = S(kSeluScale);
  constexpr S kNeg = S(kSeluScale * kSeluAlpha);
  for (std::size_t k = 0; k < n; ++k) {
    const S neg = static_cast<S>(y[k] <= S(0));
    grad[k] *= (S(1) - neg) * kPos + neg * (y[k] + kNeg);
  }
}

// z <- act(z W^T + b), in place over the rows of `out`.
template <typename S, typename In>
void dense_forward(const DenseLayer& layer, const In& x, Eigen::Ref<Mat<S>> out) {
  if constexpr (std::is_same_v<S, float>) {
    out.noalias() = x * view(layer.weights).transpose();
    out.rowwise() += bias_view<S>(layer);
  } else {
    out.noalias() = x * view(layer.weights).template cast<S>().transpose();
    out.rowwise() += bias_view<S>(layer).template cast<S>();
  }
  if (layer.activation == Activation::Selu) {
    // scale * (max(x, 0) + alpha * (exp(min(x, 0)) - 1)) equals SELU on both
    // branches and, unlike select() or expm1, runs on Eigen's packet exp.
    auto a = out.array();
    a = S(kSeluScale) * (a.max(S(0)) + S(kSeluAlpha) * (a.min(S(0)).exp() - S(1)));
  }
}

void check_backward_shapes(const Mlp& model, const Tensor2D& input, std::size_t n_acts,
                           std::size_t out_rows, std::size_t out_cols, const Tensor2D& upstream) {
  if (n_acts != model.layers().size()) {
    throw ContractError("backward: " + std::to_string(n_acts) + " activations for " +
                        std::to_string(model.layers().size()) + " layers");
  }
  if (upstream.rows() != out_rows || upstream.cols() != out_cols) {
    throw ContractError("backward: upstream gradient " + dims(upstream.rows(), upstream.cols()) +
                        " does not match output " + dims(out_rows, out_cols));
  }
  if (input.cols() != model.input_dim() || input.rows() != out_rows) {
    throw ContractError("backward: input " + dims(input.rows(), input.cols()) +
                        " does not match model/activations");
  }
}

void check_forward_shapes(const Mlp& model, const Tensor2D& batch) {
  if (model.layers().empty()) throw ContractError("forward: empty model");
  if (batch.cols() != model.input_dim()) {
    throw ContractError("forward: expected input width " + std::to_string(model.input_dim()) +
                        ", got batch " + dims(batch.rows(), batch.cols()));
  }
}

}  // namespace

double selu(double x) noexcept {
  return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weights.rows()) {
      throw ContractError("Mlp: layer " + std::to_string(i) + " bias length " +
                          std::to_string(l.bias.size()) + " != " +
                          std::to_string(l.weights.rows()));
    }
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw ContractError("Mlp: layer " + std::to_string(i) + " expects input width " +
                          std::to_string(l.weights.cols()) + " but previous layer emits " +
                          std::to_string(layers_[i - 1].weights.rows()));
    }
  }
}

Mlp Mlp::make(std::span<const std::size_t> widths, Activation hidden, Activation output,
              std::uint64_t seed) {
  if (widths.size() < 2) throw ConfigError("Mlp::make: need at least two widths");
  if (std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end()) {
    throw ConfigError("Mlp::make: zero width");
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i];
    const std::size_t out = widths[i + 1];
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    DenseLayer layer;
    layer.weights = Tensor2D(out, in);
    for (float& w : layer.weights.values()) w = static_cast<float>(init(rng));
    layer.bias.assign(out, 0.0F);
    layer.activation = (i + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.front().in_dim();
}

std::size_t Mlp::output_dim() const noexcept {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& l : layers_) w.push_back(l.out_dim());
  return w;
}

// ---------------------------------------------------------------------------

std::vector<Tensor2D> forward(const Mlp& model, const Tensor2D& batch) {
  check_forward_shapes(model, batch);
  std::vector<Tensor2D> activations;
  activations.reserve(model.layers().size());
  for (const auto& layer : model.layers()) {
    Tensor2D out(batch.rows(), layer.out_dim());
    const Tensor2D& in = activations.empty() ? batch : activations.back();
    dense_forward<float>(layer, view(in), view(out));
    activations.push_back(std::move(out));
  }
  return activations;
}

Tensor2D predict(const Mlp& model, const Tensor2D& batch) {
  auto acts = forward(model, batch);
  return std::move(acts.back());
}

void backward_into(const Mlp& model, const Tensor2D& input, std::span<const Tensor2D> activations,
                   const Tensor2D& upstream, ParamGradients& params, Tensor2D* input_grad) {
  const auto& layers = model.layers();
  check_backward_shapes(model, input, activations.size(),
                        activations.empty() ? 0 : activations.back().rows(),
                        activations.empty() ? 0 : activations.back().cols(), upstream);
  params.resize(layers.size());
  MatF grad = view(upstream);
  MatF next;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& layer = layers[i];
    if (layer.activation == Activation::Selu) {
      apply_selu_grad(grad.data(), activations[i].data(), activations[i].size());
    }
    const Tensor2D& prev = i == 0 ? input : activations[i - 1];
    auto& g = params[i];
    g.weights.resize(layer.out_dim(), layer.in_dim());
    view(g.weights).noalias() = grad.transpose() * view(prev);
    g.bias.resize(layer.bias.size());
    Eigen::Map<Eigen::Matrix<float, 1, Eigen::Dynamic>>(
        g.bias.data(), static_cast<Eigen::Index>(g.bias.size())) = grad.colwise().sum();
    if (i == 0 && input_grad == nullptr) break;
    next.noalias() = grad * view(layer.weights);
    grad.swap(next);
  }
  if (input_grad != nullptr) {
    input_grad->resize(input.rows(), input.cols());
    view(*input_grad) = grad;
  }
}

BackwardResult backward(const Mlp& model, const Tensor2D& input,
                        std::span<const Tensor2D> activations, const Tensor2D& upstream) {
  BackwardResult result;
  backward_into(model, input, activations, upstream, result.params, &result.input_grad);
  return result;
}

LossGradient64 loss_and_gradient_f64(const Mlp& model, const Tensor2D& input,
                                     const Tensor2D& target, LossKind kind) {
  using MatD = Mat<double>;
  check_forward_shapes(model, input);
  const auto& layers = model.layers();
  if (target.rows() != input.rows() || target.cols() != model.output_dim()) {
    throw ContractError("loss_and_gradient_f64: target " + dims(target.rows(), target.cols()) +
                        " does not match output");
  }
  std::vector<MatD> acts;
  acts.reserve(layers.size());
  const MatD x = view(input).cast<double>();
  for (const auto& layer : layers) {
    MatD out(x.rows(), static_cast<Eigen::Index>(layer.out_dim()));
    if (acts.empty()) {
      dense_forward<double>(layer, x, out);
    } else {
      dense_forward<double>(layer, acts.back(), out);
    }
    acts.push_back(std::move(out));
  }
  const MatD diff = acts.back() - view(target).cast<double>();
  const double inv_n = 1.0 / static_cast<double>(diff.size());
  LossGradient64 r;
  MatD grad;
  if (kind == LossKind::Mse) {
    r.loss = diff.squaredNorm() * inv_n;
    grad = 2.0 * inv_n * diff;
  } else {
    r.loss = diff.cwiseAbs().sum() * inv_n;
    grad = inv_n * diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
  }
  r.layers.resize(layers.size());
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& layer = layers[i];
    if (layer.activation == Activation::Selu) {
      apply_selu_grad(grad.data(), acts[i].data(), static_cast<std::size_t>(acts[i].size()));
    }
    const MatD dw = grad.transpose() * (i == 0 ? x : acts[i - 1]);
    auto& out = r.layers[i];
    out.assign(dw.data(), dw.data() + dw.size());
    for (Eigen::Index c = 0; c < grad.cols(); ++c) out.push_back(grad.col(c).sum());
    grad = (grad * view(layer.weights).cast<double>()).eval();
  }
  return r;
}

ParamGradients zero_gradients(const Mlp& model) {
  ParamGradients g;
  for (const auto& l : model.layers()) {
    g.push_back({Tensor2D(l.weights.rows(), l.weights.cols()), FloatBuffer(l.bias.size())});
  }
  return g;
}

// ---------------------------------------------------------------------------

LossResult loss_value_and_grad(LossKind kind, const Tensor2D& pred, const Tensor2D& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ContractError("loss: prediction " + dims(pred.rows(), pred.cols()) +
                        " vs target " + dims(target.rows(), target.cols()));
  }
  LossResult r;
  r.grad = Tensor2D(pred.rows(), pred.cols());
  const std::size_t n = pred.size();
  if (n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  auto p = pred.values();
  auto t = target.values();
  auto g = r.grad.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    if (kind == LossKind::Mse) {
      sum += d * d;
      g[i] = static_cast<float>(2.0 * d * inv_n);
    } else {
      sum += std::abs(d);
      g[i] = static_cast<float>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n);
    }
  }
  r.value = sum * inv_n;
  return r;
}

// ---------------------------------------------------------------------------

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamConfig& cfg) {
  if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ContractError("adam_update: parameter/gradient/moment sizes differ");
  }
  if (step == 0) throw ContractError("adam_update: step index is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T c1 = static_cast<T>(1.0 - cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T c2 = static_cast<T>(1.0 - cfg.beta2);
  const T s1 = static_cast<T>(1.0 / bc1);
  const T s2 = static_cast<T>(1.0 / bc2);
  const T lr = static_cast<T>(cfg.lr);
  const T eps = static_cast<T>(cfg.eps);
  // One fused pass; the moments and parameters are each touched once.
  T* __restrict pp = params.data();
  const T* __restrict gp = grads.data();
  T* __restrict mp = m.data();
  T* __restrict vp = v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = gp[i];
    const T mi = b1 * mp[i] + c1 * g;
    const T vi = b2 * vp[i] + c2 * (g * g);
    mp[i] = mi;
    vp[i] = vi;
    pp[i] -= lr * (mi * s1) / (std::sqrt(vi * s2) + eps);
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                 std::span<float>, std::uint64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, const AdamConfig&);

AdamState::AdamState(const Mlp& model, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& l : model.layers()) {
    m_.emplace_back(l.parameter_count(), 0.0F);
    v_.emplace_back(l.parameter_count(), 0.0F);
  }
}

void adam_step(Mlp& model, const ParamGradients& grads, AdamState& state) {
  auto& layers = model.layers();
  if (grads.size() != layers.size() || state.m_.size() != layers.size()) {
    throw ContractError("adam_step: gradient/state layer count does not match model");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = grads[i];
    if (g.weights.rows() != layers[i].weights.rows() ||
        g.weights.cols() != layers[i].weights.cols() || g.bias.size() != layers[i].bias.size()) {
      throw ContractError("adam_step: gradient shape mismatch at layer " + std::to_string(i));
    }
    const bool finite = g.weights.all_finite() && all_finite(g.bias);
    if (!finite) {
      throw TrainingError("adam_step: non-finite gradient in layer " + std::to_string(i));
    }
  }
  ++state.step_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    const std::size_t nw = layer.weights.size();
    std::span<float> m(state.m_[i]);
    std::span<float> v(state.v_[i]);
    adam_update<float>(layer.weights.values(), grads[i].weights.values(), m.first(nw),
                       v.first(nw), state.step_, state.cfg_);
    adam_update<float>(std::span<float>(layer.bias), std::span<const float>(grads[i].bias),
                       m.subspan(nw), v.subspan(nw), state.step_, state.cfg_);
  }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("TrainConfig: patience must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
}

Trainer::Trainer(std::vector<Mlp*> models, Objective& objective, const TrainConfig& cfg)
    : models_(std::move(models)), objective_(objective), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (objective_.train_rows() == 0) throw ContractError("train: empty training set");
  if (cfg_.early_stopping && !objective_.has_validation()) {
    throw ContractError("train: early stopping requires a validation set");
  }
  for (Mlp* m : models_) {
    adam_.emplace_back(*m, cfg_.adam);
    grads_.push_back(zero_gradients(*m));
  }
}

bool Trainer::run_epoch() {
  if (done_) return false;
  const std::size_t n = objective_.train_rows();
  const std::size_t epoch = trace_.epochs_run;
  const auto order = permutation(n, rng_);
  double weighted = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < n; start += cfg_.batch_size, ++batch_index) {
    const std::size_t len = std::min(cfg_.batch_size, n - start);
    const std::span<const std::size_t> rows(order.data() + start, len);
    const double loss = objective_.train_batch(rows, grads_);
    const std::string where =
        " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
    if (!std::isfinite(loss)) throw TrainingError("train: non-finite loss" + where);
    for (std::size_t k = 0; k < models_.size(); ++k) {
      try {
        adam_step(*models_[k], grads_[k], adam_[k]);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + where);
      }
    }
    weighted += loss * static_cast<double>(len);
  }
  trace_.train_loss.push_back(weighted / static_cast<double>(n));
  ++trace_.epochs_run;

  last_improved_ = false;
  if (objective_.has_validation()) {
    const double val = objective_.validation_loss();
    if (!std::isfinite(val)) {
      throw TrainingError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    trace_.val_loss.push_back(val);
    if (trace_.val_loss.size() == 1 || val < trace_.best_val) {
      trace_.best_val = val;
      trace_.best_epoch = epoch;
      since_best_ = 0;
      last_improved_ = true;
      if (cfg_.early_stopping) {
        best_.clear();
        for (const Mlp* m : models_) best_.push_back(*m);
      }
    } else {
      ++since_best_;
    }
    if (cfg_.early_stopping && since_best_ >= cfg_.patience) done_ = true;
  }
  if (trace_.epochs_run >= cfg_.max_epochs) done_ = true;
  return !done_;
}

TrainTrace Trainer::finish() {
  if (cfg_.early_stopping && !best_.empty()) {
    for (std::size_t k = 0; k < models_.size(); ++k) *models_[k] = best_[k];
  }
  done_ = true;
  return trace_;
}

TrainTrace train(std::vector<Mlp*> models, Objective& objective, const TrainConfig& cfg) {
  Trainer trainer(std::move(models), objective, cfg);
  while (trainer.run_epoch()) {
  }
  return trainer.finish();
}

}  // namespace apcvfl
