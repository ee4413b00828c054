#include <doctest.h>

#include <cmath>
#include <numeric>

#include "apcvfl/error.hpp"
#include "apcvfl/nn.hpp"
#include "gradient_check.hpp"

using namespace apcvfl;

namespace {

// Trainer driver with a scripted validation curve. Each training batch pushes
// every weight by +1 through the gradient so that the weights change from
// epoch to epoch; snapshots are taken when validation is evaluated.
class ScriptedObjective final : public Objective {
 public:
  ScriptedObjective(Mlp& model, std::size_t rows, std::vector<double> val)
      : model_(model), rows_(rows), val_(std::move(val)) {}

  std::size_t train_rows() const override { return rows_; }
  bool has_validation() const override { return !val_.empty(); }

  double train_batch(std::span<const std::size_t> rows,
                     std::vector<ParamGradients>& grads) override {
    batch_sizes.push_back(rows.size());
    for (std::size_t r : rows) seen.push_back(r);
    grads[0] = zero_gradients(model_);
    for (auto& l : grads[0]) {
      for (float& g : l.weights.values()) g = 1.0F;
    }
    return 1.0;
  }

  double validation_loss() override {
    snapshots.push_back(model_);
    const std::size_t i = snapshots.size() - 1;
    return i < val_.size() ? val_[i] : val_.back();
  }

  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> seen;
  std::vector<Mlp> snapshots;

 private:
  Mlp& model_;
  std::size_t rows_;
  std::vector<double> val_;
};

Mlp tiny_model(std::uint64_t seed) {
  const std::vector<std::size_t> w = {2, 3, 1};
  return Mlp::make(w, Activation::Selu, Activation::Identity, seed);
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("SELU constants and values") {
    CHECK(selu(0.0) == 0.0);
    CHECK(selu(1.0) == doctest::Approx(1.0507009873554805).epsilon(1e-15));
    CHECK(selu(-1.0) ==
          doctest::Approx(1.0507009873554805 * 1.6732632423543772 * (std::exp(-1.0) - 1.0))
              .epsilon(1e-14));
    // Saturation value for large negative inputs is -scale * alpha.
    CHECK(selu(-50.0) == doctest::Approx(-1.7580993408473766).epsilon(1e-12));
  }

  TEST_CASE("LeCun normal initialisation") {
    const std::vector<std::size_t> widths = {400, 300};
    const Mlp m = Mlp::make(widths, Activation::Selu, Activation::Selu, 5);
    const auto& l = m.layers()[0];
    CHECK(l.weights.rows() == 300);
    CHECK(l.weights.cols() == 400);
    double sum = 0.0;
    double sq = 0.0;
    for (float w : l.weights.values()) {
      sum += w;
      sq += static_cast<double>(w) * w;
    }
    const double n = static_cast<double>(l.weights.size());
    const double mean = sum / n;
    const double stddev = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 0.002);
    CHECK(stddev == doctest::Approx(1.0 / std::sqrt(400.0)).epsilon(0.02));
    for (float b : l.bias) CHECK(b == 0.0F);
    CHECK(m.parameter_count() == 400 * 300 + 300);
    CHECK(Mlp::make(widths, Activation::Selu, Activation::Selu, 5) == m);
    CHECK_FALSE(Mlp::make(widths, Activation::Selu, Activation::Selu, 6) == m);
  }

  TEST_CASE("shape errors") {
    const std::vector<std::size_t> zero = {3, 0, 2};
    CHECK_THROWS_AS(Mlp::make(zero, Activation::Selu, Activation::Identity, 1), ConfigError);
    const Mlp m = tiny_model(1);
    CHECK_THROWS_AS(forward(m, Tensor2D(4, 3)), ContractError);
    const auto acts = forward(m, Tensor2D(4, 2));
    CHECK(acts.size() == 2);
    CHECK(acts.back().rows() == 4);
    CHECK_THROWS_AS(backward(m, Tensor2D(4, 2), acts, Tensor2D(4, 2)), ContractError);
    CHECK_THROWS_AS(backward(m, Tensor2D(3, 2), acts, Tensor2D(4, 1)), ContractError);

    std::vector<DenseLayer> layers(2);
    layers[0].weights = Tensor2D(3, 2);
    layers[0].bias.assign(3, 0.0F);
    layers[1].weights = Tensor2D(1, 4);
    layers[1].bias.assign(1, 0.0F);
    CHECK_THROWS_AS(Mlp{layers}, ContractError);
  }

  TEST_CASE("losses") {
    const Tensor2D pred = Tensor2D::from_rows({{1, 2}, {3, 4}});
    const Tensor2D target = Tensor2D::from_rows({{0, 2}, {5, 4}});
    const auto mse = loss_value_and_grad(LossKind::Mse, pred, target);
    CHECK(mse.value == doctest::Approx((1.0 + 4.0) / 4.0));
    CHECK(mse.grad(0, 0) == doctest::Approx(2.0 * 1.0 / 4.0));
    CHECK(mse.grad(1, 0) == doctest::Approx(2.0 * -2.0 / 4.0));
    const auto mae = loss_value_and_grad(LossKind::Mae, pred, target);
    CHECK(mae.value == doctest::Approx(3.0 / 4.0));
    CHECK(mae.grad(0, 0) == doctest::Approx(0.25));
    CHECK(mae.grad(0, 1) == 0.0F);
    CHECK(mae.grad(1, 0) == doctest::Approx(-0.25));
    CHECK_THROWS_AS(loss_value_and_grad(LossKind::Mse, pred, Tensor2D(2, 3)), ContractError);
  }

  TEST_CASE("analytic gradients agree with central differences on random nets") {
    const auto report = testing::check_random_nets(40, 20260101);
    CHECK(report.nets == 40);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.max_f32_rel_err < 1e-3);
  }

  TEST_CASE("input gradient agrees with central differences") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      const auto net = testing::random_net(rng);
      CHECK(testing::input_gradient_rel_err(net, rng) < 1e-3);
    }
  }

  TEST_CASE("Adam one step from zero with unit gradient") {
    std::vector<double> p = {0.0};
    const std::vector<double> g = {1.0};
    std::vector<double> m = {0.0};
    std::vector<double> v = {0.0};
    adam_update<double>(p, g, m, v, 1, AdamConfig{});
    CHECK(std::abs(p[0] - (-0.000999999990)) < 1e-12);
    CHECK(m[0] == doctest::Approx(0.1));
    CHECK(v[0] == doctest::Approx(0.001));
    CHECK_THROWS_AS(adam_update<double>(p, g, m, v, 0, AdamConfig{}), ContractError);
  }

  TEST_CASE("Adam step rejects non-finite gradients and leaves the model untouched") {
    Mlp m = tiny_model(2);
    const Mlp before = m;
    AdamState state(m);
    auto g = zero_gradients(m);
    g[1].weights(0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(adam_step(m, g, state), TrainingError);
    CHECK(m == before);
    CHECK(state.step() == 0);
  }

  TEST_CASE("early stopping follows the scripted validation curve") {
    Mlp m = tiny_model(3);
    std::vector<double> val = {5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
    ScriptedObjective obj(m, 10, val);
    TrainConfig cfg;
    cfg.patience = 10;
    cfg.batch_size = 4;
    cfg.seed = 9;
    const TrainTrace trace = train({&m}, obj, cfg);
    CHECK(trace.epochs_run == 12);
    CHECK(trace.best_epoch == 1);
    CHECK(trace.best_val == 1.0);
    CHECK(trace.val_loss.size() == 12);
    // Best weights are restored.
    CHECK(m == obj.snapshots[1]);
    CHECK_FALSE(m == obj.snapshots.back());
    // Partial trailing batch is kept: 10 rows in batches of 4, 4, 2.
    CHECK(obj.batch_sizes[0] == 4);
    CHECK(obj.batch_sizes[2] == 2);
    CHECK(obj.seen.size() == 10 * 12);
  }

  TEST_CASE("equal losses do not count as an improvement") {
    Mlp m = tiny_model(3);
    ScriptedObjective obj(m, 4, {1, 1, 1, 1});
    TrainConfig cfg;
    cfg.patience = 3;
    const TrainTrace trace = train({&m}, obj, cfg);
    CHECK(trace.epochs_run == 4);
    CHECK(trace.best_epoch == 0);
  }

  TEST_CASE("without early stopping the epoch cap is run and weights are kept") {
    Mlp m = tiny_model(3);
    ScriptedObjective obj(m, 5, {});
    TrainConfig cfg;
    cfg.early_stopping = false;
    cfg.max_epochs = 7;
    const TrainTrace trace = train({&m}, obj, cfg);
    CHECK(trace.epochs_run == 7);
    CHECK(trace.val_loss.empty());
    CHECK(trace.train_loss.size() == 7);
  }

  TEST_CASE("early stopping without validation data is a contract error") {
    Mlp m = tiny_model(3);
    ScriptedObjective obj(m, 5, {});
    TrainConfig cfg;
    CHECK_THROWS_AS(Trainer({&m}, obj, cfg), ContractError);
    cfg.batch_size = 0;
    cfg.early_stopping = false;
    CHECK_THROWS_AS(Trainer({&m}, obj, cfg), ConfigError);
  }

  TEST_CASE("every row is visited exactly once per epoch") {
    Mlp m = tiny_model(3);
    ScriptedObjective obj(m, 23, {});
    TrainConfig cfg;
    cfg.early_stopping = false;
    cfg.max_epochs = 3;
    cfg.batch_size = 5;
    train({&m}, obj, cfg);
    for (std::size_t e = 0; e < 3; ++e) {
      std::vector<std::size_t> epoch(obj.seen.begin() + static_cast<long>(e * 23),
                                     obj.seen.begin() + static_cast<long>((e + 1) * 23));
      std::sort(epoch.begin(), epoch.end());
      std::vector<std::size_t> all(23);
      std::iota(all.begin(), all.end(), std::size_t{0});
      CHECK(epoch == all);
    }
  }
}
