#include <benchmark/benchmark.h>

#include <random>

#include "apcvfl/nn.hpp"
#include "apcvfl/representation.hpp"

using namespace apcvfl;

namespace {

Tensor2D gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0F, 1.0F);
  Tensor2D t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (float& v : t.row(r)) v = normal(rng);
  }
  return t;
}

// The passive local encoder, [p, 128, 256], on one batch.
void BM_EncoderForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(EncoderRole::LocalPassive, 25), 1);
  const Tensor2D x = gaussian(batch, 25, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict(ae.encoder, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(256);

void BM_EncoderBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(EncoderRole::LocalPassive, 25), 1);
  const Tensor2D x = gaussian(batch, 25, 2);
  const auto acts = forward(ae.encoder, x);
  const Tensor2D upstream = gaussian(batch, kLocalPassiveLatent, 3);
  ParamGradients grads = zero_gradients(ae.encoder);
  Tensor2D input_grad;
  for (auto _ : state) {
    backward_into(ae.encoder, x, acts, upstream, grads, &input_grad);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderBackward)->Arg(32)->Arg(256);

void BM_AdamStep(benchmark::State& state) {
  Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(EncoderRole::Joint, 0), 1);
  const ParamGradients grads = zero_gradients(ae.encoder);
  AdamState adam(ae.encoder, AdamConfig{});
  for (auto _ : state) {
    adam_step(ae.encoder, grads, adam);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_AdamStep);

// One reconstruction epoch of the breast-sized passive autoencoder.
void BM_ReconstructionEpoch(benchmark::State& state) {
  const Tensor2D x = gaussian(static_cast<std::size_t>(state.range(0)), 25, 4);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.early_stopping = false;
  cfg.seed = 5;
  for (auto _ : state) {
    Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(EncoderRole::LocalPassive, 25), 1);
    benchmark::DoNotOptimize(train_reconstruction(ae, x, Tensor2D{}, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReconstructionEpoch)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
