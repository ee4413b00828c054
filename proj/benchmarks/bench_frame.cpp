#include <benchmark/benchmark.h>

#include "apcvfl/frame.hpp"

using namespace apcvfl;

namespace {

// An Embeddings frame of `rows` codes at the passive latent width.
Frame embeddings(std::size_t rows) {
  Tensor2D z(rows, 256);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < 256; ++c) z(r, c) = static_cast<float>(r) * 0.5F - static_cast<float>(c);
  }
  return Frame{MsgType::Embeddings, encode_matrix(z)};
}

void BM_FrameEncode(benchmark::State& state) {
  const Frame f = embeddings(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encode_frame(f));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(f.payload.size()));
}
BENCHMARK(BM_FrameEncode)->Arg(32)->Arg(250);

void BM_FrameDecodeMatrix(benchmark::State& state) {
  const auto bytes = encode_frame(embeddings(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    const Frame f = decode_frame(bytes);
    benchmark::DoNotOptimize(decode_matrix(f.payload));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_FrameDecodeMatrix)->Arg(32)->Arg(250);

}  // namespace
