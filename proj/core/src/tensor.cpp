#include "apcvfl/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <string>

#include "apcvfl/error.hpp"

namespace apcvfl {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw ContractError("Tensor2D: data length " + std::to_string(data_.size()) +
                        " does not match shape " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<float> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ContractError("Tensor2D::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return {n, m, std::move(data)};
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0F;
  return t;
}

bool all_finite(std::span<const float> values) noexcept {
  // Exponent-all-ones test on the bit pattern; unlike std::isfinite this
  // vectorises, and it runs on every gradient before each optimiser step.
  std::uint32_t bad = 0;
  for (float v : values) {
    bad |= static_cast<std::uint32_t>((std::bit_cast<std::uint32_t>(v) & 0x7F800000U) == 0x7F800000U);
  }
  return bad == 0;
}

bool Tensor2D::all_finite() const noexcept { return apcvfl::all_finite(data_); }

Tensor2D gather_rows(const Tensor2D& src, std::span<const std::size_t> rows) {
  Tensor2D out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= src.rows()) {
      throw ContractError("gather_rows: row " + std::to_string(rows[i]) + " out of range " +
                          std::to_string(src.rows()));
    }
    auto from = src.row(rows[i]);
    std::copy(from.begin(), from.end(), out.row(i).begin());
  }
  return out;
}

Tensor2D concat_cols(const Tensor2D& left, const Tensor2D& right) {
  if (left.rows() != right.rows()) {
    throw ContractError("concat_cols: row mismatch " + std::to_string(left.rows()) + " vs " +
                        std::to_string(right.rows()));
  }
  Tensor2D out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
  }
  return out;
}

Tensor2D concat_rows(const Tensor2D& top, const Tensor2D& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw ContractError("concat_rows: column mismatch " + std::to_string(top.cols()) + " vs " +
                        std::to_string(bottom.cols()));
  }
  std::vector<float> data(top.values().begin(), top.values().end());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return {top.rows() + bottom.rows(), top.cols(), std::move(data)};
}

}  // namespace apcvfl
