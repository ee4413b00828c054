#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <vector>

namespace apcvfl {

/// Allocator with a fixed 64-byte alignment. Vectorised kernels peel a
/// different number of leading elements depending on where a buffer starts,
/// which changes rounding; a fixed start keeps results reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// True when no value is NaN or infinite.
bool all_finite(std::span<const float> values) noexcept;

/// Row-major matrix of 32-bit reals. Every feature matrix, activation and
/// latent representation in the library is stored as a Tensor2D.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, float fill = 0.0F);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data);

  /// Builds a matrix from nested row lists; all rows must have equal length.
  static Tensor2D from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor2D identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  bool all_finite() const noexcept;

  /// Changes the shape, reusing storage. Contents are unspecified afterwards.
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  FloatBuffer data_;
};

/// Copies the listed rows, in order, into a new matrix.
Tensor2D gather_rows(const Tensor2D& src, std::span<const std::size_t> rows);

/// Horizontal concatenation; row counts must match.
Tensor2D concat_cols(const Tensor2D& left, const Tensor2D& right);

/// Vertical concatenation; column counts must match.
Tensor2D concat_rows(const Tensor2D& top, const Tensor2D& bottom);

}  // namespace apcvfl
