#include "apcvfl/footprint.hpp"

#include <cstdio>
#include <limits>

#include "apcvfl/error.hpp"

namespace apcvfl {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw ContractError("footprint overflows 64 bits");
  }
  return a * b;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a) {
    throw ContractError("footprint overflows 64 bits");
  }
  return a + b;
}

}  // namespace

std::uint64_t footprint_apcvfl(std::uint64_t d_a, std::uint64_t z_p) {
  return mul(mul(d_a, z_p), kBytesPerElement);
}

SplitFootprint footprint_splitnn_parts(std::uint64_t epochs, std::uint64_t d_a, std::uint64_t z_p,
                                       std::uint64_t batch, std::uint64_t p_params) {
  if (batch == 0) throw ContractError("footprint_splitnn: batch size must be positive");
  const std::uint64_t batches = (d_a + batch - 1) / batch;
  return {mul(mul(mul(epochs, d_a), z_p), kBytesPerElement),
          mul(mul(mul(epochs, batches), p_params), kBytesPerElement)};
}

std::uint64_t footprint_splitnn(std::uint64_t epochs, std::uint64_t d_a, std::uint64_t z_p,
                                std::uint64_t batch, std::uint64_t p_params) {
  const auto parts = footprint_splitnn_parts(epochs, d_a, z_p, batch, p_params);
  return add(parts.forward, parts.backward);
}

std::uint64_t footprint_vfedtrans(std::uint64_t d_a, std::uint64_t x_t, std::uint64_t x_d) {
  const std::uint64_t x = add(x_t, x_d);
  std::uint64_t elems = mul(2, mul(d_a, d_a));
  elems = add(elems, mul(x_t, x));
  elems = add(elems, mul(x_d, x));
  elems = add(elems, mul(d_a, x_t));
  elems = add(elems, mul(d_a, x_d));
  elems = add(elems, mul(d_a, x));
  return mul(elems, kBytesPerElement);
}

double to_megabytes(std::uint64_t bytes) noexcept { return static_cast<double>(bytes) / 1e6; }

std::string format_bytes(std::uint64_t bytes) {
  char buf[64];
  if (bytes < 5000) {  // would print as 0.00 MB
    std::snprintf(buf, sizeof buf, "%llu B", static_cast<unsigned long long>(bytes));
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%llu B (%.2f MB)", static_cast<unsigned long long>(bytes),
                to_megabytes(bytes));
  return buf;
}

}  // namespace apcvfl
