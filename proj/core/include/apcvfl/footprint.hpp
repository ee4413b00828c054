#pragma once

#include <cstdint>
#include <string>

namespace apcvfl {

inline constexpr std::uint64_t kBytesPerElement = 4;
inline constexpr std::uint64_t kPassiveEmbeddingDim = 256;
/// Parameters of the passive bottom model's last layer (128 x 256 + 256).
inline constexpr std::uint64_t kPassiveLastLayerParams = 128 * 256 + 256;

/// d_a * z_p * 4: the passive codes sent once.
std::uint64_t footprint_apcvfl(std::uint64_t d_a, std::uint64_t z_p);

struct SplitFootprint {
  std::uint64_t forward = 0;   // epochs * d_a * z_p * 4
  std::uint64_t backward = 0;  // epochs * ceil(d_a / batch) * p_params * 4
  std::uint64_t total() const noexcept { return forward + backward; }
};

SplitFootprint footprint_splitnn_parts(std::uint64_t epochs, std::uint64_t d_a, std::uint64_t z_p,
                                       std::uint64_t batch, std::uint64_t p_params);
std::uint64_t footprint_splitnn(std::uint64_t epochs, std::uint64_t d_a, std::uint64_t z_p,
                                std::uint64_t batch, std::uint64_t p_params);

/// (2 d^2 + x_t x + x_d x + d x_t + d x_d + d x) * 4 with x = x_t + x_d.
std::uint64_t footprint_vfedtrans(std::uint64_t d_a, std::uint64_t x_t, std::uint64_t x_d);

/// Decimal megabytes (10^6 bytes).
double to_megabytes(std::uint64_t bytes) noexcept;
/// "9728000 B (9.73 MB)". The MB part is left out when it would read 0.00.
std::string format_bytes(std::uint64_t bytes);

}  // namespace apcvfl
