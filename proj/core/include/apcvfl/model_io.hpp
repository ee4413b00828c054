#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "apcvfl/nn.hpp"
#include "apcvfl/representation.hpp"

namespace apcvfl {

// Versioned binary model files: "AVFM", u32 version, u32 model count, then per
// model the layer count, the widths, one activation byte per layer and the
// little-endian f32 weights (row-major, out x in) followed by the biases.

inline constexpr std::uint32_t kModelFileVersion = 1;

std::vector<std::uint8_t> serialize_models(std::span<const Mlp* const> models);
std::vector<Mlp> deserialize_models(std::span<const std::uint8_t> bytes);

void save_mlp(const std::filesystem::path& path, const Mlp& model);
Mlp load_mlp(const std::filesystem::path& path);

/// Encoder first, decoder second.
void save_autoencoder(const std::filesystem::path& path, const Autoencoder& ae);
Autoencoder load_autoencoder(const std::filesystem::path& path);

}  // namespace apcvfl
