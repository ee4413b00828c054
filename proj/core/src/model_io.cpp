#include "apcvfl/model_io.hpp"

#include <fstream>
#include <iterator>

#include "apcvfl/error.hpp"
#include "bytes.hpp"

namespace apcvfl {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'F', 'M'};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to model file " + path.string());
}

}  // namespace

std::vector<std::uint8_t> serialize_models(std::span<const Mlp* const> models) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  detail::put_le<std::uint32_t>(out, kModelFileVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(models.size()));
  for (const Mlp* m : models) {
    const auto widths = m->widths();
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->layers().size()));
    for (std::size_t w : widths) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    for (const auto& layer : m->layers()) {
      out.push_back(static_cast<std::uint8_t>(layer.activation));
    }
    for (const auto& layer : m->layers()) {
      for (float v : layer.weights.values()) detail::put_f32(out, v);
      for (float v : layer.bias) detail::put_f32(out, v);
    }
  }
  return out;
}

std::vector<Mlp> deserialize_models(std::span<const std::uint8_t> bytes) {
  detail::Reader<ParseError> r(bytes, "model file");
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ParseError("model file: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFileVersion) {
    throw ParseError("model file: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<Mlp> models;
  for (std::uint32_t m = 0; m < count; ++m) {
    const auto n_layers = r.get<std::uint32_t>();
    if (n_layers == 0) throw ParseError("model file: model without layers");
    std::vector<std::size_t> widths(n_layers + 1);
    for (auto& w : widths) {
      w = r.get<std::uint32_t>();
      if (w == 0) throw ParseError("model file: zero layer width");
    }
    std::vector<Activation> acts(n_layers);
    for (auto& a : acts) {
      const auto tag = r.get<std::uint8_t>();
      if (tag > static_cast<std::uint8_t>(Activation::Identity)) {
        throw ParseError("model file: unknown activation tag " + std::to_string(tag));
      }
      a = static_cast<Activation>(tag);
    }
    std::vector<DenseLayer> layers;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      const std::size_t in = widths[l];
      const std::size_t out = widths[l + 1];
      if (r.remaining() / 4 < out * (in + 1)) throw ParseError("model file: truncated weights");
      DenseLayer layer;
      layer.activation = acts[l];
      layer.weights = Tensor2D(out, in);
      for (float& v : layer.weights.values()) v = r.get_f32();
      layer.bias.resize(out);
      for (float& v : layer.bias) v = r.get_f32();
      layers.push_back(std::move(layer));
    }
    models.emplace_back(std::move(layers));
  }
  r.expect_end();
  return models;
}

void save_mlp(const std::filesystem::path& path, const Mlp& model) {
  const Mlp* ms[] = {&model};
  write_file(path, serialize_models(ms));
}

Mlp load_mlp(const std::filesystem::path& path) {
  auto models = deserialize_models(read_file(path));
  if (models.size() != 1) throw ParseError(path.string() + ": expected one model");
  return std::move(models.front());
}

void save_autoencoder(const std::filesystem::path& path, const Autoencoder& ae) {
  const Mlp* ms[] = {&ae.encoder, &ae.decoder};
  write_file(path, serialize_models(ms));
}

Autoencoder load_autoencoder(const std::filesystem::path& path) {
  auto models = deserialize_models(read_file(path));
  if (models.size() != 2) throw ParseError(path.string() + ": expected encoder and decoder");
  if (models[0].output_dim() != models[1].input_dim()) {
    throw ParseError(path.string() + ": encoder output does not feed the decoder");
  }
  return {std::move(models[0]), std::move(models[1])};
}

}  // namespace apcvfl
