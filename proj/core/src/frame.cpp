#include "apcvfl/frame.hpp"

#include <algorithm>
#include <limits>

#include "apcvfl/error.hpp"
#include "bytes.hpp"

namespace apcvfl {

namespace {
constexpr std::uint8_t kMagic[4] = {'A', 'V', 'F', 'L'};
using PReader = detail::Reader<ProtocolError>;
}  // namespace

const char* to_string(MsgType t) noexcept {
  switch (t) {
    case MsgType::Hello: return "Hello";
    case MsgType::AlignedIds: return "AlignedIds";
    case MsgType::Embeddings: return "Embeddings";
    case MsgType::Gradients: return "Gradients";
    case MsgType::Close: return "Close";
    case MsgType::Error: return "Error";
  }
  return "?";
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayloadBytes) {
    throw ProtocolError("frame payload of " + std::to_string(frame.payload.size()) +
                        " bytes exceeds the limit");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(frame.wire_size());
  out.push_back(kProtocolVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderBytes) {
    throw ProtocolError("frame header truncated: " + std::to_string(header.size()) + " bytes");
  }
  if (!std::equal(kMagic, kMagic + 4, header.begin())) throw ProtocolError("bad frame magic");
  if (header[4] != kProtocolVersion) {
    throw ProtocolError("protocol version mismatch: got " + std::to_string(header[4]) +
                        ", expected " + std::to_string(kProtocolVersion));
  }
  const std::uint8_t type = header[5];
  if (type < static_cast<std::uint8_t>(MsgType::Hello) ||
      type > static_cast<std::uint8_t>(MsgType::Error)) {
    throw ProtocolError("unknown message type " + std::to_string(type));
  }
  PReader r(header.subspan(6, 4), "frame header");
  const auto len = r.get<std::uint32_t>();
  if (len > kMaxPayloadBytes) throw ProtocolError("frame payload length exceeds the limit");
  return {static_cast<MsgType>(type), len};
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_header(bytes);
  const std::size_t have = bytes.size() - kFrameHeaderBytes;
  if (have != h.payload_len) {
    throw ProtocolError("frame payload length " + std::to_string(h.payload_len) +
                        " does not match the " + std::to_string(have) + " bytes present");
  }
  Frame f;
  f.type = h.type;
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return f;
}

std::vector<std::uint8_t> encode_matrix(const Tensor2D& m) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (m.rows() > kMax || m.cols() > kMax) throw ProtocolError("matrix too large for the wire");
  std::vector<std::uint8_t> out;
  out.reserve(kMatrixHeaderBytes + 4 * m.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (float v : m.values()) detail::put_f32(out, v);
  return out;
}

Tensor2D decode_matrix(std::span<const std::uint8_t> payload) {
  PReader r(payload, "matrix payload");
  const std::size_t rows = r.get<std::uint32_t>();
  const std::size_t cols = r.get<std::uint32_t>();
  if (r.remaining() != 4 * rows * cols) {
    throw ProtocolError("matrix payload: " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " needs " + std::to_string(4 * rows * cols) + " data bytes, got " +
                        std::to_string(r.remaining()));
  }
  Tensor2D m(rows, cols);
  for (float& v : m.values()) v = r.get_f32();
  return m;
}

std::vector<std::uint8_t> encode_hello(const Hello& h) {
  std::vector<std::uint8_t> out;
  out.push_back(h.method);
  detail::put_le<std::uint64_t>(out, h.scenario_hash);
  detail::put_le<std::uint64_t>(out, h.seed);
  return out;
}

Hello decode_hello(std::span<const std::uint8_t> payload) {
  PReader r(payload, "hello payload");
  Hello h;
  h.method = r.get<std::uint8_t>();
  h.scenario_hash = r.get<std::uint64_t>();
  h.seed = r.get<std::uint64_t>();
  r.expect_end();
  return h;
}

std::vector<std::uint8_t> encode_id_request(const IdRequest& req) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(req.purpose));
  out.push_back(req.flags);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(req.ids.size()));
  for (const auto& id : req.ids) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ProtocolError("sample ID longer than 65535 bytes");
    }
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  return out;
}

IdRequest decode_id_request(std::span<const std::uint8_t> payload) {
  PReader r(payload, "id payload");
  IdRequest req;
  const auto purpose = r.get<std::uint8_t>();
  if (purpose > static_cast<std::uint8_t>(IdPurpose::Evaluate)) {
    throw ProtocolError("id payload: unknown purpose " + std::to_string(purpose));
  }
  req.purpose = static_cast<IdPurpose>(purpose);
  req.flags = r.get<std::uint8_t>();
  const auto count = r.get<std::uint32_t>();
  if (count > r.remaining() / 2) throw ProtocolError("id payload: count exceeds payload");
  req.ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    const auto b = r.take(len);
    req.ids.emplace_back(b.begin(), b.end());
  }
  r.expect_end();
  return req;
}

std::vector<std::uint8_t> encode_text(const std::string& s) { return {s.begin(), s.end()}; }

std::string decode_text(std::span<const std::uint8_t> payload) {
  return {payload.begin(), payload.end()};
}

}  // namespace apcvfl
