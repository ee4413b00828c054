#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apcvfl/tensor.hpp"

namespace apcvfl {

// Header: "AVFL", u8 version, u8 message type, u32 LE payload length.
inline constexpr std::size_t kFrameHeaderBytes = 10;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 8;
inline constexpr std::uint32_t kMaxPayloadBytes = 1U << 30;

// The vocabulary carries sample IDs, latent codes and gradients only. There
// is deliberately no message for raw features, labels or model weights.
enum class MsgType : std::uint8_t {
  Hello = 1,
  AlignedIds = 2,
  Embeddings = 3,
  Gradients = 4,
  Close = 5,
  Error = 6,
};

const char* to_string(MsgType t) noexcept;

struct Frame {
  MsgType type = MsgType::Close;
  std::vector<std::uint8_t> payload;

  std::size_t wire_size() const noexcept { return kFrameHeaderBytes + payload.size(); }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameHeader {
  MsgType type;
  std::uint32_t payload_len;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
/// Validates magic, version, type and length; throws ProtocolError.
FrameHeader decode_header(std::span<const std::uint8_t> header);
/// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

/// rows u32, cols u32, rows*cols f32, all little-endian.
std::vector<std::uint8_t> encode_matrix(const Tensor2D& m);
Tensor2D decode_matrix(std::span<const std::uint8_t> payload);

struct Hello {
  std::uint8_t method = 0;
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Hello&, const Hello&) = default;
};

std::vector<std::uint8_t> encode_hello(const Hello& h);
Hello decode_hello(std::span<const std::uint8_t> payload);

/// What the active side asks the passive side to do with a list of IDs.
enum class IdPurpose : std::uint8_t {
  Align = 0,     // final alignment: answer with codes for these IDs (one shot)
  Train = 1,     // split learning step: answer with embeddings, expect gradients
  Evaluate = 2,  // split learning inference: answer with embeddings only
};

inline constexpr std::uint8_t kFlagSnapshotBest = 0x01;  // current weights become "best"
inline constexpr std::uint8_t kFlagRestoreBest = 0x02;   // restore "best" before answering

struct IdRequest {
  IdPurpose purpose = IdPurpose::Align;
  std::uint8_t flags = 0;
  std::vector<std::string> ids;

  friend bool operator==(const IdRequest&, const IdRequest&) = default;
};

/// purpose u8, flags u8, count u32, then per ID a u16 length and its bytes.
std::vector<std::uint8_t> encode_id_request(const IdRequest& r);
IdRequest decode_id_request(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_text(const std::string& s);
std::string decode_text(std::span<const std::uint8_t> payload);

}  // namespace apcvfl
