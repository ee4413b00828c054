#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "apcvfl/frame.hpp"

namespace apcvfl {

/// Ordered, exactly-once frame pipe between the two participants.
class Channel {
 public:
  virtual ~Channel() = default;

  /// Throws TransportError when the peer is gone.
  virtual void send(const Frame& frame) = 0;
  /// Blocks for the next frame. std::nullopt means the peer closed cleanly at
  /// a frame boundary; anything else abnormal throws.
  virtual std::optional<Frame> receive() = 0;
  /// Idempotent. The peer's pending receive() returns std::nullopt once the
  /// frames already sent have been drained.
  virtual void close() = 0;
};

/// Two connected endpoints living in one process. Frames pass through the
/// byte codec so the in-process path exercises the same wire format as TCP.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair();

// ---------------------------------------------------------------------------
// TCP (POSIX sockets, IPv4)
// ---------------------------------------------------------------------------

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Blocks until one peer connects.
  std::unique_ptr<Channel> accept();
  /// Makes a pending or future accept() fail with TransportError.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Retries refused connections until `timeout_ms` has elapsed.
std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port,
                                     int timeout_ms = 10000);

/// Parses "host:port"; throws ConfigError.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

// ---------------------------------------------------------------------------
// Communication accounting
// ---------------------------------------------------------------------------

struct DirectionStats {
  std::uint64_t frames = 0;
  std::uint64_t matrix_bytes = 0;    // 4 bytes per transmitted element
  std::uint64_t overhead_bytes = 0;  // frame and matrix headers, control frames

  friend bool operator==(const DirectionStats&, const DirectionStats&) = default;
};

/// Seen from the active participant. Only training traffic counts toward
/// rounds and matrix bytes: passive embeddings answering an Align or Train
/// request and gradient frames. Embeddings answering Evaluate requests are
/// kept apart in `evaluation`.
struct CommLedger {
  std::uint64_t rounds = 0;
  std::uint64_t gradient_frames = 0;
  DirectionStats active_to_passive;
  DirectionStats passive_to_active;
  DirectionStats evaluation;

  std::uint64_t matrix_bytes() const noexcept {
    return active_to_passive.matrix_bytes + passive_to_active.matrix_bytes;
  }
  std::uint64_t overhead_bytes() const noexcept {
    return active_to_passive.overhead_bytes + passive_to_active.overhead_bytes;
  }
  /// Cost as the closed-form footprints count it: forward embeddings plus
  /// `p_params` elements per gradient message.
  std::uint64_t closed_form_bytes(std::uint64_t p_params) const noexcept {
    return passive_to_active.matrix_bytes + gradient_frames * p_params * 4;
  }

  CommLedger& operator+=(const CommLedger& o) noexcept;
  friend bool operator==(const CommLedger&, const CommLedger&) = default;
};

/// Wraps the active participant's channel and books every frame that goes
/// through it. A frame is booked only after the underlying call succeeded.
class MeteredChannel final : public Channel {
 public:
  explicit MeteredChannel(Channel& inner) : inner_(inner) {}

  void send(const Frame& frame) override;
  std::optional<Frame> receive() override;
  void close() override { inner_.close(); }

  const CommLedger& ledger() const noexcept { return ledger_; }
  void reset() noexcept { ledger_ = {}; pending_.reset(); }

 private:
  Channel& inner_;
  CommLedger ledger_;
  std::optional<IdPurpose> pending_;  // purpose of the outstanding id request
};

}  // namespace apcvfl
