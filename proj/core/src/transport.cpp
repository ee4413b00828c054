#include "apcvfl/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "apcvfl/error.hpp"

namespace apcvfl {

// ---------------------------------------------------------------------------
// In-process pair
// ---------------------------------------------------------------------------

namespace {

struct Queue {
  std::deque<std::vector<std::uint8_t>> frames;
  bool closed = false;  // writer side closed
};

struct PairState {
  std::mutex mu;
  std::condition_variable cv;
  Queue q[2];  // q[i] is read by endpoint i
};

class InprocChannel final : public Channel {
 public:
  InprocChannel(std::shared_ptr<PairState> s, int self) : s_(std::move(s)), self_(self) {}
  ~InprocChannel() override { close(); }

  void send(const Frame& frame) override {
    auto bytes = encode_frame(frame);
    std::lock_guard lock(s_->mu);
    Queue& out = s_->q[1 - self_];
    if (out.closed || s_->q[self_].closed) throw TransportError("in-process channel is closed");
    out.frames.push_back(std::move(bytes));
    s_->cv.notify_all();
  }

  std::optional<Frame> receive() override {
    std::unique_lock lock(s_->mu);
    Queue& in = s_->q[self_];
    s_->cv.wait(lock, [&] { return !in.frames.empty() || in.closed; });
    if (in.frames.empty()) return std::nullopt;
    auto bytes = std::move(in.frames.front());
    in.frames.pop_front();
    lock.unlock();
    return decode_frame(bytes);
  }

  void close() override {
    std::lock_guard lock(s_->mu);
    // Frames already queued for the peer stay readable after close.
    s_->q[1 - self_].closed = true;
    s_->q[self_].closed = true;
    s_->cv.notify_all();
  }

 private:
  std::shared_ptr<PairState> s_;
  int self_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair() {
  auto s = std::make_shared<PairState>();
  return {std::make_unique<InprocChannel>(s, 0), std::make_unique<InprocChannel>(s, 1)};
}

// ---------------------------------------------------------------------------
// TCP
// ---------------------------------------------------------------------------

namespace {

std::string errno_text() { return std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const Frame& frame) override {
    if (fd_ < 0) throw TransportError("tcp channel is closed");
    const auto bytes = encode_frame(frame);
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError("tcp send failed: " + errno_text());
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<Frame> receive() override {
    if (fd_ < 0) return std::nullopt;
    std::vector<std::uint8_t> header(kFrameHeaderBytes);
    const std::size_t got = read_fully(header.data(), header.size());
    if (got == 0) return std::nullopt;
    if (got < header.size()) throw TransportError("tcp peer closed inside a frame header");
    const FrameHeader h = decode_header(header);
    std::vector<std::uint8_t> bytes = std::move(header);
    bytes.resize(kFrameHeaderBytes + h.payload_len);
    if (read_fully(bytes.data() + kFrameHeaderBytes, h.payload_len) < h.payload_len) {
      throw TransportError("tcp peer closed inside a frame payload");
    }
    return decode_frame(bytes);
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  // Returns the bytes read; short only at end of stream.
  std::size_t read_fully(std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      const ssize_t r = ::recv(fd_, dst + off, n - off, 0);
      if (r == 0) break;
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError("tcp receive failed: " + errno_text());
      }
      off += static_cast<std::size_t>(r);
    }
    return off;
  }

  int fd_;
};

}  // namespace

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket: " + errno_text());
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = "bind " + host + ":" + std::to_string(port) + ": " + errno_text();
    ::close(fd_);
    throw TransportError(msg);
  }
  if (::listen(fd_, 1) != 0) {
    const std::string msg = "listen: " + errno_text();
    ::close(fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof addr;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpListener::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<Channel> TcpListener::accept() {
  for (;;) {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c >= 0) return std::make_unique<TcpChannel>(c);
    if (errno != EINTR) throw TransportError("accept: " + errno_text());
  }
}

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port,
                                     int timeout_ms) {
  const sockaddr_in addr = resolve(host, port);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket: " + errno_text());
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      return std::make_unique<TcpChannel>(fd);
    }
    const int err = errno;
    ::close(fd);
    if ((err != ECONNREFUSED && err != EINTR) || std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("connect " + host + ":" + std::to_string(port) + ": " +
                           std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw ConfigError("endpoint '" + endpoint + "' is not host:port");
  }
  const std::string port_text = endpoint.substr(colon + 1);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("endpoint '" + endpoint + "' has a non-numeric port");
  }
  if (port > 65535) throw ConfigError("endpoint '" + endpoint + "' port out of range");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

// ---------------------------------------------------------------------------
// Metering
// ---------------------------------------------------------------------------

namespace {
void add(DirectionStats& a, const DirectionStats& b) {
  a.frames += b.frames;
  a.matrix_bytes += b.matrix_bytes;
  a.overhead_bytes += b.overhead_bytes;
}
}  // namespace

CommLedger& CommLedger::operator+=(const CommLedger& o) noexcept {
  rounds += o.rounds;
  gradient_frames += o.gradient_frames;
  add(active_to_passive, o.active_to_passive);
  add(passive_to_active, o.passive_to_active);
  add(evaluation, o.evaluation);
  return *this;
}

void MeteredChannel::send(const Frame& frame) {
  std::optional<IdPurpose> purpose;
  if (frame.type == MsgType::AlignedIds) purpose = decode_id_request(frame.payload).purpose;
  inner_.send(frame);
  DirectionStats& d = ledger_.active_to_passive;
  ++d.frames;
  if (frame.type == MsgType::Gradients) {
    const std::uint64_t data = frame.payload.size() - kMatrixHeaderBytes;
    d.matrix_bytes += data;
    d.overhead_bytes += frame.wire_size() - data;
    ++ledger_.rounds;
    ++ledger_.gradient_frames;
    return;
  }
  d.overhead_bytes += frame.wire_size();
  if (purpose) pending_ = purpose;
}

std::optional<Frame> MeteredChannel::receive() {
  auto frame = inner_.receive();
  if (!frame) return frame;
  if (frame->type != MsgType::Embeddings) {
    ++ledger_.passive_to_active.frames;
    ledger_.passive_to_active.overhead_bytes += frame->wire_size();
    return frame;
  }
  const std::uint64_t data =
      frame->payload.size() >= kMatrixHeaderBytes ? frame->payload.size() - kMatrixHeaderBytes : 0;
  const bool evaluation = pending_ == IdPurpose::Evaluate;
  DirectionStats& d = evaluation ? ledger_.evaluation : ledger_.passive_to_active;
  ++d.frames;
  d.matrix_bytes += data;
  d.overhead_bytes += frame->wire_size() - data;
  if (!evaluation) ++ledger_.rounds;
  pending_.reset();
  return frame;
}

}  // namespace apcvfl
