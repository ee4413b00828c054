#include <doctest.h>

#include <thread>

#include "apcvfl/error.hpp"
#include "apcvfl/transport.hpp"
#include "random_frames.hpp"

using namespace apcvfl;

namespace {

Frame matrix_frame(MsgType type, std::size_t rows, std::size_t cols) {
  return Frame{type, encode_matrix(Tensor2D(rows, cols))};
}

Frame request_frame(IdPurpose purpose) {
  return Frame{MsgType::AlignedIds, encode_id_request(IdRequest{purpose, 0, {"x"}})};
}

// Sends `frames` from one end and checks they arrive unchanged and in order.
void exchange(Channel& a, Channel& b, const std::vector<Frame>& frames) {
  std::thread sender([&] {
    for (const auto& f : frames) a.send(f);
    a.close();
  });
  std::vector<Frame> got;
  while (auto f = b.receive()) got.push_back(std::move(*f));
  sender.join();
  CHECK(got == frames);
}

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("in-process pair delivers in order and drains after close") {
    auto [a, b] = make_inproc_pair();
    Rng rng(5);
    std::vector<Frame> frames;
    for (int i = 0; i < 50; ++i) frames.push_back(testing::random_frame(rng));
    exchange(*a, *b, frames);
    CHECK_THROWS_AS(a->send(frames[0]), TransportError);
    CHECK_FALSE(b->receive().has_value());
  }

  TEST_CASE("TCP loopback delivers in order and reports a clean close") {
    TcpListener listener("127.0.0.1", 0);
    REQUIRE(listener.port() != 0);
    std::unique_ptr<Channel> server;
    std::thread acceptor([&] { server = listener.accept(); });
    auto client = tcp_connect("127.0.0.1", listener.port(), 5000);
    acceptor.join();
    Rng rng(6);
    std::vector<Frame> frames;
    for (int i = 0; i < 50; ++i) frames.push_back(testing::random_frame(rng));
    frames.push_back(matrix_frame(MsgType::Embeddings, 300, 256));  // larger than one segment
    exchange(*client, *server, frames);
  }

  TEST_CASE("TCP connect gives up after the timeout") {
    std::uint16_t port = 0;
    {
      TcpListener probe("127.0.0.1", 0);
      port = probe.port();
    }
    CHECK_THROWS_AS(tcp_connect("127.0.0.1", port, 200), TransportError);
  }

  TEST_CASE("listener shutdown unblocks accept") {
    TcpListener listener("127.0.0.1", 0);
    std::thread t([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      listener.shutdown();
    });
    CHECK_THROWS_AS(listener.accept(), TransportError);
    t.join();
  }

  TEST_CASE("endpoint parsing") {
    CHECK(parse_endpoint("127.0.0.1:9000") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 9000});
    CHECK_THROWS_AS(parse_endpoint("localhost"), ConfigError);
    CHECK_THROWS_AS(parse_endpoint("h:12x"), ConfigError);
    CHECK_THROWS_AS(parse_endpoint("h:70000"), ConfigError);
  }

  TEST_CASE("metering books training traffic and sets evaluation apart") {
    auto [active, passive] = make_inproc_pair();
    MeteredChannel meter(*active);

    meter.send(Frame{MsgType::Hello, encode_hello({})});
    passive->receive();
    passive->send(Frame{MsgType::Hello, encode_hello({})});
    meter.receive();

    // One training step: request, embeddings back, gradients out.
    meter.send(request_frame(IdPurpose::Train));
    passive->send(matrix_frame(MsgType::Embeddings, 4, 256));
    meter.receive();
    meter.send(matrix_frame(MsgType::Gradients, 4, 256));

    // Evaluation request: not a round.
    meter.send(request_frame(IdPurpose::Evaluate));
    passive->send(matrix_frame(MsgType::Embeddings, 2, 256));
    meter.receive();

    const CommLedger& l = meter.ledger();
    CHECK(l.rounds == 2);
    CHECK(l.gradient_frames == 1);
    CHECK(l.passive_to_active.matrix_bytes == 4 * 256 * 4);
    CHECK(l.active_to_passive.matrix_bytes == 4 * 256 * 4);
    CHECK(l.evaluation.matrix_bytes == 2 * 256 * 4);
    CHECK(l.evaluation.frames == 1);
    CHECK(l.passive_to_active.frames == 2);  // hello ack + embeddings
    CHECK(l.active_to_passive.frames == 4);
    CHECK(l.matrix_bytes() == 2 * 4 * 256 * 4);
    CHECK(l.closed_form_bytes(10) == 4 * 256 * 4 + 10 * 4);
    CHECK(l.active_to_passive.overhead_bytes > 0);

    CommLedger sum = l;
    sum += l;
    CHECK(sum.rounds == 4);
    CHECK(sum.evaluation.matrix_bytes == 2 * l.evaluation.matrix_bytes);
    meter.reset();
    CHECK(meter.ledger() == CommLedger{});
  }

  TEST_CASE("a failed send is not booked") {
    auto [active, passive] = make_inproc_pair();
    MeteredChannel meter(*active);
    passive->close();
    CHECK_THROWS_AS(meter.send(matrix_frame(MsgType::Gradients, 1, 1)), TransportError);
    CHECK(meter.ledger() == CommLedger{});
  }
}
