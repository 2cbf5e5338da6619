#include <algorithm>
#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <thread>

#include "doctest.h"
#include "nsim/image.hpp"
#include "nsim/server.hpp"
#include "schema_check.hpp"

using namespace nsim;
using nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Client {
 public:
  explicit Client(uint16_t port) : ws_(io_) {
    tcp::resolver resolver(io_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  json request(const json& msg) {
    ws_.text(true);
    ws_.write(asio::buffer(msg.dump()));
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  asio::io_context io_;
  websocket::stream<tcp::socket> ws_;
};

const testutil::Schema& schema() {
  static const testutil::Schema s(std::string(NSIM_SOURCE_DIR) + "/protocol/play.schema.json");
  return s;
}

bool wait_for(const std::function<bool()>& pred) {
  for (int i = 0; i < 200; ++i) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

}  // namespace

TEST_CASE("websocket round trip: create, keypresses, swap and disconnect cleanup") {
  SessionManager manager(std::make_shared<Simulator>(ModelConfig::desk(), 2));
  PlayServer server(manager);
  const uint16_t port = server.start("127.0.0.1", 0);
  REQUIRE(port != 0);

  std::vector<std::string> frames;
  {
    Client c(port);
    const auto t0 = std::chrono::steady_clock::now();
    const json s = c.request({{"type", "create"}, {"seed", 9}});
    const double create_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(schema().check(s, "server_message").empty());
    REQUIRE(s["type"] == "session");
    const std::string id = s["id"];
    CHECK(manager.size() == 1);

    std::vector<double> ms;
    for (int i = 0; i < 100; ++i) {
      const auto t = std::chrono::steady_clock::now();
      const json f = c.request({{"type", "action"}, {"id", id}, {"action", i % 5}});
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count());
      REQUIRE(schema().check(f, "server_message").empty());
      CHECK(f["step"] == i + 1);
      frames.push_back(f["frame"]);
    }
    std::nth_element(ms.begin(), ms.begin() + 50, ms.end());
    MESSAGE("create " << create_ms << " ms, median step " << ms[50] << " ms");
    CHECK(create_ms < 100.0);
    CHECK(ms[50] < 100.0);

    const Frame black{16, 16, std::vector<uint8_t>(16 * 16 * 3, 0)};
    CHECK(c.request({{"type", "swap"}, {"id", id}, {"png_base64", base64_encode(encode_png(black))}})["type"] == "ack");
    CHECK(c.request({{"type", "action"}, {"id", id}, {"action", 9}})["code"] == "invalid_action");
    CHECK(c.request({{"type", "clear_swap"}, {"id", id}})["type"] == "ack");
    c.close();
  }
  CHECK(wait_for([&] { return manager.size() == 0; }));

  {
    // Reconnecting with the same seed replays the same frames.
    Client c(port);
    const std::string id = c.request({{"type", "create"}, {"seed", 9}})["id"];
    for (int i = 0; i < 10; ++i) {
      CHECK(c.request({{"type", "action"}, {"id", id}, {"action", i % 5}})["frame"] == frames[static_cast<size_t>(i)]);
    }
    CHECK(c.request({{"type", "close"}, {"id", id}})["op"] == "close");
    CHECK(manager.size() == 0);
  }

  {
    Client a(port), b(port);
    const std::string ia = a.request({{"type", "create"}, {"seed", 1}})["id"];
    const std::string ib = b.request({{"type", "create"}, {"seed", 1}})["id"];
    CHECK(ia != ib);
    CHECK(manager.size() == 2);
    a.close();
    CHECK(wait_for([&] { return manager.size() == 1; }));
    CHECK(b.request({{"type", "action"}, {"id", ib}, {"action", 0}})["type"] == "frame");
  }
  server.stop();
}

TEST_CASE("stop unblocks a server with open connections") {
  SessionManager manager(std::make_shared<Simulator>(ModelConfig::desk(), 2));
  PlayServer server(manager);
  const uint16_t port = server.start("127.0.0.1", 0);
  Client c(port);
  c.request({{"type", "create"}, {"seed", 0}});
  std::thread waiter([&] { server.wait(); });
  server.stop();
  waiter.join();
  CHECK(wait_for([&] { return manager.size() == 0; }));
}
