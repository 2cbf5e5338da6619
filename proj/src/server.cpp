#include "nsim/server.hpp"

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <iostream>
#include <set>

namespace nsim {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

struct PlayServer::Impl {
  asio::io_context io;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::mutex mu;
  std::condition_variable stopped_cv;
  std::vector<std::thread> connections;
  std::set<int> open_sockets;
  std::atomic<bool> stopping{false};
  bool stopped = false;
};

PlayServer::PlayServer(SessionManager& manager) : impl_(std::make_unique<Impl>()), manager_(manager) {}

PlayServer::~PlayServer() { stop(); }

namespace {

void serve_connection(tcp::socket socket, SessionManager& manager) {
  std::set<std::string> owned;
  try {
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws.accept();
    beast::flat_buffer buffer;
    for (;;) {
      buffer.clear();
      ws.read(buffer);
      const std::string text = beast::buffers_to_string(buffer.data());
      const std::string reply = handle_text(manager, text);
      const auto j = nlohmann::json::parse(reply);
      if (j["type"] == "session") owned.insert(j["id"].get<std::string>());
      if (j["type"] == "ack" && j["op"] == "close") owned.erase(j["id"].get<std::string>());
      ws.text(true);
      ws.write(asio::buffer(reply));
    }
  } catch (const beast::system_error& e) {
    if (e.code() != websocket::error::closed && e.code() != asio::error::eof &&
        e.code() != asio::error::connection_reset && e.code() != asio::error::operation_aborted &&
        e.code() != asio::error::bad_descriptor && e.code() != beast::error::timeout) {
      std::cerr << "connection error: " << e.code().message() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "connection error: " << e.what() << "\n";
  }
  for (const auto& id : owned) {
    try {
      manager.close(id);
    } catch (const NotFoundError&) {
    }
  }
}

}  // namespace

uint16_t PlayServer::start(const std::string& address, uint16_t port) {
  Impl& s = *impl_;
  const tcp::endpoint ep(asio::ip::make_address(address), port);
  s.acceptor = std::make_unique<tcp::acceptor>(s.io);
  s.acceptor->open(ep.protocol());
  s.acceptor->set_option(asio::socket_base::reuse_address(true));
  s.acceptor->bind(ep);
  s.acceptor->listen();
  port_ = s.acceptor->local_endpoint().port();
  s.accept_thread = std::thread([this] {
    Impl& st = *impl_;
    while (!st.stopping) {
      tcp::socket socket(st.io);
      boost::system::error_code ec;
      st.acceptor->accept(socket, ec);
      if (st.stopping) break;
      if (ec) continue;
      socket.set_option(tcp::no_delay(true), ec);
      const int fd = socket.native_handle();
      std::lock_guard lock(st.mu);
      st.open_sockets.insert(fd);
      st.connections.emplace_back([this, fd, sock = std::move(socket)]() mutable {
        serve_connection(std::move(sock), manager_);
        std::lock_guard l(impl_->mu);
        impl_->open_sockets.erase(fd);
      });
    }
  });
  return port_;
}

void PlayServer::stop() {
  Impl& s = *impl_;
  if (!s.acceptor || s.stopping.exchange(true)) return;
  ::shutdown(s.acceptor->native_handle(), SHUT_RDWR);
  if (s.accept_thread.joinable()) s.accept_thread.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(s.mu);
    for (int fd : s.open_sockets) ::shutdown(fd, SHUT_RDWR);
    threads.swap(s.connections);
  }
  for (auto& t : threads) t.join();
  boost::system::error_code ec;
  s.acceptor->close(ec);
  std::lock_guard lock(s.mu);
  s.stopped = true;
  s.stopped_cv.notify_all();
}

void PlayServer::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

}  // namespace nsim
