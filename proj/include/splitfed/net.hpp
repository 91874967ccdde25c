#pragma once

#include <cstdint>
#include <string>

#include "splitfed/wire.hpp"

namespace splitfed {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws ConfigError on malformed input.
Endpoint parse_endpoint(std::string_view text);

// Owning TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close();
  // Half-closes the write side so the peer sees a clean end of stream.
  void shutdown_write();

 private:
  int fd_ = -1;
};

class SocketStream : public ByteStream {
 public:
  explicit SocketStream(Socket socket) : socket_(std::move(socket)) {}

  std::size_t read_some(std::span<std::uint8_t> buffer) override;
  void write_all(std::span<const std::uint8_t> bytes) override;
  // True if data (or EOF) is available within timeout_ms.
  bool wait_readable(int timeout_ms);
  Socket& socket() { return socket_; }

 private:
  Socket socket_;
};

Socket connect_tcp(const Endpoint& endpoint);

class Listener {
 public:
  // Port 0 binds an ephemeral port; see port().
  explicit Listener(const Endpoint& endpoint);
  std::uint16_t port() const { return port_; }
  // Returns an invalid Socket on timeout.
  Socket accept(int timeout_ms);
  void close() { socket_.close(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

}  // namespace splitfed
