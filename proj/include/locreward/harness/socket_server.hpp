#pragma once

// Local (AF_UNIX) stream socket transport for the scoring service. Connections
// are served one after another; within a connection responses keep request
// order.

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <string>

#include "locreward/harness/service.hpp"

namespace locreward::harness {

namespace detail {

class FileDescriptor {
 public:
  explicit FileDescriptor(int fd = -1) : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

 private:
  int fd_;
};

inline void write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io_error, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

inline sockaddr_un socket_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw Error(ErrorCode::io_error, "socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

}  // namespace detail

inline ServiceStats serve_connection(int fd, const EngineConfig& cfg) {
  ServiceStats stats;
  std::string buffer;
  char chunk[65536];
  const auto answer = [&](std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    const ScoringResponse resp = handle_line(line, cfg);
    ++stats.requests;
    if (!resp.ok()) ++stats.errors;
    detail::write_all(fd, to_json(resp).dump() + '\n');
  };
  while (true) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io_error, std::string("recv: ") + std::strerror(errno));
    }
    if (n == 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1)
      answer(std::string_view(buffer).substr(start, nl - start));
    buffer.erase(0, start);
  }
  answer(buffer);
  return stats;
}

/// Listens on `path` and serves connections until `max_connections` have been
/// handled (forever when unset). `on_ready` runs once the socket is listening.
template <typename OnReady = void (*)()>
ServiceStats serve_unix_socket(const std::string& path, const EngineConfig& cfg,
                               std::optional<std::size_t> max_connections = std::nullopt,
                               OnReady on_ready = [] {}) {
  detail::FileDescriptor listener(::socket(AF_UNIX, SOCK_STREAM, 0));
  if (!listener.valid()) throw Error(ErrorCode::io_error, std::string("socket: ") + std::strerror(errno));
  const sockaddr_un addr = detail::socket_address(path);
  ::unlink(path.c_str());
  if (::bind(listener.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw Error(ErrorCode::io_error, "bind " + path + ": " + std::strerror(errno));
  if (::listen(listener.get(), 16) != 0) throw Error(ErrorCode::io_error, std::string("listen: ") + std::strerror(errno));
  on_ready();

  ServiceStats total;
  for (std::size_t served = 0; !max_connections || served < *max_connections; ++served) {
    detail::FileDescriptor conn(::accept(listener.get(), nullptr, nullptr));
    if (!conn.valid()) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io_error, std::string("accept: ") + std::strerror(errno));
    }
    const ServiceStats s = serve_connection(conn.get(), cfg);
    total.requests += s.requests;
    total.errors += s.errors;
  }
  ::unlink(path.c_str());
  return total;
}

/// Client side helper: connects to `path`.
inline int connect_unix_socket(const std::string& path) {
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::io_error, std::string("socket: ") + std::strerror(errno));
  const sockaddr_un addr = detail::socket_address(path);
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw Error(ErrorCode::io_error, "connect " + path + ": " + std::strerror(errno));
  }
  return fd;
}

}  // namespace locreward::harness
