/* Copyright 2026 the DMF authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dmf/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "dmf/error.hpp"

namespace dmf {

namespace {

using Clock = std::chrono::steady_clock;

int64_t remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left;
}

[[noreturn]] void throw_errno(ErrorCode code, const std::string& what,
                              bool retriable) {
  throw Error(code, what + ": " + std::strerror(errno), retriable);
}

void set_cloexec(int fd) { ::fcntl(fd, F_SETFD, FD_CLOEXEC); }

// Waits for the requested events; throws on timeout when deadline applies.
void wait_ready(int fd, short events, Clock::time_point deadline,
                bool has_deadline, const char* what) {
  for (;;) {
    struct pollfd pfd{};
    pfd.fd = fd;
    pfd.events = events;
    int wait = -1;
    if (has_deadline) {
      const int64_t left = remaining_ms(deadline);
      if (left <= 0) throw Error(ErrorCode::Io, std::string(what) + ": timed out", true);
      wait = static_cast<int>(std::min<int64_t>(left, 60'000));
    }
    const int rc = ::poll(&pfd, 1, wait);
    if (rc > 0) return;
    if (rc == 0) continue;  // re-check deadline
    if (errno == EINTR) continue;
    throw_errno(ErrorCode::Io, what, true);
  }
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  struct addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  struct addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw Error(ErrorCode::Connect,
                "cannot resolve host '" + host + "': " + gai_strerror(rc), true);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

TcpStream::~TcpStream() { close(); }

TcpStream::TcpStream(TcpStream&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

TcpStream& TcpStream::operator=(TcpStream&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void TcpStream::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpStream::shutdown_both() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

TcpStream TcpStream::connect(const std::string& host, std::uint16_t port,
                             int timeout_ms) {
  const sockaddr_in addr = resolve(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw_errno(ErrorCode::Io, "socket", false);
  TcpStream stream(fd);

  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (rc != 0 && errno != EINPROGRESS) {
    throw_errno(ErrorCode::Connect, "connect " + host, true);
  }
  if (rc != 0) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    try {
      wait_ready(fd, POLLOUT, deadline, true, "connect");
    } catch (const Error& e) {
      throw Error(ErrorCode::Connect, "connect " + host + ": timed out", true);
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      throw Error(ErrorCode::Connect,
                  "connect " + host + ": " + std::strerror(err), true);
    }
  }
  ::fcntl(fd, F_SETFL, flags);

  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return stream;
}

void TcpStream::send_frame(std::string_view payload) {
  if (fd_ < 0) throw Error(ErrorCode::Io, "send on closed stream", false);
  if (payload.size() > kMaxFrameBytes) {
    throw Error(ErrorCode::Protocol, "frame exceeds maximum size", false);
  }
  unsigned char header[4];
  const auto n = static_cast<std::uint32_t>(payload.size());
  header[0] = static_cast<unsigned char>(n >> 24);
  header[1] = static_cast<unsigned char>(n >> 16);
  header[2] = static_cast<unsigned char>(n >> 8);
  header[3] = static_cast<unsigned char>(n);

  std::string buffer;
  buffer.reserve(4 + payload.size());
  buffer.append(reinterpret_cast<const char*>(header), 4);
  buffer.append(payload);

  std::size_t sent = 0;
  while (sent < buffer.size()) {
    const ssize_t rc = ::send(fd_, buffer.data() + sent, buffer.size() - sent,
                              MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        wait_ready(fd_, POLLOUT, {}, false, "send");
        continue;
      }
      throw_errno(ErrorCode::Io, "send", true);
    }
    sent += static_cast<std::size_t>(rc);
  }
}

std::optional<std::string> TcpStream::recv_frame(int timeout_ms) {
  if (fd_ < 0) throw Error(ErrorCode::Io, "recv on closed stream", false);
  const bool has_deadline = timeout_ms >= 0;
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);

  auto read_exact = [&](char* out, std::size_t count,
                        bool eof_ok) -> std::size_t {
    std::size_t got = 0;
    while (got < count) {
      const ssize_t rc = ::recv(fd_, out + got, count - got, 0);
      if (rc > 0) {
        got += static_cast<std::size_t>(rc);
        continue;
      }
      if (rc == 0) {
        if (eof_ok && got == 0) return 0;
        throw Error(ErrorCode::Io, "connection closed mid-frame", true);
      }
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        wait_ready(fd_, POLLIN, deadline, has_deadline, "recv");
        continue;
      }
      throw_errno(ErrorCode::Io, "recv", true);
    }
    return got;
  };

  // Block for the first header byte via poll so timeouts apply even on
  // sockets in blocking mode.
  wait_ready(fd_, POLLIN, deadline, has_deadline, "recv");

  char header[4];
  std::size_t got = 0;
  {
    const ssize_t rc = ::recv(fd_, header, sizeof(header), 0);
    if (rc == 0) return std::nullopt;
    if (rc < 0) {
      if (errno != EINTR && errno != EAGAIN && errno != EWOULDBLOCK) {
        throw_errno(ErrorCode::Io, "recv", true);
      }
    } else {
      got = static_cast<std::size_t>(rc);
    }
  }
  if (got < sizeof(header)) {
    read_exact(header + got, sizeof(header) - got, false);
  }

  const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(header[0])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(header[1])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(header[2])) << 8) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(header[3]));
  if (len > kMaxFrameBytes) {
    throw Error(ErrorCode::Protocol, "incoming frame exceeds maximum size", false);
  }
  std::string payload(len, '\0');
  if (len > 0) read_exact(payload.data(), len, false);
  return payload;
}

TcpListener::~TcpListener() { close(); }

TcpListener::TcpListener(TcpListener&& other) noexcept
    : fd_(other.fd_), port_(other.port_) {
  other.fd_ = -1;
  other.port_ = 0;
}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    port_ = other.port_;
    other.fd_ = -1;
    other.port_ = 0;
  }
  return *this;
}

void TcpListener::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
  const sockaddr_in addr = resolve(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw_errno(ErrorCode::Io, "socket", false);
  TcpListener listener;
  listener.fd_ = fd;

  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw_errno(ErrorCode::Io, "bind " + host + ":" + std::to_string(port), false);
  }
  if (::listen(fd, 128) != 0) throw_errno(ErrorCode::Io, "listen", false);

  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  listener.port_ = ntohs(bound.sin_port);
  return listener;
}

std::optional<TcpStream> TcpListener::accept(int timeout_ms) {
  if (fd_ < 0) throw Error(ErrorCode::Io, "accept on closed listener", false);
  struct pollfd pfd{};
  pfd.fd = fd_;
  pfd.events = POLLIN;
  const int rc = ::poll(&pfd, 1, timeout_ms);
  if (rc == 0) return std::nullopt;
  if (rc < 0) {
    if (errno == EINTR) return std::nullopt;
    throw_errno(ErrorCode::Io, "poll accept", false);
  }
  const int conn = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (conn < 0) {
    if (errno == EINTR || errno == ECONNABORTED || errno == EAGAIN ||
        errno == EWOULDBLOCK) {
      return std::nullopt;
    }
    throw_errno(ErrorCode::Io, "accept", false);
  }
  const int one = 1;
  ::setsockopt(conn, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  (void)set_cloexec;
  return TcpStream(conn);
}

}  // namespace dmf
