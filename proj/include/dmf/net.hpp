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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dmf {

/// Frames larger than this are rejected as protocol errors on both ends.
inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;

/// Blocking TCP connection carrying length-prefixed frames: 4-byte big-endian
/// unsigned payload length followed by the payload bytes.
class TcpStream {
public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream();
  TcpStream(TcpStream&& other) noexcept;
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  /// Throws Error(Connect, retriable) when the endpoint refuses or the
  /// connect does not complete within the timeout.
  static TcpStream connect(const std::string& host, std::uint16_t port,
                           int timeout_ms);

  void send_frame(std::string_view payload);

  /// Returns the next frame, or nullopt on orderly EOF at a frame boundary.
  /// timeout_ms < 0 waits indefinitely. Timeouts and mid-frame EOF throw.
  std::optional<std::string> recv_frame(int timeout_ms);

  /// Interrupts any blocked reader/writer on this socket (both directions).
  void shutdown_both() noexcept;

  bool valid() const noexcept { return fd_ >= 0; }
  int fd() const noexcept { return fd_; }
  void close() noexcept;

private:
  int fd_ = -1;
};

class TcpListener {
public:
  TcpListener() = default;
  ~TcpListener();
  TcpListener(TcpListener&& other) noexcept;
  TcpListener& operator=(TcpListener&& other) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Binds and listens; port 0 picks an ephemeral port. Throws Error(Io)
  /// when the address is unavailable or already in use.
  static TcpListener bind(const std::string& host, std::uint16_t port);

  /// Accepts one connection or returns nullopt after timeout_ms.
  std::optional<TcpStream> accept(int timeout_ms);

  std::uint16_t port() const noexcept { return port_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;

private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace dmf
