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

#ifndef DMF_WIRE_HPP
#define DMF_WIRE_HPP

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmf/error.hpp"
#include "dmf/net.hpp"

namespace dmf {

// Every frame is 4-byte big-endian length + UTF-8 JSON.
// Request:  {"op": string, "args": {...}, "req": integer}
// Response: {"ok": bool, "body": {...}, "req": integer}; on failure the body
// is {"error": "<label>: message", "retriable": bool}.
using WireJson = nlohmann::ordered_json;

struct WireRequest {
  std::string op;
  WireJson args;
  std::uint64_t req = 0;
};

std::string encode_request(const WireRequest& request);
// Throws Error(Protocol) on malformed frames.
WireRequest decode_request(std::string_view frame);

std::string encode_ok(const WireJson& body, std::uint64_t req);
std::string encode_error(const Error& error, std::uint64_t req);

// One request/response channel over a TCP stream. Not thread-safe; callers
// serialize access (ClientPool hands each caller its own connection).
class FrameClient {
 public:
  FrameClient(TcpStream stream) : stream_(std::move(stream)) {}

  // Sends the op and blocks for the matching response. reply_timeout_ms must
  // exceed any server-side blocking the op can perform. Server-reported
  // errors are rethrown with their code recovered from the error label;
  // transport failures throw retriable Error(Io) and poison the connection.
  WireJson call(const std::string& op, WireJson args, int reply_timeout_ms);

  bool poisoned() const { return poisoned_; }

 private:
  TcpStream stream_;
  std::uint64_t next_req_ = 1;
  bool poisoned_ = false;
};

// Connection pool: one connection per in-flight request, so the server side
// never sees interleaved ops on a single connection.
class ClientPool {
 public:
  ClientPool(std::string host, std::uint16_t port, int connect_timeout_ms = 5000);

  // RAII lease; returns the connection to the pool unless it was poisoned.
  class Lease {
   public:
    Lease(ClientPool* pool, std::unique_ptr<FrameClient> client)
        : pool_(pool), client_(std::move(client)) {}
    Lease(Lease&&) = default;
    Lease& operator=(Lease&&) = delete;
    ~Lease();

    FrameClient& operator*() { return *client_; }
    FrameClient* operator->() { return client_.get(); }

   private:
    ClientPool* pool_;
    std::unique_ptr<FrameClient> client_;
  };

  // Pops an idle connection or dials a new one. Throws Error(Connect,
  // retriable) when the endpoint is unreachable.
  Lease acquire();

  // Dials one probe connection and keeps it idle; used by agent connect().
  void probe();

  void close();
  bool closed() const;

 private:
  friend class Lease;
  void release(std::unique_ptr<FrameClient> client);

  std::string host_;
  std::uint16_t port_;
  int connect_timeout_ms_;
  mutable std::mutex mutex_;
  std::vector<std::unique_ptr<FrameClient>> idle_;
  bool closed_ = false;
};

}  // namespace dmf

#endif  // DMF_WIRE_HPP
