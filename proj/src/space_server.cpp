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

#include <algorithm>
#include <filesystem>

#include "dmf/error.hpp"
#include "dmf/log.hpp"
#include "dmf/space.hpp"
#include "dmf/wire.hpp"

namespace dmf {

namespace {

// Server-side wait bound; clients always pass finite timeouts, this guards
// against a stuck handler thread.
constexpr int kMaxBlockMs = 600'000;

int clamp_timeout(std::int64_t requested) {
  return static_cast<int>(std::clamp<std::int64_t>(requested, 0, kMaxBlockMs));
}

EntryTemplate template_from_args(const WireJson& args) {
  EntryTemplate tmpl;
  const auto state = args.find("state");
  if (state != args.end() && !state->is_null()) {
    if (!state->is_string()) {
      throw Error(ErrorCode::Protocol, "take/read 'state' must be a string");
    }
    const std::string text = state->get<std::string>();
    if (text == "pending") {
      tmpl.state = DemandState::Pending;
    } else if (text == "computed") {
      tmpl.state = DemandState::Computed;
    } else {
      throw Error(ErrorCode::Protocol, "unknown template state '" + text + "'");
    }
  }
  const auto sig = args.find("sig");
  if (sig != args.end() && !sig->is_null()) {
    if (!sig->is_string()) {
      throw Error(ErrorCode::Protocol, "take/read 'sig' must be a string");
    }
    tmpl.signature = sig->get<std::string>();
  }
  return tmpl;
}

WireJson entry_to_body(const std::optional<SpaceEntry>& entry) {
  WireJson body = WireJson::object();
  if (entry) {
    WireJson e = WireJson::object();
    e["id"] = entry->entry_id;
    e["bytes"] = entry->demand_bytes;
    body["entry"] = std::move(e);
  } else {
    body["entry"] = nullptr;
  }
  return body;
}

}  // namespace

SpaceServer::SpaceServer(SpaceServerConfig config) : config_(std::move(config)) {}

SpaceServer::~SpaceServer() { stop(); }

std::size_t SpaceServer::start() {
  store_ = std::make_unique<SpaceStore>(config_.capacity);
  std::size_t recovered = 0;
  if (config_.snapshot_path && std::filesystem::exists(*config_.snapshot_path)) {
    recovered = store_->recover_from(*config_.snapshot_path);
    log_info("space: recovered " + std::to_string(recovered) + " entries from " +
             *config_.snapshot_path);
  }
  listener_.emplace(TcpListener::bind(config_.host, config_.port));
  log_info("space: listening on " + config_.host + ":" + std::to_string(port()));
  acceptor_ = std::thread([this] { accept_loop(); });
  if (config_.snapshot_path) {
    snapshotter_ = std::thread([this] { snapshot_loop(); });
  }
  return recovered;
}

std::uint16_t SpaceServer::port() const { return listener_ ? listener_->port() : 0; }

void SpaceServer::accept_loop() {
  while (!stopping_.load()) {
    std::optional<TcpStream> stream;
    try {
      stream = listener_->accept(200);
    } catch (const Error& e) {
      if (stopping_.load()) break;
      log_error(std::string("space: accept failed: ") + e.what());
      continue;
    }
    if (!stream) continue;
    auto conn = std::make_shared<TcpStream>(std::move(*stream));
    handler_count_.fetch_add(1);
    std::lock_guard<std::mutex> lock(threads_mutex_);
    if (stopping_.load()) {
      handler_count_.fetch_sub(1);
      break;
    }
    connections_.push_back(conn);
    handlers_.emplace_back([this, conn] { handle_connection(conn); });
  }
}

void SpaceServer::handle_connection(std::shared_ptr<TcpStream> conn) {
  TcpStream& stream = *conn;
  for (;;) {
    std::optional<std::string> frame;
    try {
      frame = stream.recv_frame(kMaxBlockMs);
    } catch (const Error&) {
      break;  // timeout or torn connection; drop it
    }
    if (!frame) break;  // orderly close

    std::uint64_t req = 0;
    std::string reply;
    try {
      const WireRequest request = decode_request(*frame);
      req = request.req;
      WireJson body;
      if (request.op == "write") {
        const auto bytes = request.args.find("bytes");
        if (bytes == request.args.end() || !bytes->is_string()) {
          throw Error(ErrorCode::Protocol, "write needs string 'bytes'");
        }
        std::int64_t lease_ms = config_.lease_default_ms;
        const auto lease = request.args.find("lease_ms");
        if (lease != request.args.end()) {
          if (lease->is_number_integer()) {
            lease_ms = lease->get<std::int64_t>();
            if (lease_ms <= 0) {
              throw Error(ErrorCode::Protocol, "write 'lease_ms' must be positive");
            }
          } else if (lease->is_string() && lease->get<std::string>() == "inf") {
            lease_ms = kLeaseInfinite;
          } else {
            throw Error(ErrorCode::Protocol, "write 'lease_ms' must be int or \"inf\"");
          }
        }
        body["id"] = store_->write(bytes->get<std::string>(), lease_ms);
      } else if (request.op == "take" || request.op == "read") {
        const auto timeout = request.args.find("timeout_ms");
        if (timeout == request.args.end() || !timeout->is_number_integer()) {
          throw Error(ErrorCode::Protocol, "take/read needs integer 'timeout_ms'");
        }
        const EntryTemplate tmpl = template_from_args(request.args);
        const int timeout_ms = clamp_timeout(timeout->get<std::int64_t>());
        body = entry_to_body(request.op == "take" ? store_->take(tmpl, timeout_ms)
                                                  : store_->read(tmpl, timeout_ms));
      } else if (request.op == "stats") {
        const SpaceStoreStats stats = store_->stats();
        body["resident"] = stats.resident;
        body["pending"] = stats.pending;
        body["computed"] = stats.computed;
        body["capacity"] = stats.capacity;
        body["handler_count"] = handler_count_.load();
      } else {
        throw Error(ErrorCode::Protocol, "unknown op '" + request.op + "'");
      }
      reply = encode_ok(body, req);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Closing) break;
      reply = encode_error(e, req);
    }

    try {
      stream.send_frame(reply);
    } catch (const Error&) {
      break;
    }
  }
  handler_count_.fetch_sub(1);
  // Release the registry's reference so the socket closes now, not at stop().
  std::lock_guard<std::mutex> lock(threads_mutex_);
  std::erase(connections_, conn);
}

void SpaceServer::snapshot_loop() {
  std::unique_lock<std::mutex> lock(snapshot_mutex_);
  while (!stopping_.load()) {
    snapshot_wakeup_.wait_for(
        lock, std::chrono::milliseconds(config_.snapshot_interval_ms));
    if (stopping_.load()) break;
    write_snapshot_checked();
  }
}

void SpaceServer::write_snapshot_checked() {
  try {
    store_->snapshot_to(*config_.snapshot_path);
  } catch (const Error& e) {
    log_error(std::string("space: snapshot failed: ") + e.what());
  }
}

void SpaceServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listener_) listener_->close();
  snapshot_wakeup_.notify_all();
  if (store_) store_->close();
  {
    // Unblock handlers parked in recv.
    std::lock_guard<std::mutex> lock(threads_mutex_);
    for (const auto& conn : connections_) conn->shutdown_both();
  }
  if (acceptor_.joinable()) acceptor_.join();
  if (snapshotter_.joinable()) snapshotter_.join();
  std::vector<std::thread> handlers;
  {
    std::lock_guard<std::mutex> lock(threads_mutex_);
    handlers.swap(handlers_);
  }
  for (auto& t : handlers) {
    if (t.joinable()) t.join();
  }
  // Handlers are done; persist the final state.
  if (store_ && config_.snapshot_path) write_snapshot_checked();
}

}  // namespace dmf
