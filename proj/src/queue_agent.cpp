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

#include <thread>

#include "dmf/broker.hpp"
#include "dmf/error.hpp"
#include "dmf/log.hpp"

namespace dmf {

namespace {

constexpr int kReplyGraceMs = 15'000;
// Scanner dequeue slice; short enough to notice new local waiters and
// deadline expiry, long enough to block cheaply while the queue is idle.
constexpr int kScanSliceMs = 500;

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now())
          .count();
  return left < 0 ? 0 : static_cast<int>(left);
}

}  // namespace

QueueAgent::QueueAgent(const TransportConfig& config)
    : pool_(std::make_shared<ClientPool>(config.host, config.port)),
      persistent_(config.persistent) {}

void QueueAgent::connect() {
  pool_->probe();
  connected_.store(true);
}

void QueueAgent::disconnect() {
  connected_.store(false);
  pool_->close();
  mailbox_wakeup_.notify_all();
}

std::uint64_t QueueAgent::enq(const std::string& queue, const std::string& bytes) {
  if (!connected_.load()) {
    throw Error(ErrorCode::NotConnected, "agent is not connected");
  }
  WireJson args = WireJson::object();
  args["queue"] = queue;
  args["bytes"] = bytes;
  args["persistent"] = persistent_;
  auto lease = pool_->acquire();
  const WireJson body = lease->call("enq", std::move(args), kReplyGraceMs);
  const auto id = body.find("id");
  if (id == body.end() || !id->is_number_integer()) {
    throw Error(ErrorCode::Protocol, "enq response missing 'id'");
  }
  return id->get<std::uint64_t>();
}

std::optional<QueueAgent::DeqMessage> QueueAgent::deq(ClientPool::Lease& lease,
                                                      const std::string& queue,
                                                      int timeout_ms) {
  if (timeout_ms < 0) timeout_ms = 0;
  WireJson args = WireJson::object();
  args["queue"] = queue;
  args["timeout_ms"] = timeout_ms;
  args["ack"] = "client";
  const WireJson body = lease->call("deq", std::move(args),
                                    timeout_ms + kReplyGraceMs);
  const auto message = body.find("message");
  if (message == body.end()) {
    throw Error(ErrorCode::Protocol, "deq response missing 'message'");
  }
  if (message->is_null()) return std::nullopt;
  const auto id = message->find("id");
  const auto bytes = message->find("bytes");
  if (id == message->end() || !id->is_number_integer() || bytes == message->end() ||
      !bytes->is_string()) {
    throw Error(ErrorCode::Protocol, "deq message missing 'id'/'bytes'");
  }
  DeqMessage out;
  out.id = id->get<std::uint64_t>();
  out.demand = deserialize(bytes->get<std::string>());
  return out;
}

bool QueueAgent::try_ack(ClientPool::Lease& lease, std::uint64_t message_id) {
  WireJson args = WireJson::object();
  args["id"] = message_id;
  try {
    lease->call("ack", std::move(args), kReplyGraceMs);
    return true;
  } catch (const Error& e) {
    log_debug(std::string("queue agent: ack failed: ") + e.what());
    return false;
  }
}

DemandSignature QueueAgent::write_demand(const Demand& demand) {
  if (demand.state != DemandState::Pending) {
    throw Error(ErrorCode::State, "write_demand requires a pending demand");
  }
  try {
    enq("pending", serialize(demand));
  } catch (const Error& e) {
    // A duplicate means an earlier attempt already landed durably; treat
    // the retry as success so dispatch is idempotent across broker restarts.
    if (e.code() != ErrorCode::Duplicate) throw;
  }
  return demand.signature;
}

void QueueAgent::write_result(const Demand& demand) {
  if (demand.state != DemandState::Computed) {
    throw Error(ErrorCode::State, "write_result requires a computed demand");
  }
  enq("computed", serialize(demand));
}

std::optional<Demand> QueueAgent::take_pending(int timeout_ms) {
  if (!connected_.load()) {
    throw Error(ErrorCode::NotConnected, "agent is not connected");
  }
  auto lease = pool_->acquire();
  const auto message = deq(lease, "pending", timeout_ms);
  if (!message) return std::nullopt;
  // Ack on the same connection completes the hand-off; on failure the copy
  // is dropped and the broker redelivers, keeping delivery at-most-once.
  if (!try_ack(lease, message->id)) return std::nullopt;
  return message->demand;
}

std::optional<Demand> QueueAgent::take_result(const DemandSignature& signature,
                                              int timeout_ms) {
  if (!connected_.load()) {
    throw Error(ErrorCode::NotConnected, "agent is not connected");
  }
  const std::string want = signature.id_hex();
  const auto deadline =
      Clock::now() + std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);

  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    ++awaiting_[want];
  }
  std::optional<Demand> result;
  try {
    result = scan_computed(want, deadline);
  } catch (...) {
    std::lock_guard<std::mutex> lock(state_mutex_);
    if (--awaiting_[want] == 0) awaiting_.erase(want);
    throw;
  }
  std::lock_guard<std::mutex> lock(state_mutex_);
  if (--awaiting_[want] == 0) awaiting_.erase(want);
  if (!result) {
    // Final mailbox check closes the race with a scanner that parked the
    // result while this thread was timing out.
    const auto parked = mailbox_.find(want);
    if (parked != mailbox_.end()) {
      result = std::move(parked->second);
      mailbox_.erase(parked);
    }
  }
  return result;
}

std::optional<Demand> QueueAgent::scan_computed(const std::string& want_sig,
                                                Clock::time_point deadline) {
  int consecutive_mismatches = 0;
  for (;;) {
    // Parked by a sibling's scan?
    {
      std::unique_lock<std::mutex> lock(state_mutex_);
      const auto parked = mailbox_.find(want_sig);
      if (parked != mailbox_.end()) {
        Demand out = std::move(parked->second);
        mailbox_.erase(parked);
        return out;
      }
    }
    if (Clock::now() >= deadline) return std::nullopt;

    // One scanner at a time; everyone else waits on the mailbox.
    std::unique_lock<std::mutex> scan(scan_mutex_, std::try_to_lock);
    if (!scan.owns_lock()) {
      std::unique_lock<std::mutex> lock(state_mutex_);
      mailbox_wakeup_.wait_for(lock, std::chrono::milliseconds(50));
      continue;
    }

    const int slice = std::min(kScanSliceMs, remaining_ms(deadline));
    auto lease = pool_->acquire();
    const auto message = deq(lease, "computed", slice);
    if (!message) continue;
    const std::string got = message->demand.signature.id_hex();

    if (got == want_sig) {
      if (!try_ack(lease, message->id)) {
        // The broker will redeliver this copy to a later scan; using the
        // value now is still exactly-once from the caller's perspective
        // because the redelivered copy can only be consumed here again.
        log_debug("queue agent: returning result with unconfirmed ack");
      }
      return message->demand;
    }

    bool parked = false;
    {
      std::lock_guard<std::mutex> lock(state_mutex_);
      if (awaiting_.count(got) > 0) {
        // A sibling thread of this agent wants it: ack and park locally.
        parked = true;
      }
    }
    if (parked) {
      if (try_ack(lease, message->id)) {
        std::lock_guard<std::mutex> lock(state_mutex_);
        mailbox_.emplace(got, std::move(message->demand));
        mailbox_wakeup_.notify_all();
      }
      // On ack failure the broker redelivers; nothing is parked.
      continue;
    }

    // Foreign result: requeue at the tail and keep scanning. Ack first so
    // the re-enqueued copy does not collide with the original in the
    // broker's duplicate index.
    if (!try_ack(lease, message->id)) continue;
    const std::string bytes = serialize(message->demand);
    const auto retry_until = Clock::now() + std::chrono::seconds(10);
    for (;;) {
      try {
        enq("computed", bytes);
        break;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Duplicate) break;  // already back in line
        if (!e.retriable() || Clock::now() >= retry_until) {
          log_error(std::string("queue agent: requeue failed, result dropped: ") +
                    e.what());
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    }
    if (++consecutive_mismatches % 16 == 0) {
      // Many strangers in a row: probably only foreign results in the
      // queue right now, stop hot-looping over them.
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
}

}  // namespace dmf
