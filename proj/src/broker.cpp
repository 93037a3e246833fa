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

#include "dmf/broker.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmf/base64.hpp"
#include "dmf/error.hpp"
#include "dmf/log.hpp"

namespace dmf {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

constexpr int kMaxBlockMs = 600'000;

[[noreturn]] void io_fail(const std::string& what) {
  throw Error(ErrorCode::Io, what + ": " + std::strerror(errno));
}

}  // namespace

JournalRecord parse_journal_line(const std::string& line) {
  std::istringstream in(line);
  std::string tag;
  if (!(in >> tag)) return JournalCorrupt{line};
  if (tag == "A") {
    JournalAppend append;
    std::string b64;
    if (!(in >> append.id >> append.queue >> b64)) return JournalCorrupt{line};
    std::string trailing;
    if (in >> trailing) return JournalCorrupt{line};
    const auto decoded = base64_decode(b64);
    if (!decoded) return JournalCorrupt{line};
    append.demand_bytes.assign(decoded->begin(), decoded->end());
    return append;
  }
  if (tag == "K") {
    JournalAck ack;
    if (!(in >> ack.id)) return JournalCorrupt{line};
    std::string trailing;
    if (in >> trailing) return JournalCorrupt{line};
    return ack;
  }
  return JournalCorrupt{line};
}

std::string format_journal_append(std::uint64_t id, const std::string& queue,
                                  const std::string& demand_bytes) {
  return "A " + std::to_string(id) + " " + queue + " " +
         base64_encode(demand_bytes) + "\n";
}

std::string format_journal_ack(std::uint64_t id) {
  return "K " + std::to_string(id) + "\n";
}

Broker::Broker(BrokerConfig config, DeliverFn deliver)
    : config_(std::move(config)), deliver_(std::move(deliver)) {
  if (config_.memory_threshold == 0) {
    throw Error(ErrorCode::Config, "memory threshold must be >= 1");
  }
}

Broker::~Broker() { stop(); }

std::string Broker::dup_key(const std::string& queue, const std::string& signature) {
  return queue + "|" + signature;
}

RecoveryReport Broker::start() {
  RecoveryReport report;
  std::unique_lock<std::mutex> lock(mutex_);
  if (running_) throw Error(ErrorCode::State, "broker already started");

  if (config_.journal_path) {
    std::filesystem::create_directories(*config_.journal_path);
    journal_file_ = *config_.journal_path + "/journal.log";

    // Fold the existing journal: A inserts (first write wins), K erases.
    std::map<std::uint64_t, JournalAppend> survivors;
    std::uint64_t max_id = 0;
    if (std::filesystem::exists(journal_file_)) {
      std::ifstream in(journal_file_, std::ios::binary);
      if (!in) throw Error(ErrorCode::Io, "cannot open journal " + journal_file_);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const JournalRecord record = parse_journal_line(line);
        if (const auto* append = std::get_if<JournalAppend>(&record)) {
          max_id = std::max(max_id, append->id);
          if (!survivors.emplace(append->id, *append).second) {
            ++report.skipped_corrupt;
            log_error("broker: duplicate journal append for id " +
                      std::to_string(append->id) + ", skipped");
          }
        } else if (const auto* acked = std::get_if<JournalAck>(&record)) {
          max_id = std::max(max_id, acked->id);
          if (survivors.erase(acked->id) > 0) ++report.acked_discarded;
        } else {
          ++report.skipped_corrupt;
          log_error("broker: corrupt journal line skipped: " +
                    std::get<JournalCorrupt>(record).line.substr(0, 80));
        }
      }
    }

    // Compact: rewrite only surviving appends, then swap in atomically.
    const std::string tmp = journal_file_ + ".tmp";
    {
      const int fd = ::open(tmp.c_str(), O_CREAT | O_WRONLY | O_TRUNC | O_CLOEXEC, 0644);
      if (fd < 0) io_fail("cannot create journal temp " + tmp);
      std::int64_t offset = 0;
      for (auto& [id, append] : survivors) {
        const std::string line = format_journal_append(id, append.queue,
                                                       append.demand_bytes);
        if (::write(fd, line.data(), line.size()) !=
            static_cast<ssize_t>(line.size())) {
          ::close(fd);
          io_fail("journal compaction write failed");
        }
        // The base64 body is the last field before the newline.
        const std::size_t b64_len = base64_encoded_size(append.demand_bytes.size());
        Message message;
        message.id = id;
        message.queue = append.queue;
        message.persistent = true;
        message.enqueued_at = now_ms();
        message.journal_offset =
            offset + static_cast<std::int64_t>(line.size() - 1 - b64_len);
        message.journal_len = b64_len;
        try {
          const Demand demand = deserialize(append.demand_bytes);
          message.signature = demand.signature.id_hex();
        } catch (const Error&) {
          ++report.skipped_corrupt;
          log_error("broker: journal id " + std::to_string(id) +
                    " holds an undecodable demand, dropped");
          // The record stays in the compacted file but is not restored; a
          // later ack for it is impossible, it simply ages out on the next
          // compaction (its id is unknown to the running broker).
          offset += static_cast<std::int64_t>(line.size());
          continue;
        }
        if (resident_bodies_ < config_.memory_threshold) {
          message.body = append.demand_bytes;
          ++resident_bodies_;
        } else {
          message.spilled = true;
        }
        live_keys_.insert(dup_key(message.queue, message.signature));
        queues_[message.queue].ready.push_back(id);
        messages_.emplace(id, std::move(message));
        ++report.restored;
        offset += static_cast<std::int64_t>(line.size());
      }
      if (::fdatasync(fd) != 0) {
        ::close(fd);
        io_fail("journal compaction sync failed");
      }
      ::close(fd);
      journal_end_ = offset;
    }
    if (std::rename(tmp.c_str(), journal_file_.c_str()) != 0) {
      io_fail("journal compaction rename failed");
    }

    journal_write_fd_ =
        ::open(journal_file_.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
    if (journal_write_fd_ < 0) io_fail("cannot open journal for append");
    journal_read_fd_ = ::open(journal_file_.c_str(), O_RDONLY | O_CLOEXEC);
    if (journal_read_fd_ < 0) io_fail("cannot open journal for reads");

    next_message_id_ = max_id + 1;
    if (report.restored > 0 || report.skipped_corrupt > 0) {
      log_info("broker: journal recovery restored " +
               std::to_string(report.restored) + ", discarded " +
               std::to_string(report.acked_discarded) + " acked, skipped " +
               std::to_string(report.skipped_corrupt) + " corrupt");
    }
  }

  running_ = true;
  timer_ = std::thread([this] { timer_loop(); });
  return report;
}

void Broker::stop() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (!running_) return;
    running_ = false;
    timer_wakeup_.notify_all();
  }
  if (timer_.joinable()) timer_.join();
  std::lock_guard<std::mutex> lock(mutex_);
  if (journal_write_fd_ >= 0) {
    ::close(journal_write_fd_);
    journal_write_fd_ = -1;
  }
  if (journal_read_fd_ >= 0) {
    ::close(journal_read_fd_);
    journal_read_fd_ = -1;
  }
}

Broker::QueueState& Broker::queue_state_locked(const std::string& queue) {
  return queues_[queue];
}

std::uint64_t Broker::enqueue(const std::string& queue,
                              const std::string& demand_bytes, bool persistent) {
  if (queue.empty()) throw Error(ErrorCode::Invalid, "queue name must be non-empty");
  const Demand demand = deserialize(demand_bytes);
  // The two well-known queues carry one state each; enforcing it catches
  // miswired clients early.
  if (queue == "pending" && demand.state != DemandState::Pending) {
    throw Error(ErrorCode::Invalid, "queue 'pending' accepts pending demands only");
  }
  if (queue == "computed" && demand.state != DemandState::Computed) {
    throw Error(ErrorCode::Invalid, "queue 'computed' accepts computed demands only");
  }
  const std::string signature = demand.signature.id_hex();

  std::unique_lock<std::mutex> lock(mutex_);
  if (!running_) throw Error(ErrorCode::Closing, "broker is shutting down");

  const std::string key = dup_key(queue, signature);
  if (live_keys_.count(key) > 0) {
    throw Error(ErrorCode::Duplicate, "queue '" + queue +
                                          "' already holds a message for signature " +
                                          signature);
  }

  const bool durable = persistent && journal_write_fd_ >= 0;
  const bool room = resident_bodies_ < config_.memory_threshold;
  if (!durable && !room) {
    throw Error(ErrorCode::FlowControl,
                "memory threshold " + std::to_string(config_.memory_threshold) +
                    " reached and the message cannot spill",
                true);
  }

  Message message;
  message.id = next_message_id_++;
  message.queue = queue;
  message.persistent = durable;
  message.enqueued_at = now_ms();
  message.signature = signature;

  if (durable) {
    const std::string line = format_journal_append(message.id, queue, demand_bytes);
    if (::write(journal_write_fd_, line.data(), line.size()) !=
        static_cast<ssize_t>(line.size())) {
      io_fail("journal append failed");
    }
    if (::fdatasync(journal_write_fd_) != 0) io_fail("journal sync failed");
    const std::size_t b64_len = base64_encoded_size(demand_bytes.size());
    message.journal_offset =
        journal_end_ + static_cast<std::int64_t>(line.size() - 1 - b64_len);
    message.journal_len = b64_len;
    journal_end_ += static_cast<std::int64_t>(line.size());
  }

  if (room) {
    message.body = demand_bytes;
    ++resident_bodies_;
  } else {
    message.spilled = true;  // durable; body lives in the journal only
  }

  const std::uint64_t id = message.id;
  live_keys_.insert(key);
  messages_.emplace(id, std::move(message));
  queue_state_locked(queue).ready.push_back(id);
  pump_locked(queue, lock);
  return id;
}

std::string Broker::body_of_locked(const Message& message) const {
  if (!message.spilled) return message.body;
  std::string b64(message.journal_len, '\0');
  const ssize_t got = ::pread(journal_read_fd_, b64.data(), b64.size(),
                              static_cast<off_t>(message.journal_offset));
  if (got != static_cast<ssize_t>(b64.size())) {
    throw Error(ErrorCode::Io, "journal read for message " +
                                   std::to_string(message.id) + " failed");
  }
  const auto decoded = base64_decode(b64);
  if (!decoded) {
    throw Error(ErrorCode::Io, "journal body for message " +
                                   std::to_string(message.id) + " is corrupt");
  }
  return std::string(decoded->begin(), decoded->end());
}

void Broker::retire_locked(Message& message) {
  if (message.persistent && journal_write_fd_ >= 0) {
    const std::string line = format_journal_ack(message.id);
    if (::write(journal_write_fd_, line.data(), line.size()) !=
        static_cast<ssize_t>(line.size())) {
      io_fail("journal ack append failed");
    }
    if (::fdatasync(journal_write_fd_) != 0) io_fail("journal sync failed");
    journal_end_ += static_cast<std::int64_t>(line.size());
  }
  if (!message.spilled) --resident_bodies_;
  live_keys_.erase(dup_key(message.queue, message.signature));
  messages_.erase(message.id);
}

void Broker::pump_locked(const std::string& queue,
                         std::unique_lock<std::mutex>& lock) {
  (void)lock;
  QueueState& state = queue_state_locked(queue);
  while (!state.ready.empty() && !state.waiters.empty()) {
    const std::uint64_t id = state.ready.front();
    const auto it = messages_.find(id);
    if (it == messages_.end()) {  // defensive; ready ids should be live
      state.ready.pop_front();
      continue;
    }
    Message& message = it->second;

    std::string frame;
    bool deliverable = true;
    const Waiter waiter = state.waiters.front();
    try {
      WireJson body = WireJson::object();
      WireJson m = WireJson::object();
      m["id"] = message.id;
      m["bytes"] = body_of_locked(message);
      body["message"] = std::move(m);
      frame = encode_ok(body, waiter.req);
    } catch (const Error& e) {
      // Unreadable spilled body: drop the message, fail this dequeue.
      log_error("broker: dropping message " + std::to_string(id) + ": " + e.what());
      frame = encode_error(e, waiter.req);
      deliverable = false;
    }

    state.waiters.pop_front();
    state.ready.pop_front();
    if (!deliverable) {
      retire_locked(message);
    } else if (waiter.ack_mode == AckMode::Auto) {
      retire_locked(message);
    } else {
      message.unacked = true;
      message.owner_session = waiter.session_id;
      ++state.unacked;
    }
    deliver_(waiter.session_id, frame);
  }
}

void Broker::dequeue_async(std::uint64_t session_id, std::uint64_t req,
                           const std::string& queue, AckMode ack_mode,
                           int timeout_ms) {
  timeout_ms = std::clamp(timeout_ms, 0, kMaxBlockMs);
  std::unique_lock<std::mutex> lock(mutex_);
  if (!running_) throw Error(ErrorCode::Closing, "broker is shutting down");
  QueueState& state = queue_state_locked(queue);
  Waiter waiter;
  waiter.session_id = session_id;
  waiter.req = req;
  waiter.ack_mode = ack_mode;
  waiter.deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  state.waiters.push_back(waiter);
  pump_locked(queue, lock);
  timer_wakeup_.notify_all();
}

void Broker::ack(std::uint64_t session_id, std::uint64_t message_id) {
  std::unique_lock<std::mutex> lock(mutex_);
  if (!running_) throw Error(ErrorCode::Closing, "broker is shutting down");
  const auto it = messages_.find(message_id);
  if (it == messages_.end() || !it->second.unacked) {
    throw Error(ErrorCode::Ack,
                "message " + std::to_string(message_id) + " is not awaiting ack");
  }
  if (it->second.owner_session != session_id) {
    throw Error(ErrorCode::Ack, "message " + std::to_string(message_id) +
                                    " is owned by another session");
  }
  --queue_state_locked(it->second.queue).unacked;
  retire_locked(it->second);
}

void Broker::session_closed(std::uint64_t session_id) {
  std::unique_lock<std::mutex> lock(mutex_);
  if (!running_) return;

  // Unacked messages return to Ready at the head, original order preserved.
  std::vector<std::uint64_t> redeliver;
  for (const auto& [id, message] : messages_) {
    if (message.unacked && message.owner_session == session_id) {
      redeliver.push_back(id);
    }
  }
  std::sort(redeliver.begin(), redeliver.end());
  for (auto it = redeliver.rbegin(); it != redeliver.rend(); ++it) {
    Message& message = messages_.at(*it);
    message.unacked = false;
    message.owner_session = 0;
    QueueState& state = queue_state_locked(message.queue);
    --state.unacked;
    state.ready.push_front(*it);
  }

  std::vector<std::string> touched;
  for (auto& [name, state] : queues_) {
    const auto before = state.waiters.size();
    std::erase_if(state.waiters, [session_id](const Waiter& w) {
      return w.session_id == session_id;
    });
    if (!redeliver.empty() || before != state.waiters.size()) {
      touched.push_back(name);
    }
  }
  for (const auto& name : touched) pump_locked(name, lock);
}

void Broker::timer_loop() {
  std::unique_lock<std::mutex> lock(mutex_);
  while (running_) {
    // Wake at the earliest waiter deadline.
    auto next = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    for (const auto& [name, state] : queues_) {
      (void)name;
      for (const auto& waiter : state.waiters) {
        next = std::min(next, waiter.deadline);
      }
    }
    timer_wakeup_.wait_until(lock, next);
    if (!running_) break;

    const auto now = std::chrono::steady_clock::now();
    for (auto& [name, state] : queues_) {
      (void)name;
      for (auto it = state.waiters.begin(); it != state.waiters.end();) {
        if (it->deadline <= now) {
          WireJson body = WireJson::object();
          body["message"] = nullptr;
          deliver_(it->session_id, encode_ok(body, it->req));
          it = state.waiters.erase(it);
        } else {
          ++it;
        }
      }
    }
  }
}

BrokerStats Broker::stats() const {
  std::lock_guard<std::mutex> lock(mutex_);
  BrokerStats out;
  out.resident_bodies = resident_bodies_;
  out.total_messages = messages_.size();
  for (const auto& [name, state] : queues_) {
    BrokerQueueStats qs;
    qs.ready = state.ready.size();
    qs.unacked = state.unacked;
    out.queues.emplace(name, qs);
  }
  return out;
}

}  // namespace dmf
