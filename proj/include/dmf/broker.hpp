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

#ifndef DMF_BROKER_HPP
#define DMF_BROKER_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "dmf/demand.hpp"
#include "dmf/net.hpp"
#include "dmf/transport.hpp"
#include "dmf/wire.hpp"

namespace dmf {

enum class AckMode { Auto, Client };

// Append-only journal, one record per line:
//   "A <message_id> <queue> <base64 demand bytes>"   append
//   "K <message_id>"                                  ack (retire)
// Recovery is a pure fold: A inserts (first write wins), K erases when
// present. Unparseable lines are skipped and counted.
struct JournalAppend {
  std::uint64_t id = 0;
  std::string queue;
  std::string demand_bytes;  // decoded
};
struct JournalAck {
  std::uint64_t id = 0;
};
struct JournalCorrupt {
  std::string line;
};
using JournalRecord = std::variant<JournalAppend, JournalAck, JournalCorrupt>;

JournalRecord parse_journal_line(const std::string& line);
std::string format_journal_append(std::uint64_t id, const std::string& queue,
                                  const std::string& demand_bytes);
std::string format_journal_ack(std::uint64_t id);

struct RecoveryReport {
  std::size_t restored = 0;
  std::size_t skipped_corrupt = 0;
  std::size_t acked_discarded = 0;
};

struct BrokerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  // Maximum in-memory resident message bodies, across all queues.
  std::size_t memory_threshold = 1'000;
  // Directory for the persistence journal; absent = no durability, and
  // persistent enqueues degrade to non-persistent semantics.
  std::optional<std::string> journal_path;
  AckMode ack_mode_default = AckMode::Auto;
};

struct BrokerQueueStats {
  std::size_t ready = 0;
  std::size_t unacked = 0;
};

struct BrokerStats {
  std::size_t resident_bodies = 0;
  std::size_t total_messages = 0;
  std::map<std::string, BrokerQueueStats> queues;
};

// Queue state machine plus journal; knows nothing about sockets. Responses
// to asynchronous dequeues leave through the deliver callback, which must
// only buffer (it is invoked under the broker lock).
class Broker {
 public:
  using DeliverFn = std::function<void(std::uint64_t session_id, std::string frame)>;

  Broker(BrokerConfig config, DeliverFn deliver);
  ~Broker();

  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  // Opens the journal, folds it, compacts it, restores messages Ready in
  // original FIFO (message id) order, starts the waiter timer.
  RecoveryReport start();
  void stop();

  // FIFO append. Persistent messages are journaled before becoming visible;
  // above the memory threshold their bodies spill to the journal and only
  // metadata stays resident. Non-persistent overflow throws
  // Error(FlowControl, retriable). A live message with the same demand
  // signature in the same queue throws Error(Duplicate).
  std::uint64_t enqueue(const std::string& queue, const std::string& demand_bytes,
                        bool persistent);

  // Answers via deliver: {"message": {"id", "bytes"}} or {"message": null}
  // after timeout_ms. Auto mode removes on delivery; Client mode holds the
  // message Unacked for this session until ack.
  void dequeue_async(std::uint64_t session_id, std::uint64_t req,
                     const std::string& queue, AckMode ack_mode, int timeout_ms);

  // Requires the message to be Unacked by this session; retires it and its
  // journal record. Otherwise throws Error(Ack).
  void ack(std::uint64_t session_id, std::uint64_t message_id);

  // Returns this session's Unacked messages to Ready at the head of their
  // queues (original order preserved) and drops its waiting dequeues.
  void session_closed(std::uint64_t session_id);

  BrokerStats stats() const;

 private:
  struct Message {
    std::uint64_t id = 0;
    std::string queue;
    std::string body;  // empty when spilled
    bool persistent = false;
    bool spilled = false;
    bool unacked = false;
    std::uint64_t owner_session = 0;
    std::int64_t enqueued_at = 0;
    // Base64 segment of this message's journal A record, for spill reads.
    std::int64_t journal_offset = 0;
    std::size_t journal_len = 0;
    std::string signature;
  };

  struct Waiter {
    std::uint64_t session_id = 0;
    std::uint64_t req = 0;
    AckMode ack_mode = AckMode::Auto;
    std::chrono::steady_clock::time_point deadline;
  };

  struct QueueState {
    std::deque<std::uint64_t> ready;
    std::deque<Waiter> waiters;
    std::size_t unacked = 0;
  };

  void pump_locked(const std::string& queue, std::unique_lock<std::mutex>& lock);
  std::string body_of_locked(const Message& message) const;
  void retire_locked(Message& message);
  QueueState& queue_state_locked(const std::string& queue);
  void timer_loop();
  static std::string dup_key(const std::string& queue, const std::string& signature);

  BrokerConfig config_;
  DeliverFn deliver_;

  mutable std::mutex mutex_;
  bool running_ = false;
  std::uint64_t next_message_id_ = 1;
  std::unordered_map<std::uint64_t, Message> messages_;
  std::map<std::string, QueueState> queues_;
  std::unordered_set<std::string> live_keys_;
  std::size_t resident_bodies_ = 0;

  // Journal file descriptors; appends are serialized under mutex_ and
  // fdatasync'd per record.
  int journal_write_fd_ = -1;
  int journal_read_fd_ = -1;
  std::string journal_file_;
  std::int64_t journal_end_ = 0;

  std::thread timer_;
  std::condition_variable timer_wakeup_;
};

// TCP front end: one acceptor plus two tasks per client connection, a
// request reader and a delivery pusher; the 2-per-connection count is
// exposed via the stats op.
class BrokerServer {
 public:
  explicit BrokerServer(BrokerConfig config);
  ~BrokerServer();

  BrokerServer(const BrokerServer&) = delete;
  BrokerServer& operator=(const BrokerServer&) = delete;

  RecoveryReport start();
  std::uint16_t port() const;
  void stop();

  Broker& broker() { return *broker_; }

 private:
  struct Session {
    std::uint64_t id = 0;
    std::shared_ptr<TcpStream> stream;
    std::mutex mutex;
    std::condition_variable wakeup;
    std::deque<std::string> outbox;
    bool closing = false;
    std::thread pusher;
  };

  void accept_loop();
  void reader_loop(std::shared_ptr<Session> session);
  void pusher_loop(std::shared_ptr<Session> session);
  void deliver(std::uint64_t session_id, std::string frame);
  std::string handle_request(Session& session, const WireRequest& request);

  BrokerConfig config_;
  std::unique_ptr<Broker> broker_;
  std::optional<TcpListener> listener_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::int64_t> handler_tasks_{0};
  std::atomic<std::uint64_t> next_session_id_{1};
  std::thread acceptor_;
  std::mutex sessions_mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> readers_;
};

// Client-side agent mapping the transport contract onto broker queues
// "pending" and "computed".
class QueueAgent : public TransportAgent {
 public:
  explicit QueueAgent(const TransportConfig& config);

  void connect() override;
  void disconnect() override;
  DemandSignature write_demand(const Demand& demand) override;
  std::optional<Demand> take_pending(int timeout_ms) override;
  void write_result(const Demand& demand) override;
  std::optional<Demand> take_result(const DemandSignature& signature,
                                    int timeout_ms) override;

 private:
  struct DeqMessage {
    std::uint64_t id = 0;
    Demand demand;
  };

  std::uint64_t enq(const std::string& queue, const std::string& bytes);
  std::optional<DeqMessage> deq(ClientPool::Lease& lease, const std::string& queue,
                                int timeout_ms);
  bool try_ack(ClientPool::Lease& lease, std::uint64_t message_id);
  std::optional<Demand> scan_computed(const std::string& want_sig,
                                      std::chrono::steady_clock::time_point deadline);

  std::shared_ptr<ClientPool> pool_;
  std::atomic<bool> connected_{false};
  bool persistent_ = false;

  // Selective consumption support: one thread at a time scans the computed
  // queue; results awaited by sibling threads of this agent are parked in
  // the mailbox, everything else is requeued at the tail.
  std::mutex scan_mutex_;
  std::mutex state_mutex_;
  std::condition_variable mailbox_wakeup_;
  std::unordered_map<std::string, int> awaiting_;
  std::unordered_map<std::string, Demand> mailbox_;
};

}  // namespace dmf

#endif  // DMF_BROKER_HPP
