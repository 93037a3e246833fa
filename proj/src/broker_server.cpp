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
#include "dmf/error.hpp"
#include "dmf/log.hpp"

namespace dmf {

namespace {

constexpr int kMaxBlockMs = 600'000;

}  // namespace

BrokerServer::BrokerServer(BrokerConfig config) : config_(std::move(config)) {}

BrokerServer::~BrokerServer() { stop(); }

RecoveryReport BrokerServer::start() {
  broker_ = std::make_unique<Broker>(
      config_, [this](std::uint64_t session_id, std::string frame) {
        deliver(session_id, std::move(frame));
      });
  const RecoveryReport report = broker_->start();
  listener_.emplace(TcpListener::bind(config_.host, config_.port));
  log_info("broker: listening on " + config_.host + ":" + std::to_string(port()));
  acceptor_ = std::thread([this] { accept_loop(); });
  return report;
}

std::uint16_t BrokerServer::port() const { return listener_ ? listener_->port() : 0; }

void BrokerServer::accept_loop() {
  while (!stopping_.load()) {
    std::optional<TcpStream> stream;
    try {
      stream = listener_->accept(200);
    } catch (const Error& e) {
      if (stopping_.load()) break;
      log_error(std::string("broker: accept failed: ") + e.what());
      continue;
    }
    if (!stream) continue;

    auto session = std::make_shared<Session>();
    session->id = next_session_id_.fetch_add(1);
    session->stream = std::make_shared<TcpStream>(std::move(*stream));
    // Two tasks per connection: request reader plus delivery pusher.
    handler_tasks_.fetch_add(2);
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    if (stopping_.load()) {
      handler_tasks_.fetch_sub(2);
      break;
    }
    sessions_.emplace(session->id, session);
    session->pusher = std::thread([this, session] { pusher_loop(session); });
    readers_.emplace_back([this, session] { reader_loop(session); });
  }
}

void BrokerServer::deliver(std::uint64_t session_id, std::string frame) {
  std::shared_ptr<Session> session;
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return;  // session already gone; drop
    session = it->second;
  }
  std::lock_guard<std::mutex> lock(session->mutex);
  session->outbox.push_back(std::move(frame));
  session->wakeup.notify_all();
}

std::string BrokerServer::handle_request(Session& session,
                                         const WireRequest& request) {
  WireJson body = WireJson::object();
  if (request.op == "enq") {
    const auto queue = request.args.find("queue");
    const auto bytes = request.args.find("bytes");
    if (queue == request.args.end() || !queue->is_string() ||
        bytes == request.args.end() || !bytes->is_string()) {
      throw Error(ErrorCode::Protocol, "enq needs string 'queue' and 'bytes'");
    }
    bool persistent = false;
    const auto p = request.args.find("persistent");
    if (p != request.args.end()) {
      if (!p->is_boolean()) {
        throw Error(ErrorCode::Protocol, "enq 'persistent' must be a bool");
      }
      persistent = p->get<bool>();
    }
    body["id"] = broker_->enqueue(queue->get<std::string>(),
                                  bytes->get<std::string>(), persistent);
  } else if (request.op == "ack") {
    const auto id = request.args.find("id");
    if (id == request.args.end() || !id->is_number_integer()) {
      throw Error(ErrorCode::Protocol, "ack needs integer 'id'");
    }
    broker_->ack(session.id, id->get<std::uint64_t>());
  } else if (request.op == "stats") {
    const BrokerStats stats = broker_->stats();
    body["handler_tasks"] = handler_tasks_.load();
    body["connections"] = handler_tasks_.load() / 2;
    body["resident_bodies"] = stats.resident_bodies;
    body["total_messages"] = stats.total_messages;
    WireJson queues = WireJson::object();
    for (const auto& [name, qs] : stats.queues) {
      WireJson q = WireJson::object();
      q["ready"] = qs.ready;
      q["unacked"] = qs.unacked;
      queues[name] = std::move(q);
    }
    body["queues"] = std::move(queues);
  } else {
    throw Error(ErrorCode::Protocol, "unknown op '" + request.op + "'");
  }
  return encode_ok(body, request.req);
}

void BrokerServer::reader_loop(std::shared_ptr<Session> session) {
  for (;;) {
    std::optional<std::string> frame;
    try {
      frame = session->stream->recv_frame(kMaxBlockMs);
    } catch (const Error&) {
      break;
    }
    if (!frame) break;

    std::uint64_t req = 0;
    try {
      const WireRequest request = decode_request(*frame);
      req = request.req;
      if (request.op == "deq") {
        // Broker answers through the deliver callback, possibly much later.
        const auto queue = request.args.find("queue");
        const auto timeout = request.args.find("timeout_ms");
        if (queue == request.args.end() || !queue->is_string() ||
            timeout == request.args.end() || !timeout->is_number_integer()) {
          throw Error(ErrorCode::Protocol,
                      "deq needs string 'queue' and integer 'timeout_ms'");
        }
        AckMode mode = config_.ack_mode_default;
        const auto ack = request.args.find("ack");
        if (ack != request.args.end()) {
          if (!ack->is_string()) {
            throw Error(ErrorCode::Protocol, "deq 'ack' must be a string");
          }
          const std::string text = ack->get<std::string>();
          if (text == "auto") {
            mode = AckMode::Auto;
          } else if (text == "client") {
            mode = AckMode::Client;
          } else {
            throw Error(ErrorCode::Protocol, "unknown ack mode '" + text + "'");
          }
        }
        broker_->dequeue_async(session->id, req, queue->get<std::string>(), mode,
                               static_cast<int>(timeout->get<std::int64_t>()));
      } else {
        deliver(session->id, handle_request(*session, request));
      }
    } catch (const Error& e) {
      deliver(session->id, encode_error(e, req));
      if (e.code() == ErrorCode::Closing) break;
    }
  }

  // Reader owns teardown: redeliver this session's unacked messages, wake
  // and join the pusher, then drop the session.
  broker_->session_closed(session->id);
  {
    std::lock_guard<std::mutex> lock(session->mutex);
    session->closing = true;
    session->wakeup.notify_all();
  }
  session->stream->shutdown_both();
  if (session->pusher.joinable()) session->pusher.join();
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    sessions_.erase(session->id);
  }
  handler_tasks_.fetch_sub(2);
}

void BrokerServer::pusher_loop(std::shared_ptr<Session> session) {
  std::unique_lock<std::mutex> lock(session->mutex);
  for (;;) {
    session->wakeup.wait(lock, [&] {
      return session->closing || !session->outbox.empty();
    });
    if (session->outbox.empty()) {
      if (session->closing) return;
      continue;
    }
    const std::string frame = std::move(session->outbox.front());
    session->outbox.pop_front();
    lock.unlock();
    try {
      session->stream->send_frame(frame);
    } catch (const Error&) {
      // Torn connection: unblock the reader; it runs the teardown.
      session->stream->shutdown_both();
      lock.lock();
      session->closing = true;
      return;
    }
    lock.lock();
  }
}

void BrokerServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listener_) listener_->close();
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    for (const auto& [id, session] : sessions_) {
      (void)id;
      session->stream->shutdown_both();
    }
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard<std::mutex> lock(sessions_mutex_);
    readers.swap(readers_);
  }
  for (auto& t : readers) {
    if (t.joinable()) t.join();
  }
  if (broker_) broker_->stop();
}

}  // namespace dmf
