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

#include "dmf/wire.hpp"

namespace dmf {

namespace {

[[noreturn]] void protocol_fail(const std::string& why) {
  throw Error(ErrorCode::Protocol, why);
}

}  // namespace

std::string encode_request(const WireRequest& request) {
  WireJson out = WireJson::object();
  out["op"] = request.op;
  out["args"] = request.args;
  out["req"] = request.req;
  return out.dump();
}

WireRequest decode_request(std::string_view frame) {
  const WireJson root = WireJson::parse(frame, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    protocol_fail("request frame is not a JSON object");
  }
  WireRequest request;
  const auto op = root.find("op");
  if (op == root.end() || !op->is_string()) protocol_fail("request missing string 'op'");
  request.op = op->get<std::string>();
  const auto args = root.find("args");
  if (args == root.end() || !args->is_object()) {
    protocol_fail("request missing object 'args'");
  }
  request.args = *args;
  const auto req = root.find("req");
  if (req == root.end() || !req->is_number_integer()) {
    protocol_fail("request missing integer 'req'");
  }
  request.req = req->get<std::uint64_t>();
  return request;
}

std::string encode_ok(const WireJson& body, std::uint64_t req) {
  WireJson out = WireJson::object();
  out["ok"] = true;
  out["body"] = body;
  out["req"] = req;
  return out.dump();
}

std::string encode_error(const Error& error, std::uint64_t req) {
  WireJson body = WireJson::object();
  body["error"] = error.what();
  body["retriable"] = error.retriable();
  WireJson out = WireJson::object();
  out["ok"] = false;
  out["body"] = std::move(body);
  out["req"] = req;
  return out.dump();
}

WireJson FrameClient::call(const std::string& op, WireJson args, int reply_timeout_ms) {
  if (poisoned_) {
    throw Error(ErrorCode::Io, "connection poisoned by an earlier failure", true);
  }
  const std::uint64_t req = next_req_++;
  // Any transport-level throw after this point leaves the stream in an
  // unknown framing state, so the connection is discarded.
  poisoned_ = true;
  stream_.send_frame(encode_request({op, std::move(args), req}));
  auto frame = stream_.recv_frame(reply_timeout_ms);
  if (!frame) {
    throw Error(ErrorCode::Io, "server closed the connection mid-call", true);
  }

  const WireJson root = WireJson::parse(*frame, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    protocol_fail("response frame is not a JSON object");
  }
  const auto ok = root.find("ok");
  const auto body = root.find("body");
  const auto got_req = root.find("req");
  if (ok == root.end() || !ok->is_boolean() || body == root.end() ||
      got_req == root.end() || !got_req->is_number_integer()) {
    protocol_fail("response missing ok/body/req");
  }
  if (got_req->get<std::uint64_t>() != req) {
    protocol_fail("response correlation mismatch");
  }
  poisoned_ = false;

  if (!ok->get<bool>()) {
    const auto error = body->find("error");
    const auto retriable = body->find("retriable");
    if (error == body->end() || !error->is_string() || retriable == body->end() ||
        !retriable->is_boolean()) {
      protocol_fail("error response missing error/retriable");
    }
    const std::string message = error->get<std::string>();
    throw Error(error_code_from_label(message), strip_error_label(message),
                retriable->get<bool>());
  }
  return *body;
}

ClientPool::ClientPool(std::string host, std::uint16_t port, int connect_timeout_ms)
    : host_(std::move(host)), port_(port), connect_timeout_ms_(connect_timeout_ms) {}

ClientPool::Lease::~Lease() {
  if (pool_ && client_) pool_->release(std::move(client_));
}

ClientPool::Lease ClientPool::acquire() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (closed_) throw Error(ErrorCode::NotConnected, "client pool is closed");
    if (!idle_.empty()) {
      auto client = std::move(idle_.back());
      idle_.pop_back();
      return Lease(this, std::move(client));
    }
  }
  return Lease(this, std::make_unique<FrameClient>(
                         TcpStream::connect(host_, port_, connect_timeout_ms_)));
}

void ClientPool::probe() {
  auto client = std::make_unique<FrameClient>(
      TcpStream::connect(host_, port_, connect_timeout_ms_));
  std::lock_guard<std::mutex> lock(mutex_);
  if (closed_) throw Error(ErrorCode::NotConnected, "client pool is closed");
  idle_.push_back(std::move(client));
}

void ClientPool::release(std::unique_ptr<FrameClient> client) {
  if (client->poisoned()) return;
  std::lock_guard<std::mutex> lock(mutex_);
  if (closed_) return;
  idle_.push_back(std::move(client));
}

void ClientPool::close() {
  std::lock_guard<std::mutex> lock(mutex_);
  closed_ = true;
  idle_.clear();
}

bool ClientPool::closed() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return closed_;
}

}  // namespace dmf
