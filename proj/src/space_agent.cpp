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

#include "dmf/error.hpp"
#include "dmf/space.hpp"
#include "dmf/wire.hpp"

namespace dmf {

namespace {

// Margin on top of the server-side blocking time so a reply always beats the
// client's read deadline.
constexpr int kReplyGraceMs = 15'000;

}  // namespace

SpaceAgent::SpaceAgent(const TransportConfig& config)
    : pool_(std::make_shared<ClientPool>(config.host, config.port)) {}

void SpaceAgent::connect() {
  pool_->probe();
  connected_.store(true);
}

void SpaceAgent::disconnect() {
  connected_.store(false);
  pool_->close();
}

std::string SpaceAgent::write_entry(const Demand& demand) {
  if (!connected_.load()) {
    throw Error(ErrorCode::NotConnected, "agent is not connected");
  }
  const std::string bytes = serialize(demand);
  WireJson args = WireJson::object();
  args["bytes"] = bytes;
  args["lease_ms"] = "inf";
  auto lease = pool_->acquire();
  lease->call("write", std::move(args), kReplyGraceMs);
  return bytes;
}

DemandSignature SpaceAgent::write_demand(const Demand& demand) {
  if (demand.state != DemandState::Pending) {
    throw Error(ErrorCode::State, "write_demand requires a pending demand");
  }
  write_entry(demand);
  return demand.signature;
}

void SpaceAgent::write_result(const Demand& demand) {
  if (demand.state != DemandState::Computed) {
    throw Error(ErrorCode::State, "write_result requires a computed demand");
  }
  write_entry(demand);
}

std::optional<Demand> SpaceAgent::take_entry(const EntryTemplate& tmpl,
                                             int timeout_ms) {
  if (!connected_.load()) {
    throw Error(ErrorCode::NotConnected, "agent is not connected");
  }
  if (timeout_ms < 0) timeout_ms = 0;
  WireJson args = WireJson::object();
  if (tmpl.state) {
    args["state"] = *tmpl.state == DemandState::Pending ? "pending" : "computed";
  }
  if (tmpl.signature) args["sig"] = *tmpl.signature;
  args["timeout_ms"] = timeout_ms;
  auto lease = pool_->acquire();
  const WireJson body = lease->call("take", std::move(args), timeout_ms + kReplyGraceMs);
  const auto entry = body.find("entry");
  if (entry == body.end()) {
    throw Error(ErrorCode::Protocol, "take response missing 'entry'");
  }
  if (entry->is_null()) return std::nullopt;
  const auto bytes = entry->find("bytes");
  if (bytes == entry->end() || !bytes->is_string()) {
    throw Error(ErrorCode::Protocol, "take response entry missing 'bytes'");
  }
  return deserialize(bytes->get<std::string>());
}

std::optional<Demand> SpaceAgent::take_pending(int timeout_ms) {
  EntryTemplate tmpl;
  tmpl.state = DemandState::Pending;
  return take_entry(tmpl, timeout_ms);
}

std::optional<Demand> SpaceAgent::take_result(const DemandSignature& signature,
                                              int timeout_ms) {
  EntryTemplate tmpl;
  tmpl.state = DemandState::Computed;
  tmpl.signature = signature.id_hex();
  return take_entry(tmpl, timeout_ms);
}

}  // namespace dmf
