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

#ifndef DMF_TRANSPORT_HPP
#define DMF_TRANSPORT_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "dmf/demand.hpp"

namespace dmf {

// Backend selection plus endpoint; `options` carries backend-specific keys
// (space.capacity, queue.journal_path, ...) as raw strings.
struct TransportConfig {
  std::string backend;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  bool persistent = false;
  std::map<std::string, std::string> options;

  std::optional<std::string> option(const std::string& key) const;
  // "host:port"; throws Error(Config) naming the offending part.
  void set_endpoint(const std::string& endpoint);
};

// The uniform transport contract. Generator and worker code reference only
// this interface; which backend stands behind it is chosen by a name string
// at startup. Signatures mention only demand-model types, strings and
// integers, keeping the contract backend-neutral.
//
// Implementations are safe for concurrent use by many threads.
class TransportAgent {
 public:
  virtual ~TransportAgent() = default;

  // Establishes connectivity; connection refusal throws retriable
  // Error(Connect).
  virtual void connect() = 0;
  // Idempotent; subsequent operations throw Error(NotConnected).
  virtual void disconnect() = 0;

  // Hands a Pending demand to the backend's pending store.
  virtual DemandSignature write_demand(const Demand& demand) = 0;
  // Removes and returns one pending demand, or nullopt after the timeout.
  // Each pending demand is delivered to at most one caller.
  virtual std::optional<Demand> take_pending(int timeout_ms) = 0;
  // Stores a Computed demand for retrieval by its signature. A second
  // result for the same signature is rejected with Error(Duplicate).
  virtual void write_result(const Demand& demand) = 0;
  // Removes and returns the Computed demand with this exact signature, or
  // nullopt after the timeout. Never returns another signature's result.
  virtual std::optional<Demand> take_result(const DemandSignature& signature,
                                            int timeout_ms) = 0;
};

using AgentFactory =
    std::function<std::unique_ptr<TransportAgent>(const TransportConfig&)>;

// Explicit name->factory map, populated at startup; instantiation by name
// string is the only coupling between node code and a concrete backend.
// Duplicate registration throws Error(Registry); lookup is case-sensitive.
void register_backend(const std::string& name, AgentFactory factory);
bool backend_registered(const std::string& name);

// Instantiates and connects the named backend's agent. Unknown name throws
// Error(UnknownBackend).
std::unique_ptr<TransportAgent> create_agent(const std::string& name,
                                             const TransportConfig& config);

// Dispatcher layer between node code and the agent: the scheduling hook
// point. Ships with the pass-through strategy only.
class DemandDispatcher {
 public:
  virtual ~DemandDispatcher() = default;

  // Requires demand.state == Pending; returns the signature for later
  // correlation via obtain_result.
  virtual DemandSignature dispatch(const Demand& demand) = 0;
  virtual std::optional<Demand> obtain_result(const DemandSignature& signature,
                                              int timeout_ms) = 0;
  virtual std::optional<Demand> next_pending(int timeout_ms) = 0;
  // Requires demand.state == Computed.
  virtual void return_result(const Demand& demand) = 0;
  virtual void disconnect() = 0;
};

using DispatcherFactory = std::function<std::unique_ptr<DemandDispatcher>(
    std::unique_ptr<TransportAgent>)>;

// Same registry pattern as backends; "passthrough" is pre-registered.
void register_dispatcher(const std::string& name, DispatcherFactory factory);
std::unique_ptr<DemandDispatcher> create_dispatcher(
    const std::string& name, std::unique_ptr<TransportAgent> agent);

// Delegates 1:1 to its agent after enforcing the state preconditions.
class PassthroughDispatcher : public DemandDispatcher {
 public:
  explicit PassthroughDispatcher(std::unique_ptr<TransportAgent> agent)
      : agent_(std::move(agent)) {}

  DemandSignature dispatch(const Demand& demand) override;
  std::optional<Demand> obtain_result(const DemandSignature& signature,
                                      int timeout_ms) override;
  std::optional<Demand> next_pending(int timeout_ms) override;
  void return_result(const Demand& demand) override;
  void disconnect() override { agent_->disconnect(); }

 private:
  std::unique_ptr<TransportAgent> agent_;
};

}  // namespace dmf

#endif  // DMF_TRANSPORT_HPP
