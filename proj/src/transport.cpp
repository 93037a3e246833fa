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

#include "dmf/transport.hpp"

#include <mutex>
#include <unordered_map>

#include "dmf/error.hpp"

namespace dmf {

namespace {

template <typename Factory>
struct Registry {
  std::mutex mutex;
  std::unordered_map<std::string, Factory> entries;
};

Registry<AgentFactory>& backend_registry() {
  static Registry<AgentFactory> registry;
  return registry;
}

Registry<DispatcherFactory>& dispatcher_registry() {
  static Registry<DispatcherFactory> registry;
  static const bool seeded = [] {
    registry.entries.emplace("passthrough", [](std::unique_ptr<TransportAgent> agent) {
      return std::make_unique<PassthroughDispatcher>(std::move(agent));
    });
    return true;
  }();
  (void)seeded;
  return registry;
}

}  // namespace

std::optional<std::string> TransportConfig::option(const std::string& key) const {
  const auto it = options.find(key);
  if (it == options.end()) return std::nullopt;
  return it->second;
}

void TransportConfig::set_endpoint(const std::string& endpoint) {
  // Exactly one colon: hostnames and IPv4 literals only.
  const auto colon = endpoint.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size() ||
      endpoint.find(':', colon + 1) != std::string::npos) {
    throw Error(ErrorCode::Config,
                "endpoint '" + endpoint + "' is not of the form host:port");
  }
  const std::string port_text = endpoint.substr(colon + 1);
  int parsed = 0;
  for (const char c : port_text) {
    if (c < '0' || c > '9') {
      throw Error(ErrorCode::Config,
                  "endpoint port '" + port_text + "' is not a number");
    }
    parsed = parsed * 10 + (c - '0');
    if (parsed > 65535) {
      throw Error(ErrorCode::Config, "endpoint port '" + port_text + "' out of range");
    }
  }
  if (parsed == 0) {
    throw Error(ErrorCode::Config, "endpoint port '" + port_text + "' out of range");
  }
  host = endpoint.substr(0, colon);
  port = static_cast<std::uint16_t>(parsed);
}

void register_backend(const std::string& name, AgentFactory factory) {
  auto& registry = backend_registry();
  std::lock_guard<std::mutex> lock(registry.mutex);
  if (!registry.entries.emplace(name, std::move(factory)).second) {
    throw Error(ErrorCode::Registry, "backend '" + name + "' already registered");
  }
}

bool backend_registered(const std::string& name) {
  auto& registry = backend_registry();
  std::lock_guard<std::mutex> lock(registry.mutex);
  return registry.entries.count(name) > 0;
}

std::unique_ptr<TransportAgent> create_agent(const std::string& name,
                                             const TransportConfig& config) {
  AgentFactory factory;
  {
    auto& registry = backend_registry();
    std::lock_guard<std::mutex> lock(registry.mutex);
    const auto it = registry.entries.find(name);
    if (it == registry.entries.end()) {
      throw Error(ErrorCode::UnknownBackend, "no backend registered as '" + name + "'");
    }
    factory = it->second;
  }
  auto agent = factory(config);
  agent->connect();
  return agent;
}

void register_dispatcher(const std::string& name, DispatcherFactory factory) {
  auto& registry = dispatcher_registry();
  std::lock_guard<std::mutex> lock(registry.mutex);
  if (!registry.entries.emplace(name, std::move(factory)).second) {
    throw Error(ErrorCode::Registry, "dispatcher '" + name + "' already registered");
  }
}

std::unique_ptr<DemandDispatcher> create_dispatcher(
    const std::string& name, std::unique_ptr<TransportAgent> agent) {
  DispatcherFactory factory;
  {
    auto& registry = dispatcher_registry();
    std::lock_guard<std::mutex> lock(registry.mutex);
    const auto it = registry.entries.find(name);
    if (it == registry.entries.end()) {
      throw Error(ErrorCode::Registry, "no dispatcher registered as '" + name + "'");
    }
    factory = it->second;
  }
  return factory(std::move(agent));
}

DemandSignature PassthroughDispatcher::dispatch(const Demand& demand) {
  if (demand.state != DemandState::Pending) {
    throw Error(ErrorCode::State, "dispatch requires a pending demand");
  }
  return agent_->write_demand(demand);
}

std::optional<Demand> PassthroughDispatcher::obtain_result(
    const DemandSignature& signature, int timeout_ms) {
  return agent_->take_result(signature, timeout_ms);
}

std::optional<Demand> PassthroughDispatcher::next_pending(int timeout_ms) {
  return agent_->take_pending(timeout_ms);
}

void PassthroughDispatcher::return_result(const Demand& demand) {
  if (demand.state != DemandState::Computed) {
    throw Error(ErrorCode::State, "return_result requires a computed demand");
  }
  agent_->write_result(demand);
}

}  // namespace dmf
