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

#include "dmf/backends.hpp"

#include <mutex>

#include "dmf/broker.hpp"
#include "dmf/space.hpp"

namespace dmf {

void register_default_backends() {
  static std::once_flag once;
  std::call_once(once, [] {
    register_backend("space", [](const TransportConfig& config) {
      return std::make_unique<SpaceAgent>(config);
    });
    register_backend("queue", [](const TransportConfig& config) {
      return std::make_unique<QueueAgent>(config);
    });
  });
}

std::unique_ptr<DemandDispatcher> connect_dispatcher(const TransportConfig& config) {
  register_default_backends();
  return create_dispatcher("passthrough", create_agent(config.backend, config));
}

}  // namespace dmf
