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

#ifndef DMF_BACKENDS_HPP
#define DMF_BACKENDS_HPP

#include <memory>

#include "dmf/transport.hpp"

namespace dmf {

// Registers the two shipped backends, "space" and "queue", in the backend
// registry. Idempotent; call once at process startup.
void register_default_backends();

// Convenience: default backends + a connected pass-through dispatcher for
// config.backend.
std::unique_ptr<DemandDispatcher> connect_dispatcher(const TransportConfig& config);

}  // namespace dmf

#endif  // DMF_BACKENDS_HPP
