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

#pragma once

#include <string>

namespace dmf {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from the DMF_LOG environment variable (error|info|debug),
// read once on first use. Messages go to stderr.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& message) { log_message(LogLevel::Error, message); }
inline void log_info(const std::string& message) { log_message(LogLevel::Info, message); }
inline void log_debug(const std::string& message) { log_message(LogLevel::Debug, message); }

}  // namespace dmf
