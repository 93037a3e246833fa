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

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmf {

/// Failure categories shared by every layer. The label of each code doubles
/// as the wire prefix of the error string, so a client can recover the code
/// from a response without extra fields.
enum class ErrorCode {
  Config,
  Decode,
  Invalid,
  State,
  Registry,
  UnknownBackend,
  Connect,
  NotConnected,
  Io,
  Protocol,
  CapacityExhausted,
  Duplicate,
  FlowControl,
  Ack,
  Closing,
};

std::string_view error_code_label(ErrorCode code);

/// Maps a wire error string ("<label>: message") back to its code.
/// Unrecognized prefixes fall back to ErrorCode::Protocol.
ErrorCode error_code_from_label(std::string_view message);

/// Removes a recognized "<label>: " prefix so re-wrapping in Error does not
/// stack labels. Unrecognized prefixes are kept verbatim.
std::string strip_error_label(std::string_view message);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message, bool retriable = false)
      : std::runtime_error(std::string(error_code_label(code)) + ": " + message),
        code_(code),
        retriable_(retriable) {}

  ErrorCode code() const noexcept { return code_; }

  /// True when the operation may succeed if repeated against the same
  /// endpoint (connection refused, broker restarting, flow control).
  bool retriable() const noexcept { return retriable_; }

private:
  ErrorCode code_;
  bool retriable_;
};

}  // namespace dmf
