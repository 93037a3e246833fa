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

#include <array>
#include <utility>

namespace dmf {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 15> kLabels{{
    {ErrorCode::Config, "config"},
    {ErrorCode::Decode, "decode"},
    {ErrorCode::Invalid, "invalid"},
    {ErrorCode::State, "state"},
    {ErrorCode::Registry, "registry"},
    {ErrorCode::UnknownBackend, "unknown-backend"},
    {ErrorCode::Connect, "connect"},
    {ErrorCode::NotConnected, "not-connected"},
    {ErrorCode::Io, "io"},
    {ErrorCode::Protocol, "protocol"},
    {ErrorCode::CapacityExhausted, "capacity-exhausted"},
    {ErrorCode::Duplicate, "duplicate"},
    {ErrorCode::FlowControl, "flow-control"},
    {ErrorCode::Ack, "ack"},
    {ErrorCode::Closing, "closing"},
}};

}  // namespace

std::string_view error_code_label(ErrorCode code) {
  for (const auto& [c, label] : kLabels) {
    if (c == code) return label;
  }
  return "protocol";
}

ErrorCode error_code_from_label(std::string_view message) {
  const auto colon = message.find(':');
  const std::string_view prefix =
      colon == std::string_view::npos ? message : message.substr(0, colon);
  for (const auto& [code, label] : kLabels) {
    if (prefix == label) return code;
  }
  return ErrorCode::Protocol;
}

std::string strip_error_label(std::string_view message) {
  const auto colon = message.find(':');
  if (colon == std::string_view::npos) return std::string(message);
  const std::string_view prefix = message.substr(0, colon);
  for (const auto& [code, label] : kLabels) {
    (void)code;
    if (prefix == label) {
      std::string_view rest = message.substr(colon + 1);
      if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      return std::string(rest);
    }
  }
  return std::string(message);
}

}  // namespace dmf
