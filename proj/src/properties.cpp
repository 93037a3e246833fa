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

#include "dmf/properties.hpp"

#include <fstream>
#include <sstream>

#include "dmf/error.hpp"

namespace dmf {

namespace {

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

}  // namespace

Properties Properties::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path);
}

Properties Properties::parse(const std::string& text, const std::string& origin) {
  Properties out;
  out.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Config, origin + ":" + std::to_string(number) +
                                         ": expected key=value, got '" + trimmed + "'");
    }
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::Config,
                  origin + ":" + std::to_string(number) + ": empty key");
    }
    if (!out.entries_.emplace(key, value).second) {
      throw Error(ErrorCode::Config, origin + ":" + std::to_string(number) +
                                         ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::optional<std::string> Properties::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Properties::get_string(const std::string& key) const {
  const auto value = get(key);
  if (!value) {
    throw Error(ErrorCode::Config, origin_ + ": missing required key '" + key + "'");
  }
  return *value;
}

std::int64_t Properties::get_int(const std::string& key) const {
  const std::string text = get_string(key);
  try {
    std::size_t used = 0;
    const std::int64_t value = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config,
                origin_ + ": key '" + key + "' is not an integer: '" + text + "'");
  }
}

bool Properties::get_bool(const std::string& key) const {
  const std::string text = get_string(key);
  if (text == "true") return true;
  if (text == "false") return false;
  throw Error(ErrorCode::Config,
              origin_ + ": key '" + key + "' must be true or false, got '" + text + "'");
}

std::string Properties::get_string_or(const std::string& key,
                                      const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::int64_t Properties::get_int_or(const std::string& key,
                                    std::int64_t fallback) const {
  return get(key) ? get_int(key) : fallback;
}

bool Properties::get_bool_or(const std::string& key, bool fallback) const {
  return get(key) ? get_bool(key) : fallback;
}

}  // namespace dmf
