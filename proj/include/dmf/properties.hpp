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

#ifndef DMF_PROPERTIES_HPP
#define DMF_PROPERTIES_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace dmf {

// UTF-8 key=value files: one pair per line, '#' starts a comment line,
// blank lines ignored, no escape sequences. Values keep interior spaces;
// keys and values are trimmed of surrounding whitespace.
class Properties {
 public:
  // Throws Error(Config) naming the file and line for malformed lines and
  // for duplicate keys.
  static Properties load(const std::string& path);
  static Properties parse(const std::string& text, const std::string& origin);

  std::optional<std::string> get(const std::string& key) const;
  // Throw Error(Config) naming the key when missing or unparseable.
  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> entries_;
  std::string origin_;
};

}  // namespace dmf

#endif  // DMF_PROPERTIES_HPP
