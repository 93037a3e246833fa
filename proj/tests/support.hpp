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

#ifndef DMF_TESTS_SUPPORT_HPP
#define DMF_TESTS_SUPPORT_HPP

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dmf/demand.hpp"

namespace dmf_tests {

// Rabinowitz-Wagon streaming spigot, the independent oracle for the
// fixed-point Machin evaluation under test. Digit-delay margin covers the
// 9-runs of the tested range; a short stream throws instead of padding.
inline std::string spigot_pi_digits(int n) {
  if (n < 1) throw std::invalid_argument("spigot_pi_digits: n must be >= 1");
  const std::size_t want = static_cast<std::size_t>(n) + 1;  // "3" + n fraction digits
  const int iterations = static_cast<int>(want) + 12;
  const std::size_t len = static_cast<std::size_t>(iterations) * 10 / 3 + 1;
  std::vector<std::uint32_t> boxes(len, 2);
  std::string stream;
  int nines = 0;
  int predigit = 0;
  bool have_predigit = false;
  for (int j = 0; j < iterations && stream.size() < want; ++j) {
    std::uint64_t q = 0;
    for (std::size_t i = len; i-- > 0;) {
      const std::uint64_t x = 10ULL * boxes[i] + q * (i + 1);
      const std::uint64_t den = 2 * i + 1;
      boxes[i] = static_cast<std::uint32_t>(x % den);
      q = x / den;
    }
    boxes[0] = static_cast<std::uint32_t>(q % 10);
    q /= 10;
    if (q == 9) {
      ++nines;
    } else if (q == 10) {
      stream.push_back(static_cast<char>('0' + predigit + 1));
      stream.append(static_cast<std::size_t>(nines), '0');
      predigit = 0;
      nines = 0;
    } else {
      if (have_predigit) stream.push_back(static_cast<char>('0' + predigit));
      have_predigit = true;
      predigit = static_cast<int>(q);
      stream.append(static_cast<std::size_t>(nines), '9');
      nines = 0;
    }
  }
  if (stream.size() < want || stream.front() != '3') {
    throw std::runtime_error("spigot_pi_digits: digit stream too short");
  }
  return "3." + stream.substr(1, static_cast<std::size_t>(n));
}

inline std::string random_name(std::mt19937_64& rng, std::size_t max_len = 12) {
  static const char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz_0123456789";
  const std::size_t length = 1 + rng() % max_len;
  std::string name;
  for (std::size_t i = 0; i < length; ++i) {
    name.push_back(kAlphabet[rng() % (sizeof(kAlphabet) - 1)]);
  }
  return name;
}

inline std::int64_t random_int64(std::mt19937_64& rng) {
  switch (rng() % 6) {
    case 0: return 0;
    case 1: return std::numeric_limits<std::int64_t>::min();
    case 2: return std::numeric_limits<std::int64_t>::max();
    case 3: return -static_cast<std::int64_t>(rng() % 1'000);
    default: return static_cast<std::int64_t>(rng());
  }
}

// Canonical decimal of arbitrary width: optional '-', no leading zeros.
inline std::string random_big_decimal(std::mt19937_64& rng) {
  if (rng() % 8 == 0) return "0";
  std::string digits;
  if (rng() % 2 == 0) digits.push_back('-');
  digits.push_back(static_cast<char>('1' + rng() % 9));
  const std::size_t extra = rng() % 40;
  for (std::size_t i = 0; i < extra; ++i) {
    digits.push_back(static_cast<char>('0' + rng() % 10));
  }
  return digits;
}

inline dmf::ResultValue random_result(std::mt19937_64& rng) {
  switch (rng() % 5) {
    case 0: return dmf::TextValue{random_name(rng, 30)};
    case 1: return dmf::TextValue{""};
    case 2: return dmf::IntegerValue{random_big_decimal(rng)};
    case 3: {
      std::vector<std::uint8_t> bytes(rng() % 64);
      for (auto& byte : bytes) byte = static_cast<std::uint8_t>(rng());
      return dmf::BytesValue{std::move(bytes)};
    }
    default: return dmf::FaultValue{"fault: " + random_name(rng)};
  }
}

// A demand of any kind and either state, exercising the value edges the
// encoding has to survive.
inline dmf::Demand random_demand(std::mt19937_64& rng) {
  using namespace dmf;
  static const bool registered = [] {
    register_procedural_method("t_nullary", 0);
    register_procedural_method("t_binary", 2);
    return true;
  }();
  (void)registered;

  DemandKind kind = DemandKind::Procedural;
  DemandPayload payload;
  switch (rng() % 4) {
    case 0: {
      kind = DemandKind::Procedural;
      switch (rng() % 3) {
        case 0: payload = ProceduralPayload{"pi_digits", {random_int64(rng)}}; break;
        case 1: payload = ProceduralPayload{"t_nullary", {}}; break;
        default:
          payload = ProceduralPayload{"t_binary", {random_int64(rng), random_int64(rng)}};
      }
      break;
    }
    case 1: {
      kind = DemandKind::Intensional;
      IntensionalPayload intensional{random_name(rng), {}};
      const std::size_t dims = rng() % 4;
      for (std::size_t d = 0; d < dims; ++d) {
        intensional.context.push_back(
            DimensionTag{"dim" + std::to_string(d), random_int64(rng)});
      }
      payload = std::move(intensional);
      break;
    }
    case 2: {
      kind = DemandKind::Resource;
      std::string name = random_name(rng);
      if (rng() % 4 == 0) name += "\xe2\x98\x83";  // UTF-8 passes through intact
      payload = ResourcePayload{std::move(name)};
      break;
    }
    default: {
      kind = DemandKind::System;
      payload = SystemPayload{static_cast<SystemCommand>(rng() % 3)};
    }
  }

  Demand demand = new_pending(kind, std::move(payload), random_name(rng));
  if (rng() % 2 == 0) {
    demand = into_computed(demand, random_result(rng), "w-" + random_name(rng),
                           static_cast<std::int64_t>(rng() % 1'000'000));
  }
  return demand;
}

template <typename Pred>
bool wait_until(Pred pred, int timeout_ms, int poll_ms = 20) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    if (pred()) return true;
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Port printed by the server subcommands: "listening on <host>:<port>".
inline std::optional<std::uint16_t> parse_listening_port(const std::string& text) {
  static const std::regex kPattern(R"(listening on [^\s:]+:(\d+))");
  std::smatch match;
  if (!std::regex_search(text, match, kPattern)) return std::nullopt;
  return static_cast<std::uint16_t>(std::stoi(match[1].str()));
}

inline std::filesystem::path fresh_test_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("dmf-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out.good()) throw std::runtime_error("cannot write " + path.string());
}

// CLI binary under test: the ctest environment pins it; outside ctest the
// sibling binary in the same output directory serves.
inline std::string dmf_binary_path() {
  if (const char* env = std::getenv("DMF_BIN"); env != nullptr && *env != '\0') {
    return env;
  }
  std::error_code ec;
  const auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const auto sibling = self.parent_path() / "dmf";
    if (std::filesystem::exists(sibling)) return sibling.string();
  }
  return "dmf";
}

}  // namespace dmf_tests

#endif  // DMF_TESTS_SUPPORT_HPP
