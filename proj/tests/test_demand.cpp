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

#include <doctest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "dmf/demand.hpp"
#include "dmf/error.hpp"
#include "support.hpp"

using namespace dmf;
using dmf_tests::random_demand;

namespace {

void expect_decode_error(const std::string& bytes, const std::string& hint) {
  CAPTURE(bytes);
  CAPTURE(hint);
  try {
    deserialize(bytes);
    FAIL_CHECK("expected Error(Decode) for " << hint);
  } catch (const Error& error) {
    CHECK(error.code() == ErrorCode::Decode);
  }
}

Demand sample_pending() {
  return new_pending(DemandKind::Procedural, ProceduralPayload{"pi_digits", {42}},
                     "node-a");
}

Demand sample_computed() {
  return into_computed(sample_pending(), TextValue{"3.14"}, "worker-1", 7);
}

}  // namespace

TEST_CASE("round trip is the identity across all kinds and states") {
  std::mt19937_64 rng(0xD31A5EED);
  int computed_seen = 0;
  std::set<DemandKind> kinds_seen;
  for (int i = 0; i < 10'000; ++i) {
    const Demand original = random_demand(rng);
    kinds_seen.insert(original.kind);
    if (original.state == DemandState::Computed) ++computed_seen;
    const std::string bytes = serialize(original);
    const Demand decoded = deserialize(bytes);
    REQUIRE(decoded == original);
    // Determinism: byte-identical re-encoding.
    CHECK(serialize(decoded) == bytes);
  }
  CHECK(kinds_seen.size() == 4);
  CHECK(computed_seen > 2'000);
}

TEST_CASE("equal demands produce byte-identical encodings") {
  const Demand demand = sample_computed();
  const Demand copy = demand;
  CHECK(serialize(demand) == serialize(copy));
}

TEST_CASE("one million fresh ids have no collision") {
  std::vector<std::array<std::uint8_t, 16>> ids(1'000'000);
  for (auto& id : ids) id = DemandSignature::fresh_id();
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("id hex form is 32 lowercase hex characters and parses back") {
  const Demand demand = sample_pending();
  const std::string hex = demand.signature.id_hex();
  REQUIRE(hex.size() == 32);
  for (const char c : hex) {
    CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
  }
  const auto parsed = DemandSignature::parse_id_hex(hex);
  REQUIRE(parsed.has_value());
  CHECK(*parsed == demand.signature.id);
  CHECK_FALSE(DemandSignature::parse_id_hex("xyz").has_value());
  CHECK_FALSE(DemandSignature::parse_id_hex(hex.substr(1)).has_value());
}

TEST_CASE("into_computed transitions and preserves identity") {
  const Demand pending = sample_pending();
  const Demand computed = into_computed(pending, IntegerValue::of(-5), "w", 0);
  CHECK(computed.signature == pending.signature);
  CHECK(computed.kind == pending.kind);
  CHECK(computed.payload == pending.payload);
  CHECK(computed.state == DemandState::Computed);
  REQUIRE(computed.result.has_value());
  CHECK(std::get<IntegerValue>(*computed.result).decimal == "-5");

  CHECK_THROWS_AS(into_computed(computed, TextValue{"x"}, "w", 1), Error);
  CHECK_THROWS_AS(into_computed(pending, TextValue{"x"}, "", 1), Error);
  CHECK_THROWS_AS(into_computed(pending, TextValue{"x"}, "w", -1), Error);
}

TEST_CASE("new_pending validates payloads") {
  // Unregistered method.
  CHECK_THROWS_AS(
      new_pending(DemandKind::Procedural, ProceduralPayload{"no_such_method", {}}, "n"),
      Error);
  // Arity mismatch against the registry.
  CHECK_THROWS_AS(
      new_pending(DemandKind::Procedural, ProceduralPayload{"pi_digits", {1, 2}}, "n"),
      Error);
  // Kind and payload variant must agree.
  CHECK_THROWS_AS(new_pending(DemandKind::System,
                              ProceduralPayload{"pi_digits", {1}}, "n"),
                  Error);
  // Duplicate context dimensions.
  CHECK_THROWS_AS(
      new_pending(DemandKind::Intensional,
                  IntensionalPayload{"x", {{"d", 1}, {"d", 2}}}, "n"),
      Error);
  // Empty origin.
  CHECK_THROWS_AS(new_pending(DemandKind::Resource, ResourcePayload{"r"}, ""), Error);
}

TEST_CASE("method registry accepts repeats and rejects conflicts") {
  register_procedural_method("reg_probe", 2);
  CHECK_NOTHROW(register_procedural_method("reg_probe", 2));
  CHECK_THROWS_AS(register_procedural_method("reg_probe", 3), Error);
  CHECK(procedural_method_arity("reg_probe") == std::size_t{2});
  CHECK_FALSE(procedural_method_arity("absent_method").has_value());
}

TEST_CASE("deserialize rejects malformed input") {
  expect_decode_error("", "empty input");
  expect_decode_error("not json", "non-JSON");
  expect_decode_error("[1,2,3]", "non-object");

  auto tampered = [](const std::string& bytes, auto mutate) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::parse(bytes);
    mutate(doc);
    return doc.dump();
  };

  const std::string pending = serialize(sample_pending());
  const std::string computed = serialize(sample_computed());

  expect_decode_error(tampered(pending, [](auto& d) { d.erase("sig"); }), "missing sig");
  expect_decode_error(tampered(pending, [](auto& d) { d["sig"].erase("id"); }),
                      "missing id");
  expect_decode_error(tampered(pending, [](auto& d) { d["sig"]["id"] = "zz"; }),
                      "bad id hex");
  expect_decode_error(tampered(pending, [](auto& d) { d["sig"]["origin"] = ""; }),
                      "empty origin");
  expect_decode_error(tampered(pending, [](auto& d) { d["kind"] = "quantum"; }),
                      "unknown kind");
  expect_decode_error(tampered(pending, [](auto& d) { d["state"] = "done"; }),
                      "unknown state");
  expect_decode_error(tampered(pending, [](auto& d) { d["extra"] = 1; }),
                      "unknown top-level field");
  expect_decode_error(
      tampered(pending, [](auto& d) { d["payload"]["method"] = "no_such_method"; }),
      "unregistered method");
  expect_decode_error(
      tampered(pending, [](auto& d) { d["payload"]["args"].push_back(1); }),
      "arity mismatch");

  // State-conditional fields: pending forbids them, computed requires them.
  expect_decode_error(tampered(pending, [](auto& d) { d["worker_id"] = "w"; }),
                      "worker_id on pending");
  expect_decode_error(tampered(computed, [](auto& d) { d.erase("result"); }),
                      "computed without result");
  expect_decode_error(tampered(computed, [](auto& d) { d.erase("worker_id"); }),
                      "computed without worker_id");
  expect_decode_error(tampered(computed, [](auto& d) { d["compute_millis"] = -2; }),
                      "negative compute_millis");
  expect_decode_error(tampered(computed, [](auto& d) { d["worker_id"] = ""; }),
                      "empty worker_id");
  expect_decode_error(
      tampered(computed, [](auto& d) { d["result"] = {{"t", "warp"}, {"v", "x"}}; }),
      "unknown result type");

  // Non-canonical integers are rejected, not normalized.
  const Demand int_result =
      into_computed(sample_pending(), IntegerValue{"12"}, "w", 1);
  const std::string int_bytes = serialize(int_result);
  expect_decode_error(
      tampered(int_bytes, [](auto& d) { d["result"]["v"] = "012"; }), "leading zero");
  expect_decode_error(tampered(int_bytes, [](auto& d) { d["result"]["v"] = "-0"; }),
                      "negative zero");
  expect_decode_error(tampered(int_bytes, [](auto& d) { d["result"]["v"] = "1a"; }),
                      "non-digit");
  expect_decode_error(tampered(int_bytes, [](auto& d) { d["result"]["v"] = ""; }),
                      "empty integer");
}

TEST_CASE("serialized field order is pinned") {
  const std::string pending = serialize(sample_pending());
  CHECK(pending.find("\"sig\"") < pending.find("\"kind\""));
  CHECK(pending.find("\"kind\"") < pending.find("\"payload\""));
  CHECK(pending.find("\"payload\"") < pending.find("\"state\""));
  const std::string computed = serialize(sample_computed());
  CHECK(computed.find("\"state\"") < computed.find("\"result\""));
  CHECK(computed.find("\"result\"") < computed.find("\"worker_id\""));
  CHECK(computed.find("\"worker_id\"") < computed.find("\"compute_millis\""));
}
