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

#include "dmf/demand.hpp"

#include <chrono>
#include <mutex>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "dmf/base64.hpp"
#include "dmf/error.hpp"

namespace dmf {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void decode_fail(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::Decode, "'" + field + "': " + why);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct MethodRegistry {
  std::mutex mutex;
  std::unordered_map<std::string, std::size_t> arity{{"pi_digits", 1}};
};

MethodRegistry& method_registry() {
  static MethodRegistry registry;
  return registry;
}

// Canonical form: optional '-', no leading zeros, no "-0".
bool is_valid_integer(std::string_view s) {
  const bool negative = !s.empty() && s[0] == '-';
  if (negative) s.remove_prefix(1);
  if (s.empty()) return false;
  for (const char c : s) {
    if (c < '0' || c > '9') return false;
  }
  if (s.size() > 1 && s[0] == '0') return false;
  if (negative && s == "0") return false;
  return true;
}

void validate_payload(DemandKind kind, const DemandPayload& payload,
                      ErrorCode error_code) {
  auto fail = [&](const std::string& field, const std::string& why) {
    if (error_code == ErrorCode::Decode) decode_fail(field, why);
    throw Error(ErrorCode::Invalid, field + ": " + why);
  };
  if (payload_kind(payload) != kind) {
    fail("payload", "variant does not match kind '" + std::string(to_string(kind)) + "'");
  }
  if (const auto* p = std::get_if<ProceduralPayload>(&payload)) {
    const auto arity = procedural_method_arity(p->method);
    if (!arity) fail("payload.method", "unregistered method '" + p->method + "'");
    if (p->args.size() != *arity) {
      fail("payload.args", "arity mismatch for '" + p->method + "': expected " +
                               std::to_string(*arity) + ", got " +
                               std::to_string(p->args.size()));
    }
  } else if (const auto* i = std::get_if<IntensionalPayload>(&payload)) {
    for (std::size_t a = 0; a < i->context.size(); ++a) {
      for (std::size_t b = a + 1; b < i->context.size(); ++b) {
        if (i->context[a].dimension == i->context[b].dimension) {
          fail("payload.context", "duplicate dimension '" + i->context[a].dimension + "'");
        }
      }
    }
  }
}

Json payload_to_json(const DemandPayload& payload) {
  Json out = Json::object();
  if (const auto* p = std::get_if<ProceduralPayload>(&payload)) {
    out["method"] = p->method;
    out["args"] = p->args;
  } else if (const auto* i = std::get_if<IntensionalPayload>(&payload)) {
    out["identifier"] = i->identifier;
    Json ctx = Json::array();
    for (const auto& dt : i->context) {
      ctx.push_back(Json::array({dt.dimension, dt.tag}));
    }
    out["context"] = std::move(ctx);
  } else if (const auto* r = std::get_if<ResourcePayload>(&payload)) {
    out["resource_name"] = r->resource_name;
  } else {
    out["command"] = to_string(std::get<SystemPayload>(payload).command);
  }
  return out;
}

Json result_to_json(const ResultValue& result) {
  Json out = Json::object();
  if (const auto* t = std::get_if<TextValue>(&result)) {
    out["t"] = "text";
    out["v"] = t->value;
  } else if (const auto* i = std::get_if<IntegerValue>(&result)) {
    out["t"] = "int";
    out["v"] = i->decimal;
  } else if (const auto* b = std::get_if<BytesValue>(&result)) {
    out["t"] = "bytes";
    out["v"] = base64_encode(b->value);
  } else {
    out["t"] = "fault";
    out["v"] = std::get<FaultValue>(result).message;
  }
  return out;
}

void expect_keys(const Json& obj, const std::string& where,
                 std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const auto& a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) decode_fail(where.empty() ? key : where + "." + key, "unexpected field");
  }
}

const Json& require_field(const Json& obj, const std::string& where,
                          const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    decode_fail(where.empty() ? key : where + "." + key, "missing field");
  }
  return *it;
}

std::string require_string(const Json& obj, const std::string& where, const char* key) {
  const Json& v = require_field(obj, where, key);
  if (!v.is_string()) decode_fail(where.empty() ? key : where + "." + key, "expected a string");
  return v.get<std::string>();
}

std::int64_t require_int(const Json& obj, const std::string& where, const char* key) {
  const Json& v = require_field(obj, where, key);
  if (!v.is_number_integer()) {
    decode_fail(where.empty() ? key : where + "." + key, "expected an integer");
  }
  return v.get<std::int64_t>();
}

DemandPayload payload_from_json(DemandKind kind, const Json& obj) {
  if (!obj.is_object()) decode_fail("payload", "expected an object");
  switch (kind) {
    case DemandKind::Procedural: {
      expect_keys(obj, "payload", {"method", "args"});
      ProceduralPayload p;
      p.method = require_string(obj, "payload", "method");
      const Json& args = require_field(obj, "payload", "args");
      if (!args.is_array()) decode_fail("payload.args", "expected an array");
      for (const auto& a : args) {
        if (!a.is_number_integer()) decode_fail("payload.args", "expected integers");
        p.args.push_back(a.get<std::int64_t>());
      }
      return p;
    }
    case DemandKind::Intensional: {
      expect_keys(obj, "payload", {"identifier", "context"});
      IntensionalPayload p;
      p.identifier = require_string(obj, "payload", "identifier");
      const Json& ctx = require_field(obj, "payload", "context");
      if (!ctx.is_array()) decode_fail("payload.context", "expected an array");
      for (const auto& pair : ctx) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
            !pair[1].is_number_integer()) {
          decode_fail("payload.context", "expected [dimension, tag] pairs");
        }
        p.context.push_back({pair[0].get<std::string>(), pair[1].get<std::int64_t>()});
      }
      return p;
    }
    case DemandKind::Resource: {
      expect_keys(obj, "payload", {"resource_name"});
      return ResourcePayload{require_string(obj, "payload", "resource_name")};
    }
    case DemandKind::System: {
      expect_keys(obj, "payload", {"command"});
      const std::string cmd = require_string(obj, "payload", "command");
      if (cmd == "ping") return SystemPayload{SystemCommand::Ping};
      if (cmd == "shutdown") return SystemPayload{SystemCommand::Shutdown};
      if (cmd == "report_stats") return SystemPayload{SystemCommand::ReportStats};
      decode_fail("payload.command", "unknown command '" + cmd + "'");
    }
  }
  decode_fail("kind", "unknown kind");
}

ResultValue result_from_json(const Json& obj) {
  if (!obj.is_object()) decode_fail("result", "expected an object");
  expect_keys(obj, "result", {"t", "v"});
  const std::string tag = require_string(obj, "result", "t");
  if (tag == "text") return TextValue{require_string(obj, "result", "v")};
  if (tag == "int") {
    const std::string v = require_string(obj, "result", "v");
    if (!is_valid_integer(v)) decode_fail("result.v", "not a canonical decimal integer");
    return IntegerValue{v};
  }
  if (tag == "bytes") {
    const std::string v = require_string(obj, "result", "v");
    auto decoded = base64_decode(v);
    if (!decoded) decode_fail("result.v", "invalid base64");
    return BytesValue{std::move(*decoded)};
  }
  if (tag == "fault") return FaultValue{require_string(obj, "result", "v")};
  decode_fail("result.t", "unknown result tag '" + tag + "'");
}

}  // namespace

std::string DemandSignature::id_hex() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(32, '0');
  for (std::size_t i = 0; i < id.size(); ++i) {
    out[2 * i] = kHex[id[i] >> 4];
    out[2 * i + 1] = kHex[id[i] & 0xf];
  }
  return out;
}

std::array<std::uint8_t, 16> DemandSignature::fresh_id() {
  thread_local std::mt19937_64 rng = [] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(),
                      static_cast<unsigned>(
                          std::chrono::steady_clock::now().time_since_epoch().count())};
    return std::mt19937_64(seq);
  }();
  std::array<std::uint8_t, 16> out{};
  for (int half = 0; half < 2; ++half) {
    std::uint64_t v = rng();
    for (int i = 0; i < 8; ++i) {
      out[half * 8 + i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
    }
  }
  return out;
}

std::optional<std::array<std::uint8_t, 16>> DemandSignature::parse_id_hex(
    std::string_view hex) {
  if (hex.size() != 32) return std::nullopt;
  std::array<std::uint8_t, 16> out{};
  for (std::size_t i = 0; i < 16; ++i) {
    std::uint8_t byte = 0;
    for (int j = 0; j < 2; ++j) {
      const char c = hex[2 * i + j];
      byte = static_cast<std::uint8_t>(byte << 4);
      if (c >= '0' && c <= '9') {
        byte |= static_cast<std::uint8_t>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        byte |= static_cast<std::uint8_t>(c - 'a' + 10);
      } else {
        return std::nullopt;
      }
    }
    out[i] = byte;
  }
  return out;
}

DemandKind payload_kind(const DemandPayload& payload) {
  switch (payload.index()) {
    case 0: return DemandKind::Procedural;
    case 1: return DemandKind::Intensional;
    case 2: return DemandKind::Resource;
    default: return DemandKind::System;
  }
}

IntegerValue IntegerValue::of(std::int64_t value) {
  return IntegerValue{std::to_string(value)};
}

Demand new_pending(DemandKind kind, DemandPayload payload, std::string origin) {
  if (origin.empty()) throw Error(ErrorCode::Invalid, "origin: must be non-empty");
  validate_payload(kind, payload, ErrorCode::Invalid);
  Demand d;
  d.signature.id = DemandSignature::fresh_id();
  d.signature.origin = std::move(origin);
  d.signature.created_at_ms = now_ms();
  d.kind = kind;
  d.payload = std::move(payload);
  d.state = DemandState::Pending;
  return d;
}

Demand into_computed(const Demand& demand, ResultValue result,
                     std::string worker_id, std::int64_t compute_millis) {
  if (demand.state != DemandState::Pending) {
    throw Error(ErrorCode::State, "demand " + demand.signature.id_hex() +
                                      " is already computed");
  }
  if (worker_id.empty()) throw Error(ErrorCode::Invalid, "worker_id: must be non-empty");
  if (compute_millis < 0) {
    throw Error(ErrorCode::Invalid, "compute_millis: must be non-negative");
  }
  Demand out = demand;
  out.state = DemandState::Computed;
  out.result = std::move(result);
  out.worker_id = std::move(worker_id);
  out.compute_millis = compute_millis;
  return out;
}

std::string serialize(const Demand& demand) {
  Json sig = Json::object();
  sig["id"] = demand.signature.id_hex();
  sig["origin"] = demand.signature.origin;
  sig["created_at"] = demand.signature.created_at_ms;

  Json out = Json::object();
  out["sig"] = std::move(sig);
  out["kind"] = to_string(demand.kind);
  out["payload"] = payload_to_json(demand.payload);
  out["state"] = to_string(demand.state);
  if (demand.state == DemandState::Computed) {
    out["result"] = result_to_json(*demand.result);
    out["worker_id"] = *demand.worker_id;
    out["compute_millis"] = *demand.compute_millis;
  }
  return out.dump();
}

Demand deserialize(std::string_view bytes) {
  const Json root = Json::parse(bytes, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::Decode, "'demand': not a JSON object");
  }
  expect_keys(root, "",
              {"sig", "kind", "payload", "state", "result", "worker_id", "compute_millis"});

  Demand d;
  const Json& sig = require_field(root, "", "sig");
  if (!sig.is_object()) decode_fail("sig", "expected an object");
  expect_keys(sig, "sig", {"id", "origin", "created_at"});
  const std::string id_hex = require_string(sig, "sig", "id");
  const auto id = DemandSignature::parse_id_hex(id_hex);
  if (!id) decode_fail("sig.id", "expected 32 lowercase hex characters");
  d.signature.id = *id;
  d.signature.origin = require_string(sig, "sig", "origin");
  if (d.signature.origin.empty()) decode_fail("sig.origin", "must be non-empty");
  d.signature.created_at_ms = require_int(sig, "sig", "created_at");

  const std::string kind = require_string(root, "", "kind");
  if (kind == "procedural") {
    d.kind = DemandKind::Procedural;
  } else if (kind == "intensional") {
    d.kind = DemandKind::Intensional;
  } else if (kind == "resource") {
    d.kind = DemandKind::Resource;
  } else if (kind == "system") {
    d.kind = DemandKind::System;
  } else {
    decode_fail("kind", "unknown kind '" + kind + "'");
  }

  d.payload = payload_from_json(d.kind, require_field(root, "", "payload"));
  validate_payload(d.kind, d.payload, ErrorCode::Decode);

  const std::string state = require_string(root, "", "state");
  if (state == "pending") {
    d.state = DemandState::Pending;
  } else if (state == "computed") {
    d.state = DemandState::Computed;
  } else {
    decode_fail("state", "unknown state '" + state + "'");
  }

  if (d.state == DemandState::Computed) {
    d.result = result_from_json(require_field(root, "", "result"));
    d.worker_id = require_string(root, "", "worker_id");
    if (d.worker_id->empty()) decode_fail("worker_id", "must be non-empty");
    d.compute_millis = require_int(root, "", "compute_millis");
    if (*d.compute_millis < 0) decode_fail("compute_millis", "must be non-negative");
  } else {
    for (const char* key : {"result", "worker_id", "compute_millis"}) {
      if (root.contains(key)) decode_fail(key, "present on a pending demand");
    }
  }
  return d;
}

void register_procedural_method(const std::string& name, std::size_t arity) {
  auto& registry = method_registry();
  std::lock_guard<std::mutex> lock(registry.mutex);
  const auto [it, inserted] = registry.arity.emplace(name, arity);
  if (!inserted && it->second != arity) {
    throw Error(ErrorCode::Registry,
                "method '" + name + "' already registered with arity " +
                    std::to_string(it->second));
  }
}

std::optional<std::size_t> procedural_method_arity(const std::string& name) {
  auto& registry = method_registry();
  std::lock_guard<std::mutex> lock(registry.mutex);
  const auto it = registry.arity.find(name);
  if (it == registry.arity.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(DemandKind kind) {
  switch (kind) {
    case DemandKind::Procedural: return "procedural";
    case DemandKind::Intensional: return "intensional";
    case DemandKind::Resource: return "resource";
    case DemandKind::System: return "system";
  }
  return "?";
}

std::string_view to_string(DemandState state) {
  return state == DemandState::Pending ? "pending" : "computed";
}

std::string_view to_string(SystemCommand command) {
  switch (command) {
    case SystemCommand::Ping: return "ping";
    case SystemCommand::Shutdown: return "shutdown";
    case SystemCommand::ReportStats: return "report_stats";
  }
  return "?";
}

}  // namespace dmf
