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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dmf {

/// Identity of a demand: a 128-bit unique id plus the node that created it.
/// The id never changes across the pending -> computed transition; it is the
/// correlation key that links a result back to its request.
struct DemandSignature {
  std::array<std::uint8_t, 16> id{};
  std::string origin;
  std::int64_t created_at_ms = 0;

  /// 32 lowercase hex characters, the canonical textual form of the id.
  std::string id_hex() const;

  static std::array<std::uint8_t, 16> fresh_id();
  static std::optional<std::array<std::uint8_t, 16>> parse_id_hex(std::string_view hex);

  bool operator==(const DemandSignature&) const = default;
};

enum class DemandKind { Procedural, Intensional, Resource, System };
enum class DemandState { Pending, Computed };
enum class SystemCommand { Ping, Shutdown, ReportStats };

/// Request to run a named computation with integer arguments. The method
/// must be registered (see register_procedural_method) and the argument
/// count must match its arity.
struct ProceduralPayload {
  std::string method;
  std::vector<std::int64_t> args;
  bool operator==(const ProceduralPayload&) const = default;
};

struct DimensionTag {
  std::string dimension;
  std::int64_t tag = 0;
  bool operator==(const DimensionTag&) const = default;
};

/// Request for the value of an identifier at a multidimensional context.
/// Dimension names within one context are unique.
struct IntensionalPayload {
  std::string identifier;
  std::vector<DimensionTag> context;
  bool operator==(const IntensionalPayload&) const = default;
};

struct ResourcePayload {
  std::string resource_name;
  bool operator==(const ResourcePayload&) const = default;
};

struct SystemPayload {
  SystemCommand command = SystemCommand::Ping;
  bool operator==(const SystemPayload&) const = default;
};

using DemandPayload =
    std::variant<ProceduralPayload, IntensionalPayload, ResourcePayload, SystemPayload>;

DemandKind payload_kind(const DemandPayload& payload);

struct TextValue {
  std::string value;
  bool operator==(const TextValue&) const = default;
};

/// Arbitrary-precision integer carried as its canonical decimal string
/// (optional leading '-', no leading zeros, "0" for zero).
struct IntegerValue {
  std::string decimal = "0";
  static IntegerValue of(std::int64_t value);
  bool operator==(const IntegerValue&) const = default;
};

struct BytesValue {
  std::vector<std::uint8_t> value;
  bool operator==(const BytesValue&) const = default;
};

/// A worker-side evaluation failure. This is a legitimate computed outcome,
/// distinct from transport errors: the demand completed, the computation
/// did not.
struct FaultValue {
  std::string message;
  bool operator==(const FaultValue&) const = default;
};

using ResultValue = std::variant<TextValue, IntegerValue, BytesValue, FaultValue>;

/// The migrating unit of work. Immutable after construction; the lifecycle
/// transition produces a new value with the same signature.
struct Demand {
  DemandSignature signature;
  DemandKind kind = DemandKind::Procedural;
  DemandPayload payload;
  DemandState state = DemandState::Pending;
  std::optional<ResultValue> result;
  std::optional<std::string> worker_id;
  std::optional<std::int64_t> compute_millis;

  bool operator==(const Demand&) const = default;
};

/// Builds a fresh pending demand. Throws Error(Invalid) when the payload
/// variant does not match the kind, the payload violates its invariants, or
/// origin is empty.
Demand new_pending(DemandKind kind, DemandPayload payload, std::string origin);

/// Pending -> Computed transition; the signature, kind and payload carry
/// over untouched. Throws Error(State) if the input is already computed,
/// Error(Invalid) for empty worker_id or negative compute_millis.
Demand into_computed(const Demand& demand, ResultValue result,
                     std::string worker_id, std::int64_t compute_millis);

/// Canonical encoding: UTF-8 JSON with a fixed field order and no extra
/// whitespace. This exact byte sequence crosses every wire and lands in
/// every persistence file. Deterministic for a fixed demand.
std::string serialize(const Demand& demand);

/// Inverse of serialize. Throws Error(Decode) naming the offending field
/// for malformed input, unknown kinds, or invariant violations.
Demand deserialize(std::string_view bytes);

/// Registry of procedural computation names and their arities, consulted by
/// construction and decoding. "pi_digits" (arity 1) is registered out of
/// the box. Duplicate registration with a different arity is an error.
void register_procedural_method(const std::string& name, std::size_t arity);
std::optional<std::size_t> procedural_method_arity(const std::string& name);

std::string_view to_string(DemandKind kind);
std::string_view to_string(DemandState state);
std::string_view to_string(SystemCommand command);

}  // namespace dmf
