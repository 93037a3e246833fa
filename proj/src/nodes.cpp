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

#include "dmf/nodes.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <variant>

#include <nlohmann/json.hpp>

#include "dmf/backends.hpp"
#include "dmf/error.hpp"
#include "dmf/log.hpp"
#include "dmf/pi.hpp"
#include "dmf/properties.hpp"

namespace dmf {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - since)
      .count();
}

// Consecutive transport failures tolerated before a node gives up.
constexpr int kMaxTransportFailures = 10;
constexpr int kRetryBackoffMs = 200;
constexpr int kWorkerPollMs = 1'000;

std::int64_t parse_decimal(const Properties& props, const std::string& key) {
  const std::string raw = props.get_string(key);
  std::int64_t value = 0;
  const auto [end, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || end != raw.data() + raw.size()) {
    throw Error(ErrorCode::Config,
                props.origin() + ": key '" + key + "': expected integer, got '" + raw + "'");
  }
  return value;
}

std::int64_t int_option_or(const Properties& props, const std::string& key,
                           std::int64_t fallback) {
  if (!props.get(key)) return fallback;
  return parse_decimal(props, key);
}

void require_keys_known(const Properties& props, const std::set<std::string>& known) {
  for (const auto& [key, value] : props.entries()) {
    (void)value;
    if (!known.contains(key)) {
      throw Error(ErrorCode::Config, props.origin() + ": unknown key '" + key + "'");
    }
  }
}

const std::set<std::string> kTransportKeys = {
    "transport.backend",        "transport.endpoint",
    "space.capacity",           "space.snapshot_path",
    "space.snapshot_interval_ms", "space.lease_default_ms",
    "queue.memory_threshold",   "queue.journal_path",
    "queue.ack_mode",           "queue.persistent",
};

const std::set<std::string> kNodeKeys = {
    "node.id",           "node.role",          "node.transport.config",
    "generator.threads", "generator.demands",  "generator.pi_digits",
    "generator.persistent",
};

// Worker-side procedural method table. The demand-model registry knows only
// name and arity; the callable lives here.
struct MethodTable {
  std::mutex mutex;
  std::unordered_map<std::string, std::pair<std::size_t, WorkerMethod>> methods;
};

MethodTable& method_table() {
  static MethodTable table;
  static const bool seeded = [] {
    table.methods.emplace(
        "pi_digits",
        std::make_pair<std::size_t, WorkerMethod>(
            1, [](const std::vector<std::int64_t>& args) -> ResultValue {
              const std::int64_t n = args.at(0);
              if (n < 1 || n > 10'000) {
                throw Error(ErrorCode::Invalid,
                            "argument error: pi_digits requires 1 <= n <= 10000, got " +
                                std::to_string(n));
              }
              return TextValue{pi_digits(static_cast<int>(n))};
            }));
    return true;
  }();
  (void)seeded;
  return table;
}

struct ResourceTable {
  std::mutex mutex;
  std::unordered_map<std::string, std::vector<std::uint8_t>> blobs;
};

ResourceTable& resource_table() {
  static ResourceTable table;
  return table;
}

ResultValue evaluate_procedural(const ProceduralPayload& payload) {
  WorkerMethod method;
  {
    auto& table = method_table();
    std::lock_guard lock(table.mutex);
    const auto it = table.methods.find(payload.method);
    if (it == table.methods.end()) {
      return FaultValue{"unknown method: " + payload.method};
    }
    if (it->second.first != payload.args.size()) {
      return FaultValue{"argument error: " + payload.method + " takes " +
                        std::to_string(it->second.first) + " arguments, got " +
                        std::to_string(payload.args.size())};
    }
    method = it->second.second;
  }
  return method(payload.args);
}

ResultValue evaluate_intensional(const IntensionalPayload& payload) {
  // Deliberately minimal evaluator: "nat" at a single-dimension context is
  // the tag itself; anything richer is out of scope.
  if (payload.identifier == "nat" && payload.context.size() == 1) {
    return IntegerValue::of(payload.context.front().tag);
  }
  return FaultValue{"unknown identifier: " + payload.identifier};
}

ResultValue evaluate_resource(const ResourcePayload& payload) {
  if (auto blob = worker_resource(payload.resource_name)) {
    return BytesValue{std::move(*blob)};
  }
  return FaultValue{"unknown resource: " + payload.resource_name};
}

ResultValue evaluate_system(const SystemPayload& payload, const WorkerCounters& counters) {
  switch (payload.command) {
    case SystemCommand::Ping:
      return TextValue{"pong"};
    case SystemCommand::Shutdown:
      return TextValue{"shutdown-ack"};
    case SystemCommand::ReportStats: {
      nlohmann::ordered_json stats;
      stats["demands_processed"] = counters.demands_processed;
      stats["faults_produced"] = counters.faults_produced;
      return TextValue{stats.dump()};
    }
  }
  return FaultValue{"unknown system command"};
}

bool is_shutdown(const Demand& demand) {
  if (demand.kind != DemandKind::System) return false;
  const auto* system = std::get_if<SystemPayload>(&demand.payload);
  return system != nullptr && system->command == SystemCommand::Shutdown;
}

bool transport_retry_worthy(const Error& error) {
  return error.retriable() || error.code() == ErrorCode::Io ||
         error.code() == ErrorCode::Connect;
}

// Bounded-retry return_result. Duplicate means a redelivered demand was
// computed twice and the first result already landed: success. Other
// non-retriable rejections drop the result but keep the worker alive.
// Returns false only when the transport stays down through every retry.
bool deliver_result(DemandDispatcher& dispatcher, const Demand& computed) {
  for (int attempt = 0; attempt < kMaxTransportFailures; ++attempt) {
    try {
      dispatcher.return_result(computed);
      return true;
    } catch (const Error& error) {
      if (error.code() == ErrorCode::Duplicate) {
        log_debug("worker: result for " + computed.signature.id_hex() +
                  " already delivered");
        return true;
      }
      if (!transport_retry_worthy(error)) {
        log_error("worker: dropping result for " + computed.signature.id_hex() +
                  ": " + error.what());
        return true;
      }
      log_info(std::string("worker: return_result retry: ") + error.what());
      std::this_thread::sleep_for(std::chrono::milliseconds(kRetryBackoffMs));
    }
  }
  return false;
}

bool dispatch_with_retry(DemandDispatcher& dispatcher, const Demand& demand) {
  for (int attempt = 0; attempt < kMaxTransportFailures; ++attempt) {
    try {
      dispatcher.dispatch(demand);
      return true;
    } catch (const Error& error) {
      if (!transport_retry_worthy(error)) {
        log_error(std::string("generator: dispatch rejected: ") + error.what());
        return false;
      }
      log_info(std::string("generator: dispatch retry: ") + error.what());
      std::this_thread::sleep_for(std::chrono::milliseconds(kRetryBackoffMs));
    }
  }
  log_error("generator: dispatch failed after retries");
  return false;
}

// Wait up to deadline_ms for one signature's result, riding out transient
// transport errors inside the window.
std::optional<Demand> obtain_within(DemandDispatcher& dispatcher,
                                    const DemandSignature& signature,
                                    std::int64_t deadline_ms) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(deadline_ms);
  for (;;) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                               deadline - Clock::now())
                               .count();
    if (remaining <= 0) return std::nullopt;
    try {
      auto result = dispatcher.obtain_result(
          signature, static_cast<int>(std::min<std::int64_t>(remaining, 600'000)));
      if (result) return result;
    } catch (const Error& error) {
      if (!transport_retry_worthy(error)) {
        log_error(std::string("generator: obtain_result failed: ") + error.what());
        return std::nullopt;
      }
      log_info(std::string("generator: obtain_result retry: ") + error.what());
      std::this_thread::sleep_for(std::chrono::milliseconds(kRetryBackoffMs));
    }
  }
}

std::atomic<bool> g_node_stop{false};

}  // namespace

void request_node_stop() { g_node_stop.store(true, std::memory_order_relaxed); }

bool node_stop_requested() { return g_node_stop.load(std::memory_order_relaxed); }

std::string report_csv_header() {
  return "node_id,backend,threads,workers,demands,received,faults,wall_ms,"
         "throughput_per_s";
}

std::string report_csv_line(const NodeConfig& config, const WorkloadReport& report) {
  std::ostringstream line;
  line << config.node_id << ',' << config.transport.backend << ','
       << config.generator_threads << ',' << config.workers_hint << ','
       << report.demands_sent << ',' << report.results_received << ','
       << report.faults << ',' << report.wall_millis << ',' << std::fixed
       << std::setprecision(2) << report.throughput_per_s;
  return line.str();
}

TransportConfig load_transport_config(const std::string& path) {
  const Properties props = Properties::load(path);
  require_keys_known(props, kTransportKeys);

  TransportConfig config;
  config.backend = props.get_string("transport.backend");
  if (config.backend.empty()) {
    throw Error(ErrorCode::Config, props.origin() + ": key 'transport.backend': empty");
  }
  config.set_endpoint(props.get_string("transport.endpoint"));
  config.persistent = props.get_bool_or("queue.persistent", false);
  for (const auto& [key, value] : props.entries()) {
    if (key == "transport.backend" || key == "transport.endpoint") continue;
    config.options.emplace(key, value);
  }
  return config;
}

NodeConfig load_node_config(const std::string& path) {
  const Properties props = Properties::load(path);
  require_keys_known(props, kNodeKeys);

  NodeConfig config;
  config.node_id = props.get_string("node.id");
  if (config.node_id.empty()) {
    throw Error(ErrorCode::Config, props.origin() + ": key 'node.id': empty");
  }

  const std::string role = props.get_string("node.role");
  if (role == "generator") {
    config.role = NodeRole::Generator;
  } else if (role == "worker") {
    config.role = NodeRole::Worker;
  } else {
    throw Error(ErrorCode::Config, props.origin() +
                                       ": key 'node.role': expected generator or "
                                       "worker, got '" +
                                       role + "'");
  }

  std::filesystem::path transport_path = props.get_string("node.transport.config");
  if (transport_path.is_relative()) {
    transport_path = std::filesystem::path(path).parent_path() / transport_path;
  }
  config.transport = load_transport_config(transport_path.string());

  if (config.role == NodeRole::Generator) {
    config.generator_threads = static_cast<int>(int_option_or(props, "generator.threads", 1));
    if (config.generator_threads < 1) {
      throw Error(ErrorCode::Config,
                  props.origin() + ": key 'generator.threads': must be >= 1");
    }
    config.demands_total = parse_decimal(props, "generator.demands");
    if (config.demands_total < 0) {
      throw Error(ErrorCode::Config,
                  props.origin() + ": key 'generator.demands': must be >= 0");
    }
    config.digit_count = static_cast<int>(int_option_or(props, "generator.pi_digits", 100));
    if (config.digit_count < 1 || config.digit_count > 10'000) {
      throw Error(ErrorCode::Config,
                  props.origin() + ": key 'generator.pi_digits': must be in [1, 10000]");
    }
    config.persistent = props.get_bool_or("generator.persistent", false);
    if (config.persistent) config.transport.persistent = true;
  } else {
    for (const auto& [key, value] : props.entries()) {
      (void)value;
      if (key.starts_with("generator.")) {
        throw Error(ErrorCode::Config, props.origin() + ": key '" + key +
                                           "': not allowed for role worker");
      }
    }
  }
  return config;
}

// The option map is re-rendered through Properties so the backend config
// builders share the typed getters and their diagnostics.
static Properties options_view(const TransportConfig& config) {
  std::ostringstream text;
  for (const auto& [key, value] : config.options) text << key << '=' << value << '\n';
  return Properties::parse(text.str(), "transport options");
}

SpaceServerConfig space_config_from(const TransportConfig& config) {
  const Properties props = options_view(config);

  SpaceServerConfig out;
  out.host = config.host;
  out.port = config.port;
  const std::int64_t capacity = int_option_or(props, "space.capacity",
                                              static_cast<std::int64_t>(out.capacity));
  if (capacity < 1) {
    throw Error(ErrorCode::Config, "key 'space.capacity': must be >= 1");
  }
  out.capacity = static_cast<std::size_t>(capacity);
  out.lease_default_ms = int_option_or(props, "space.lease_default_ms", out.lease_default_ms);
  if (out.lease_default_ms < 1 && out.lease_default_ms != kLeaseInfinite) {
    throw Error(ErrorCode::Config,
                "key 'space.lease_default_ms': must be >= 1 or -1 for infinite");
  }
  if (auto snapshot = props.get("space.snapshot_path")) out.snapshot_path = *snapshot;
  out.snapshot_interval_ms =
      int_option_or(props, "space.snapshot_interval_ms", out.snapshot_interval_ms);
  if (out.snapshot_interval_ms < 1) {
    throw Error(ErrorCode::Config, "key 'space.snapshot_interval_ms': must be >= 1");
  }
  return out;
}

BrokerConfig broker_config_from(const TransportConfig& config) {
  const Properties props = options_view(config);

  BrokerConfig out;
  out.host = config.host;
  out.port = config.port;
  const std::int64_t threshold =
      int_option_or(props, "queue.memory_threshold",
                    static_cast<std::int64_t>(out.memory_threshold));
  if (threshold < 1) {
    throw Error(ErrorCode::Config, "key 'queue.memory_threshold': must be >= 1");
  }
  out.memory_threshold = static_cast<std::size_t>(threshold);
  if (auto journal = props.get("queue.journal_path")) out.journal_path = *journal;
  const std::string ack_mode = props.get_string_or("queue.ack_mode", "auto");
  if (ack_mode == "auto") {
    out.ack_mode_default = AckMode::Auto;
  } else if (ack_mode == "client") {
    out.ack_mode_default = AckMode::Client;
  } else {
    throw Error(ErrorCode::Config,
                "key 'queue.ack_mode': expected auto or client, got '" + ack_mode + "'");
  }
  return out;
}

void register_worker_method(const std::string& name, std::size_t arity,
                            WorkerMethod method) {
  register_procedural_method(name, arity);
  auto& table = method_table();
  std::lock_guard lock(table.mutex);
  table.methods[name] = {arity, std::move(method)};
}

void register_worker_resource(const std::string& name, std::vector<std::uint8_t> bytes) {
  auto& table = resource_table();
  std::lock_guard lock(table.mutex);
  table.blobs[name] = std::move(bytes);
}

std::optional<std::vector<std::uint8_t>> worker_resource(const std::string& name) {
  auto& table = resource_table();
  std::lock_guard lock(table.mutex);
  const auto it = table.blobs.find(name);
  if (it == table.blobs.end()) return std::nullopt;
  return it->second;
}

ResultValue evaluate_payload(const DemandPayload& payload, const WorkerCounters& counters) {
  try {
    if (const auto* procedural = std::get_if<ProceduralPayload>(&payload)) {
      return evaluate_procedural(*procedural);
    }
    if (const auto* intensional = std::get_if<IntensionalPayload>(&payload)) {
      return evaluate_intensional(*intensional);
    }
    if (const auto* resource = std::get_if<ResourcePayload>(&payload)) {
      return evaluate_resource(*resource);
    }
    return evaluate_system(std::get<SystemPayload>(payload), counters);
  } catch (const Error& error) {
    return FaultValue{strip_error_label(error.what())};
  } catch (const std::exception& error) {
    return FaultValue{error.what()};
  }
}

int run_worker(const NodeConfig& config) {
  register_default_backends();
  auto dispatcher = connect_dispatcher(config.transport);
  log_info("worker " + config.node_id + ": connected to " + config.transport.backend +
           " backend at " + config.transport.host + ":" +
           std::to_string(config.transport.port));

  WorkerCounters counters;
  int consecutive_failures = 0;
  for (;;) {
    if (node_stop_requested()) {
      log_info("worker " + config.node_id + ": stop requested");
      dispatcher->disconnect();
      return 0;
    }
    std::optional<Demand> pending;
    try {
      pending = dispatcher->next_pending(kWorkerPollMs);
      consecutive_failures = 0;
    } catch (const Error& error) {
      if (error.code() == ErrorCode::Decode) {
        // A poisoned entry was consumed; the transport itself is fine.
        log_error(std::string("worker: undecodable pending demand: ") + error.what());
        continue;
      }
      log_info(std::string("worker: take_pending failed: ") + error.what());
      if (++consecutive_failures >= kMaxTransportFailures) {
        log_error("worker: transport unreachable, giving up");
        return 3;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(kRetryBackoffMs));
      continue;
    }
    if (!pending) continue;

    const bool shutdown = is_shutdown(*pending);
    const auto started = Clock::now();
    ResultValue value = evaluate_payload(pending->payload, counters);
    const std::int64_t compute_millis = elapsed_ms(started);

    counters.demands_processed += 1;
    if (std::holds_alternative<FaultValue>(value)) counters.faults_produced += 1;

    const Demand computed =
        into_computed(*pending, std::move(value), config.node_id, compute_millis);
    if (!deliver_result(*dispatcher, computed)) {
      log_error("worker: transport unreachable while returning result, giving up");
      return 3;
    }
    if (shutdown) {
      log_info("worker " + config.node_id + ": shutdown demand acknowledged");
      dispatcher->disconnect();
      return 0;
    }
  }
}

WorkloadReport run_generator(const NodeConfig& config) {
  register_default_backends();
  auto dispatcher = connect_dispatcher(config.transport);
  log_info("generator " + config.node_id + ": connected to " +
           config.transport.backend + " backend, dispatching " +
           std::to_string(config.demands_total) + " demands from " +
           std::to_string(config.generator_threads) + " threads");

  const std::string expected = pi_digits(config.digit_count);
  const int threads = std::max(1, config.generator_threads);

  struct Tally {
    std::int64_t sent = 0;
    std::int64_t received = 0;
    std::int64_t faults = 0;
    std::int64_t missing = 0;
  };
  std::vector<Tally> tallies(static_cast<std::size_t>(threads));

  const std::int64_t base = config.demands_total / threads;
  const std::int64_t remainder = config.demands_total % threads;

  const auto started = Clock::now();
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const std::int64_t quota = base + (t == 0 ? remainder : 0);
    pool.emplace_back([&, t, quota] {
      Tally& tally = tallies[static_cast<std::size_t>(t)];
      std::vector<DemandSignature> dispatched;
      dispatched.reserve(static_cast<std::size_t>(quota));
      for (std::int64_t i = 0; i < quota; ++i) {
        if (node_stop_requested()) break;
        Demand demand = new_pending(
            DemandKind::Procedural,
            ProceduralPayload{"pi_digits", {config.digit_count}}, config.node_id);
        if (dispatch_with_retry(*dispatcher, demand)) {
          tally.sent += 1;
          dispatched.push_back(demand.signature);
        }
      }
      for (const DemandSignature& signature : dispatched) {
        auto result = obtain_within(*dispatcher, signature, config.result_deadline_ms);
        if (!result) {
          tally.missing += 1;
          continue;
        }
        const auto* text =
            result->result ? std::get_if<TextValue>(&*result->result) : nullptr;
        if (text != nullptr && text->value == expected) {
          tally.received += 1;
        } else {
          // Fault results and wrong values both count as faults; a result
          // arrived but the computation is unusable.
          tally.faults += 1;
          if (const auto* fault =
                  result->result ? std::get_if<FaultValue>(&*result->result) : nullptr) {
            log_error("generator: fault result: " + fault->message);
          } else {
            log_error("generator: result mismatch for " + signature.id_hex());
          }
        }
      }
    });
  }
  for (auto& worker : pool) worker.join();

  WorkloadReport report;
  report.wall_millis = elapsed_ms(started);
  for (const Tally& tally : tallies) {
    report.demands_sent += tally.sent;
    report.results_received += tally.received;
    report.faults += tally.faults;
    report.missing += tally.missing;
  }
  report.throughput_per_s =
      report.wall_millis > 0
          ? static_cast<double>(report.results_received) * 1000.0 /
                static_cast<double>(report.wall_millis)
          : 0.0;
  dispatcher->disconnect();
  return report;
}

}  // namespace dmf
