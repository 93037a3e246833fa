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

#ifndef DMF_NODES_HPP
#define DMF_NODES_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmf/broker.hpp"
#include "dmf/demand.hpp"
#include "dmf/space.hpp"
#include "dmf/transport.hpp"

namespace dmf {

enum class NodeRole { Generator, Worker };

// One node process, built from a properties file. The transport config is a
// second properties file referenced by `node.transport.config`, resolved
// relative to the node config's directory. Generator and worker code consume
// only the dispatcher contract, so swapping `transport.backend` in that file
// is the complete recipe for switching middleware.
struct NodeConfig {
  std::string node_id;
  NodeRole role = NodeRole::Worker;
  TransportConfig transport;

  // Generator-only workload shape.
  int generator_threads = 1;
  std::int64_t demands_total = 0;
  int digit_count = 100;
  bool persistent = false;
  // Per-demand wait on obtain_result before it counts as missing.
  std::int64_t result_deadline_ms = 30'000;
  // Worker count of the surrounding experiment, echoed into the report line.
  // Not a config-file key; the orchestrator knows it, the generator does not.
  int workers_hint = 0;
};

struct WorkloadReport {
  std::int64_t demands_sent = 0;
  std::int64_t results_received = 0;
  std::int64_t faults = 0;
  // Obtains that expired without a result. sent = received + faults + missing.
  std::int64_t missing = 0;
  std::int64_t wall_millis = 0;
  double throughput_per_s = 0.0;

  bool complete() const {
    return missing == 0 && faults == 0 && results_received == demands_sent;
  }
};

// node_id,backend,threads,workers,demands,received,faults,wall_ms,throughput_per_s
std::string report_csv_header();
std::string report_csv_line(const NodeConfig& config, const WorkloadReport& report);

// Throw Error(Config) naming the offending key or file:line.
TransportConfig load_transport_config(const std::string& path);
NodeConfig load_node_config(const std::string& path);

// Server-side views of a transport config's backend options.
SpaceServerConfig space_config_from(const TransportConfig& config);
BrokerConfig broker_config_from(const TransportConfig& config);

// Counters a worker accumulates, reported via the ReportStats system demand.
struct WorkerCounters {
  std::int64_t demands_processed = 0;
  std::int64_t faults_produced = 0;
};

// Worker-side implementation table for procedural methods. Registration also
// records the arity in the demand-model registry so such demands decode.
// "pi_digits" ships preregistered.
using WorkerMethod = std::function<ResultValue(const std::vector<std::int64_t>&)>;
void register_worker_method(const std::string& name, std::size_t arity, WorkerMethod method);

// Worker-side named byte blobs served for Resource demands.
void register_worker_resource(const std::string& name, std::vector<std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> worker_resource(const std::string& name);

// One evaluation step, payload to result value. Never throws: every failure,
// including unknown methods and argument errors, becomes a FaultValue.
ResultValue evaluate_payload(const DemandPayload& payload, const WorkerCounters& counters);

// Cooperative stop for signal handlers: async-signal-safe, checked by the
// node loops between demands. run_worker exits 0; run_generator stops
// dispatching and reports what it has.
void request_node_stop();
bool node_stop_requested();

// Demand loop: take pending, evaluate, return computed; runs until a
// Shutdown system demand (exit 0) or until transport failures exhaust the
// bounded retries (exit 3). Evaluation failures never end the loop.
int run_worker(const NodeConfig& config);

// Dispatches the configured Pi workload from generator_threads threads, then
// collects every result and verifies it against the expected digit string.
// Throws Error for setup failures (config, connect); workload shortfalls are
// reported in the counters instead.
WorkloadReport run_generator(const NodeConfig& config);

}  // namespace dmf

#endif  // DMF_NODES_HPP
