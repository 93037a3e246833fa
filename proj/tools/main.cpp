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

#include <csignal>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "dmf/backends.hpp"
#include "dmf/bench.hpp"
#include "dmf/broker.hpp"
#include "dmf/error.hpp"
#include "dmf/log.hpp"
#include "dmf/nodes.hpp"
#include "dmf/space.hpp"

namespace {

// Exit codes shared by every subcommand.
constexpr int kOk = 0;
constexpr int kIncomplete = 1;
constexpr int kConfigError = 2;
constexpr int kTransportError = 3;

std::atomic<bool> g_signal_stop{false};

void on_stop_signal(int) {
  g_signal_stop.store(true, std::memory_order_relaxed);
  dmf::request_node_stop();
}

void install_signal_handlers() {
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
}

int exit_code_for(const dmf::Error& error) {
  switch (error.code()) {
    case dmf::ErrorCode::Config:
    case dmf::ErrorCode::Registry:
    case dmf::ErrorCode::UnknownBackend:
      return kConfigError;
    case dmf::ErrorCode::Connect:
    case dmf::ErrorCode::NotConnected:
    case dmf::ErrorCode::Io:
    case dmf::ErrorCode::Protocol:
    case dmf::ErrorCode::Closing:
      return kTransportError;
    default:
      return kIncomplete;
  }
}

dmf::TransportConfig load_transport(const std::string& path, int port_override) {
  dmf::TransportConfig config = dmf::load_transport_config(path);
  if (port_override >= 0) config.port = static_cast<std::uint16_t>(port_override);
  return config;
}

dmf::NodeConfig load_node(const std::string& path, dmf::NodeRole expected,
                          int port_override) {
  dmf::NodeConfig config = dmf::load_node_config(path);
  if (config.role != expected) {
    throw dmf::Error(dmf::ErrorCode::Config,
                     path + ": node.role does not match this subcommand");
  }
  if (port_override >= 0) config.transport.port = static_cast<std::uint16_t>(port_override);
  return config;
}

void wait_for_stop_signal() {
  while (!g_signal_stop.load(std::memory_order_relaxed)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

int serve_space(const std::string& config_path, int port_override) {
  const auto transport = load_transport(config_path, port_override);
  dmf::SpaceServer server(dmf::space_config_from(transport));
  const std::size_t recovered = server.start();
  if (recovered > 0) {
    dmf::log_info("space: recovered " + std::to_string(recovered) + " entries");
  }
  std::cout << "listening on " << transport.host << ":" << server.port() << std::endl;
  install_signal_handlers();
  wait_for_stop_signal();
  server.stop();
  return kOk;
}

int serve_broker(const std::string& config_path, int port_override) {
  const auto transport = load_transport(config_path, port_override);
  dmf::BrokerServer server(dmf::broker_config_from(transport));
  const dmf::RecoveryReport recovered = server.start();
  if (recovered.restored > 0 || recovered.skipped_corrupt > 0) {
    dmf::log_info("broker: restored " + std::to_string(recovered.restored) +
                  " messages, skipped " + std::to_string(recovered.skipped_corrupt) +
                  " corrupt records");
  }
  std::cout << "listening on " << transport.host << ":" << server.port() << std::endl;
  install_signal_handlers();
  wait_for_stop_signal();
  server.stop();
  return kOk;
}

int run_generator_command(const std::string& config_path, int port_override) {
  install_signal_handlers();
  const auto config =
      load_node(config_path, dmf::NodeRole::Generator, port_override);
  const dmf::WorkloadReport report = dmf::run_generator(config);
  std::cout << dmf::report_csv_line(config, report) << std::endl;
  return report.complete() && report.demands_sent == config.demands_total
             ? kOk
             : kIncomplete;
}

int run_demo(const std::string& backend) {
  dmf::register_default_backends();
  if (!dmf::backend_registered(backend)) {
    std::cerr << "unknown backend '" << backend << "'; expected space or queue\n";
    return kConfigError;
  }

  std::unique_ptr<dmf::SpaceServer> space;
  std::unique_ptr<dmf::BrokerServer> broker;
  std::uint16_t port = 0;
  if (backend == "space") {
    space = std::make_unique<dmf::SpaceServer>(dmf::SpaceServerConfig{});
    space->start();
    port = space->port();
  } else {
    broker = std::make_unique<dmf::BrokerServer>(dmf::BrokerConfig{});
    broker->start();
    port = broker->port();
  }

  dmf::TransportConfig transport;
  transport.backend = backend;
  transport.host = "127.0.0.1";
  transport.port = port;

  constexpr int kWorkers = 2;
  std::vector<std::thread> workers;
  std::vector<int> worker_status(kWorkers, -1);
  for (int i = 0; i < kWorkers; ++i) {
    dmf::NodeConfig worker;
    worker.node_id = "demo-worker-" + std::to_string(i + 1);
    worker.role = dmf::NodeRole::Worker;
    worker.transport = transport;
    workers.emplace_back(
        [worker, i, &worker_status] { worker_status[static_cast<std::size_t>(i)] = dmf::run_worker(worker); });
  }

  dmf::NodeConfig generator;
  generator.node_id = "demo-generator";
  generator.role = dmf::NodeRole::Generator;
  generator.transport = transport;
  generator.generator_threads = 2;
  generator.demands_total = 50;
  generator.digit_count = 100;
  generator.workers_hint = kWorkers;
  const dmf::WorkloadReport report = dmf::run_generator(generator);

  auto control = dmf::connect_dispatcher(transport);
  for (int i = 0; i < kWorkers; ++i) {
    control->dispatch(dmf::new_pending(dmf::DemandKind::System,
                                       dmf::SystemPayload{dmf::SystemCommand::Shutdown},
                                       "demo-control"));
  }
  control->disconnect();
  for (auto& thread : workers) thread.join();
  if (space) space->stop();
  if (broker) broker->stop();

  std::cout << dmf::report_csv_header() << '\n'
            << dmf::report_csv_line(generator, report) << '\n'
            << "demo " << backend << ": sent " << report.demands_sent << " received "
            << report.results_received << " faults " << report.faults << std::endl;

  const bool workers_clean =
      worker_status[0] == 0 && worker_status[1] == 0;
  return report.complete() && workers_clean ? kOk : kIncomplete;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demand migration framework"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path = "bench.csv";
  std::string backend;
  int port_override = -1;

  auto* start_space = app.add_subcommand("start-space", "run the tuple space server");
  start_space->add_option("--config", config_path, "transport config file")->required();
  start_space->add_option("--port", port_override, "override the endpoint port");

  auto* start_broker = app.add_subcommand("start-broker", "run the queue broker server");
  start_broker->add_option("--config", config_path, "transport config file")->required();
  start_broker->add_option("--port", port_override, "override the endpoint port");

  auto* start_worker = app.add_subcommand("start-worker", "run a demand worker node");
  start_worker->add_option("--config", config_path, "node config file")->required();
  start_worker->add_option("--port", port_override, "override the endpoint port");

  auto* start_generator =
      app.add_subcommand("start-generator", "run a demand generator node");
  start_generator->add_option("--config", config_path, "node config file")->required();
  start_generator->add_option("--port", port_override, "override the endpoint port");

  auto* bench = app.add_subcommand("bench", "run the throughput experiment");
  bench->add_option("--config", config_path, "experiment spec file")->required();
  bench->add_option("--out", out_path, "results CSV path");

  auto* demo = app.add_subcommand("demo", "self-contained smoke run on one backend");
  demo->add_option("backend,--backend", backend, "space or queue")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return kConfigError;
  }

  try {
    if (start_space->parsed()) return serve_space(config_path, port_override);
    if (start_broker->parsed()) return serve_broker(config_path, port_override);
    if (start_worker->parsed()) {
      install_signal_handlers();
      return dmf::run_worker(
          load_node(config_path, dmf::NodeRole::Worker, port_override));
    }
    if (start_generator->parsed()) {
      return run_generator_command(config_path, port_override);
    }
    if (bench->parsed()) {
      return dmf::run_bench(config_path, out_path, "/proc/self/exe");
    }
    if (demo->parsed()) return run_demo(backend);
  } catch (const dmf::Error& error) {
    std::cerr << error.what() << std::endl;
    return exit_code_for(error);
  } catch (const std::exception& error) {
    std::cerr << error.what() << std::endl;
    return kIncomplete;
  }
  return kConfigError;
}
