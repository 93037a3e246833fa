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

#include "dmf/bench.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "dmf/backends.hpp"
#include "dmf/broker.hpp"
#include "dmf/error.hpp"
#include "dmf/log.hpp"
#include "dmf/nodes.hpp"
#include "dmf/properties.hpp"
#include "dmf/space.hpp"
#include "dmf/subprocess.hpp"

namespace dmf {

namespace {

const std::set<std::string> kBenchKeys = {
    "bench.backends",       "bench.worker_counts",    "bench.demands",
    "bench.pi_digits",      "bench.repetitions",      "bench.warmup_demands",
    "bench.generator_threads",
};

std::vector<std::string> split_list(const std::string& raw, const std::string& key) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream stream(raw);
  while (std::getline(stream, item, ',')) {
    const auto begin = item.find_first_not_of(" \t");
    const auto end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) {
      throw Error(ErrorCode::Config, "key '" + key + "': empty list element");
    }
    items.push_back(item.substr(begin, end - begin + 1));
  }
  if (items.empty()) {
    throw Error(ErrorCode::Config, "key '" + key + "': empty list");
  }
  return items;
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.backends.empty()) {
    throw Error(ErrorCode::Invalid, "experiment needs at least one backend");
  }
  if (spec.worker_counts.empty()) {
    throw Error(ErrorCode::Invalid, "experiment needs at least one worker count");
  }
  for (const int workers : spec.worker_counts) {
    if (workers < 1) {
      throw Error(ErrorCode::Invalid, "worker counts must be >= 1");
    }
  }
  if (spec.demands_total < 1) {
    throw Error(ErrorCode::Invalid, "demands_total must be >= 1");
  }
  if (spec.digit_count < 1 || spec.digit_count > 10'000) {
    throw Error(ErrorCode::Invalid, "pi digit count must be in [1, 10000]");
  }
  if (spec.repetitions < 1) {
    throw Error(ErrorCode::Invalid, "repetitions must be >= 1");
  }
  if (spec.warmup_demands < 0) {
    throw Error(ErrorCode::Invalid, "warmup_demands must be >= 0");
  }
  if (spec.generator_threads < 1) {
    throw Error(ErrorCode::Invalid, "generator_threads must be >= 1");
  }
}

std::filesystem::path fresh_temp_dir() {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("dmf-bench-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
  out.flush();
  if (!out.good()) {
    throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
}

std::string stderr_tail(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  constexpr std::size_t kTail = 500;
  if (text.size() > kTail) text = "..." + text.substr(text.size() - kTail);
  return text;
}

// One repetition of one cell: fresh server, fresh worker processes, warmup,
// measured batch, shutdown demands, teardown. Failures before measurement
// surface as nullopt after a diagnostic; measurement shortfalls surface as
// an invalid row.
std::optional<ExperimentRow> run_cell(const ExperimentSpec& spec,
                                      const std::string& backend, int workers,
                                      int repetition, const std::string& dmf_binary) {
  const auto dir = fresh_temp_dir();
  std::unique_ptr<SpaceServer> space;
  std::unique_ptr<BrokerServer> broker;
  std::vector<Subprocess> children;
  std::optional<ExperimentRow> row;

  try {
    // Capacity and flow-control limits sized so the backend never throttles
    // the experiment; throughput, not admission control, is under test.
    const std::int64_t in_flight_bound =
        (spec.demands_total + spec.warmup_demands) * 2 + 100;
    std::uint16_t port = 0;
    if (backend == "space") {
      SpaceServerConfig config;
      config.capacity = static_cast<std::size_t>(std::max<std::int64_t>(10'000, in_flight_bound));
      space = std::make_unique<SpaceServer>(config);
      space->start();
      port = space->port();
    } else if (backend == "queue") {
      BrokerConfig config;
      config.memory_threshold = static_cast<std::size_t>(std::max<std::int64_t>(1'000, in_flight_bound));
      broker = std::make_unique<BrokerServer>(config);
      broker->start();
      port = broker->port();
    } else {
      throw Error(ErrorCode::UnknownBackend, backend);
    }

    const std::string endpoint = "127.0.0.1:" + std::to_string(port);
    write_file(dir / "transport.conf", "transport.backend=" + backend +
                                           "\ntransport.endpoint=" + endpoint + "\n");

    for (int i = 0; i < workers; ++i) {
      const std::string name = "bench-worker-" + std::to_string(i + 1);
      const auto conf = dir / (name + ".conf");
      write_file(conf, "node.id=" + name +
                           "\nnode.role=worker\nnode.transport.config=transport.conf\n");
      SpawnOptions options;
      options.argv = {dmf_binary, "start-worker", "--config", conf.string()};
      options.stdout_path = (dir / (name + ".out")).string();
      options.stderr_path = (dir / (name + ".err")).string();
      children.push_back(Subprocess::spawn(options));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (!children[i].running()) {
        log_error("bench: worker " + std::to_string(i + 1) + " exited early: " +
                  stderr_tail(dir / ("bench-worker-" + std::to_string(i + 1) + ".err")));
      }
    }

    NodeConfig generator;
    generator.node_id = "bench-generator";
    generator.role = NodeRole::Generator;
    generator.transport.backend = backend;
    generator.transport.host = "127.0.0.1";
    generator.transport.port = port;
    generator.generator_threads = spec.generator_threads;
    generator.digit_count = spec.digit_count;
    generator.workers_hint = workers;
    generator.result_deadline_ms =
        std::max<std::int64_t>(60'000, spec.demands_total * 30);

    if (spec.warmup_demands > 0) {
      NodeConfig warmup = generator;
      warmup.demands_total = spec.warmup_demands;
      (void)run_generator(warmup);
    }

    generator.demands_total = spec.demands_total;
    const WorkloadReport report = run_generator(generator);

    ExperimentRow measured;
    measured.backend = backend;
    measured.workers = workers;
    measured.repetition = repetition;
    measured.throughput_per_s = report.throughput_per_s;
    measured.wall_millis = report.wall_millis;
    measured.faults = report.faults;
    measured.valid = report.complete() && report.demands_sent == spec.demands_total;
    if (!measured.valid) {
      log_error("bench: invalid row " + backend + "/" + std::to_string(workers) +
                " rep " + std::to_string(repetition) + ": sent " +
                std::to_string(report.demands_sent) + " received " +
                std::to_string(report.results_received) + " faults " +
                std::to_string(report.faults) + " missing " +
                std::to_string(report.missing));
    }
    row = measured;

    // Teardown: one Shutdown demand per live worker, then reap.
    try {
      auto control = connect_dispatcher(generator.transport);
      for (auto& child : children) {
        if (!child.running()) continue;
        control->dispatch(new_pending(DemandKind::System,
                                      SystemPayload{SystemCommand::Shutdown},
                                      "bench-control"));
      }
      control->disconnect();
    } catch (const Error& error) {
      log_error(std::string("bench: shutdown dispatch failed: ") + error.what());
    }
    for (std::size_t i = 0; i < children.size(); ++i) {
      auto status = children[i].wait(10'000);
      if (!status) {
        log_error("bench: worker " + std::to_string(i + 1) + " ignored shutdown");
        children[i].kill_hard();
        children[i].wait(2'000);
      } else if (status->signaled || status->value != 0) {
        log_error("bench: worker " + std::to_string(i + 1) + " exited abnormally: " +
                  stderr_tail(dir / ("bench-worker-" + std::to_string(i + 1) + ".err")));
      }
    }
  } catch (const Error& error) {
    log_error("bench: skipping " + backend + "/" + std::to_string(workers) + " rep " +
              std::to_string(repetition) + ": " + error.what());
  }

  children.clear();  // reaps anything left via the destructor
  if (space) space->stop();
  if (broker) broker->stop();
  std::error_code discard;
  std::filesystem::remove_all(dir, discard);
  return row;
}

}  // namespace

ExperimentSpec load_experiment_spec(const std::string& path) {
  const Properties props = Properties::load(path);
  for (const auto& [key, value] : props.entries()) {
    (void)value;
    if (!kBenchKeys.contains(key)) {
      throw Error(ErrorCode::Config, props.origin() + ": unknown key '" + key + "'");
    }
  }

  register_default_backends();
  ExperimentSpec spec;
  if (auto raw = props.get("bench.backends")) {
    spec.backends = split_list(*raw, "bench.backends");
    for (const std::string& backend : spec.backends) {
      if (!backend_registered(backend)) {
        throw Error(ErrorCode::Config, props.origin() +
                                           ": key 'bench.backends': unknown backend '" +
                                           backend + "'");
      }
    }
  }
  if (auto raw = props.get("bench.worker_counts")) {
    spec.worker_counts.clear();
    for (const std::string& item : split_list(*raw, "bench.worker_counts")) {
      try {
        spec.worker_counts.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw Error(ErrorCode::Config, props.origin() +
                                           ": key 'bench.worker_counts': expected "
                                           "integer, got '" +
                                           item + "'");
      }
    }
  }
  spec.demands_total = props.get_int_or("bench.demands", spec.demands_total);
  spec.digit_count =
      static_cast<int>(props.get_int_or("bench.pi_digits", spec.digit_count));
  spec.repetitions =
      static_cast<int>(props.get_int_or("bench.repetitions", spec.repetitions));
  spec.warmup_demands = props.get_int_or("bench.warmup_demands", spec.warmup_demands);
  spec.generator_threads = static_cast<int>(
      props.get_int_or("bench.generator_threads", spec.generator_threads));
  validate_spec(spec);
  return spec;
}

std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec,
                                          const std::string& dmf_binary) {
  validate_spec(spec);
  register_default_backends();
  std::vector<ExperimentRow> rows;
  for (const std::string& backend : spec.backends) {
    for (const int workers : spec.worker_counts) {
      for (int rep = 1; rep <= spec.repetitions; ++rep) {
        log_info("bench: cell " + backend + "/" + std::to_string(workers) + " rep " +
                 std::to_string(rep));
        if (auto row = run_cell(spec, backend, workers, rep, dmf_binary)) {
          rows.push_back(*row);
        }
      }
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::Invalid, "median of an empty set");
  }
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

std::vector<CellSummary> summarize(const std::vector<ExperimentRow>& rows) {
  if (rows.empty()) {
    throw Error(ErrorCode::Invalid, "summarize requires at least one row");
  }
  std::vector<CellSummary> cells;
  const auto cell_of = [&cells](const std::string& backend, int workers) -> CellSummary& {
    for (CellSummary& cell : cells) {
      if (cell.backend == backend && cell.workers == workers) return cell;
    }
    cells.push_back(CellSummary{backend, workers, 0, 0, 0, 0, 0});
    return cells.back();
  };

  for (const ExperimentRow& row : rows) {
    CellSummary& cell = cell_of(row.backend, row.workers);
    if (row.valid) {
      cell.valid_rows += 1;
    } else {
      cell.invalid_rows += 1;
    }
  }
  for (CellSummary& cell : cells) {
    std::vector<double> throughputs;
    for (const ExperimentRow& row : rows) {
      if (row.valid && row.backend == cell.backend && row.workers == cell.workers) {
        throughputs.push_back(row.throughput_per_s);
      }
    }
    if (throughputs.empty()) continue;
    cell.median_throughput = median(throughputs);
    cell.min_throughput = *std::min_element(throughputs.begin(), throughputs.end());
    cell.max_throughput = *std::max_element(throughputs.begin(), throughputs.end());
  }
  return cells;
}

std::string rows_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream out;
  out << "backend,workers,rep,throughput_per_s,wall_ms,faults,valid\n";
  for (const ExperimentRow& row : rows) {
    out << row.backend << ',' << row.workers << ',' << row.repetition << ','
        << std::fixed << std::setprecision(2) << row.throughput_per_s << ','
        << row.wall_millis << ',' << row.faults << ','
        << (row.valid ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string summary_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream out;
  out << "backend,workers,median_throughput_per_s,min_throughput_per_s,"
         "max_throughput_per_s,valid_rows,invalid_rows\n";
  for (const CellSummary& cell : cells) {
    out << cell.backend << ',' << cell.workers << ',' << std::fixed
        << std::setprecision(2) << cell.median_throughput << ','
        << cell.min_throughput << ',' << cell.max_throughput << ','
        << cell.valid_rows << ',' << cell.invalid_rows << '\n';
  }
  return out.str();
}

std::string environment_block() {
  std::ostringstream out;
  out << "logical_processors: " << std::thread::hardware_concurrency() << '\n';
  const long pages = ::sysconf(_SC_PHYS_PAGES);
  const long page_size = ::sysconf(_SC_PAGE_SIZE);
  if (pages > 0 && page_size > 0) {
    out << "total_memory_bytes: "
        << static_cast<long long>(pages) * static_cast<long long>(page_size) << '\n';
  }
  utsname names{};
  if (::uname(&names) == 0) {
    out << "os: " << names.sysname << ' ' << names.release << '\n';
  }
  return out.str();
}

int run_bench(const std::string& spec_path, const std::string& out_path,
              const std::string& dmf_binary) {
  const ExperimentSpec spec = load_experiment_spec(spec_path);
  const std::vector<ExperimentRow> rows = run_experiment(spec, dmf_binary);

  write_file(out_path, rows_csv(rows));
  write_file(out_path + ".env.txt", environment_block());
  if (!rows.empty()) {
    const auto cells = summarize(rows);
    write_file(out_path + ".summary.csv", summary_csv(cells));
    std::cout << summary_csv(cells);
  }
  std::cout << environment_block();

  const std::size_t expected_rows =
      spec.backends.size() * spec.worker_counts.size() *
      static_cast<std::size_t>(spec.repetitions);
  const bool all_valid =
      rows.size() == expected_rows &&
      std::all_of(rows.begin(), rows.end(),
                  [](const ExperimentRow& row) { return row.valid; });
  return all_valid ? 0 : 1;
}

}  // namespace dmf
