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

#ifndef DMF_BENCH_HPP
#define DMF_BENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace dmf {

// One throughput experiment: the cross product of backends and worker
// counts, each cell repeated. Loaded from a properties file or built in
// code.
struct ExperimentSpec {
  std::vector<std::string> backends = {"space", "queue"};
  std::vector<int> worker_counts = {1, 2, 4};
  std::int64_t demands_total = 200;
  int digit_count = 2'000;
  int repetitions = 3;
  std::int64_t warmup_demands = 10;
  int generator_threads = 4;
};

struct ExperimentRow {
  std::string backend;
  int workers = 0;
  int repetition = 0;  // 1-based
  double throughput_per_s = 0.0;
  std::int64_t wall_millis = 0;
  std::int64_t faults = 0;
  // A row is valid only when every measured demand came back fault-free.
  // Invalid rows stay in the output, flagged.
  bool valid = false;
};

struct CellSummary {
  std::string backend;
  int workers = 0;
  double median_throughput = 0.0;
  double min_throughput = 0.0;
  double max_throughput = 0.0;
  int valid_rows = 0;
  int invalid_rows = 0;
};

// Keys: bench.backends, bench.worker_counts (comma lists), bench.demands,
// bench.pi_digits, bench.repetitions, bench.warmup_demands,
// bench.generator_threads. Every key is optional; defaults above.
ExperimentSpec load_experiment_spec(const std::string& path);

// Runs the full cross product: per repetition a fresh in-process server,
// `workers` worker child processes of `dmf_binary`, a warmup batch, then the
// measured batch. Rows come back in execution order; a cell whose server
// cannot bind is skipped with a diagnostic.
std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec,
                                          const std::string& dmf_binary);

// Per-cell order statistics over valid rows. Throws Error(Invalid) on empty
// input.
std::vector<CellSummary> summarize(const std::vector<ExperimentRow>& rows);

double median(std::vector<double> values);  // throws Error(Invalid) on empty

std::string rows_csv(const std::vector<ExperimentRow>& rows);
std::string summary_csv(const std::vector<CellSummary>& cells);
// Core count, memory, OS name: the context a throughput number is useless
// without.
std::string environment_block();

// CLI entry: load spec, run, write <out>, <out>.summary.csv, <out>.env.txt.
// Returns 0 when every row is valid, 1 otherwise.
int run_bench(const std::string& spec_path, const std::string& out_path,
              const std::string& dmf_binary);

}  // namespace dmf

#endif  // DMF_BENCH_HPP
