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

#include <filesystem>

#include "dmf/bench.hpp"
#include "dmf/error.hpp"
#include "support.hpp"

using namespace dmf;

namespace {

ExperimentRow row(const std::string& backend, int workers, int rep,
                  double throughput, bool valid) {
  ExperimentRow out;
  out.backend = backend;
  out.workers = workers;
  out.repetition = rep;
  out.throughput_per_s = throughput;
  out.wall_millis = 1'000;
  out.faults = valid ? 0 : 3;
  out.valid = valid;
  return out;
}

}  // namespace

TEST_CASE("median is the order statistic, not the mean") {
  CHECK(median({5.0}) == 5.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 100.0}) == 3.0);  // even count averages the middle
  CHECK(median({2.0, 2.0, 9.0}) == 2.0);
  CHECK_THROWS_AS((void)median({}), Error);
}

TEST_CASE("summarize folds repetitions per cell") {
  const std::vector<ExperimentRow> rows{
      row("space", 2, 1, 10.0, true),  row("space", 2, 2, 12.0, true),
      row("space", 2, 3, 11.0, true),  row("queue", 2, 1, 8.0, true),
      row("queue", 2, 2, 6.0, true),   row("queue", 2, 3, 7.5, false),
  };
  const std::vector<CellSummary> cells = summarize(rows);
  REQUIRE(cells.size() == 2);

  CHECK(cells[0].backend == "space");
  CHECK(cells[0].workers == 2);
  CHECK(cells[0].median_throughput == 11.0);
  CHECK(cells[0].min_throughput == 10.0);
  CHECK(cells[0].max_throughput == 12.0);
  CHECK(cells[0].valid_rows == 3);
  CHECK(cells[0].invalid_rows == 0);

  // Invalid repetitions are excluded from the statistics but stay counted.
  CHECK(cells[1].backend == "queue");
  CHECK(cells[1].median_throughput == 7.0);
  CHECK(cells[1].valid_rows == 2);
  CHECK(cells[1].invalid_rows == 1);

  CHECK_THROWS_AS((void)summarize({}), Error);
}

TEST_CASE("experiment CSV carries the exact column contract") {
  const std::vector<ExperimentRow> rows{row("space", 4, 1, 123.456, true),
                                        row("queue", 1, 2, 7.0, false)};
  const std::string csv = rows_csv(rows);
  const std::string expected_header =
      "backend,workers,rep,throughput_per_s,wall_ms,faults,valid\n";
  CHECK(csv.rfind(expected_header, 0) == 0);
  CHECK(csv.find("space,4,1,123.46,1000,0,true\n") != std::string::npos);
  CHECK(csv.find("queue,1,2,7.00,1000,3,false\n") != std::string::npos);

  const std::string summary = summary_csv(summarize(rows));
  CHECK(summary.rfind("backend,workers,median_throughput_per_s,"
                      "min_throughput_per_s,max_throughput_per_s,valid_rows,"
                      "invalid_rows\n",
                      0) == 0);
}

TEST_CASE("experiment specs load from properties files with defaults") {
  const auto dir = dmf_tests::fresh_test_dir("bench-spec");
  const auto path = (dir / "bench.conf").string();

  SUBCASE("defaults when the file is empty") {
    dmf_tests::write_text_file(path, "");
    const ExperimentSpec spec = load_experiment_spec(path);
    CHECK(spec.backends == std::vector<std::string>{"space", "queue"});
    CHECK(spec.worker_counts == std::vector<int>{1, 2, 4});
    CHECK(spec.demands_total == 200);
    CHECK(spec.digit_count == 2'000);
    CHECK(spec.repetitions == 3);
    CHECK(spec.warmup_demands == 10);
    CHECK(spec.generator_threads == 4);
  }
  SUBCASE("every key parses") {
    dmf_tests::write_text_file(path,
                               "bench.backends=queue\n"
                               "bench.worker_counts=2,8\n"
                               "bench.demands=50\n"
                               "bench.pi_digits=300\n"
                               "bench.repetitions=5\n"
                               "bench.warmup_demands=4\n"
                               "bench.generator_threads=2\n");
    const ExperimentSpec spec = load_experiment_spec(path);
    CHECK(spec.backends == std::vector<std::string>{"queue"});
    CHECK(spec.worker_counts == std::vector<int>{2, 8});
    CHECK(spec.demands_total == 50);
    CHECK(spec.digit_count == 300);
    CHECK(spec.repetitions == 5);
    CHECK(spec.warmup_demands == 4);
    CHECK(spec.generator_threads == 2);
  }
  SUBCASE("rejections") {
    dmf_tests::write_text_file(path, "bench.cadence=7\n");
    CHECK_THROWS_AS((void)load_experiment_spec(path), Error);

    dmf_tests::write_text_file(path, "bench.backends=space,smoke-signal\n");
    try {
      (void)load_experiment_spec(path);
      FAIL("expected Config");
    } catch (const Error& error) {
      CHECK(std::string(error.what()).find("smoke-signal") != std::string::npos);
    }

    dmf_tests::write_text_file(path, "bench.worker_counts=2,zero\n");
    CHECK_THROWS_AS((void)load_experiment_spec(path), Error);

    dmf_tests::write_text_file(path, "bench.worker_counts=0\n");
    CHECK_THROWS_AS((void)load_experiment_spec(path), Error);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("the environment block names the hardware it ran on") {
  const std::string block = environment_block();
  CHECK(block.find("logical_processors:") != std::string::npos);
  CHECK(block.find("total_memory_bytes:") != std::string::npos);
  CHECK(block.find("os:") != std::string::npos);
}
