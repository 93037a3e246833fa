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

#include <atomic>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "dmf/backends.hpp"
#include "dmf/broker.hpp"
#include "dmf/error.hpp"
#include "dmf/space.hpp"
#include "dmf/transport.hpp"
#include "support.hpp"

using namespace dmf;

namespace {

[[maybe_unused]] const bool kBackendsReady = [] {
  register_default_backends();
  return true;
}();

// One in-process server per backend so every test below runs against both
// implementations of the same contract.
class BackendFixture {
 public:
  explicit BackendFixture(const std::string& backend) {
    if (backend == "space") {
      SpaceServerConfig server_config;
      space_.emplace(server_config);
      space_->start();
      config_.port = space_->port();
    } else {
      BrokerConfig server_config;
      queue_.emplace(server_config);
      queue_->start();
      config_.port = queue_->port();
    }
    config_.backend = backend;
    config_.host = "127.0.0.1";
  }

  ~BackendFixture() {
    if (space_) space_->stop();
    if (queue_) queue_->stop();
  }

  const TransportConfig& config() const { return config_; }

  std::unique_ptr<DemandDispatcher> dispatcher() {
    return create_dispatcher("passthrough",
                             create_agent(config_.backend, config_));
  }

 private:
  TransportConfig config_;
  std::optional<SpaceServer> space_;
  std::optional<BrokerServer> queue_;
};

Demand make_pending(int arg) {
  return new_pending(DemandKind::Procedural, ProceduralPayload{"pi_digits", {arg}},
                     "transport-test");
}

const std::vector<std::string> kBackends{"space", "queue"};

}  // namespace

TEST_CASE("registry knows the built-in backends and rejects strangers") {
  CHECK(backend_registered("space"));
  CHECK(backend_registered("queue"));
  CHECK_FALSE(backend_registered("carrier-pigeon"));

  TransportConfig config;
  config.backend = "carrier-pigeon";
  try {
    (void)create_agent("carrier-pigeon", config);
    FAIL("expected UnknownBackend");
  } catch (const Error& error) {
    CHECK(error.code() == ErrorCode::UnknownBackend);
  }

  // Registration is first-wins; a second claim on a name is an error.
  std::mt19937_64 rng(std::random_device{}());
  const std::string name = "test-" + dmf_tests::random_name(rng);
  register_backend(name, [](const TransportConfig&) {
    return std::unique_ptr<TransportAgent>();
  });
  CHECK(backend_registered(name));
  CHECK_THROWS_AS(register_backend(name,
                                   [](const TransportConfig&) {
                                     return std::unique_ptr<TransportAgent>();
                                   }),
                  Error);
}

TEST_CASE("endpoint strings parse into host and port") {
  TransportConfig config;
  config.set_endpoint("10.0.0.5:9100");
  CHECK(config.host == "10.0.0.5");
  CHECK(config.port == 9100);
  for (const std::string bad : {"", "nohost", ":80", "host:", "host:0",
                                "host:65536", "host:abc", "host:80:81"}) {
    CAPTURE(bad);
    TransportConfig scratch;
    CHECK_THROWS_AS(scratch.set_endpoint(bad), Error);
  }
}

TEST_CASE("connecting to a dead endpoint is a retriable connect error") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    TransportConfig config;
    config.backend = backend;
    config.host = "127.0.0.1";
    config.port = 1;  // reserved, nothing listens here
    try {
      (void)create_agent(backend, config);
      FAIL("expected Connect");
    } catch (const Error& error) {
      CHECK(error.code() == ErrorCode::Connect);
      CHECK(error.retriable());
    }
  }
}

TEST_CASE("a demand migrates out and its result migrates back unchanged") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto generator = fixture.dispatcher();
    auto worker = fixture.dispatcher();

    const Demand sent = make_pending(7);
    const DemandSignature signature = generator->dispatch(sent);
    CHECK(signature.id_hex() == sent.signature.id_hex());

    std::optional<Demand> taken = worker->next_pending(2'000);
    REQUIRE(taken.has_value());
    CHECK(serialize(*taken) == serialize(sent));

    const Demand computed =
        into_computed(*taken, TextValue{"3.1415926"}, "w-1", 4);
    worker->return_result(computed);

    std::optional<Demand> obtained = generator->obtain_result(signature, 2'000);
    REQUIRE(obtained.has_value());
    CHECK(serialize(*obtained) == serialize(computed));

    // The store is drained; nothing further comes back.
    CHECK_FALSE(worker->next_pending(0).has_value());
    generator->disconnect();
    worker->disconnect();
  }
}

TEST_CASE("dispatch and return enforce the demand lifecycle states") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto dispatcher = fixture.dispatcher();

    const Demand pending = make_pending(3);
    const Demand computed = into_computed(pending, TextValue{"3.141"}, "w-1", 1);

    try {
      (void)dispatcher->dispatch(computed);
      FAIL("expected State");
    } catch (const Error& error) {
      CHECK(error.code() == ErrorCode::State);
    }
    try {
      dispatcher->return_result(pending);
      FAIL("expected State");
    } catch (const Error& error) {
      CHECK(error.code() == ErrorCode::State);
    }
  }
}

TEST_CASE("a second result for the same signature is rejected") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto dispatcher = fixture.dispatcher();

    const Demand pending = make_pending(4);
    dispatcher->dispatch(pending);
    std::optional<Demand> taken = dispatcher->next_pending(2'000);
    REQUIRE(taken.has_value());
    const Demand computed = into_computed(*taken, TextValue{"3.1415"}, "w-1", 2);
    dispatcher->return_result(computed);
    try {
      dispatcher->return_result(computed);
      FAIL("expected Duplicate");
    } catch (const Error& error) {
      CHECK(error.code() == ErrorCode::Duplicate);
    }
    // The original result is still retrievable.
    CHECK(dispatcher->obtain_result(pending.signature, 2'000).has_value());
  }
}

TEST_CASE("operations after disconnect fail with NotConnected") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto dispatcher = fixture.dispatcher();
    dispatcher->disconnect();
    dispatcher->disconnect();  // idempotent
    try {
      (void)dispatcher->dispatch(make_pending(1));
      FAIL("expected NotConnected");
    } catch (const Error& error) {
      CHECK(error.code() == ErrorCode::NotConnected);
    }
  }
}

TEST_CASE("obtain_result is selective: it never yields a foreign signature") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto dispatcher = fixture.dispatcher();

    const Demand first = make_pending(1);
    const Demand second = make_pending(2);
    dispatcher->dispatch(first);
    dispatcher->dispatch(second);
    // Compute both, in order.
    for (int i = 0; i < 2; ++i) {
      std::optional<Demand> taken = dispatcher->next_pending(2'000);
      REQUIRE(taken.has_value());
      dispatcher->return_result(
          into_computed(*taken, TextValue{"3.1"}, "w-1", 1));
    }
    // Asking for the second does not consume or surface the first.
    std::optional<Demand> got = dispatcher->obtain_result(second.signature, 2'000);
    REQUIRE(got.has_value());
    CHECK(got->signature.id_hex() == second.signature.id_hex());
    got = dispatcher->obtain_result(first.signature, 2'000);
    REQUIRE(got.has_value());
    CHECK(got->signature.id_hex() == first.signature.id_hex());
  }
}

TEST_CASE("a lone pending demand goes to exactly one of two racing takers") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto writer = fixture.dispatcher();
    auto taker_a = fixture.dispatcher();
    auto taker_b = fixture.dispatcher();

    for (int round = 0; round < 150; ++round) {
      const Demand demand = make_pending(round + 1);
      writer->dispatch(demand);

      std::optional<Demand> got_a;
      std::optional<Demand> got_b;
      std::thread ta([&] { got_a = taker_a->next_pending(0); });
      std::thread tb([&] { got_b = taker_b->next_pending(0); });
      ta.join();
      tb.join();

      // The entry was in place before either taker started, so exactly one
      // of the two zero-timeout takes wins and the loser returns promptly.
      const int wins = (got_a.has_value() ? 1 : 0) + (got_b.has_value() ? 1 : 0);
      CHECK(wins == 1);
      REQUIRE((got_a.has_value() || got_b.has_value()));
      const Demand& won = got_a ? *got_a : *got_b;
      CHECK(won.signature.id_hex() == demand.signature.id_hex());
    }
  }
}

TEST_CASE("500 demands across 8 workers partition exactly") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto generator = fixture.dispatcher();

    std::set<std::string> dispatched;
    for (int i = 0; i < 500; ++i) {
      const Demand demand = make_pending(i % 100 + 1);
      dispatched.insert(demand.signature.id_hex());
      generator->dispatch(demand);
    }

    std::mutex taken_mutex;
    std::vector<std::string> taken;
    std::vector<std::thread> workers;
    for (int w = 0; w < 8; ++w) {
      workers.emplace_back([&fixture, &taken_mutex, &taken] {
        auto agent = fixture.dispatcher();
        while (true) {
          std::optional<Demand> demand = agent->next_pending(200);
          if (!demand) break;  // drained
          std::lock_guard lock(taken_mutex);
          taken.push_back(demand->signature.id_hex());
        }
        agent->disconnect();
      });
    }
    for (auto& worker : workers) worker.join();

    // No demand lost, none delivered twice.
    CHECK(taken.size() == 500);
    const std::set<std::string> unique(taken.begin(), taken.end());
    CHECK(unique == dispatched);
  }
}

TEST_CASE("two generators interleave without stealing each other's results") {
  for (const auto& backend : kBackends) {
    CAPTURE(backend);
    BackendFixture fixture(backend);
    auto gen_a = fixture.dispatcher();
    auto gen_b = fixture.dispatcher();

    std::vector<DemandSignature> sigs_a;
    std::vector<DemandSignature> sigs_b;
    for (int i = 0; i < 100; ++i) {
      const Demand da = make_pending(i + 1);
      const Demand db = make_pending(i + 1);
      sigs_a.push_back(gen_a->dispatch(da));
      sigs_b.push_back(gen_b->dispatch(db));
    }

    std::atomic<int> computed{0};
    std::thread worker_thread([&fixture, &computed] {
      auto worker = fixture.dispatcher();
      while (computed.load() < 200) {
        std::optional<Demand> demand = worker->next_pending(500);
        if (!demand) continue;
        worker->return_result(
            into_computed(*demand, IntegerValue::of(computed.load()), "w-1", 1));
        computed.fetch_add(1);
      }
      worker->disconnect();
    });

    // Each generator collects exactly its own signatures, interleaved.
    for (int i = 0; i < 100; ++i) {
      std::optional<Demand> ra = gen_a->obtain_result(sigs_a[static_cast<std::size_t>(i)], 10'000);
      REQUIRE(ra.has_value());
      CHECK(ra->signature.id_hex() == sigs_a[static_cast<std::size_t>(i)].id_hex());
      std::optional<Demand> rb = gen_b->obtain_result(sigs_b[static_cast<std::size_t>(i)], 10'000);
      REQUIRE(rb.has_value());
      CHECK(rb->signature.id_hex() == sigs_b[static_cast<std::size_t>(i)].id_hex());
    }
    worker_thread.join();
    gen_a->disconnect();
    gen_b->disconnect();
  }
}
