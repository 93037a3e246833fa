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
#include <filesystem>
#include <set>
#include <thread>

#include "dmf/error.hpp"
#include "dmf/space.hpp"
#include "support.hpp"

using namespace dmf;

namespace {

std::string pending_bytes(const std::string& origin) {
  return serialize(new_pending(DemandKind::Procedural,
                               ProceduralPayload{"pi_digits", {7}}, origin));
}

std::string computed_bytes(const Demand& pending) {
  return serialize(into_computed(pending, TextValue{"x"}, "w", 1));
}

const EntryTemplate kAnyPending{DemandState::Pending, std::nullopt};

}  // namespace

TEST_CASE("write then take round trips the exact bytes") {
  SpaceStore store(10);
  const std::string bytes = pending_bytes("a");
  store.write(bytes, kLeaseInfinite);
  const auto entry = store.take(kAnyPending, 0);
  REQUIRE(entry.has_value());
  CHECK(entry->demand_bytes == bytes);
  CHECK_FALSE(store.take(kAnyPending, 0).has_value());
}

TEST_CASE("read does not remove and take matches by signature") {
  SpaceStore store(10);
  const Demand first = new_pending(DemandKind::Procedural,
                                   ProceduralPayload{"pi_digits", {1}}, "a");
  const Demand second = new_pending(DemandKind::Procedural,
                                    ProceduralPayload{"pi_digits", {2}}, "a");
  store.write(serialize(first), kLeaseInfinite);
  store.write(serialize(second), kLeaseInfinite);

  const auto peeked = store.read(kAnyPending, 0);
  REQUIRE(peeked.has_value());
  CHECK(store.stats().resident == 2);

  EntryTemplate by_sig{DemandState::Pending, second.signature.id_hex()};
  const auto taken = store.take(by_sig, 0);
  REQUIRE(taken.has_value());
  CHECK(deserialize(taken->demand_bytes).signature == second.signature);
  CHECK(store.stats().resident == 1);
}

TEST_CASE("oldest matching entry wins") {
  SpaceStore store(10);
  std::vector<std::string> ordered;
  for (int i = 0; i < 5; ++i) {
    ordered.push_back(pending_bytes("origin-" + std::to_string(i)));
    store.write(ordered.back(), kLeaseInfinite);
  }
  for (int i = 0; i < 5; ++i) {
    const auto entry = store.take(kAnyPending, 0);
    REQUIRE(entry.has_value());
    CHECK(entry->demand_bytes == ordered[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("capacity bound is deterministic and the store keeps serving") {
  SpaceStore store(100);
  std::vector<std::string> written;
  for (int i = 0; i < 100; ++i) {
    written.push_back(pending_bytes("n" + std::to_string(i)));
    store.write(written.back(), kLeaseInfinite);
  }
  try {
    store.write(pending_bytes("overflow"), kLeaseInfinite);
    FAIL("expected CapacityExhausted");
  } catch (const Error& error) {
    CHECK(error.code() == ErrorCode::CapacityExhausted);
  }
  // Still serves reads and takes afterward.
  CHECK(store.read(kAnyPending, 0).has_value());
  CHECK(store.take(kAnyPending, 0)->demand_bytes == written.front());
  // A slot freed by take admits a new write.
  CHECK_NOTHROW(store.write(pending_bytes("after"), kLeaseInfinite));
  CHECK(store.stats().resident == 100);
}

TEST_CASE("duplicate signature and state is rejected while distinct state is not") {
  SpaceStore store(10);
  const Demand demand = new_pending(DemandKind::Procedural,
                                    ProceduralPayload{"pi_digits", {3}}, "a");
  store.write(serialize(demand), kLeaseInfinite);
  try {
    store.write(serialize(demand), kLeaseInfinite);
    FAIL("expected Duplicate");
  } catch (const Error& error) {
    CHECK(error.code() == ErrorCode::Duplicate);
  }
  // The computed form of the same signature coexists.
  CHECK_NOTHROW(store.write(computed_bytes(demand), kLeaseInfinite));
  CHECK(store.stats().pending == 1);
  CHECK(store.stats().computed == 1);
}

TEST_CASE("expired leases free entries, keys and capacity") {
  SpaceStore store(2);
  const Demand demand = new_pending(DemandKind::Procedural,
                                    ProceduralPayload{"pi_digits", {4}}, "a");
  store.write(serialize(demand), 50);
  store.write(pending_bytes("other"), kLeaseInfinite);
  CHECK(store.stats().resident == 2);
  std::this_thread::sleep_for(std::chrono::milliseconds(120));
  CHECK(store.stats().resident == 1);
  // The expired entry no longer blocks its (signature, state) key or a slot.
  CHECK_NOTHROW(store.write(serialize(demand), kLeaseInfinite));
  EntryTemplate by_sig{DemandState::Pending, demand.signature.id_hex()};
  CHECK(store.take(by_sig, 0).has_value());
}

TEST_CASE("blocked take wakes on a matching write") {
  SpaceStore store(10);
  const std::string bytes = pending_bytes("late");
  std::optional<SpaceEntry> taken;
  std::thread taker([&] { taken = store.take(kAnyPending, 3'000); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  store.write(bytes, kLeaseInfinite);
  taker.join();
  REQUIRE(taken.has_value());
  CHECK(taken->demand_bytes == bytes);
}

TEST_CASE("take with zero timeout returns promptly when empty") {
  SpaceStore store(10);
  CHECK_FALSE(store.take(kAnyPending, 0).has_value());
  CHECK_FALSE(store.read(kAnyPending, 50).has_value());
}

TEST_CASE("close wakes blocked takers with Closing") {
  SpaceStore store(10);
  std::atomic<bool> closing_seen{false};
  std::thread taker([&] {
    try {
      store.take(kAnyPending, 10'000);
    } catch (const Error& error) {
      closing_seen = error.code() == ErrorCode::Closing;
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  store.close();
  taker.join();
  CHECK(closing_seen.load());
}

TEST_CASE("concurrent takers split the entries with no duplication or loss") {
  // Two takers race one writer repeatedly; every entry lands exactly once.
  for (int round = 0; round < 50; ++round) {
    SpaceStore store(1'000);
    constexpr int kEntries = 20;
    std::set<std::string> written;
    std::vector<std::string> got_a, got_b;
    auto taker = [&store](std::vector<std::string>& sink) {
      for (;;) {
        const auto entry = store.take(kAnyPending, 200);
        if (!entry) return;
        sink.push_back(entry->demand_bytes);
      }
    };
    std::thread a(taker, std::ref(got_a));
    std::thread b(taker, std::ref(got_b));
    for (int i = 0; i < kEntries; ++i) {
      const std::string bytes = pending_bytes("r" + std::to_string(i));
      written.insert(bytes);
      store.write(bytes, kLeaseInfinite);
    }
    a.join();
    b.join();
    std::set<std::string> taken;
    for (const auto& bytes : got_a) CHECK(taken.insert(bytes).second);
    for (const auto& bytes : got_b) CHECK(taken.insert(bytes).second);
    REQUIRE(taken == written);
  }
}

TEST_CASE("snapshot and recovery round trip entries and leases") {
  const auto dir = dmf_tests::fresh_test_dir("space-snap");
  const auto path = (dir / "store.snapshot").string();

  SpaceStore store(100);
  std::set<std::string> survivors;
  for (int i = 0; i < 20; ++i) {
    const std::string bytes = pending_bytes("s" + std::to_string(i));
    survivors.insert(bytes);
    store.write(bytes, kLeaseInfinite);
  }
  // A long-leased entry survives with its remaining lease intact.
  const std::string leased = pending_bytes("leased");
  survivors.insert(leased);
  store.write(leased, 60'000);
  // An entry whose lease lapses before the snapshot is not written at all.
  const std::string gone = pending_bytes("gone");
  store.write(gone, 50);
  std::this_thread::sleep_for(std::chrono::milliseconds(150));
  // A short lease is stored as its remaining time and restarts on recovery,
  // so the entry is restored but lapses shortly afterward.
  const std::string brief = pending_bytes("brief");
  store.write(brief, 300);
  store.snapshot_to(path);

  SpaceStore recovered(100);
  const std::size_t count = recovered.recover_from(path);
  CHECK(count == survivors.size() + 1);
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  std::set<std::string> seen;
  while (auto entry = recovered.take(kAnyPending, 0)) {
    seen.insert(entry->demand_bytes);
  }
  CHECK(seen == survivors);
  CHECK(seen.count(gone) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty snapshot round trips") {
  const auto dir = dmf_tests::fresh_test_dir("space-empty");
  const auto path = (dir / "store.snapshot").string();
  SpaceStore store(10);
  store.snapshot_to(path);
  SpaceStore recovered(10);
  CHECK(recovered.recover_from(path) == 0);
  CHECK(recovered.stats().resident == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("recovery rejects malformed snapshots") {
  const auto dir = dmf_tests::fresh_test_dir("space-bad");
  const auto path = dir / "store.snapshot";
  dmf_tests::write_text_file(path, "not a snapshot\n");
  SpaceStore store(10);
  CHECK_THROWS_AS(store.recover_from(path.string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("server serves agents over TCP and restarts from its snapshot") {
  const auto dir = dmf_tests::fresh_test_dir("space-server");
  SpaceServerConfig config;
  config.snapshot_path = (dir / "live.snapshot").string();

  auto server = std::make_unique<SpaceServer>(config);
  CHECK(server->start() == 0);
  const std::uint16_t port = server->port();

  TransportConfig transport;
  transport.backend = "space";
  transport.port = port;
  SpaceAgent agent(transport);
  agent.connect();

  const Demand demand = new_pending(DemandKind::Procedural,
                                    ProceduralPayload{"pi_digits", {9}}, "tcp");
  agent.write_demand(demand);
  const auto taken = agent.take_pending(1'000);
  REQUIRE(taken.has_value());
  CHECK(*taken == demand);

  // Result round trip through the same server.
  const Demand computed = into_computed(*taken, TextValue{"v"}, "w", 2);
  agent.write_result(computed);
  const auto obtained = agent.take_result(demand.signature, 1'000);
  REQUIRE(obtained.has_value());
  CHECK(*obtained == computed);

  // Leave one entry resident so the final snapshot has content.
  const Demand survivor = new_pending(DemandKind::Procedural,
                                      ProceduralPayload{"pi_digits", {10}}, "tcp");
  agent.write_demand(survivor);
  agent.disconnect();
  server->stop();

  config.port = 0;
  auto reborn = std::make_unique<SpaceServer>(config);
  CHECK(reborn->start() == 1);
  transport.port = reborn->port();
  SpaceAgent agent2(transport);
  agent2.connect();
  const auto recovered = agent2.take_pending(1'000);
  REQUIRE(recovered.has_value());
  CHECK(*recovered == survivor);
  agent2.disconnect();
  reborn->stop();
  std::filesystem::remove_all(dir);
}
