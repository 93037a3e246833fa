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

#ifndef DMF_SPACE_HPP
#define DMF_SPACE_HPP

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "dmf/demand.hpp"
#include "dmf/net.hpp"
#include "dmf/transport.hpp"
#include "dmf/wire.hpp"

namespace dmf {

inline constexpr std::int64_t kLeaseInfinite = -1;

struct SpaceEntry {
  std::uint64_t entry_id = 0;
  std::string demand_bytes;
  // Denormalized from the decoded demand; checked on write.
  DemandState index_state = DemandState::Pending;
  std::string index_signature;
  // Milliseconds since epoch; kLeaseInfinite = never expires.
  std::int64_t lease_expiry_ms = kLeaseInfinite;
};

// An absent field matches anything; a present field matches by equality.
struct EntryTemplate {
  std::optional<DemandState> state;
  std::optional<std::string> signature;
};

struct SpaceStoreStats {
  std::size_t resident = 0;
  std::size_t pending = 0;
  std::size_t computed = 0;
  std::size_t capacity = 0;
};

// The tuple store: bounded, lease-aware, with blocking template take/read.
// All state sits behind one mutex; blocked takes wake on matching writes.
class SpaceStore {
 public:
  explicit SpaceStore(std::size_t capacity);

  // Decodes and indexes the demand. Throws Error(CapacityExhausted) at the
  // capacity bound, Error(Duplicate) when an unexpired entry already holds
  // the same (signature, state), Error(Decode) on malformed bytes.
  // lease_ms is relative; kLeaseInfinite = no expiry.
  std::uint64_t write(const std::string& demand_bytes, std::int64_t lease_ms);

  // Atomically removes and returns the oldest unexpired match, blocking up
  // to timeout_ms. At most one caller ever receives a given entry.
  std::optional<SpaceEntry> take(const EntryTemplate& tmpl, int timeout_ms);

  // As take, without removal.
  std::optional<SpaceEntry> read(const EntryTemplate& tmpl, int timeout_ms);

  SpaceStoreStats stats() const;

  // Write-temp-then-rename persistence of all unexpired entries. Lines carry
  // the remaining lease so recovery rebases it: header "space-snapshot v1
  // <count>", then "<remaining_ms|inf> <demand-bytes>" per entry.
  void snapshot_to(const std::string& path) const;
  // Requires an empty store. Throws Error(Io) on malformed files.
  std::size_t recover_from(const std::string& path);

  // Wakes every blocked take/read with Error(Closing).
  void close();

 private:
  bool matches_locked(const SpaceEntry& entry, const EntryTemplate& tmpl,
                      std::int64_t now) const;
  const SpaceEntry* find_locked(const EntryTemplate& tmpl, std::int64_t now) const;
  void purge_expired_locked(std::int64_t now);
  static std::string dup_key(const std::string& signature, DemandState state);

  mutable std::mutex mutex_;
  std::condition_variable arrivals_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, SpaceEntry> entries_;
  std::unordered_set<std::string> live_keys_;
  bool closing_ = false;
};

struct SpaceServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  std::size_t capacity = 10'000;
  std::int64_t lease_default_ms = kLeaseInfinite;
  std::optional<std::string> snapshot_path;
  std::int64_t snapshot_interval_ms = 5'000;
};

// TCP front end: one acceptor plus one handler thread per connection, the
// count of which is exposed via the stats op.
class SpaceServer {
 public:
  explicit SpaceServer(SpaceServerConfig config);
  ~SpaceServer();

  SpaceServer(const SpaceServer&) = delete;
  SpaceServer& operator=(const SpaceServer&) = delete;

  // Binds, recovers the snapshot when one exists, starts serving. Returns
  // the number of recovered entries. Throws Error(Io) when the port is taken.
  std::size_t start();
  std::uint16_t port() const;
  // Final snapshot, then closes the store and joins every thread.
  void stop();

  SpaceStore& store() { return *store_; }

 private:
  void accept_loop();
  void handle_connection(std::shared_ptr<TcpStream> conn);
  void snapshot_loop();
  void write_snapshot_checked();

  SpaceServerConfig config_;
  std::unique_ptr<SpaceStore> store_;
  std::optional<TcpListener> listener_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::int64_t> handler_count_{0};
  std::thread acceptor_;
  std::thread snapshotter_;
  std::mutex threads_mutex_;
  std::vector<std::thread> handlers_;
  std::vector<std::shared_ptr<TcpStream>> connections_;
  std::condition_variable snapshot_wakeup_;
  std::mutex snapshot_mutex_;
};

// Client-side agent mapping the transport contract onto the space ops.
class SpaceAgent : public TransportAgent {
 public:
  explicit SpaceAgent(const TransportConfig& config);

  void connect() override;
  void disconnect() override;
  DemandSignature write_demand(const Demand& demand) override;
  std::optional<Demand> take_pending(int timeout_ms) override;
  void write_result(const Demand& demand) override;
  std::optional<Demand> take_result(const DemandSignature& signature,
                                    int timeout_ms) override;

 private:
  std::string write_entry(const Demand& demand);
  std::optional<Demand> take_entry(const EntryTemplate& tmpl, int timeout_ms);

  std::shared_ptr<ClientPool> pool_;
  std::atomic<bool> connected_{false};
};

}  // namespace dmf

#endif  // DMF_SPACE_HPP
