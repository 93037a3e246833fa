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

#include "dmf/space.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dmf/error.hpp"
#include "dmf/log.hpp"

namespace dmf {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool expired(const SpaceEntry& entry, std::int64_t now) {
  return entry.lease_expiry_ms != kLeaseInfinite && now >= entry.lease_expiry_ms;
}

}  // namespace

SpaceStore::SpaceStore(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::Config, "space capacity must be >= 1");
}

std::string SpaceStore::dup_key(const std::string& signature, DemandState state) {
  return signature + (state == DemandState::Pending ? "|p" : "|c");
}

std::uint64_t SpaceStore::write(const std::string& demand_bytes,
                                std::int64_t lease_ms) {
  // Decode outside the lock; also validates the index fields below.
  const Demand demand = deserialize(demand_bytes);
  const std::int64_t now = now_ms();

  SpaceEntry entry;
  entry.demand_bytes = demand_bytes;
  entry.index_state = demand.state;
  entry.index_signature = demand.signature.id_hex();
  entry.lease_expiry_ms =
      lease_ms == kLeaseInfinite ? kLeaseInfinite : now + lease_ms;

  std::unique_lock<std::mutex> lock(mutex_);
  if (closing_) throw Error(ErrorCode::Closing, "store is shutting down");
  purge_expired_locked(now);
  if (entries_.size() >= capacity_) {
    throw Error(ErrorCode::CapacityExhausted,
                "store holds " + std::to_string(entries_.size()) + " of " +
                    std::to_string(capacity_) + " entries");
  }
  const std::string key = dup_key(entry.index_signature, entry.index_state);
  if (live_keys_.count(key) > 0) {
    throw Error(ErrorCode::Duplicate,
                "an entry for signature " + entry.index_signature + " in state " +
                    std::string(to_string(entry.index_state)) + " already exists");
  }
  entry.entry_id = next_id_++;
  const std::uint64_t id = entry.entry_id;
  live_keys_.insert(key);
  entries_.emplace(id, std::move(entry));
  arrivals_.notify_all();
  return id;
}

bool SpaceStore::matches_locked(const SpaceEntry& entry, const EntryTemplate& tmpl,
                                std::int64_t now) const {
  if (expired(entry, now)) return false;
  if (tmpl.state && *tmpl.state != entry.index_state) return false;
  if (tmpl.signature && *tmpl.signature != entry.index_signature) return false;
  return true;
}

const SpaceEntry* SpaceStore::find_locked(const EntryTemplate& tmpl,
                                          std::int64_t now) const {
  // Oldest-first by entry_id; the map is ordered.
  for (const auto& [id, entry] : entries_) {
    (void)id;
    if (matches_locked(entry, tmpl, now)) return &entry;
  }
  return nullptr;
}

void SpaceStore::purge_expired_locked(std::int64_t now) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (expired(it->second, now)) {
      live_keys_.erase(dup_key(it->second.index_signature, it->second.index_state));
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
}

std::optional<SpaceEntry> SpaceStore::take(const EntryTemplate& tmpl,
                                           int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    if (closing_) throw Error(ErrorCode::Closing, "store is shutting down");
    if (const SpaceEntry* found = find_locked(tmpl, now_ms())) {
      SpaceEntry out = *found;
      live_keys_.erase(dup_key(out.index_signature, out.index_state));
      entries_.erase(out.entry_id);
      return out;
    }
    if (arrivals_.wait_until(lock, deadline) == std::cv_status::timeout) {
      return std::nullopt;
    }
  }
}

std::optional<SpaceEntry> SpaceStore::read(const EntryTemplate& tmpl,
                                           int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    if (closing_) throw Error(ErrorCode::Closing, "store is shutting down");
    if (const SpaceEntry* found = find_locked(tmpl, now_ms())) return *found;
    if (arrivals_.wait_until(lock, deadline) == std::cv_status::timeout) {
      return std::nullopt;
    }
  }
}

SpaceStoreStats SpaceStore::stats() const {
  const std::int64_t now = now_ms();
  std::lock_guard<std::mutex> lock(mutex_);
  SpaceStoreStats out;
  out.capacity = capacity_;
  for (const auto& [id, entry] : entries_) {
    (void)id;
    if (expired(entry, now)) continue;
    ++out.resident;
    if (entry.index_state == DemandState::Pending) {
      ++out.pending;
    } else {
      ++out.computed;
    }
  }
  return out;
}

void SpaceStore::snapshot_to(const std::string& path) const {
  const std::int64_t now = now_ms();
  std::vector<std::pair<std::int64_t, std::string>> lines;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    lines.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) {
      (void)id;
      if (expired(entry, now)) continue;
      const std::int64_t remaining = entry.lease_expiry_ms == kLeaseInfinite
                                         ? kLeaseInfinite
                                         : entry.lease_expiry_ms - now;
      lines.emplace_back(remaining, entry.demand_bytes);
    }
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open snapshot temp file " + tmp);
    out << "space-snapshot v1 " << lines.size() << "\n";
    for (const auto& [remaining, bytes] : lines) {
      if (remaining == kLeaseInfinite) {
        out << "inf " << bytes << "\n";
      } else {
        out << remaining << " " << bytes << "\n";
      }
    }
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "snapshot write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(ErrorCode::Io, "snapshot rename to " + path + " failed");
  }
}

std::size_t SpaceStore::recover_from(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open snapshot " + path);

  std::string header;
  if (!std::getline(in, header)) {
    throw Error(ErrorCode::Io, "snapshot " + path + " is empty");
  }
  std::istringstream header_stream(header);
  std::string magic, version;
  std::size_t count = 0;
  if (!(header_stream >> magic >> version >> count) || magic != "space-snapshot" ||
      version != "v1") {
    throw Error(ErrorCode::Io, "snapshot " + path + " has a bad header: " + header);
  }

  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (!entries_.empty()) {
      throw Error(ErrorCode::State, "recover requires an empty store");
    }
  }

  std::size_t recovered = 0;
  std::string line;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw Error(ErrorCode::Io, "snapshot " + path + " is truncated at entry " +
                                     std::to_string(i + 1));
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) {
      throw Error(ErrorCode::Io, "snapshot " + path + " entry " +
                                     std::to_string(i + 1) + " is malformed");
    }
    const std::string lease_text = line.substr(0, space);
    const std::string bytes = line.substr(space + 1);
    std::int64_t lease_ms = kLeaseInfinite;
    if (lease_text != "inf") {
      try {
        lease_ms = std::stoll(lease_text);
      } catch (const std::exception&) {
        throw Error(ErrorCode::Io, "snapshot " + path + " entry " +
                                       std::to_string(i + 1) + " has a bad lease");
      }
      // Leases are rebased against remaining time; an already-expired entry
      // is simply dropped.
      if (lease_ms <= 0) continue;
    }
    write(bytes, lease_ms);
    ++recovered;
  }
  return recovered;
}

void SpaceStore::close() {
  std::lock_guard<std::mutex> lock(mutex_);
  closing_ = true;
  arrivals_.notify_all();
}

}  // namespace dmf
