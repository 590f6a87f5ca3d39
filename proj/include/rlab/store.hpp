/*
 * Copyright (C) 2026 The remotelab Authors
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
 *
*/

#ifndef RLAB__STORE_HPP
#define RLAB__STORE_HPP

#include <rlab/event.hpp>
#include <rlab/state.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace rlab {

struct StoreOptions
{
  /// Empty means in-memory only.
  std::filesystem::path log_path;
  std::filesystem::path snapshot_path;
  std::uint64_t snapshot_every = 1000;
  std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max();
};

constexpr int SnapshotFormatVersion = 1;

/// Writes header {format_version, last_seq, checksum} and the state body.
/// Returns the body checksum. Throws Error(IoFailure).
std::string snapshot_write(const SystemState& state, const std::filesystem::path& path);

/// Throws Error(IoFailure), Error(ChecksumMismatch), Error(UnsupportedFormat)
/// or Error(CorruptRecord).
SystemState snapshot_load(const std::filesystem::path& path);

/// Reads a log file. A torn trailing record (no final newline) is dropped and
/// reported through torn_bytes; any other malformed line throws CorruptRecord.
std::vector<Event> read_log(const std::filesystem::path& path, std::size_t* torn_bytes = nullptr);

class Store;

/// Handle passed to Store::transact. All appends made through it are
/// serialized with every other writer.
class Transaction
{
public:
  const SystemState& state() const;
  Event append(std::string_view kind, Json payload, Seconds now, std::string actor = "system");

private:
  friend class Store;
  explicit Transaction(Store& store) : _store(store) {}
  Store& _store;
};

/// Single-writer event store. Every mutation of the system goes through
/// append(); readers take immutable snapshots.
class Store
{
public:
  explicit Store(StoreOptions options = {});

  /// Recovers state from the snapshot (when present and intact) plus the log.
  static std::unique_ptr<Store> open(StoreOptions options);

  /// In-memory store seeded with an existing log.
  static std::unique_ptr<Store> from_events(std::vector<Event> log, StoreOptions options = {});

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  Event append(std::string_view kind, Json payload, Seconds now, std::string actor = "system");

  /// Runs f(Transaction&) while holding the writer lock. Reentrant.
  template<typename F>
  decltype(auto) transact(F&& f)
  {
    std::lock_guard<std::recursive_mutex> lock(_mutex);
    Transaction tx(*this);
    return f(tx);
  }

  std::shared_ptr<const SystemState> snapshot() const;
  std::vector<Event> events() const;
  std::vector<Event> events_since(std::uint64_t after_seq) const;
  std::uint64_t last_seq() const;
  const StoreOptions& options() const { return _options; }

private:
  friend class Transaction;
  Event append_locked(std::string_view kind, Json payload, Seconds now, std::string actor);
  void persist(const Event& event);

  StoreOptions _options;
  mutable std::recursive_mutex _mutex;
  SystemState _state;
  mutable std::shared_ptr<const SystemState> _published;
  std::vector<Event> _log;
  std::ofstream _log_out;
  bool _poisoned = false;
};

} // namespace rlab

#endif // RLAB__STORE_HPP
