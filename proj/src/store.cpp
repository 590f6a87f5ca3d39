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

#include <rlab/store.hpp>
#include <rlab/crypto.hpp>
#include <rlab/error.hpp>

#include <sstream>

namespace rlab {

namespace fs = std::filesystem;

std::string snapshot_write(const SystemState& state, const fs::path& path)
{
  const std::string body = Json(state).dump();
  const std::string checksum = sha256_hex(body);
  Json header;
  header["format_version"] = SnapshotFormatVersion;
  header["last_seq"] = state.last_seq;
  header["checksum"] = checksum;

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(Errc::IoFailure, "cannot open " + tmp.string());
    out << header.dump() << '\n' << body;
    out.flush();
    if (!out)
      throw Error(Errc::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec)
    throw Error(Errc::IoFailure, "rename failed: " + ec.message());
  return checksum;
}

SystemState snapshot_load(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  const auto nl = content.find('\n');
  if (nl == std::string::npos)
    throw Error(Errc::ChecksumMismatch, "snapshot header incomplete");
  Json header;
  try
  {
    header = Json::parse(content.substr(0, nl));
  }
  catch (const nlohmann::json::exception&)
  {
    throw Error(Errc::ChecksumMismatch, "snapshot header unreadable");
  }
  if (!header.is_object() || !header.contains("checksum") || !header.contains("format_version"))
    throw Error(Errc::ChecksumMismatch, "snapshot header incomplete");
  if (header.at("format_version") != SnapshotFormatVersion)
    throw Error(Errc::UnsupportedFormat,
      "snapshot format_version " + header.at("format_version").dump());

  const std::string_view body = std::string_view(content).substr(nl + 1);
  if (sha256_hex(body) != header.at("checksum").get<std::string>())
    throw Error(Errc::ChecksumMismatch, "snapshot body does not match its checksum");
  try
  {
    auto state = Json::parse(body).get<SystemState>();
    if (header.contains("last_seq") && header.at("last_seq") != state.last_seq)
      throw Error(Errc::CorruptRecord, "snapshot header last_seq disagrees with body");
    return state;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(Errc::CorruptRecord, std::string("snapshot body malformed: ") + e.what());
  }
}

std::vector<Event> read_log(const fs::path& path, std::size_t* torn_bytes)
{
  if (torn_bytes)
    *torn_bytes = 0;
  std::vector<Event> out;
  std::ifstream in(path, std::ios::binary);
  if (!in)
    return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  std::size_t pos = 0;
  while (pos < content.size())
  {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos)
    {
      // A record is durable only once its newline is written.
      if (torn_bytes)
        *torn_bytes = content.size() - pos;
      break;
    }
    if (nl > pos)
      out.push_back(decode_line(std::string_view(content).substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return out;
}

//==============================================================================
const SystemState& Transaction::state() const
{
  return _store._state;
}

Event Transaction::append(std::string_view kind, Json payload, Seconds now, std::string actor)
{
  return _store.append_locked(kind, std::move(payload), now, std::move(actor));
}

//==============================================================================
Store::Store(StoreOptions options)
: _options(std::move(options))
{
  if (!_options.log_path.empty())
  {
    _log_out.open(_options.log_path, std::ios::binary | std::ios::app);
    if (!_log_out)
      throw Error(Errc::IoFailure, "cannot open log " + _options.log_path.string());
  }
}

std::unique_ptr<Store> Store::open(StoreOptions options)
{
  SystemState state;
  if (!options.snapshot_path.empty() && fs::exists(options.snapshot_path))
  {
    try
    {
      state = snapshot_load(options.snapshot_path);
    }
    catch (const Error&)
    {
      // Unusable snapshot: fall back to a full replay of the log.
      state = SystemState{};
    }
  }

  std::vector<Event> log;
  if (!options.log_path.empty())
  {
    std::size_t torn = 0;
    log = read_log(options.log_path, &torn);
    if (torn > 0)
    {
      const auto size = fs::file_size(options.log_path);
      fs::resize_file(options.log_path, size - torn);
    }
  }

  if (!log.empty() && state.last_seq > log.back().seq)
    state = SystemState{};

  for (const auto& event : log)
  {
    if (event.seq <= state.last_seq)
      continue;
    apply_event_in_place(state, event);
  }

  auto store = std::unique_ptr<Store>(new Store(std::move(options)));
  store->_state = std::move(state);
  store->_log = std::move(log);
  return store;
}

std::unique_ptr<Store> Store::from_events(std::vector<Event> log, StoreOptions options)
{
  options.log_path.clear();
  options.snapshot_path.clear();
  auto store = std::make_unique<Store>(std::move(options));
  store->_state = replay(log);
  store->_log = std::move(log);
  return store;
}

Event Store::append(std::string_view kind, Json payload, Seconds now, std::string actor)
{
  std::lock_guard<std::recursive_mutex> lock(_mutex);
  return append_locked(kind, std::move(payload), now, std::move(actor));
}

Event Store::append_locked(std::string_view kind, Json payload, Seconds now, std::string actor)
{
  if (_poisoned)
    throw Error(Errc::IoFailure, "store is read-only after a failed write");
  if (_log.size() >= _options.max_events)
    throw Error(Errc::StorageFull, "event log reached its configured capacity");

  Event event;
  event.seq = _state.last_seq + 1;
  event.ts = now;
  event.kind = std::string(kind);
  event.actor = std::move(actor);
  event.payload = std::move(payload);

  try
  {
    apply_event_in_place(_state, event);
  }
  catch (const Error& e)
  {
    if (e.code() == Errc::StorageFull)
      throw;
    Json detail;
    detail["reason"] = std::string(to_string(e.code()));
    detail["kind"] = event.kind;
    throw Error(Errc::ValidationRejected, e.message(), detail);
  }

  _published.reset();
  _log.push_back(event);
  persist(_log.back());
  return _log.back();
}

void Store::persist(const Event& event)
{
  if (!_log_out.is_open())
    return;
  _log_out << encode_line(event) << '\n';
  _log_out.flush();
  if (!_log_out)
  {
    _poisoned = true;
    throw Error(Errc::IoFailure, "append to " + _options.log_path.string() + " failed");
  }
  if (!_options.snapshot_path.empty() && _options.snapshot_every > 0
    && event.seq % _options.snapshot_every == 0)
    snapshot_write(_state, _options.snapshot_path);
}

std::shared_ptr<const SystemState> Store::snapshot() const
{
  std::lock_guard<std::recursive_mutex> lock(_mutex);
  if (!_published)
    _published = std::make_shared<const SystemState>(_state);
  return _published;
}

std::vector<Event> Store::events() const
{
  std::lock_guard<std::recursive_mutex> lock(_mutex);
  return _log;
}

std::vector<Event> Store::events_since(std::uint64_t after_seq) const
{
  std::lock_guard<std::recursive_mutex> lock(_mutex);
  std::vector<Event> out;
  for (auto it = _log.rbegin(); it != _log.rend() && it->seq > after_seq; ++it)
    out.push_back(*it);
  return {out.rbegin(), out.rend()};
}

std::uint64_t Store::last_seq() const
{
  std::lock_guard<std::recursive_mutex> lock(_mutex);
  return _state.last_seq;
}

} // namespace rlab
