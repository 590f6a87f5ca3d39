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

#include <rlab/overlay.hpp>
#include <rlab/error.hpp>

#include <sstream>

namespace rlab {

PeerStatus status_at(Seconds last_heartbeat, Seconds now, const OverlayConfig& config)
{
  const Seconds silence = now - last_heartbeat;
  if (silence > config.evict_after_s)
    return PeerStatus::Evicted;
  if (silence > config.stale_after_s)
    return PeerStatus::Stale;
  return PeerStatus::Live;
}

std::vector<RouteEntry> route_table(const SystemState& state)
{
  std::vector<RouteEntry> out;
  out.reserve(state.peer_by_addr.size());
  for (const auto& [addr, peer_id] : state.peer_by_addr)
  {
    const auto& peer = state.peers.at(peer_id);
    out.push_back(RouteEntry{addr, peer_id, peer.kind, peer.status});
  }
  return out;
}

std::string format_route_table(const std::vector<RouteEntry>& table)
{
  std::ostringstream out;
  for (const auto& e : table)
  {
    out << format_address(e.addr) << ' ' << to_string(e.kind) << ' ' << e.peer_id << ' '
        << to_string(e.status) << '\n';
  }
  return out.str();
}

//==============================================================================
Overlay::Overlay(Store& store, OverlayConfig config, TokenVerifier verifier)
: _store(store),
  _config(config),
  _verifier(std::move(verifier))
{
}

OverlayPeer Overlay::register_locked(Transaction& tx, PeerKind kind, const std::string& subject,
  Seconds now, const Actor& actor)
{
  const auto& s = tx.state();
  const auto host = lowest_free_host(s);
  if (host > _config.pool_size())
    throw Error(Errc::PoolExhausted, "overlay pool of " + std::to_string(_config.pool_size())
      + " addresses exhausted");
  const auto peer_id = next_id(s, "peer");
  Json p;
  p["peer_id"] = peer_id;
  p["kind"] = kind;
  p["addr"] = address_of(host);
  p["host"] = host;
  p["subject"] = subject;
  tx.append(events::PeerRegistered, std::move(p), now, actor.id);
  return tx.state().peers.at(peer_id);
}

OverlayPeer Overlay::register_peer(PeerKind kind, std::string_view enrollment_token, Seconds now,
  const std::string& subject, const Actor& actor)
{
  return _store.transact([&](Transaction& tx) {
    if (!_verifier || !_verifier(tx.state(), enrollment_token))
      throw Error(Errc::InvalidToken, "enrollment token not recognised");
    return register_locked(tx, kind, subject, now, actor);
  });
}

OverlayPeer Overlay::enroll(PeerKind kind, const std::string& subject, Seconds now,
  const Actor& actor)
{
  return _store.transact([&](Transaction& tx) {
    return register_locked(tx, kind, subject, now, actor);
  });
}

PeerStatus Overlay::heartbeat(const std::string& peer_id, Seconds now, const Actor& actor)
{
  return _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    const auto it = s.peers.find(peer_id);
    if (it == s.peers.end())
      throw Error(Errc::UnknownPeer, "no peer '" + peer_id + "'");
    if (it->second.status == PeerStatus::Evicted
      || status_at(it->second.last_heartbeat, now, _config) == PeerStatus::Evicted)
      throw Error(Errc::Evicted, "peer '" + peer_id + "' was evicted");
    Json p;
    p["peer_id"] = peer_id;
    tx.append(events::PeerHeartbeat, std::move(p), now, actor.id);
    return PeerStatus::Live;
  });
}

PeerStatus Overlay::heartbeat_addr(OverlayAddress addr, Seconds now, const Actor& actor)
{
  const auto snapshot = _store.snapshot();
  const auto it = snapshot->peer_by_addr.find(addr);
  if (it != snapshot->peer_by_addr.end())
    return heartbeat(it->second, now, actor);
  for (const auto& [id, peer] : snapshot->peers)
  {
    if (peer.addr == addr)
      throw Error(Errc::Evicted, "peer at " + format_address(addr) + " was evicted");
  }
  throw Error(Errc::UnknownPeer, "no peer at " + format_address(addr));
}

void Overlay::evict(const std::string& peer_id, Seconds now, const std::string& reason,
  const Actor& actor)
{
  _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    const auto it = s.peers.find(peer_id);
    if (it == s.peers.end())
      throw Error(Errc::UnknownPeer, "no peer '" + peer_id + "'");
    if (it->second.status == PeerStatus::Evicted)
      return;
    Json p;
    p["peer_id"] = peer_id;
    p["reason"] = reason;
    tx.append(events::PeerEvicted, std::move(p), now, actor.id);
  });
}

std::vector<PeerTransition> Overlay::sweep(Seconds now)
{
  return _store.transact([&](Transaction& tx) {
    std::vector<PeerTransition> out;
    // Evictions erase from peer_by_addr, so collect before appending.
    std::vector<std::pair<std::string, PeerStatus>> due;
    for (const auto& [addr, peer_id] : tx.state().peer_by_addr)
    {
      const auto& peer = tx.state().peers.at(peer_id);
      const auto target = status_at(peer.last_heartbeat, now, _config);
      if (target != peer.status && target != PeerStatus::Live)
        due.emplace_back(peer_id, target);
    }
    for (const auto& [peer_id, target] : due)
    {
      const auto from = tx.state().peers.at(peer_id).status;
      Json p;
      p["peer_id"] = peer_id;
      if (target == PeerStatus::Evicted)
      {
        p["reason"] = "silent";
        tx.append(events::PeerEvicted, std::move(p), now, "system");
      }
      else
      {
        tx.append(events::PeerStale, std::move(p), now, "system");
      }
      out.push_back(PeerTransition{peer_id, from, target});
    }
    return out;
  });
}

std::vector<RouteEntry> Overlay::route_table() const
{
  return rlab::route_table(*_store.snapshot());
}

std::optional<Seconds> Overlay::next_due(const SystemState& state, Seconds after) const
{
  std::optional<Seconds> best;
  auto consider = [&](Seconds t) {
    if (t > after && (!best || t < *best))
      best = t;
  };
  for (const auto& [addr, peer_id] : state.peer_by_addr)
  {
    const auto& peer = state.peers.at(peer_id);
    if (peer.status == PeerStatus::Live)
      consider(peer.last_heartbeat + _config.stale_after_s + 1);
    consider(peer.last_heartbeat + _config.evict_after_s + 1);
  }
  return best;
}

} // namespace rlab
