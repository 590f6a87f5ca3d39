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

#ifndef RLAB__OVERLAY_HPP
#define RLAB__OVERLAY_HPP

#include <rlab/config.hpp>
#include <rlab/state.hpp>
#include <rlab/store.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rlab {

struct RouteEntry
{
  OverlayAddress addr = 0;
  std::string peer_id;
  PeerKind kind = PeerKind::CloudWorkspace;
  PeerStatus status = PeerStatus::Live;

  bool operator==(const RouteEntry&) const = default;
};

struct PeerTransition
{
  std::string peer_id;
  PeerStatus from = PeerStatus::Live;
  PeerStatus to = PeerStatus::Live;

  bool operator==(const PeerTransition&) const = default;
};

/// Liveness as a function of silence: Live up to the stale TTL, Stale up to
/// the eviction TTL, Evicted beyond.
PeerStatus status_at(Seconds last_heartbeat, Seconds now, const OverlayConfig& config);

/// Non-evicted peers in ascending address order.
std::vector<RouteEntry> route_table(const SystemState& state);

/// One line per peer: "<addr> <kind> <peer_id> <status>".
std::string format_route_table(const std::vector<RouteEntry>& table);

/// Registry and address allocator for the lab-spanning private network.
class Overlay
{
public:
  /// Decides whether an enrollment token was issued by the gateway.
  using TokenVerifier = std::function<bool(const SystemState&, std::string_view token)>;

  Overlay(Store& store, OverlayConfig config, TokenVerifier verifier);

  /// Allocates the lowest free address. Throws InvalidToken or PoolExhausted.
  OverlayPeer register_peer(PeerKind kind, std::string_view enrollment_token, Seconds now,
    const std::string& subject = {}, const Actor& actor = Actor::system());

  /// Trusted enrollment used by the platform itself (workspaces, lab robots).
  OverlayPeer enroll(PeerKind kind, const std::string& subject, Seconds now,
    const Actor& actor = Actor::system());

  /// Throws UnknownPeer or Evicted.
  PeerStatus heartbeat(const std::string& peer_id, Seconds now, const Actor& actor = Actor::system());
  PeerStatus heartbeat_addr(OverlayAddress addr, Seconds now, const Actor& actor = Actor::system());

  /// Explicit removal (workspace release, agent leaving).
  void evict(const std::string& peer_id, Seconds now, const std::string& reason,
    const Actor& actor = Actor::system());

  std::vector<PeerTransition> sweep(Seconds now);

  std::vector<RouteEntry> route_table() const;

  /// Earliest time after `after` at which sweep() would change something.
  std::optional<Seconds> next_due(const SystemState& state, Seconds after) const;

  OverlayAddress address_of(std::uint32_t host) const { return _config.network | host; }
  const OverlayConfig& config() const { return _config; }

private:
  OverlayPeer register_locked(Transaction& tx, PeerKind kind, const std::string& subject,
    Seconds now, const Actor& actor);

  Store& _store;
  OverlayConfig _config;
  TokenVerifier _verifier;
};

} // namespace rlab

#endif // RLAB__OVERLAY_HPP
