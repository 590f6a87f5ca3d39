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

#include "fixtures.hpp"

#include <rlab/overlay.hpp>

#include <random>
#include <set>

using namespace rlab;
using namespace rlab::test;

namespace {

constexpr const char* Token = "enroll-ok";

struct OverlayRig
{
  Store store;
  Overlay overlay;

  explicit OverlayRig(OverlayConfig config = {})
  : overlay(store, config, [](const SystemState&, std::string_view t) { return t == Token; })
  {
  }

  OverlayPeer add(Seconds now, PeerKind kind = PeerKind::StudentDesktop)
  {
    return overlay.register_peer(kind, Token, now);
  }

  std::shared_ptr<const SystemState> state() const { return store.snapshot(); }
};

/// Non-evicted peers rebuilt from the raw event stream.
std::map<OverlayAddress, std::pair<std::string, PeerStatus>> table_from_log(
  const std::vector<Event>& log)
{
  std::map<std::string, OverlayAddress> addr_of;
  std::map<OverlayAddress, std::pair<std::string, PeerStatus>> table;
  for (const auto& e : log)
  {
    if (e.kind == events::PeerRegistered)
    {
      const auto addr = e.payload.at("addr").get<OverlayAddress>();
      addr_of[e.payload.at("peer_id")] = addr;
      table[addr] = {e.payload.at("peer_id"), PeerStatus::Live};
    }
    else if (e.kind == events::PeerHeartbeat)
      table[addr_of.at(e.payload.at("peer_id"))].second = PeerStatus::Live;
    else if (e.kind == events::PeerStale)
      table[addr_of.at(e.payload.at("peer_id"))].second = PeerStatus::Stale;
    else if (e.kind == events::PeerEvicted)
      table.erase(addr_of.at(e.payload.at("peer_id")));
  }
  return table;
}

} // anonymous namespace

TEST_SUITE("overlay")
{
  TEST_CASE("first peer gets 10.80.0.1")
  {
    OverlayRig o;
    const auto p = o.add(Monday);
    CHECK(format_address(p.addr) == "10.80.0.1");
    CHECK(p.status == PeerStatus::Live);
    CHECK(format_address(o.add(Monday).addr) == "10.80.0.2");
  }

  TEST_CASE("enrollment needs a valid token")
  {
    OverlayRig o;
    CHECK(error_of([&] { o.overlay.register_peer(PeerKind::StudentRobot, "nope", Monday); })
      == Errc::InvalidToken);
    CHECK(o.store.last_seq() == 0);
  }

  TEST_CASE("evicted addresses are reused lowest first")
  {
    OverlayRig o;
    const auto a = o.add(Monday);
    const auto b = o.add(Monday);
    o.add(Monday);
    o.overlay.evict(b.peer_id, Monday + 1, "test");
    o.overlay.evict(a.peer_id, Monday + 1, "test");
    CHECK(format_address(o.add(Monday + 2).addr) == "10.80.0.1");
    CHECK(format_address(o.add(Monday + 2).addr) == "10.80.0.2");
    CHECK(format_address(o.add(Monday + 2).addr) == "10.80.0.4");
  }

  TEST_CASE("a /16 holds 65534 live peers")
  {
    OverlayRig o;
    CHECK(o.overlay.config().pool_size() == 65534);
    OverlayPeer last;
    for (int i = 0; i < 65534; ++i)
      last = o.add(Monday);
    CHECK(format_address(last.addr) == "10.80.255.254");
    CHECK(error_of([&] { o.add(Monday); }) == Errc::PoolExhausted);
    o.overlay.evict(last.peer_id, Monday, "test");
    CHECK(format_address(o.add(Monday).addr) == "10.80.255.254");
  }

  TEST_CASE("heartbeats")
  {
    OverlayRig o;
    const auto p = o.add(Monday);
    CHECK(o.overlay.heartbeat(p.peer_id, Monday + 60) == PeerStatus::Live);
    o.overlay.sweep(Monday + 60 + 91);
    CHECK(o.state()->peers.at(p.peer_id).status == PeerStatus::Stale);
    CHECK(o.overlay.heartbeat(p.peer_id, Monday + 60 + 92) == PeerStatus::Live);
    CHECK(o.overlay.heartbeat_addr(p.addr, Monday + 200) == PeerStatus::Live);
    o.overlay.sweep(Monday + 200 + 301);
    CHECK(error_of([&] { o.overlay.heartbeat(p.peer_id, Monday + 600); }) == Errc::Evicted);
    CHECK(error_of([&] { o.overlay.heartbeat("peer-999999", Monday + 600); }) == Errc::UnknownPeer);
  }

  TEST_CASE("sweep applies the TTL boundaries")
  {
    OverlayRig o;
    const auto p = o.add(Monday);
    CHECK(o.overlay.sweep(Monday + 89).empty());
    CHECK(o.state()->peers.at(p.peer_id).status == PeerStatus::Live);
    CHECK(o.overlay.sweep(Monday + 90).empty());
    const auto stale = o.overlay.sweep(Monday + 91);
    CHECK(stale == std::vector<PeerTransition>{{p.peer_id, PeerStatus::Live, PeerStatus::Stale}});
    const auto evicted = o.overlay.sweep(Monday + 301);
    CHECK(evicted == std::vector<PeerTransition>{{p.peer_id, PeerStatus::Stale, PeerStatus::Evicted}});
    CHECK(o.state()->peer_by_addr.empty());
    CHECK(o.state()->overlay_free_hosts.count(p.host) == 1);
  }

  TEST_CASE("a silent Live peer goes straight to Evicted on a late sweep")
  {
    OverlayRig o;
    const auto p = o.add(Monday);
    const auto t = o.overlay.sweep(Monday + 301);
    REQUIRE(t.size() == 1);
    CHECK(t[0].to == PeerStatus::Evicted);
    CHECK(o.state()->peers.at(p.peer_id).status == PeerStatus::Evicted);
  }

  TEST_CASE("status is a pure function of silence")
  {
    const OverlayConfig c;
    for (Seconds silence = 0; silence <= 400; ++silence)
    {
      const auto want = silence <= 90 ? PeerStatus::Live
        : silence <= 300 ? PeerStatus::Stale : PeerStatus::Evicted;
      CHECK(status_at(Monday, Monday + silence, c) == want);
    }
  }

  TEST_CASE("route table lists non-evicted peers in address order")
  {
    OverlayRig o;
    CHECK(o.overlay.route_table().empty());
    const auto a = o.add(Monday, PeerKind::LabRobot);
    const auto b = o.add(Monday, PeerKind::CloudWorkspace);
    const auto c = o.add(Monday, PeerKind::StudentRobot);
    const auto d = o.add(Monday, PeerKind::StudentDesktop);
    o.overlay.evict(b.peer_id, Monday, "test");
    const auto table = o.overlay.route_table();
    REQUIRE(table.size() == 3);
    CHECK(table[0].peer_id == a.peer_id);
    CHECK(table[1].peer_id == c.peer_id);
    CHECK(table[2].peer_id == d.peer_id);
    CHECK(format_route_table(table)
      == "10.80.0.1 LabRobot " + a.peer_id + " Live\n"
         "10.80.0.3 StudentRobot " + c.peer_id + " Live\n"
         "10.80.0.4 StudentDesktop " + d.peer_id + " Live\n");
  }

  TEST_CASE("random operations keep addresses unique and match set and log oracles")
  {
    OverlayRig o;
    std::mt19937_64 rng(5);
    std::set<std::uint32_t> used;
    std::map<std::string, std::uint32_t> host_of;
    std::map<std::string, Seconds> heard;
    Seconds now = Monday;
    for (int i = 0; i < 3000; ++i)
    {
      now += static_cast<Seconds>(rng() % 40);
      const auto op = rng() % 10;
      if (op < 4)
      {
        std::uint32_t want = 1;
        while (used.count(want))
          ++want;
        const auto p = o.add(now);
        CHECK(p.host == want);
        used.insert(p.host);
        host_of[p.peer_id] = p.host;
        heard[p.peer_id] = now;
      }
      else if (op < 8 && !host_of.empty())
      {
        auto it = std::next(host_of.begin(), static_cast<long>(rng() % host_of.size()));
        const bool gone = now - heard.at(it->first) > 300;
        const auto err = error_of([&] { o.overlay.heartbeat(it->first, now); });
        CHECK(err.has_value() == gone);
        if (!gone)
          heard[it->first] = now;
      }
      else
      {
        o.overlay.sweep(now);
        for (auto it = host_of.begin(); it != host_of.end();)
        {
          if (now - heard.at(it->first) > 300)
          {
            used.erase(it->second);
            heard.erase(it->first);
            it = host_of.erase(it);
          }
          else
            ++it;
        }
      }
      const auto s = o.state();
      std::set<std::uint32_t> live;
      for (const auto& [id, peer] : s->peers)
      {
        if (peer.status != PeerStatus::Evicted)
          CHECK(live.insert(peer.host).second);
      }
      if (op >= 8)
        CHECK(live == used);
    }
    const auto oracle = table_from_log(o.store.events());
    const auto table = o.overlay.route_table();
    REQUIRE(table.size() == oracle.size());
    for (const auto& row : table)
    {
      CHECK(oracle.at(row.addr).first == row.peer_id);
      CHECK(oracle.at(row.addr).second == row.status);
    }
  }
}
