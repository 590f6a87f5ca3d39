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

#include <rlab/audit.hpp>
#include <rlab/crypto.hpp>
#include <rlab/error.hpp>
#include <rlab/lab.hpp>
#include <rlab/overlay.hpp>
#include <rlab/provisioner.hpp>
#include <rlab/scenario.hpp>
#include <rlab/sim/kinematics.hpp>
#include <rlab/state.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace rlab;

namespace {

const std::filesystem::path Scenarios = std::filesystem::path(RLAB_SOURCE_DIR) / "scenarios";
constexpr Seconds Monday = DefaultScenarioStart;

struct Outcome
{
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what)
  {
    if (!ok && passed)
      detail << "first failure: " << what << "; ";
    passed = passed && ok;
  }
};

LabConfig base_config()
{
  LabConfig c;
  c.auth.token_secret = "acceptance";
  return c;
}

std::vector<std::string> open_field(int rows, int cols)
{
  return std::vector<std::string>(static_cast<std::size_t>(rows), std::string(cols, '.'));
}

Seconds seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0).count();
}

double elapsed(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

//==============================================================================
Outcome scale_100()
{
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sc = load_scenario(Scenarios / "scale100.scn");
  Lab lab(scenario_config(sc), std::make_unique<Store>());
  const auto report = ScenarioRunner(sc, lab).run();
  const auto wall = elapsed(t0);
  const auto log = lab.store().events();
  const auto s = lab.store().snapshot();

  std::set<std::string> ready_ever;
  for (const auto& e : log)
  {
    if (e.kind == events::WorkspaceReady)
      ready_ever.insert(e.payload.at("workspace_id").get<std::string>());
  }
  std::set<std::string> billed;
  for (const auto& entry : s->ledger)
    billed.insert(entry.node_id);
  const std::size_t per_node = static_cast<std::size_t>(free_units(SystemState{},
    Node{"probe", 16, 32768, true, 0, NodeState::Ready}, WorkspaceDemand{2, 4096, true}));
  const auto want_nodes = (100 + per_node - 1) / per_node;

  o.require(report.passed(), "scenario assertions");
  o.require(s->workspaces.size() == 100 && ready_ever.size() == 100, "100 workspaces Ready");
  o.require(per_node == 8, "node capacity of 8 workspaces");
  o.require(billed.size() == want_nodes && want_nodes == 13, "13 billed nodes");
  o.require(audit_capacity(log).empty(), "capacity audit");
  o.require(wall < 10.0, "under 10 s");
  o.detail << "workspaces Ready " << ready_ever.size() << ", billed nodes " << billed.size()
           << ", capacity violations " << audit_capacity(log).size() << ", wall " << wall << " s";
  return o;
}

//==============================================================================
Outcome class_13()
{
  Outcome o;
  const auto sc = load_scenario(Scenarios / "class13.scn");
  Lab lab(scenario_config(sc), std::make_unique<Store>());
  const auto report = ScenarioRunner(sc, lab).run();
  const auto log = lab.store().events();
  const auto live = lab.store().snapshot();

  int class_size = 0;
  for (const auto& [id, st] : live->students)
    class_size += st.max_tier == Tier::RemoteLab && st.weekly_quota_min == 240;
  std::size_t reservations = 0;
  for (const auto& [id, r] : live->reservations)
    reservations += r.state != ReservationState::Cancelled;
  // Invariant sweep after every event.
  std::size_t sweep_failures = 0;
  SystemState s;
  for (const auto& e : log)
  {
    apply_event_in_place(s, e);
    sweep_failures += validate_all(s).size();
  }
  const auto doubles = audit_double_booking(*live);
  const bool replay_equal = replay(log) == *live;

  o.require(report.passed(), "scenario assertions");
  o.require(class_size == 13, "13 students");
  o.require(live->robots.size() == 6, "6 robots");
  o.require(reservations >= 40, ">= 40 reservations");
  o.require(live->clock - sc.start >= 6 * 86400, "one simulated week");
  o.require(doubles.empty(), "no double-bookings");
  o.require(sweep_failures == 0, "invariant sweep");
  o.require(replay_equal, "replay equals live");
  o.detail << "students " << class_size << ", robots " << live->robots.size() << ", reservations "
           << reservations << ", double-bookings " << doubles.size() << ", sweep failures "
           << sweep_failures << ", replay " << (replay_equal ? "equal" : "differs") << ", events "
           << log.size();
  return o;
}

//==============================================================================
Outcome factory_reset_ordering()
{
  Outcome o;
  std::size_t activations = 0;
  std::size_t violations = 0;
  std::size_t failed_schedules = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed)
  {
    std::mt19937_64 rng(seed);
    auto cfg = base_config();
    cfg.sim.seed = seed;
    Lab lab(cfg, std::make_unique<Store>());
    lab.advance_to(Monday + 8 * 3600);
    const auto field = lab.add_field("f", open_field(6, 6), 0.5).id;
    std::vector<std::string> robots, students;
    const int n_robots = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n_robots; ++i)
    {
      RobotSpec spec;
      spec.name = "r" + std::to_string(i);
      spec.capabilities = CapabilitySet::parse("diff_drive");
      spec.firmware_size_mb = static_cast<std::int64_t>(rng() % 8000);
      spec.wheel_bias = 0.01 * static_cast<double>(rng() % 10);
      robots.push_back(lab.add_robot(spec).id);
    }
    for (int i = 0; i < 4; ++i)
      students.push_back(lab.add_student("s" + std::to_string(i), Tier::RemoteLab, 100000).student.id);
    for (int i = 0; i < 10; ++i)
    {
      std::vector<std::string> pick;
      for (const auto& r : robots)
      {
        if (rng() % 3 == 0)
          pick.push_back(r);
      }
      if (pick.empty())
        pick.push_back(robots[rng() % robots.size()]);
      const Seconds start = Monday + 8 * 3600 + static_cast<Seconds>(1 + rng() % 24) * SlotGridSeconds;
      try
      {
        lab.scheduler().request_reservation(students[rng() % students.size()], pick,
          TimeSlot{start, 15 * static_cast<int>(1 + rng() % 8)}, field, lab.now());
      }
      catch (const Error&)
      {
      }
    }
    const Seconds end = Monday + 16 * 3600;
    for (Seconds t = lab.now(); t < end; t += static_cast<Seconds>(60 + rng() % 900))
    {
      lab.advance_to(t);
      const auto s = lab.store().snapshot();
      if (rng() % 6 == 0)
      {
        const auto& rb = robots[rng() % robots.size()];
        lab.control().inject_fault(rb, static_cast<FaultKind>(rng() % 3), t);
      }
      for (const auto& [id, r] : s->reservations)
      {
        if (r.state != ReservationState::Active || rng() % 2)
          continue;
        const auto& rb = r.robot_ids[rng() % r.robot_ids.size()];
        try
        {
          lab.control().dispatch(id, rb, DriveCommand{0.3, 0.5, 5}, t, Actor::student(r.student_id));
          lab.control().run_until_idle(rb, t);
        }
        catch (const Error&)
        {
        }
      }
    }
    lab.advance_to(end);
    const auto log = lab.store().events();
    const auto found = audit_activation_order(log);
    for (const auto& e : log)
      activations += e.kind == events::SessionActivated;
    violations += found.size();
    failed_schedules += !found.empty();
    if (!found.empty() && o.passed)
      o.detail << "seed " << seed << ": " << found.front() << "; ";
    o.require(found.empty(), "activation order");
  }
  o.require(activations > 1000, "schedules exercise activations");
  o.detail << "schedules 1000, activations " << activations << ", violations " << violations;
  return o;
}

//==============================================================================
Outcome no_double_booking()
{
  Outcome o;
  Lab lab(base_config(), std::make_unique<Store>());
  lab.advance_to(Monday);
  const auto field = lab.add_field("f", open_field(4, 4), 0.5).id;
  std::mt19937_64 rng(2026);
  std::vector<std::string> robots, students;
  for (int i = 0; i < 6; ++i)
  {
    RobotSpec spec;
    spec.name = "r" + std::to_string(i);
    robots.push_back(lab.add_robot(spec).id);
  }
  for (int i = 0; i < 20; ++i)
    students.push_back(lab.add_student("s" + std::to_string(i), Tier::RemoteLab, 1'000'000).student.id);

  struct Hold
  {
    std::set<std::string> robots;
    Seconds start;
    Seconds end;
  };
  std::map<std::string, Hold> held;
  std::size_t disagreements = 0, confirmed = 0, conflicts = 0, cancels = 0;
  for (int op = 0; op < 10'000; ++op)
  {
    if (rng() % 5 == 0 && !held.empty())
    {
      auto it = std::next(held.begin(), static_cast<long>(rng() % held.size()));
      lab.scheduler().cancel_reservation(it->first, Actor::system(), lab.now());
      held.erase(it);
      ++cancels;
      continue;
    }
    std::set<std::string> pick{robots[rng() % robots.size()]};
    if (rng() % 4 == 0)
      pick.insert(robots[rng() % robots.size()]);
    const Seconds start = Monday + 3600 + static_cast<Seconds>(rng() % (4 * 24 * 7)) * SlotGridSeconds;
    const int minutes = 15 * static_cast<int>(1 + rng() % 8);
    bool free = true;
    for (const auto& [id, h] : held)
    {
      for (const auto& r : pick)
        free = free && !(h.robots.count(r) && start < h.end && h.start < start + minutes * 60);
    }
    try
    {
      const auto r = lab.scheduler().request_reservation(students[rng() % students.size()],
        {pick.begin(), pick.end()}, TimeSlot{start, minutes}, field, lab.now());
      held[r.id] = Hold{pick, start, start + minutes * 60};
      disagreements += !free;
      ++confirmed;
    }
    catch (const Error& e)
    {
      disagreements += free || e.code() != Errc::Conflict;
      ++conflicts;
    }
  }
  const auto s = lab.store().snapshot();
  std::size_t overlaps = 0;
  std::vector<const Reservation*> live;
  for (const auto& [id, r] : s->reservations)
  {
    if (r.holds_robots())
      live.push_back(&r);
  }
  for (std::size_t i = 0; i < live.size(); ++i)
  {
    for (std::size_t j = i + 1; j < live.size(); ++j)
    {
      for (const auto& r : live[i]->robot_ids)
      {
        const auto& other = live[j]->robot_ids;
        if (std::find(other.begin(), other.end(), r) != other.end()
          && live[i]->slot.overlaps(live[j]->slot))
          ++overlaps;
      }
    }
  }
  o.require(disagreements == 0, "oracle agreement");
  o.require(overlaps == 0, "pairwise overlap scan");
  o.require(live.size() == held.size(), "oracle calendar size");
  o.detail << "ops 10000, confirmed " << confirmed << ", conflicts " << conflicts << ", cancels "
           << cancels << ", disagreements " << disagreements << ", overlapping pairs " << overlaps;
  return o;
}

//==============================================================================
Outcome overlay_uniqueness()
{
  Outcome o;
  Store store;
  Overlay overlay(store, OverlayConfig{}, [](const SystemState&, std::string_view t) {
    return t == "ok";
  });
  std::mt19937_64 rng(80);
  std::set<std::uint32_t> oracle;
  std::map<std::string, std::pair<std::uint32_t, Seconds>> live;
  Seconds now = Monday;
  std::size_t mismatches = 0, duplicates = 0, lowest_misses = 0;
  for (int op = 0; op < 10'000; ++op)
  {
    now += static_cast<Seconds>(rng() % 30);
    const auto kind = rng() % 10;
    if (kind < 4)
    {
      std::uint32_t want = 1;
      while (oracle.count(want))
        ++want;
      const auto p = overlay.register_peer(static_cast<PeerKind>(rng() % 4), "ok", now);
      lowest_misses += p.host != want;
      oracle.insert(p.host);
      live[p.peer_id] = {p.host, now};
    }
    else if (kind < 8 && !live.empty())
    {
      auto it = std::next(live.begin(), static_cast<long>(rng() % live.size()));
      try
      {
        overlay.heartbeat(it->first, now);
        it->second.second = now;
      }
      catch (const Error& e)
      {
        mismatches += e.code() != Errc::Evicted
          || now - it->second.second <= OverlayConfig{}.evict_after_s;
      }
    }
    else
    {
      overlay.sweep(now);
      for (auto it = live.begin(); it != live.end();)
      {
        if (now - it->second.second > OverlayConfig{}.evict_after_s)
        {
          oracle.erase(it->second.first);
          it = live.erase(it);
        }
        else
          ++it;
      }
    }
    const auto s = store.snapshot();
    std::set<std::uint32_t> seen;
    for (const auto& [id, peer] : s->peers)
    {
      if (peer.status != PeerStatus::Evicted && !seen.insert(peer.host).second)
        ++duplicates;
    }
    mismatches += seen != oracle;
  }
  o.require(mismatches == 0, "live set equals oracle");
  o.require(duplicates == 0, "no duplicate live addresses");
  o.require(lowest_misses == 0, "lowest free address");
  o.detail << "ops 10000, peers " << store.snapshot()->peers.size() << ", set mismatches "
           << mismatches << ", duplicates " << duplicates << ", lowest-free misses " << lowest_misses;
  return o;
}

//==============================================================================
std::vector<sim::Telemetry> drive_session(std::uint64_t seed)
{
  auto cfg = base_config();
  cfg.sim.seed = seed;
  Lab lab(cfg, std::make_unique<Store>());
  lab.advance_to(Monday + 8 * 3600);
  const auto field = lab.add_field("f", open_field(10, 10), 0.5).id;
  RobotSpec spec;
  spec.name = "tb";
  spec.wheel_bias = 0.1;
  const auto rb = lab.add_robot(spec).id;
  const auto st = lab.add_student("s", Tier::RemoteLab).student.id;
  const auto r = lab.scheduler().request_reservation(st, {rb}, TimeSlot{Monday + 9 * 3600, 60},
    field, lab.now());
  lab.advance_to(Monday + 9 * 3600 + 300);
  std::vector<sim::Telemetry> out;
  const auto sub = lab.control().subscribe({rb}, [&](const sim::Telemetry& t) { out.push_back(t); });
  for (int i = 0; i < 20; ++i)
  {
    lab.control().dispatch(r.id, rb, DriveCommand{0.05 * (i % 6), 0.4 * ((i % 5) - 2), 7},
      lab.now(), Actor::student(st));
    lab.control().run_until_idle(rb, lab.now());
  }
  lab.control().unsubscribe(sub);
  return out;
}

Outcome kinematics()
{
  Outcome o;
  FieldLayout big;
  big.id = "f";
  big.rows = big.cols = 200;
  big.cell_m = 0.5;
  big.cells = open_field(200, 200);
  double worst = 0.0;
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial)
  {
    const double v = 0.001 * static_cast<double>(1 + rng() % 500);
    const int ticks = 1 + static_cast<int>(rng() % 900);
    sim::AgentSim a("rb", big, 0.0);
    const DriveCommand c{v, 0.0, ticks};
    for (int i = 0; i < ticks; ++i)
      a.step(&c, RobotState::Active);
    const double want = v * ticks * 0.1;
    const double err = std::abs(a.pose().x - want);
    worst = std::max(worst, err / std::max(1.0, want));
    o.require(a.pose().y == 0.0 && a.pose().theta == 0.0, "straight drive keeps heading");
  }
  o.require(worst <= 4 * std::numeric_limits<double>::epsilon(), "x = v t");

  sim::AgentSim biased("rb", big, 0.1);
  const DriveCommand half{0.5, 0.0, 20};
  for (int i = 0; i < 20; ++i)
    biased.step(&half, RobotState::Active);
  o.require(biased.pose().theta == 0.1, "bias turns 0.1 rad over 1 m");

  const auto a = drive_session(17);
  const auto b = drive_session(17);
  o.require(!a.empty() && a == b, "identical telemetry");
  o.detail << "straight-drive worst relative error " << worst << ", biased theta "
           << biased.pose().theta << ", telemetry records " << a.size() << " identical "
           << (a == b ? "yes" : "no");
  return o;
}

//==============================================================================
std::int64_t minute_oracle(Seconds from, Seconds to, const CostLedgerEntry& e, Seconds now)
{
  std::int64_t minutes = 0;
  for (Seconds t = std::max(from, e.from); t < std::min(to, e.to.value_or(now)); t += 60)
    ++minutes;
  const auto x60 = minutes * e.rate_cents_per_hour;
  return x60 / 60 + (x60 % 60 != 0);
}

Outcome cost_oracle()
{
  Outcome o;
  std::size_t queries = 0, mismatches = 0;
  std::mt19937_64 rng(77);
  for (int round = 0; round < 50; ++round)
  {
    auto cfg = base_config();
    cfg.provisioner.idle_grace_s = 60 * static_cast<Seconds>(1 + rng() % 40);
    cfg.provisioner.node_rate_cents = 1 + static_cast<std::int64_t>(rng() % 500);
    Lab lab(cfg, std::make_unique<Store>());
    lab.advance_to(Monday + static_cast<Seconds>(rng() % 3600));
    const Seconds begin = lab.now();
    std::vector<std::string> students;
    for (int step = 0; step < 40; ++step)
    {
      const auto now = lab.now();
      const auto op = rng() % 4;
      try
      {
        if (op == 0)
          lab.provisioner().add_node(16, 32768, rng() % 2, 1 + static_cast<std::int64_t>(rng() % 300), now);
        else if (op == 1)
        {
          students.push_back(lab.add_student("s" + std::to_string(step), Tier::Simulated).student.id);
          lab.provisioner().provision_workspace(students.back(), rng() % 2, now);
        }
        else if (op == 2 && !students.empty())
        {
          const auto snap = lab.store().snapshot();
          if (const auto* ws = live_workspace(*snap, students[rng() % students.size()]))
            lab.provisioner().deprovision_workspace(ws->id, now);
        }
      }
      catch (const Error&)
      {
      }
      lab.advance_to(now + static_cast<Seconds>(rng() % 4000));
    }
    const auto now = lab.now();
    const auto s = lab.store().snapshot();
    for (int q = 0; q < 20; ++q)
    {
      const Seconds from = begin - 600 + static_cast<Seconds>(rng() % static_cast<std::uint64_t>(now - begin + 1200));
      const Seconds to = from + 1 + static_cast<Seconds>(rng() % 30000);
      std::int64_t want = 0;
      for (const auto& e : s->ledger)
        want += minute_oracle(from, to, e, now);
      ++queries;
      mismatches += cost_report(*s, from, to, now).total_cents != want;
    }
  }
  Lab lab(base_config(), std::make_unique<Store>());
  lab.advance_to(Monday);
  lab.provisioner().add_node(16, 32768, true, 90, Monday);
  lab.advance_to(Monday + 60);
  lab.provisioner().provision_workspace(lab.add_student("s", Tier::Simulated).student.id, true, lab.now());
  lab.advance_to(Monday + 7200);
  const auto two_hours = lab.provisioner().cost_report(Monday, Monday + 7200, lab.now()).total_cents;
  o.require(mismatches == 0, "minute oracle");
  o.require(two_hours == 180, "2 h at 90 c/h");
  o.detail << "queries " << queries << ", mismatches " << mismatches << ", 2 h node " << two_hours
           << " cents";
  return o;
}

//==============================================================================
Outcome crash_recovery()
{
  Outcome o;
  const auto sc = load_scenario(Scenarios / "class13.scn");
  Lab full(scenario_config(sc), std::make_unique<Store>());
  ScenarioRunner(sc, full).run();
  const auto log = full.store().events();
  const auto want = full.store().snapshot();
  std::mt19937_64 rng(8);
  std::size_t state_diffs = 0, log_diffs = 0;
  for (int i = 0; i < 50; ++i)
  {
    const auto cut = static_cast<long>(rng() % (log.size() + 1));
    Lab lab(scenario_config(sc), Store::from_events({log.begin(), log.begin() + cut}));
    const auto report = ScenarioRunner(sc, lab).run();
    const bool same = *lab.store().snapshot() == *want && report.passed();
    state_diffs += !same;
    log_diffs += lab.store().events() != log;
    if (!same && o.passed)
      o.detail << "cut " << cut << " differs; ";
    o.require(same, "resumed state");
  }
  o.require(log_diffs == 0, "resumed log");
  o.detail << "prefixes 50 of " << log.size() << " events, state differences " << state_diffs
           << ", log differences " << log_diffs;
  return o;
}

} // anonymous namespace

int main()
{
  struct Criterion
  {
    int number;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
    {1, "scale-100 workspaces on 13 billed nodes", scale_100},
    {2, "class-13 week without double-bookings", class_13},
    {3, "factory reset precedes every activation", factory_reset_ordering},
    {4, "no double-booking against an interval oracle", no_double_booking},
    {5, "overlay address uniqueness against a set oracle", overlay_uniqueness},
    {6, "kinematics exactness and determinism", kinematics},
    {7, "cost report against a minute oracle", cost_oracle},
    {8, "crash recovery from truncated logs", crash_recovery},
  };
  int failed = 0;
  for (const auto& c : criteria)
  {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try
    {
      out = c.run();
    }
    catch (const std::exception& e)
    {
      out.passed = false;
      out.detail << "threw " << e.what();
    }
    failed += !out.passed;
    std::cout << (out.passed ? "PASS" : "FAIL") << " criterion " << c.number << ": " << c.name
              << " (" << out.detail.str() << "; " << seconds_since(t0) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
