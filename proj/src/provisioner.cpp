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

#include <rlab/provisioner.hpp>
#include <rlab/error.hpp>

#include <algorithm>

namespace rlab {

namespace {

struct Bin
{
  std::string node_id;
  bool has_gpu = false;
  std::int64_t cpu = 0;
  std::int64_t ram = 0;
};

bool fits(const Bin& bin, const WorkspaceDemand& d)
{
  return bin.cpu >= d.cpu_cores && bin.ram >= d.ram_mb && (!d.needs_gpu || bin.has_gpu);
}

std::vector<Bin> open_bins(const SystemState& s)
{
  std::vector<Bin> bins;
  for (const auto& [id, node] : s.nodes)
  {
    if (node.state != NodeState::Ready && node.state != NodeState::Provisioning)
      continue;
    const auto used = node_usage(s, id);
    bins.push_back(Bin{id, node.has_gpu, node.cpu_cores - used.cpu_cores, node.ram_mb - used.ram_mb});
  }
  return bins;
}

/// Requested workspaces (plus an optional extra demand) that the current and
/// booting nodes cannot absorb, packed greedily in id order.
std::vector<WorkspaceDemand> unmet_demand(const SystemState& s,
  const std::optional<WorkspaceDemand>& extra = std::nullopt)
{
  auto bins = open_bins(s);
  std::vector<WorkspaceDemand> pending;
  for (const auto& [id, ws] : s.workspaces)
  {
    if (ws.state == WorkspaceState::Requested)
      pending.push_back(ws.demand);
  }
  if (extra)
    pending.push_back(*extra);

  std::vector<WorkspaceDemand> unmet;
  for (const auto& d : pending)
  {
    auto it = std::find_if(bins.begin(), bins.end(), [&](const Bin& b) { return fits(b, d); });
    if (it == bins.end())
    {
      unmet.push_back(d);
      continue;
    }
    it->cpu -= d.cpu_cores;
    it->ram -= d.ram_mb;
  }
  return unmet;
}

} // anonymous namespace

//==============================================================================
std::int64_t free_units(const SystemState& state, const Node& node, const WorkspaceDemand& demand)
{
  const auto used = node_usage(state, node.id);
  const std::int64_t cpu = (node.cpu_cores - used.cpu_cores) / demand.cpu_cores;
  const std::int64_t ram = (node.ram_mb - used.ram_mb) / demand.ram_mb;
  return std::max<std::int64_t>(0, std::min(cpu, ram));
}

std::optional<std::string> select_node(const PlacementRequest& request, const SystemState& state)
{
  struct Candidate
  {
    std::int64_t free;
    const Node* node;
  };
  std::vector<Candidate> candidates;
  for (const auto& [id, node] : state.nodes)
  {
    if (node.state != NodeState::Ready)
      continue;
    if (request.demand.needs_gpu && !node.has_gpu)
      continue;
    candidates.push_back(Candidate{free_units(state, node, request.demand), &node});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
    [](const Candidate& a, const Candidate& b) { return a.free > b.free; });
  for (const auto& c : candidates)
  {
    if (c.free >= 1)
      return c.node->id;
  }
  return std::nullopt;
}

Seconds reprovision_duration(std::int64_t firmware_size_mb, const ProvisionerConfig& config)
{
  const auto rate = config.flash_rate_mb_per_s;
  return config.flash_base_s + (firmware_size_mb + rate - 1) / rate;
}

CostReport cost_report(const SystemState& state, Seconds from, Seconds to, Seconds now)
{
  if (from >= to)
    throw Error(Errc::BadRange, "cost report needs from < to");
  CostReport report;
  report.from = from;
  report.to = to;
  for (const auto& entry : state.ledger)
  {
    const Seconds start = std::max(from, entry.from);
    const Seconds end = std::min(to, entry.to.value_or(now));
    if (end <= start)
      continue;
    CostLine line;
    line.node_id = entry.node_id;
    line.rate_cents_per_hour = entry.rate_cents_per_hour;
    line.billed_minutes = (end - start + 59) / 60;
    line.amount_cents = (line.billed_minutes * entry.rate_cents_per_hour + 59) / 60;
    report.total_cents += line.amount_cents;
    report.nodes.push_back(line);
  }
  std::sort(report.nodes.begin(), report.nodes.end(),
    [](const CostLine& a, const CostLine& b) { return a.node_id < b.node_id; });
  return report;
}

//==============================================================================
Provisioner::Provisioner(Store& store, ProvisionerConfig config, Overlay& overlay)
: _store(store),
  _config(std::move(config)),
  _overlay(overlay)
{
}

std::int32_t Provisioner::active_nodes(const SystemState& state) const
{
  std::int32_t n = 0;
  for (const auto& [id, node] : state.nodes)
  {
    if (node.state != NodeState::Released)
      ++n;
  }
  return n;
}

bool Provisioner::capacity_possible(const SystemState& state, const WorkspaceDemand& demand) const
{
  if (unmet_demand(state, demand).empty())
    return true;
  const bool template_fits = _config.node_cpu_cores >= demand.cpu_cores
    && _config.node_ram_mb >= demand.ram_mb && (!demand.needs_gpu || _config.node_has_gpu);
  return template_fits && active_nodes(state) < _config.max_nodes;
}

Workspace Provisioner::provision_workspace(const std::string& student_id, bool needs_gpu,
  Seconds now, const Actor& actor, WorkspaceOptions options)
{
  return _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    if (!s.students.count(student_id))
      throw Error(Errc::UnknownStudent, "no student '" + student_id + "'");
    if (const auto* ws = live_workspace(s, student_id))
      throw Error(Errc::AlreadyProvisioned, "student already has workspace " + ws->id,
        Json{{"workspace_id", ws->id}});
    WorkspaceDemand demand = _config.workspace_demand;
    demand.needs_gpu = needs_gpu;
    if (!capacity_possible(s, demand))
      throw Error(Errc::NoCapacity, "no node can host the workspace and max_nodes is reached");

    const auto id = next_id(s, "ws");
    Json p;
    p["id"] = id;
    p["student_id"] = student_id;
    p["image_version"] = _config.image_version;
    p["demand"] = demand;
    p["ephemeral"] = options.ephemeral;
    if (options.request_id)
      p["request_id"] = *options.request_id;
    tx.append(events::WorkspaceRequested, std::move(p), now, actor.id);
    place_workspace(id, now);
    return tx.state().workspaces.at(id);
  });
}

std::optional<std::string> Provisioner::place_workspace(const std::string& workspace_id, Seconds now)
{
  return _store.transact([&](Transaction& tx) -> std::optional<std::string> {
    const auto it = tx.state().workspaces.find(workspace_id);
    if (it == tx.state().workspaces.end())
      throw Error(Errc::UnknownWorkspace, "no workspace '" + workspace_id + "'");
    if (it->second.state == WorkspaceState::Placing)
    {
      Json pulling;
      pulling["workspace_id"] = workspace_id;
      pulling["due"] = now + _config.image_pull_s;
      tx.append(events::WorkspacePulling, std::move(pulling), now, "system");
      return tx.state().workspaces.at(workspace_id).node_id;
    }
    if (it->second.state != WorkspaceState::Requested)
      return it->second.node_id;
    const PlacementRequest request{workspace_id, it->second.demand};

    auto node = select_node(request, tx.state());
    if (!node)
    {
      scale_nodes(now);
      node = select_node(request, tx.state());
    }
    if (!node)
    {
      const auto& s = tx.state();
      const bool booting = std::any_of(s.nodes.begin(), s.nodes.end(), [&](const auto& kv) {
        const auto& n = kv.second;
        return n.state == NodeState::Provisioning && (!request.demand.needs_gpu || n.has_gpu)
          && n.cpu_cores >= request.demand.cpu_cores && n.ram_mb >= request.demand.ram_mb;
      });
      if (!booting)
        throw Error(Errc::NoCapacity, "no node can host workspace " + workspace_id);
      return std::nullopt;
    }

    Json placed;
    placed["workspace_id"] = workspace_id;
    placed["node_id"] = *node;
    tx.append(events::WorkspacePlaced, std::move(placed), now, "system");
    Json pulling;
    pulling["workspace_id"] = workspace_id;
    pulling["due"] = now + _config.image_pull_s;
    tx.append(events::WorkspacePulling, std::move(pulling), now, "system");
    return node;
  });
}

std::vector<std::string> Provisioner::scale_nodes(Seconds now)
{
  return _store.transact([&](Transaction& tx) {
    std::vector<std::string> added;
    auto unmet = unmet_demand(tx.state());
    while (!unmet.empty() && active_nodes(tx.state()) < _config.max_nodes)
    {
      const auto id = next_id(tx.state(), "node");
      Json p;
      p["id"] = id;
      p["cpu_cores"] = _config.node_cpu_cores;
      p["ram_mb"] = _config.node_ram_mb;
      p["has_gpu"] = _config.node_has_gpu;
      p["hourly_rate_cents"] = _config.node_rate_cents;
      p["ready_due"] = now + _config.node_boot_s;
      tx.append(events::NodeProvisioned, std::move(p), now, "system");
      added.push_back(id);
      const auto before = unmet.size();
      unmet = unmet_demand(tx.state());
      if (unmet.size() >= before)
        break; // the template cannot host what is left
    }

    std::vector<std::string> idle;
    for (const auto& [id, node] : tx.state().nodes)
    {
      if (node.state == NodeState::Draining && node_usage(tx.state(), id).workspaces == 0)
      {
        idle.push_back(id);
        continue;
      }
      if (node.state != NodeState::Ready || !node.idle_since)
        continue;
      if (now - *node.idle_since < _config.idle_grace_s)
        continue;
      if (node_usage(tx.state(), id).workspaces != 0)
        continue;
      idle.push_back(id);
    }
    for (const auto& id : idle)
    {
      Json p;
      p["node_id"] = id;
      if (tx.state().nodes.at(id).state == NodeState::Ready)
        tx.append(events::NodeDraining, p, now, "system");
      tx.append(events::NodeReleased, p, now, "system");
    }
    return added;
  });
}

Node Provisioner::add_node(std::int32_t cpu_cores, std::int64_t ram_mb, bool has_gpu,
  std::int64_t hourly_rate_cents, Seconds now, const Actor& actor,
  std::optional<std::int64_t> request_id)
{
  return _store.transact([&](Transaction& tx) {
    if (cpu_cores <= 0 || ram_mb <= 0 || hourly_rate_cents < 0)
      throw Error(Errc::BadRequest, "node needs positive capacity and a non-negative rate");
    const auto id = next_id(tx.state(), "node");
    Json p;
    p["id"] = id;
    p["cpu_cores"] = cpu_cores;
    p["ram_mb"] = ram_mb;
    p["has_gpu"] = has_gpu;
    p["hourly_rate_cents"] = hourly_rate_cents;
    p["ready_due"] = now + _config.node_boot_s;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::NodeProvisioned, std::move(p), now, actor.id);
    return tx.state().nodes.at(id);
  });
}

Workspace Provisioner::deprovision_workspace(const std::string& workspace_id, Seconds now,
  const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    const auto it = s.workspaces.find(workspace_id);
    if (it == s.workspaces.end())
      throw Error(Errc::UnknownWorkspace, "no workspace '" + workspace_id + "'");
    const auto ws = it->second;
    if (ws.state == WorkspaceState::Released)
      throw Error(Errc::AlreadyReleased, "workspace " + workspace_id + " already released");
    if (ws.state == WorkspaceState::Stopping)
    {
      finish_stop(workspace_id, now, actor);
      return tx.state().workspaces.at(workspace_id);
    }

    Json p;
    p["workspace_id"] = workspace_id;
    if (request_id)
      p["request_id"] = *request_id;
    if (ws.state == WorkspaceState::Requested)
    {
      tx.append(events::WorkspaceReleased, std::move(p), now, actor.id);
      return tx.state().workspaces.at(workspace_id);
    }
    if (ws.state != WorkspaceState::Ready && ws.state != WorkspaceState::InUse
      && ws.state != WorkspaceState::Fault)
      throw Error(Errc::WorkspaceNotReady,
        "workspace " + workspace_id + " is " + to_string(ws.state));

    tx.append(events::WorkspaceStopping, std::move(p), now, actor.id);
    finish_stop(workspace_id, now, actor);
    return tx.state().workspaces.at(workspace_id);
  });
}

void Provisioner::finish_stop(const std::string& workspace_id, Seconds now, const Actor& actor)
{
  _store.transact([&](Transaction& tx) {
    const auto& ws = tx.state().workspaces.at(workspace_id);
    if (!ws.peer_id.empty())
    {
      const auto peer = tx.state().peers.find(ws.peer_id);
      if (peer != tx.state().peers.end() && peer->second.status != PeerStatus::Evicted)
        _overlay.evict(ws.peer_id, now, "released", actor);
    }
    Json p;
    p["workspace_id"] = workspace_id;
    tx.append(events::WorkspaceReleased, std::move(p), now, actor.id);
  });
}

void Provisioner::mark_in_use(const std::string& workspace_id, Seconds now, const Actor& actor)
{
  _store.transact([&](Transaction& tx) {
    const auto it = tx.state().workspaces.find(workspace_id);
    if (it == tx.state().workspaces.end())
      throw Error(Errc::UnknownWorkspace, "no workspace '" + workspace_id + "'");
    if (it->second.state == WorkspaceState::InUse)
      return;
    if (it->second.state != WorkspaceState::Ready)
      throw Error(Errc::WorkspaceNotReady, "workspace " + workspace_id + " is not Ready");
    Json p;
    p["workspace_id"] = workspace_id;
    tx.append(events::WorkspaceInUse, std::move(p), now, actor.id);
  });
}

ReprovisionJob Provisioner::start_reprovision(const std::string& robot_id, Seconds now,
  const std::string& reservation_id, const Actor& actor)
{
  return _store.transact([&](Transaction& tx) {
    const auto it = tx.state().robots.find(robot_id);
    if (it == tx.state().robots.end())
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    const auto& robot = it->second;
    if (robot.state == RobotState::Active || robot.state == RobotState::Reprovisioning)
      throw Error(Errc::Busy, "robot " + robot_id + " is " + to_string(robot.state));
    Json p;
    p["robot_id"] = robot_id;
    p["expected_duration_s"] = reprovision_duration(robot.firmware_size_mb, _config);
    p["target_firmware_version"] = robot.firmware_version + 1;
    p["reservation_id"] = reservation_id;
    tx.append(events::ReprovisionStarted, std::move(p), now, actor.id);
    return *tx.state().robots.at(robot_id).job;
  });
}

Robot Provisioner::complete_reprovision(const std::string& robot_id, Seconds now)
{
  return _store.transact([&](Transaction& tx) {
    const auto it = tx.state().robots.find(robot_id);
    if (it == tx.state().robots.end() || !it->second.job)
      throw Error(Errc::UnknownJob, "no reprovision job for '" + robot_id + "'");
    const auto& robot = it->second;
    if (now < robot.job->due())
      throw Error(Errc::TooEarly, "reprovision of " + robot_id + " finishes at "
        + std::to_string(robot.job->due()));
    Json p;
    p["robot_id"] = robot_id;
    p["outcome"] = robot.flash_failure_armed ? "flash_failure" : "ok";
    tx.append(events::ReprovisionCompleted, std::move(p), now, "system");
    return tx.state().robots.at(robot_id);
  });
}

void Provisioner::tick(Seconds now)
{
  _store.transact([&](Transaction& tx) {
    std::vector<std::string> due;
    for (const auto& [id, ws] : tx.state().workspaces)
    {
      if (ws.state == WorkspaceState::Stopping)
        due.push_back(id);
    }
    for (const auto& id : due)
      finish_stop(id, now, Actor::system());

    due.clear();
    for (const auto& [id, node] : tx.state().nodes)
    {
      if (node.state == NodeState::Provisioning && node.ready_due <= now)
        due.push_back(id);
    }
    for (const auto& id : due)
    {
      Json p;
      p["node_id"] = id;
      tx.append(events::NodeReady, std::move(p), now, "system");
    }

    due.clear();
    for (const auto& [id, robot] : tx.state().robots)
    {
      if (robot.job && robot.job->due() <= now)
        due.push_back(id);
    }
    for (const auto& id : due)
      complete_reprovision(id, now);

    due.clear();
    for (const auto& [id, ws] : tx.state().workspaces)
    {
      if (ws.state == WorkspaceState::Pulling && ws.stage_due && *ws.stage_due <= now)
        due.push_back(id);
    }
    for (const auto& id : due)
    {
      try
      {
        if (!tx.state().workspaces.at(id).overlay_addr)
          _overlay.enroll(PeerKind::CloudWorkspace, id, now);
      }
      catch (const Error& e)
      {
        if (e.code() != Errc::PoolExhausted)
          throw;
        Json p;
        p["workspace_id"] = id;
        p["reason"] = "overlay address pool exhausted";
        tx.append(events::WorkspaceFaulted, std::move(p), now, "system");
        continue;
      }
      Json p;
      p["workspace_id"] = id;
      p["due"] = now + _config.container_start_s;
      tx.append(events::WorkspaceStarting, std::move(p), now, "system");
    }

    due.clear();
    for (const auto& [id, ws] : tx.state().workspaces)
    {
      if (ws.state == WorkspaceState::Starting && ws.stage_due && *ws.stage_due <= now)
        due.push_back(id);
    }
    for (const auto& id : due)
    {
      Json p;
      p["workspace_id"] = id;
      tx.append(events::WorkspaceReady, std::move(p), now, "system");
    }

    due.clear();
    for (const auto& [id, ws] : tx.state().workspaces)
    {
      if (ws.state == WorkspaceState::Requested || ws.state == WorkspaceState::Placing)
        due.push_back(id);
    }
    for (const auto& id : due)
    {
      const auto& ws = tx.state().workspaces.at(id);
      if (ws.state == WorkspaceState::Placing)
        place_workspace(id, now);
      else if (auto node = select_node(PlacementRequest{id, ws.demand}, tx.state()))
        place_workspace(id, now);
    }

    scale_nodes(now);
  });
}

CostReport Provisioner::cost_report(Seconds from, Seconds to, Seconds now) const
{
  return rlab::cost_report(*_store.snapshot(), from, to, now);
}

std::optional<Seconds> Provisioner::next_due(const SystemState& state, Seconds after) const
{
  std::optional<Seconds> best;
  auto consider = [&](Seconds t) {
    if (t > after && (!best || t < *best))
      best = t;
  };
  for (const auto& [id, node] : state.nodes)
  {
    if (node.state == NodeState::Provisioning)
      consider(node.ready_due);
    if (node.state == NodeState::Ready && node.idle_since)
      consider(*node.idle_since + _config.idle_grace_s);
  }
  for (const auto& [id, robot] : state.robots)
  {
    if (robot.job)
      consider(robot.job->due());
  }
  for (const auto& [id, ws] : state.workspaces)
  {
    if (ws.stage_due && (ws.state == WorkspaceState::Pulling || ws.state == WorkspaceState::Starting))
      consider(*ws.stage_due);
  }
  return best;
}

} // namespace rlab
