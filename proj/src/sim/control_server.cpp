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

#include <rlab/sim/control_server.hpp>
#include <rlab/error.hpp>

#include <algorithm>
#include <cmath>

namespace rlab::sim {

CameraFrame camera_frame(const SystemState& state, const Camera& camera, Seconds now)
{
  CameraFrame frame;
  frame.camera_id = camera.id;
  frame.ts = now;
  const double w = camera.x1 - camera.x0;
  const double h = camera.y1 - camera.y0;
  for (const auto& [id, robot] : state.robots)
  {
    if (!robot.spawned || robot.field_id != camera.field_id)
      continue;
    frame.tick = std::max(frame.tick, robot.sim_tick);
    if (robot.disconnected || !camera.sees(robot.pose))
      continue;
    VisibleRobot v;
    v.robot_id = id;
    v.pose = robot.pose;
    v.u = w > 0.0 ? (robot.pose.x - camera.x0) / w : 0.0;
    v.v = h > 0.0 ? (robot.pose.y - camera.y0) / h : 0.0;
    frame.robots.push_back(v);
  }
  return frame;
}

//==============================================================================
ControlServer::ControlServer(Store& store, SimConfig config, Overlay& overlay)
: _store(store),
  _config(std::move(config)),
  _overlay(overlay)
{
}

Robot ControlServer::spawn_agent(const std::string& robot_id, const std::string& field_id,
  std::uint64_t seed, Seconds now, const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store.transact([&](Transaction& tx) {
    const auto it = tx.state().robots.find(robot_id);
    if (it == tx.state().robots.end())
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    if (!tx.state().fields.count(field_id))
      throw Error(Errc::UnknownField, "no field layout '" + field_id + "'");
    if (it->second.spawned)
      throw Error(Errc::AlreadySpawned, "agent for " + robot_id + " already spawned");
    Json p;
    p["robot_id"] = robot_id;
    p["field_id"] = field_id;
    p["seed"] = seed;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::AgentSpawned, std::move(p), now, actor.id);
    _overlay.enroll(PeerKind::LabRobot, robot_id, now, actor);
    _agents.erase(robot_id);
    agent_for(tx, robot_id);
    return tx.state().robots.at(robot_id);
  });
}

ControlServer::Agent& ControlServer::agent_for(Transaction& tx, const std::string& robot_id)
{
  const auto& robot = tx.state().robots.at(robot_id);
  auto it = _agents.find(robot_id);
  if (it != _agents.end())
  {
    const auto& a = it->second;
    if (a.pose == robot.pose && a.battery == robot.battery_pct
      && a.firmware == robot.firmware_version && a.field_id == robot.field_id)
      return it->second;
  }

  FieldLayout field;
  if (!robot.field_id.empty())
  {
    field = tx.state().fields.at(robot.field_id);
  }
  else
  {
    field.rows = _config.field_rows;
    field.cols = _config.field_cols;
    field.cell_m = _config.field_cell_m;
    field.cells.assign(static_cast<std::size_t>(field.rows),
      std::string(static_cast<std::size_t>(field.cols), '.'));
  }
  const std::uint64_t tick = std::max(robot.sim_tick,
    it == _agents.end() ? std::uint64_t{0} : it->second.sim.tick());
  Agent a{AgentSim(robot_id, std::move(field), robot.wheel_bias, _config.dt), robot.pose,
    robot.battery_pct, robot.firmware_version, robot.field_id, {}, 0};
  a.sim.load(robot.pose, robot.battery_pct, tick);
  if (it != _agents.end())
  {
    a.cmd_seq = it->second.cmd_seq;
    a.remaining = it->second.remaining;
  }
  return _agents.insert_or_assign(robot_id, std::move(a)).first->second;
}

std::optional<Telemetry> ControlServer::step_one(Transaction& tx, const std::string& robot_id,
  Seconds now)
{
  const auto& robot = tx.state().robots.at(robot_id);
  if (!robot.spawned || robot.disconnected)
    return std::nullopt;
  auto& a = agent_for(tx, robot_id);

  const QueuedCommand* head = nullptr;
  if (robot.state == RobotState::Active && !robot.queue.empty())
  {
    head = &robot.queue.front();
    if (a.cmd_seq != head->accepted_seq)
    {
      a.cmd_seq = head->accepted_seq;
      a.remaining = head->command.duration_ticks;
    }
  }
  const auto state = robot.state;
  const auto t = a.sim.step(head ? &head->command : nullptr, state);
  if (head)
    --a.remaining;

  auto sync = [&](const Robot& r) {
    a.pose = r.pose;
    a.battery = r.battery_pct;
    a.firmware = r.firmware_version;
    a.field_id = r.field_id;
  };

  if (t.state == RobotState::Fault && state != RobotState::Fault)
  {
    Json p;
    p["robot_id"] = robot_id;
    p["battery_pct"] = t.battery_pct;
    p["pose"] = t.pose;
    p["tick"] = t.tick;
    tx.append(events::RobotFaulted, std::move(p), now, "system");
    sync(tx.state().robots.at(robot_id));
  }
  else if (head && a.remaining <= 0)
  {
    Json p;
    p["robot_id"] = robot_id;
    p["accepted_seq"] = head->accepted_seq;
    p["pose"] = t.pose;
    p["battery_pct"] = t.battery_pct;
    p["tick"] = t.tick;
    a.cmd_seq = 0;
    tx.append(events::CommandCompleted, std::move(p), now, "system");
    sync(tx.state().robots.at(robot_id));
  }
  publish(t);
  return t;
}

std::uint64_t ControlServer::dispatch(const std::string& session_id, const std::string& robot_id,
  const DriveCommand& command, Seconds now, const Actor& actor,
  std::optional<std::int64_t> request_id)
{
  return _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    const auto it = s.robots.find(robot_id);
    if (it == s.robots.end())
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    const auto& robot = it->second;
    if (!std::isfinite(command.v) || !std::isfinite(command.omega)
      || std::abs(command.v) > _config.max_v || std::abs(command.omega) > _config.max_omega
      || command.duration_ticks <= 0)
    {
      throw Error(Errc::BadCommand, "command outside |v| <= " + std::to_string(_config.max_v)
        + ", |omega| <= " + std::to_string(_config.max_omega) + ", ticks >= 1");
    }
    if (robot.state == RobotState::Fault)
      throw Error(Errc::RobotFault, "robot " + robot_id + " is in Fault");
    const auto r = s.reservations.find(session_id);
    const bool holds = r != s.reservations.end() && r->second.state == ReservationState::Active
      && r->second.slot.contains(now) && robot.claimed_by == session_id
      && robot.state == RobotState::Active && (actor.admin || actor.id == r->second.student_id);
    if (!holds)
      throw Error(Errc::NotReserved, "session " + session_id + " does not hold " + robot_id);
    if (robot.queue.size() >= _config.queue_depth)
      throw Error(Errc::QueueFull, "robot " + robot_id + " already has "
        + std::to_string(robot.queue.size()) + " queued commands");
    Json p;
    p["robot_id"] = robot_id;
    p["reservation_id"] = session_id;
    p["command"] = command;
    if (request_id)
      p["request_id"] = *request_id;
    return tx.append(events::CommandAccepted, std::move(p), now, actor.id).seq;
  });
}

std::vector<Telemetry> ControlServer::step(const std::string& robot_id, std::int64_t ticks,
  Seconds now)
{
  return _store.transact([&](Transaction& tx) {
    if (!tx.state().robots.count(robot_id))
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    std::vector<Telemetry> out;
    for (std::int64_t i = 0; i < ticks; ++i)
    {
      if (auto t = step_one(tx, robot_id, now))
        out.push_back(*t);
    }
    return out;
  });
}

std::vector<Telemetry> ControlServer::step_all(std::int64_t ticks, Seconds now, bool active_only)
{
  return _store.transact([&](Transaction& tx) {
    std::vector<Telemetry> out;
    for (std::int64_t i = 0; i < ticks; ++i)
    {
      std::vector<std::string> ids;
      for (const auto& [id, robot] : tx.state().robots)
      {
        if (robot.spawned && (!active_only || robot.state == RobotState::Active))
          ids.push_back(id);
      }
      for (const auto& id : ids)
      {
        if (auto t = step_one(tx, id, now))
          out.push_back(*t);
      }
    }
    return out;
  });
}

std::vector<Telemetry> ControlServer::run_until_idle(const std::string& robot_id, Seconds now,
  std::int64_t max_ticks)
{
  return _store.transact([&](Transaction& tx) {
    if (!tx.state().robots.count(robot_id))
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    std::vector<Telemetry> out;
    for (std::int64_t i = 0; i < max_ticks; ++i)
    {
      const auto& robot = tx.state().robots.at(robot_id);
      if (robot.queue.empty() || robot.state != RobotState::Active)
        break;
      auto t = step_one(tx, robot_id, now);
      if (!t)
        break;
      out.push_back(*t);
    }
    return out;
  });
}

Event ControlServer::inject_fault(const std::string& robot_id, FaultKind kind, Seconds now,
  const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store.transact([&](Transaction& tx) {
    if (!tx.state().robots.count(robot_id))
      throw Error(Errc::UnknownRobot, "no robot '" + robot_id + "'");
    Json p;
    p["robot_id"] = robot_id;
    p["fault"] = kind;
    if (request_id)
      p["request_id"] = *request_id;
    return tx.append(events::FaultInjected, std::move(p), now, actor.id);
  });
}

std::vector<CameraFrame> ControlServer::camera_frames(const std::string& camera_id,
  Seconds now) const
{
  const auto s = _store.snapshot();
  const auto it = s->cameras.find(camera_id);
  if (it == s->cameras.end())
    throw Error(Errc::UnknownCamera, "no camera '" + camera_id + "'");
  return {camera_frame(*s, it->second, now)};
}

std::uint64_t ControlServer::subscribe(std::vector<std::string> robot_ids, Subscriber callback)
{
  std::lock_guard<std::mutex> lock(_subs_mutex);
  const auto id = _next_sub++;
  std::sort(robot_ids.begin(), robot_ids.end());
  _subs.emplace(id, Subscription{std::move(robot_ids), std::move(callback)});
  return id;
}

void ControlServer::unsubscribe(std::uint64_t id)
{
  std::lock_guard<std::mutex> lock(_subs_mutex);
  _subs.erase(id);
}

void ControlServer::publish(const Telemetry& t)
{
  std::vector<Subscriber> targets;
  {
    std::lock_guard<std::mutex> lock(_subs_mutex);
    for (const auto& [id, sub] : _subs)
    {
      if (std::binary_search(sub.robot_ids.begin(), sub.robot_ids.end(), t.robot_id))
        targets.push_back(sub.callback);
    }
  }
  for (const auto& cb : targets)
    cb(t);
}

std::uint64_t ControlServer::current_tick(const std::string& robot_id) const
{
  return _store.transact([&](Transaction& tx) -> std::uint64_t {
    const auto it = _agents.find(robot_id);
    if (it != _agents.end())
      return it->second.sim.tick();
    const auto r = tx.state().robots.find(robot_id);
    return r == tx.state().robots.end() ? 0 : r->second.sim_tick;
  });
}

void ControlServer::rehydrate()
{
  _store.transact([&](Transaction&) { _agents.clear(); });
}

} // namespace rlab::sim
