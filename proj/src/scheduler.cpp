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

#include <rlab/scheduler.hpp>
#include <rlab/error.hpp>

#include <algorithm>

namespace rlab {

namespace {

bool terminal(ReservationState s)
{
  return s == ReservationState::Completed || s == ReservationState::Cancelled
    || s == ReservationState::NoShow;
}

} // anonymous namespace

//==============================================================================
std::vector<std::string> available_robots(const SystemState& state, const ScheduleQuery& query)
{
  if (!query.window.valid())
    throw Error(Errc::InvalidSlot, "query window is off the slot grid");
  std::vector<std::string> out;
  if (query.tier < Tier::RemoteLab)
    return out;
  for (const auto& [id, robot] : state.robots)
  {
    if (robot.location != Location::LabField)
      continue;
    if (!robot.capabilities.contains(query.required_capabilities))
      continue;
    const bool held = std::any_of(state.reservations.begin(), state.reservations.end(),
      [&](const auto& kv) {
        const auto& r = kv.second;
        return r.holds_robots() && r.slot.overlaps(query.window)
          && std::binary_search(r.robot_ids.begin(), r.robot_ids.end(), id);
      });
    if (!held)
      out.push_back(id);
  }
  return out;
}

std::int64_t quota_remaining(const SystemState& state, const std::string& student_id,
  Seconds week_of)
{
  const auto st = state.students.find(student_id);
  if (st == state.students.end())
    throw Error(Errc::UnknownStudent, "no student '" + student_id + "'");
  const auto week = iso_week_index(week_of);
  std::int64_t used = 0;
  for (const auto& [id, r] : state.reservations)
  {
    if (r.student_id != student_id || r.state == ReservationState::Cancelled)
      continue;
    if (iso_week_index(r.slot.start) == week)
      used += r.slot.duration_min;
  }
  return std::max<std::int64_t>(0, st->second.weekly_quota_min - used);
}

//==============================================================================
Scheduler::Scheduler(Store& store, SchedulerConfig config, Provisioner& provisioner)
: _store(store),
  _config(std::move(config)),
  _provisioner(provisioner)
{
}

Reservation Scheduler::request_reservation(const std::string& student_id,
  std::vector<std::string> robot_ids, const TimeSlot& slot, const std::string& field_layout_id,
  Seconds now, const Actor& actor, std::optional<std::int64_t> request_id)
{
  std::sort(robot_ids.begin(), robot_ids.end());
  robot_ids.erase(std::unique(robot_ids.begin(), robot_ids.end()), robot_ids.end());

  return _store.transact([&](Transaction& tx) {
    const auto& s = tx.state();
    if (!slot.valid())
      throw Error(Errc::InvalidSlot, "slots start on the 15-minute grid and last 15..120 minutes");
    const auto st = s.students.find(student_id);
    if (st == s.students.end())
      throw Error(Errc::UnknownStudent, "no student '" + student_id + "'");
    if (st->second.max_tier < Tier::RemoteLab)
      throw Error(Errc::TierDenied, "student " + student_id + " may not reserve lab robots");
    if (robot_ids.empty())
      throw Error(Errc::UnknownRobot, "reservation needs at least one robot");
    for (const auto& rid : robot_ids)
    {
      const auto it = s.robots.find(rid);
      if (it == s.robots.end() || it->second.location != Location::LabField)
        throw Error(Errc::UnknownRobot, "no lab robot '" + rid + "'", Json{{"robot_id", rid}});
    }
    if (!s.fields.count(field_layout_id))
      throw Error(Errc::UnknownField, "no field layout '" + field_layout_id + "'");
    if (slot.start < now)
      throw Error(Errc::PastSlot, "slot starts in the past");
    for (const auto& rid : robot_ids)
    {
      for (const auto& [id, other] : s.reservations)
      {
        if (other.holds_robots() && other.slot.overlaps(slot)
          && std::binary_search(other.robot_ids.begin(), other.robot_ids.end(), rid))
        {
          throw Error(Errc::Conflict, "robot " + rid + " is booked by " + id,
            Json{{"robot_id", rid}, {"reservation_id", id}});
        }
      }
    }
    const auto remaining = rlab::quota_remaining(s, student_id, slot.start);
    if (slot.duration_min > remaining)
    {
      throw Error(Errc::QuotaExceeded,
        "weekly quota exceeded: " + std::to_string(remaining) + " minutes remaining",
        Json{{"remaining_min", remaining}, {"requested_min", slot.duration_min}});
    }

    const auto id = next_id(s, "rsv");
    Json p;
    p["id"] = id;
    p["student_id"] = student_id;
    p["robot_ids"] = robot_ids;
    p["slot"] = slot;
    p["field_layout_id"] = field_layout_id;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::ReservationConfirmed, std::move(p), now, actor.id);
    return tx.state().reservations.at(id);
  });
}

std::vector<std::string> Scheduler::find_available_robots(const ScheduleQuery& query) const
{
  return available_robots(*_store.snapshot(), query);
}

Reservation Scheduler::cancel_reservation(const std::string& reservation_id, const Actor& actor,
  Seconds now, std::optional<std::int64_t> request_id)
{
  auto out = _store.transact([&](Transaction& tx) {
    const auto it = tx.state().reservations.find(reservation_id);
    if (it == tx.state().reservations.end())
      throw Error(Errc::UnknownReservation, "no reservation '" + reservation_id + "'");
    const auto& r = it->second;
    if (!actor.admin && actor.id != r.student_id)
      throw Error(Errc::NotOwner, "reservation " + reservation_id + " belongs to another student");
    if (r.state != ReservationState::Confirmed)
      throw Error(Errc::NotCancellable,
        "reservation " + reservation_id + " is " + to_string(r.state));
    Json p;
    p["reservation_id"] = reservation_id;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::ReservationCancelled, std::move(p), now, actor.id);
    return tx.state().reservations.at(reservation_id);
  });
  reap_workspaces(now);
  return out;
}

std::string Scheduler::workspace_for(const Reservation& r, Seconds now)
{
  const auto s = _store.snapshot();
  if (const auto* ws = live_workspace(*s, r.student_id))
  {
    if (ws->state == WorkspaceState::Requested || ws->state == WorkspaceState::Placing)
      _provisioner.place_workspace(ws->id, now);
    return ws->id;
  }
  if (!_config.auto_workspace)
    return {};
  try
  {
    WorkspaceOptions options;
    options.ephemeral = true;
    return _provisioner.provision_workspace(r.student_id, _config.auto_workspace_gpu, now,
      Actor::system(), options).id;
  }
  catch (const Error& e)
  {
    if (e.code() != Errc::NoCapacity)
      throw;
    return {};
  }
}

std::vector<ActivationOrder> Scheduler::tick_activate(Seconds now)
{
  return _store.transact([&](Transaction& tx) {
    std::vector<ActivationOrder> orders;
    std::vector<std::string> due;
    for (const auto& [id, r] : tx.state().reservations)
    {
      if (r.state == ReservationState::Confirmed && r.slot.contains(now))
        due.push_back(id);
    }

    for (const auto& id : due)
    {
      if (tx.state().reservations.at(id).activation_seq == 0)
      {
        const auto& r = tx.state().reservations.at(id);
        const bool free = std::all_of(r.robot_ids.begin(), r.robot_ids.end(),
          [&](const std::string& rid) { return tx.state().robots.at(rid).claimed_by.empty(); });
        if (!free)
          continue;
        const auto ws_id = workspace_for(r, now);
        Json p;
        p["reservation_id"] = id;
        p["workspace_id"] = ws_id;
        tx.append(events::ActivationRequested, std::move(p), now, "system");
        const auto& claimed = tx.state().reservations.at(id);
        orders.push_back(ActivationOrder{id, claimed.robot_ids, ws_id, now});
      }

      const auto r = tx.state().reservations.at(id);
      for (const auto& rid : r.robot_ids)
      {
        const auto& robot = tx.state().robots.at(rid);
        if (robot.state != RobotState::Idle || robot.claimed_by != id)
          continue;
        Json c;
        c["robot_id"] = rid;
        c["from"] = RobotState::Idle;
        c["to"] = RobotState::Reserved;
        tx.append(events::RobotStateChanged, std::move(c), now, "system");
      }

      for (const auto& rid : r.robot_ids)
      {
        const auto& robot = tx.state().robots.at(rid);
        if (r.reprovision_started.count(rid) || robot.job)
          continue;
        if (robot.state == RobotState::Reserved || robot.state == RobotState::Fault)
          _provisioner.start_reprovision(rid, now, id);
      }

      const auto& cur = tx.state().reservations.at(id);
      const bool ready = std::all_of(cur.robot_ids.begin(), cur.robot_ids.end(),
        [&](const std::string& rid) {
          return cur.reprovision_done.count(rid)
            && tx.state().robots.at(rid).state == RobotState::Reserved;
        });
      if (ready)
      {
        Json p;
        p["reservation_id"] = id;
        tx.append(events::SessionActivated, std::move(p), now, "system");
      }
    }
    return orders;
  });
}

std::vector<std::string> Scheduler::tick_expire(Seconds now)
{
  auto ended = _store.transact([&](Transaction& tx) {
    std::vector<std::pair<std::string, ReservationState>> due;
    for (const auto& [id, r] : tx.state().reservations)
    {
      if (now < r.slot.end())
        continue;
      if (r.state == ReservationState::Active)
        due.emplace_back(id, ReservationState::Completed);
      else if (r.state == ReservationState::Confirmed)
        due.emplace_back(id, ReservationState::NoShow);
    }
    std::vector<std::string> out;
    for (const auto& [id, to] : due)
    {
      Json p;
      p["reservation_id"] = id;
      tx.append(to == ReservationState::Completed ? events::SessionCompleted
        : events::ReservationNoShow, std::move(p), now, "system");
      out.push_back(id);
    }
    return out;
  });
  reap_workspaces(now);
  return ended;
}

void Scheduler::reap_workspaces(Seconds now)
{
  _store.transact([&](Transaction& tx) {
    std::set<std::string> reap;
    for (const auto& [id, r] : tx.state().reservations)
    {
      if (!terminal(r.state) || r.workspace_id.empty())
        continue;
      const auto& ws = tx.state().workspaces.at(r.workspace_id);
      if (!ws.ephemeral)
        continue;
      switch (ws.state)
      {
        case WorkspaceState::Requested:
        case WorkspaceState::Ready:
        case WorkspaceState::InUse:
        case WorkspaceState::Fault:
          reap.insert(ws.id);
          break;
        default:
          break;
      }
    }
    for (const auto& id : reap)
      _provisioner.deprovision_workspace(id, now);
  });
}

std::int64_t Scheduler::quota_remaining(const std::string& student_id, Seconds week_of) const
{
  return rlab::quota_remaining(*_store.snapshot(), student_id, week_of);
}

std::optional<Seconds> Scheduler::next_due(const SystemState& state, Seconds after) const
{
  std::optional<Seconds> best;
  auto consider = [&](Seconds t) {
    if (t > after && (!best || t < *best))
      best = t;
  };
  for (const auto& [id, r] : state.reservations)
  {
    if (r.state == ReservationState::Confirmed)
    {
      if (r.activation_seq == 0)
        consider(r.slot.start);
      consider(r.slot.end());
    }
    else if (r.state == ReservationState::Active)
    {
      consider(r.slot.end());
    }
    else if (terminal(r.state) && !r.workspace_id.empty())
    {
      const auto& ws = state.workspaces.at(r.workspace_id);
      if (ws.ephemeral && ws.stage_due && ws.state != WorkspaceState::Released)
        consider(*ws.stage_due);
    }
  }
  return best;
}

} // namespace rlab
