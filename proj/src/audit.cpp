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

#include <map>
#include <set>

namespace rlab {

std::vector<std::string> audit_double_booking(const SystemState& state)
{
  std::vector<std::string> out;
  std::vector<const Reservation*> held;
  for (const auto& [id, r] : state.reservations)
    if (r.state != ReservationState::Cancelled)
      held.push_back(&r);
  for (std::size_t i = 0; i < held.size(); ++i)
    for (std::size_t j = i + 1; j < held.size(); ++j)
    {
      const auto& a = *held[i];
      const auto& b = *held[j];
      if (!a.slot.overlaps(b.slot))
        continue;
      for (const auto& robot : a.robot_ids)
        for (const auto& other : b.robot_ids)
          if (robot == other)
            out.push_back(a.id + " and " + b.id + " both hold " + robot);
    }
  return out;
}

std::vector<std::string> audit_activation_order(std::span<const Event> log)
{
  std::vector<std::string> out;
  SystemState s;
  std::map<std::string, std::uint64_t> requested;
  // robot -> seq of last ok completion and the seq its job started at
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> completed;
  std::map<std::string, std::uint64_t> started;
  for (const auto& e : log)
  {
    const auto& p = e.payload;
    if (e.kind == events::ActivationRequested)
      requested[p.at("reservation_id").get<std::string>()] = e.seq;
    else if (e.kind == events::ReprovisionStarted)
      started[p.at("robot_id").get<std::string>()] = e.seq;
    else if (e.kind == events::ReprovisionCompleted && p.at("outcome") == "ok")
    {
      const auto robot = p.at("robot_id").get<std::string>();
      completed[robot] = {e.seq, started[robot]};
    }
    else if (e.kind == events::SessionActivated)
    {
      const auto rid = p.at("reservation_id").get<std::string>();
      const auto req = requested.find(rid);
      const auto it = s.reservations.find(rid);
      if (req == requested.end() || it == s.reservations.end())
        out.push_back("seq " + std::to_string(e.seq) + ": " + rid + " activated without a request");
      else
        for (const auto& robot : it->second.robot_ids)
        {
          const auto c = completed.find(robot);
          if (c == completed.end() || c->second.second < req->second)
            out.push_back("seq " + std::to_string(e.seq) + ": " + robot + " not reset for " + rid);
          const auto& r = s.robots.at(robot);
          if (r.battery_pct != 100.0 || !r.queue.empty())
            out.push_back("seq " + std::to_string(e.seq) + ": " + robot + " emerged dirty for " + rid);
        }
    }
    apply_event_in_place(s, e);
  }
  return out;
}

std::vector<std::string> audit_command_ownership(std::span<const Event> log)
{
  std::vector<std::string> out;
  SystemState s;
  for (const auto& e : log)
  {
    if (e.kind == events::CommandCompleted)
    {
      const auto robot_id = e.payload.at("robot_id").get<std::string>();
      const auto& robot = s.robots.at(robot_id);
      if (robot.queue.empty())
        out.push_back("seq " + std::to_string(e.seq) + ": " + robot_id + " completed with empty queue");
      else
      {
        const auto& owner = robot.queue.front().reservation_id;
        const auto& r = s.reservations.at(owner);
        if (robot.claimed_by != owner || r.state != ReservationState::Active
          || !r.slot.contains(e.ts))
          out.push_back("seq " + std::to_string(e.seq) + ": " + robot_id + " ran a command of " + owner);
      }
    }
    apply_event_in_place(s, e);
  }
  return out;
}

std::vector<std::string> audit_capacity(std::span<const Event> log)
{
  std::vector<std::string> out;
  SystemState s;
  for (const auto& e : log)
  {
    apply_event_in_place(s, e);
    if (e.kind != events::WorkspacePlaced)
      continue;
    const auto& node_id = e.payload.at("node_id").get<std::string>();
    const auto& n = s.nodes.at(node_id);
    const auto u = node_usage(s, node_id);
    if (u.cpu_cores > n.cpu_cores || u.ram_mb > n.ram_mb)
      out.push_back("seq " + std::to_string(e.seq) + ": " + node_id + " over capacity");
  }
  return out;
}

std::vector<std::string> audit_replay(std::span<const Event> log, const SystemState& live)
{
  if (replay(log) == live)
    return {};
  return {"replay of " + std::to_string(log.size()) + " events differs from the live state"};
}

} // namespace rlab
