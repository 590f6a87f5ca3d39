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

#include <rlab/state.hpp>
#include <rlab/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <unordered_map>

namespace rlab {

namespace {

[[noreturn]] void reject(const std::string& message)
{
  throw Error(Errc::ValidationRejected, message);
}

[[noreturn]] void illegal(const std::string& message)
{
  throw Error(Errc::IllegalTransition, message);
}

template<typename Map>
auto& must_find(Map& map, const std::string& id, const char* what)
{
  auto it = map.find(id);
  if (it == map.end())
    reject(std::string("unknown ") + what + " '" + id + "'");
  return it->second;
}

void expect_next_id(const SystemState& s, std::string_view prefix, const std::string& id)
{
  const auto expected = next_id(s, prefix);
  if (id != expected)
    reject("expected id '" + expected + "', got '" + id + "'");
}

void bump(SystemState& s, std::string_view prefix)
{
  ++s.id_counters[std::string(prefix)];
}

void note_request(SystemState& s, const Json& p)
{
  if (p.contains("request_id") && !p.at("request_id").is_null())
    s.applied_requests.insert(p.at("request_id").get<std::int64_t>());
}

void set_robot_state(Robot& robot, RobotState to)
{
  if (!robot_transition_allowed(robot.state, to))
    illegal("robot " + robot.id + ": " + to_string(robot.state) + " -> " + to_string(to));
  robot.state = to;
}

void check_robot_edge(const Robot& robot, RobotState to)
{
  if (!robot_transition_allowed(robot.state, to))
    illegal("robot " + robot.id + ": " + to_string(robot.state) + " -> " + to_string(to));
}

void check_workspace_edge(const Workspace& ws, WorkspaceState to)
{
  if (!workspace_transition_allowed(ws.state, to))
    illegal("workspace " + ws.id + ": " + to_string(ws.state) + " -> " + to_string(to));
}

void check_reservation_edge(const Reservation& r, ReservationState to)
{
  if (!reservation_transition_allowed(r.state, to))
    illegal("reservation " + r.id + ": " + to_string(r.state) + " -> " + to_string(to));
}

bool pose_inside(const FieldLayout& field, const Pose& p)
{
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= field.width() && p.y <= field.height()
    && !field.obstacle_at(p.x, p.y);
}

/// Clears the reservation's claims; Reserved robots return to Idle.
void release_claims(SystemState& s, const Reservation& r)
{
  for (const auto& rid : r.robot_ids)
  {
    auto& robot = s.robots.at(rid);
    if (robot.claimed_by != r.id)
      continue;
    robot.claimed_by.clear();
    if (robot.state == RobotState::Reserved || robot.state == RobotState::Active)
      robot.state = RobotState::Idle;
    std::erase_if(robot.queue, [&](const QueuedCommand& c) { return c.reservation_id == r.id; });
  }
}

//==============================================================================
using Handler = std::function<void(SystemState&, const Event&)>;

void on_student_added(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Student st;
  st.id = p.at("id").get<std::string>();
  st.name = p.at("name").get<std::string>();
  st.max_tier = p.at("max_tier").get<Tier>();
  st.weekly_quota_min = p.at("weekly_quota_min").get<std::int64_t>();
  expect_next_id(s, "stu", st.id);
  if (st.weekly_quota_min <= 0)
    reject("weekly quota must be positive");
  for (const auto& [id, other] : s.students)
  {
    if (other.name == st.name)
      reject("student name '" + st.name + "' already taken");
  }
  const auto hash = p.value("token_hash", std::string());
  if (!hash.empty() && s.credentials.count(hash))
    reject("credential hash already issued");
  if (!hash.empty())
  {
    st.credential_hash = hash;
    s.credentials.emplace(hash, Credential{st.id, hash, e.ts, false});
  }
  s.students.emplace(st.id, st);
  bump(s, "stu");
}

void on_credential_issued(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  const auto student_id = p.at("student_id").get<std::string>();
  const auto hash = p.at("token_hash").get<std::string>();
  auto& student = must_find(s.students, student_id, "student");
  if (hash.empty())
    reject("empty credential hash");
  if (s.credentials.count(hash))
    reject("credential hash already issued");
  if (!student.credential_hash.empty())
    s.credentials.at(student.credential_hash).revoked = true;
  s.credentials.emplace(hash, Credential{student_id, hash, e.ts, false});
  student.credential_hash = hash;
}

void on_credential_revoked(SystemState& s, const Event& e)
{
  const auto student_id = e.payload.at("student_id").get<std::string>();
  auto& student = must_find(s.students, student_id, "student");
  if (student.credential_hash.empty())
    reject("student has no credential");
  s.credentials.at(student.credential_hash).revoked = true;
}

void on_field_added(SystemState& s, const Event& e)
{
  FieldLayout f;
  const auto& p = e.payload;
  f.id = p.at("id").get<std::string>();
  f.name = p.at("name").get<std::string>();
  f.rows = p.at("rows").get<std::int32_t>();
  f.cols = p.at("cols").get<std::int32_t>();
  f.cell_m = p.at("cell_m").get<double>();
  f.cells = p.at("cells").get<std::vector<std::string>>();
  expect_next_id(s, "fld", f.id);
  if (f.rows <= 0 || f.cols <= 0 || !(f.cell_m > 0.0))
    reject("field grid must be non-empty with positive cell size");
  if (f.cells.size() != static_cast<std::size_t>(f.rows))
    reject("field row count mismatch");
  for (const auto& row : f.cells)
  {
    if (row.size() != static_cast<std::size_t>(f.cols))
      reject("field grid is not rectangular");
    if (row.find_first_not_of(".#") != std::string::npos)
      reject("field cells must be '.' or '#'");
  }
  if (f.cells[0][0] == '#')
    reject("field origin cell must be free");
  s.fields.emplace(f.id, f);
  bump(s, "fld");
}

void on_camera_added(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Camera c;
  c.id = p.at("id").get<std::string>();
  c.field_id = p.at("field_id").get<std::string>();
  c.x0 = p.at("x0").get<double>();
  c.y0 = p.at("y0").get<double>();
  c.x1 = p.at("x1").get<double>();
  c.y1 = p.at("y1").get<double>();
  expect_next_id(s, "cam", c.id);
  must_find(s.fields, c.field_id, "field");
  if (!(c.x0 <= c.x1 && c.y0 <= c.y1))
    reject("camera field of view must be a proper rectangle");
  s.cameras.emplace(c.id, c);
  bump(s, "cam");
}

void on_robot_added(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Robot r;
  r.id = p.at("id").get<std::string>();
  r.name = p.at("name").get<std::string>();
  r.model = p.at("model").get<std::string>();
  r.capabilities = p.at("capabilities").get<CapabilitySet>();
  r.location = p.at("location").get<Location>();
  r.owner_id = p.value("owner_id", std::string());
  r.firmware_size_mb = p.at("firmware_size_mb").get<std::int64_t>();
  r.wheel_bias = p.value("wheel_bias", 0.0);
  r.unit_cost_cents = p.value("unit_cost_cents", DefaultRobotUnitCostCents);
  r.field_id = p.value("field_id", std::string());
  expect_next_id(s, "rb", r.id);
  if (r.firmware_size_mb < 0)
    reject("firmware size must be non-negative");
  if (r.unit_cost_cents < 0)
    reject("unit cost must be non-negative");
  if (r.location == Location::StudentHome)
    must_find(s.students, r.owner_id, "student");
  if (!r.field_id.empty())
    must_find(s.fields, r.field_id, "field");
  for (const auto& [id, other] : s.robots)
  {
    if (other.name == r.name)
      reject("robot name '" + r.name + "' already taken");
  }
  s.robots.emplace(r.id, r);
  bump(s, "rb");
}

//==============================================================================
void on_node_provisioned(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Node n;
  n.id = p.at("id").get<std::string>();
  n.cpu_cores = p.at("cpu_cores").get<std::int32_t>();
  n.ram_mb = p.at("ram_mb").get<std::int64_t>();
  n.has_gpu = p.at("has_gpu").get<bool>();
  n.hourly_rate_cents = p.at("hourly_rate_cents").get<std::int64_t>();
  n.ready_due = p.at("ready_due").get<Seconds>();
  n.provisioned_at = e.ts;
  expect_next_id(s, "node", n.id);
  if (n.cpu_cores <= 0 || n.ram_mb <= 0)
    reject("node capacity must be positive");
  if (n.hourly_rate_cents < 0)
    reject("hourly rate must be non-negative");
  if (n.ready_due < e.ts)
    reject("node boot cannot finish before it starts");
  s.nodes.emplace(n.id, n);
  s.ledger.push_back(CostLedgerEntry{n.id, e.ts, std::nullopt, n.hourly_rate_cents});
  bump(s, "node");
}

void on_node_ready(SystemState& s, const Event& e)
{
  auto& n = must_find(s.nodes, e.payload.at("node_id").get<std::string>(), "node");
  if (n.state != NodeState::Provisioning)
    illegal("node " + n.id + ": " + to_string(n.state) + " -> Ready");
  n.state = NodeState::Ready;
  n.idle_since = e.ts;
}

void on_node_draining(SystemState& s, const Event& e)
{
  auto& n = must_find(s.nodes, e.payload.at("node_id").get<std::string>(), "node");
  if (n.state != NodeState::Ready)
    illegal("node " + n.id + ": " + to_string(n.state) + " -> Draining");
  if (node_usage(s, n.id).workspaces != 0)
    reject("node " + n.id + " still hosts workspaces");
  n.state = NodeState::Draining;
}

void on_node_released(SystemState& s, const Event& e)
{
  auto& n = must_find(s.nodes, e.payload.at("node_id").get<std::string>(), "node");
  if (n.state != NodeState::Draining)
    illegal("node " + n.id + ": " + to_string(n.state) + " -> Released");
  if (node_usage(s, n.id).workspaces != 0)
    reject("node " + n.id + " still hosts workspaces");
  auto entry = std::find_if(s.ledger.begin(), s.ledger.end(),
    [&](const CostLedgerEntry& l) { return l.node_id == n.id && !l.to; });
  if (entry == s.ledger.end())
    reject("node " + n.id + " has no open ledger entry");
  n.state = NodeState::Released;
  n.released_at = e.ts;
  n.idle_since.reset();
  entry->to = e.ts;
}

//==============================================================================
void on_workspace_requested(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Workspace ws;
  ws.id = p.at("id").get<std::string>();
  ws.student_id = p.at("student_id").get<std::string>();
  ws.image_version = p.at("image_version").get<std::string>();
  ws.demand = p.at("demand").get<WorkspaceDemand>();
  ws.ephemeral = p.value("ephemeral", false);
  expect_next_id(s, "ws", ws.id);
  must_find(s.students, ws.student_id, "student");
  if (live_workspace(s, ws.student_id))
    reject("student " + ws.student_id + " already has a live workspace");
  if (ws.demand.cpu_cores <= 0 || ws.demand.ram_mb <= 0)
    reject("workspace demand must be positive");
  s.workspaces.emplace(ws.id, ws);
  bump(s, "ws");
}

void on_workspace_placed(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& ws = must_find(s.workspaces, p.at("workspace_id").get<std::string>(), "workspace");
  auto& node = must_find(s.nodes, p.at("node_id").get<std::string>(), "node");
  check_workspace_edge(ws, WorkspaceState::Placing);
  if (node.state != NodeState::Ready)
    reject("node " + node.id + " is not Ready");
  if (ws.demand.needs_gpu && !node.has_gpu)
    reject("GPU workspace on non-GPU node " + node.id);
  const auto used = node_usage(s, node.id);
  if (used.cpu_cores + ws.demand.cpu_cores > node.cpu_cores
    || used.ram_mb + ws.demand.ram_mb > node.ram_mb)
    reject("node " + node.id + " lacks capacity");
  ws.state = WorkspaceState::Placing;
  ws.node_id = node.id;
  node.idle_since.reset();
}

void on_workspace_timed_stage(SystemState& s, const Event& e, WorkspaceState to)
{
  const auto& p = e.payload;
  auto& ws = must_find(s.workspaces, p.at("workspace_id").get<std::string>(), "workspace");
  const auto due = p.at("due").get<Seconds>();
  check_workspace_edge(ws, to);
  if (due < e.ts)
    reject("stage cannot finish before it starts");
  if (ws.stage_due && e.ts < *ws.stage_due)
    reject("workspace " + ws.id + " stage not finished");
  ws.state = to;
  ws.stage_due = due;
}

void on_workspace_ready(SystemState& s, const Event& e)
{
  auto& ws = must_find(s.workspaces, e.payload.at("workspace_id").get<std::string>(), "workspace");
  check_workspace_edge(ws, WorkspaceState::Ready);
  if (ws.stage_due && e.ts < *ws.stage_due)
    reject("workspace " + ws.id + " stage not finished");
  if (!ws.overlay_addr)
    reject("workspace " + ws.id + " has no overlay address");
  ws.state = WorkspaceState::Ready;
  ws.stage_due.reset();
}

void on_workspace_simple(SystemState& s, const Event& e, WorkspaceState to)
{
  auto& ws = must_find(s.workspaces, e.payload.at("workspace_id").get<std::string>(), "workspace");
  check_workspace_edge(ws, to);
  ws.state = to;
  ws.stage_due.reset();
}

void on_workspace_released(SystemState& s, const Event& e)
{
  auto& ws = must_find(s.workspaces, e.payload.at("workspace_id").get<std::string>(), "workspace");
  check_workspace_edge(ws, WorkspaceState::Released);
  ws.state = WorkspaceState::Released;
  ws.stage_due.reset();
  ws.overlay_addr.reset();
  if (!ws.node_id.empty())
  {
    auto& node = s.nodes.at(ws.node_id);
    if (node.state == NodeState::Ready && node_usage(s, node.id).workspaces == 0)
      node.idle_since = e.ts;
  }
}

//==============================================================================
void on_reservation_confirmed(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Reservation r;
  r.id = p.at("id").get<std::string>();
  r.student_id = p.at("student_id").get<std::string>();
  r.robot_ids = p.at("robot_ids").get<std::vector<std::string>>();
  r.slot = p.at("slot").get<TimeSlot>();
  r.field_layout_id = p.at("field_layout_id").get<std::string>();
  if (p.contains("request_id") && !p.at("request_id").is_null())
    r.request_id = p.at("request_id").get<std::int64_t>();
  r.created_seq = e.seq;
  expect_next_id(s, "rsv", r.id);
  must_find(s.students, r.student_id, "student");
  must_find(s.fields, r.field_layout_id, "field");
  if (!r.slot.valid())
    reject("slot off the 15-minute grid or outside 15..120 minutes");
  if (r.robot_ids.empty())
    reject("reservation needs at least one robot");
  if (!std::is_sorted(r.robot_ids.begin(), r.robot_ids.end())
    || std::adjacent_find(r.robot_ids.begin(), r.robot_ids.end()) != r.robot_ids.end())
    reject("robot ids must be sorted and unique");
  for (const auto& rid : r.robot_ids)
  {
    const auto& robot = must_find(s.robots, rid, "robot");
    if (robot.location != Location::LabField)
      reject("robot " + rid + " is not on the lab field");
  }
  for (const auto& [id, other] : s.reservations)
  {
    if (!other.holds_robots() || !other.slot.overlaps(r.slot))
      continue;
    for (const auto& rid : r.robot_ids)
    {
      if (std::binary_search(other.robot_ids.begin(), other.robot_ids.end(), rid))
        reject("robot " + rid + " double-booked with " + other.id);
    }
  }
  s.reservations.emplace(r.id, r);
  bump(s, "rsv");
}

void on_reservation_cancelled(SystemState& s, const Event& e)
{
  auto& r = must_find(s.reservations, e.payload.at("reservation_id").get<std::string>(), "reservation");
  check_reservation_edge(r, ReservationState::Cancelled);
  r.state = ReservationState::Cancelled;
  release_claims(s, r);
}

void on_activation_requested(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& r = must_find(s.reservations, p.at("reservation_id").get<std::string>(), "reservation");
  const auto ws_id = p.value("workspace_id", std::string());
  if (r.state != ReservationState::Confirmed)
    reject("reservation " + r.id + " is not Confirmed");
  if (r.activation_seq != 0)
    reject("reservation " + r.id + " activation already requested");
  if (!r.slot.contains(e.ts))
    reject("reservation " + r.id + " is not due");
  if (!ws_id.empty())
    must_find(s.workspaces, ws_id, "workspace");
  for (const auto& rid : r.robot_ids)
  {
    const auto& robot = s.robots.at(rid);
    if (!robot.claimed_by.empty())
      reject("robot " + rid + " still held by " + robot.claimed_by);
  }
  r.activation_seq = e.seq;
  r.workspace_id = ws_id;
  for (const auto& rid : r.robot_ids)
    s.robots.at(rid).claimed_by = r.id;
}

void on_robot_state_changed(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto from = p.at("from").get<RobotState>();
  const auto to = p.at("to").get<RobotState>();
  if (from != robot.state)
    reject("robot " + robot.id + " is " + to_string(robot.state) + ", not " + to_string(from));
  check_robot_edge(robot, to);
  // Only the reservation hold edges are generic; everything else has its own event.
  if (from == RobotState::Idle && to == RobotState::Reserved)
  {
    if (robot.claimed_by.empty())
      reject("robot " + robot.id + " is not claimed by a reservation");
  }
  else if (from == RobotState::Reserved && to == RobotState::Idle)
  {
    if (!robot.claimed_by.empty())
      reject("robot " + robot.id + " is still claimed by " + robot.claimed_by);
  }
  else
  {
    illegal("robot " + robot.id + ": " + to_string(from) + " -> " + to_string(to)
      + " requires its dedicated event");
  }
  robot.state = to;
}

void on_reprovision_started(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  ReprovisionJob job;
  job.robot_id = robot.id;
  job.started_at = e.ts;
  job.expected_duration_s = p.at("expected_duration_s").get<Seconds>();
  job.target_firmware_version = p.at("target_firmware_version").get<std::uint64_t>();
  job.reservation_id = p.value("reservation_id", std::string());
  check_robot_edge(robot, RobotState::Reprovisioning);
  if (robot.job)
    reject("robot " + robot.id + " already reprovisioning");
  if (job.target_firmware_version != robot.firmware_version + 1)
    reject("target firmware must be current + 1");
  if (job.expected_duration_s < 0)
    reject("negative reprovision duration");
  Reservation* r = nullptr;
  if (!job.reservation_id.empty())
  {
    r = &must_find(s.reservations, job.reservation_id, "reservation");
    if (r->activation_seq == 0 || robot.claimed_by != r->id)
      reject("robot " + robot.id + " not claimed by " + r->id);
  }
  robot.state = RobotState::Reprovisioning;
  robot.job = job;
  if (r)
    r->reprovision_started.insert(robot.id);
}

void on_reprovision_completed(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto outcome = p.at("outcome").get<std::string>();
  if (robot.state != RobotState::Reprovisioning || !robot.job)
    reject("robot " + robot.id + " has no reprovision job");
  if (e.ts < robot.job->due())
    reject("robot " + robot.id + " reprovision not finished");
  const std::string expected = robot.flash_failure_armed ? "flash_failure" : "ok";
  if (outcome != expected)
    reject("reprovision outcome must be '" + expected + "'");

  const auto job = *robot.job;
  if (outcome == "ok")
  {
    robot.state = robot.claimed_by.empty() ? RobotState::Idle : RobotState::Reserved;
    robot.firmware_version = job.target_firmware_version;
    robot.battery_pct = 100.0;
    robot.pose = Pose{};
    robot.queue.clear();
    robot.disconnected = false;
    if (!job.reservation_id.empty() && robot.claimed_by == job.reservation_id)
      s.reservations.at(job.reservation_id).reprovision_done.insert(robot.id);
  }
  else
  {
    robot.state = RobotState::Fault;
    robot.flash_failure_armed = false;
  }
  robot.job.reset();
}

void on_session_activated(SystemState& s, const Event& e)
{
  auto& r = must_find(s.reservations, e.payload.at("reservation_id").get<std::string>(), "reservation");
  check_reservation_edge(r, ReservationState::Active);
  if (r.activation_seq == 0)
    reject("reservation " + r.id + " activation was never requested");
  if (!r.slot.contains(e.ts))
    reject("reservation " + r.id + " is outside its slot");
  for (const auto& rid : r.robot_ids)
  {
    const auto& robot = s.robots.at(rid);
    if (robot.claimed_by != r.id || robot.state != RobotState::Reserved)
      reject("robot " + rid + " is not Reserved for " + r.id);
    if (!r.reprovision_done.count(rid))
      reject("robot " + rid + " has not completed its reprovision");
  }
  r.state = ReservationState::Active;
  for (const auto& rid : r.robot_ids)
  {
    auto& robot = s.robots.at(rid);
    robot.state = RobotState::Active;
    robot.field_id = r.field_layout_id;
    robot.pose = Pose{};
  }
}

void on_session_completed(SystemState& s, const Event& e)
{
  auto& r = must_find(s.reservations, e.payload.at("reservation_id").get<std::string>(), "reservation");
  check_reservation_edge(r, ReservationState::Completed);
  if (e.ts < r.slot.end())
    reject("reservation " + r.id + " has not ended");
  r.state = ReservationState::Completed;
  release_claims(s, r);
}

void on_reservation_no_show(SystemState& s, const Event& e)
{
  auto& r = must_find(s.reservations, e.payload.at("reservation_id").get<std::string>(), "reservation");
  check_reservation_edge(r, ReservationState::NoShow);
  if (e.ts < r.slot.end())
    reject("reservation " + r.id + " has not ended");
  r.state = ReservationState::NoShow;
  release_claims(s, r);
}

//==============================================================================
void on_fault_injected(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto kind = p.at("fault").get<FaultKind>();
  switch (kind)
  {
    case FaultKind::Disconnect:
      robot.disconnected = true;
      break;
    case FaultKind::BatteryDrain:
      if (robot.state != RobotState::Fault)
        set_robot_state(robot, RobotState::Fault);
      robot.battery_pct = std::min(robot.battery_pct, 9.0);
      robot.job.reset();
      break;
    case FaultKind::FlashFailure:
      robot.flash_failure_armed = true;
      break;
  }
}

void on_robot_faulted(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto battery = p.at("battery_pct").get<double>();
  const auto pose = p.at("pose").get<Pose>();
  check_robot_edge(robot, RobotState::Fault);
  if (!(battery >= 0.0 && battery <= robot.battery_pct))
    reject("battery may only decrease between reprovisions");
  const auto tick = p.value("tick", robot.sim_tick);
  if (tick < robot.sim_tick)
    reject("telemetry tick went backwards");
  robot.state = RobotState::Fault;
  robot.battery_pct = battery;
  robot.pose = pose;
  robot.sim_tick = tick;
  robot.job.reset();
}

void on_command_accepted(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto rsv_id = p.at("reservation_id").get<std::string>();
  const auto cmd = p.at("command").get<DriveCommand>();
  const auto& r = must_find(s.reservations, rsv_id, "reservation");
  if (r.state != ReservationState::Active || !r.slot.contains(e.ts))
    reject("reservation " + rsv_id + " is not an active session");
  if (robot.claimed_by != rsv_id || robot.state != RobotState::Active)
    reject("robot " + robot.id + " is not held by " + rsv_id);
  if (robot.queue.size() >= MaxCommandQueueDepth)
    reject("robot " + robot.id + " command queue full");
  if (cmd.duration_ticks <= 0 || !std::isfinite(cmd.v) || !std::isfinite(cmd.omega))
    reject("malformed drive command");
  robot.queue.push_back(QueuedCommand{cmd, rsv_id, e.seq});
}

void on_command_completed(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto accepted_seq = p.at("accepted_seq").get<std::uint64_t>();
  const auto pose = p.at("pose").get<Pose>();
  const auto battery = p.at("battery_pct").get<double>();
  if (robot.state != RobotState::Active)
    reject("robot " + robot.id + " is not Active");
  if (robot.queue.empty() || robot.queue.front().accepted_seq != accepted_seq)
    reject("command " + std::to_string(accepted_seq) + " is not at the head of the queue");
  if (!(battery >= 0.0 && battery <= robot.battery_pct))
    reject("battery may only decrease between reprovisions");
  if (!robot.field_id.empty() && !pose_inside(s.fields.at(robot.field_id), pose))
    reject("pose outside the field or inside an obstacle");
  const auto tick = p.value("tick", robot.sim_tick);
  if (tick < robot.sim_tick)
    reject("telemetry tick went backwards");
  robot.queue.erase(robot.queue.begin());
  robot.pose = pose;
  robot.battery_pct = battery;
  robot.sim_tick = tick;
}

void on_agent_spawned(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  auto& robot = must_find(s.robots, p.at("robot_id").get<std::string>(), "robot");
  const auto field_id = p.at("field_id").get<std::string>();
  const auto seed = p.at("seed").get<std::uint64_t>();
  must_find(s.fields, field_id, "field");
  if (robot.spawned)
    reject("robot " + robot.id + " agent already spawned");
  robot.spawned = true;
  robot.agent_seed = seed;
  robot.field_id = field_id;
  robot.pose = Pose{};
}

//==============================================================================
void on_peer_registered(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  OverlayPeer peer;
  peer.peer_id = p.at("peer_id").get<std::string>();
  peer.kind = p.at("kind").get<PeerKind>();
  peer.addr = p.at("addr").get<OverlayAddress>();
  peer.host = p.at("host").get<std::uint32_t>();
  peer.subject = p.value("subject", std::string());
  peer.enrolled_at = e.ts;
  peer.last_heartbeat = e.ts;
  peer.status = PeerStatus::Live;
  expect_next_id(s, "peer", peer.peer_id);
  if (peer.host == 0)
    reject("host part zero is the network address");
  if (peer.host != lowest_free_host(s))
    reject("address must be the lowest free host");
  if (s.peer_by_addr.count(peer.addr))
    reject("address " + format_address(peer.addr) + " already in use");
  Workspace* ws = nullptr;
  if (peer.kind == PeerKind::CloudWorkspace && !peer.subject.empty())
  {
    ws = &must_find(s.workspaces, peer.subject, "workspace");
    if (ws->overlay_addr)
      reject("workspace " + ws->id + " already has an address");
  }
  if (peer.host == s.overlay_next_host)
    ++s.overlay_next_host;
  else
    s.overlay_free_hosts.erase(peer.host);
  s.peer_by_addr.emplace(peer.addr, peer.peer_id);
  if (ws)
  {
    ws->overlay_addr = peer.addr;
    ws->peer_id = peer.peer_id;
  }
  s.peers.emplace(peer.peer_id, peer);
  bump(s, "peer");
}

void on_peer_heartbeat(SystemState& s, const Event& e)
{
  auto& peer = must_find(s.peers, e.payload.at("peer_id").get<std::string>(), "peer");
  if (peer.status == PeerStatus::Evicted)
    reject("peer " + peer.peer_id + " was evicted");
  if (e.ts < peer.last_heartbeat)
    reject("heartbeat older than the last one");
  peer.last_heartbeat = e.ts;
  peer.status = PeerStatus::Live;
}

void on_peer_stale(SystemState& s, const Event& e)
{
  auto& peer = must_find(s.peers, e.payload.at("peer_id").get<std::string>(), "peer");
  if (peer.status != PeerStatus::Live)
    illegal("peer " + peer.peer_id + ": " + to_string(peer.status) + " -> Stale");
  peer.status = PeerStatus::Stale;
}

void on_peer_evicted(SystemState& s, const Event& e)
{
  auto& peer = must_find(s.peers, e.payload.at("peer_id").get<std::string>(), "peer");
  if (peer.status == PeerStatus::Evicted)
    illegal("peer " + peer.peer_id + " already evicted");
  peer.status = PeerStatus::Evicted;
  s.peer_by_addr.erase(peer.addr);
  s.overlay_free_hosts.insert(peer.host);
  if (peer.kind == PeerKind::CloudWorkspace)
  {
    auto it = s.workspaces.find(peer.subject);
    if (it != s.workspaces.end() && it->second.peer_id == peer.peer_id)
      it->second.overlay_addr.reset();
  }
}

//==============================================================================
void on_deploy_stored(SystemState& s, const Event& e)
{
  const auto& p = e.payload;
  Deploy d;
  d.id = p.at("deploy_id").get<std::string>();
  d.session_id = p.at("session_id").get<std::string>();
  d.name = p.at("name").get<std::string>();
  d.size_bytes = p.at("size_bytes").get<std::int64_t>();
  d.checksum = p.at("checksum").get<std::string>();
  d.at = e.ts;
  expect_next_id(s, "dep", d.id);
  auto& r = must_find(s.reservations, d.session_id, "session");
  if (r.state != ReservationState::Active)
    reject("session " + r.id + " is not Active");
  if (d.size_bytes < 0 || d.size_bytes > MaxBundleBytes)
    reject("bundle size out of bounds");
  Workspace* ws = nullptr;
  for (auto& [id, w] : s.workspaces)
  {
    if (w.student_id == r.student_id && w.live())
      ws = &w;
  }
  if (!ws || (ws->state != WorkspaceState::Ready && ws->state != WorkspaceState::InUse))
    reject("session owner has no Ready workspace");
  ws->state = WorkspaceState::InUse;
  r.deploys.push_back(d.id);
  s.deploys.emplace(d.id, d);
  bump(s, "dep");
}

void on_scenario_step(SystemState& s, const Event& e)
{
  const auto index = e.payload.at("index").get<std::int64_t>();
  if (index <= s.scenario_step)
    reject("scenario step markers must increase");
  s.scenario_step = index;
}

const std::unordered_map<std::string_view, Handler>& handlers()
{
  using namespace events;
  static const std::unordered_map<std::string_view, Handler> table = {
    {StudentAdded, on_student_added},
    {CredentialIssued, on_credential_issued},
    {CredentialRevoked, on_credential_revoked},
    {RobotAdded, on_robot_added},
    {FieldAdded, on_field_added},
    {CameraAdded, on_camera_added},
    {NodeProvisioned, on_node_provisioned},
    {NodeReady, on_node_ready},
    {NodeDraining, on_node_draining},
    {NodeReleased, on_node_released},
    {WorkspaceRequested, on_workspace_requested},
    {WorkspacePlaced, on_workspace_placed},
    {WorkspacePulling, [](SystemState& s, const Event& e) {
      on_workspace_timed_stage(s, e, WorkspaceState::Pulling); }},
    {WorkspaceStarting, [](SystemState& s, const Event& e) {
      on_workspace_timed_stage(s, e, WorkspaceState::Starting); }},
    {WorkspaceReady, on_workspace_ready},
    {WorkspaceInUse, [](SystemState& s, const Event& e) {
      on_workspace_simple(s, e, WorkspaceState::InUse); }},
    {WorkspaceStopping, [](SystemState& s, const Event& e) {
      on_workspace_simple(s, e, WorkspaceState::Stopping); }},
    {WorkspaceFaulted, [](SystemState& s, const Event& e) {
      on_workspace_simple(s, e, WorkspaceState::Fault); }},
    {WorkspaceReleased, on_workspace_released},
    {ReservationConfirmed, on_reservation_confirmed},
    {ReservationCancelled, on_reservation_cancelled},
    {ActivationRequested, on_activation_requested},
    {RobotStateChanged, on_robot_state_changed},
    {ReprovisionStarted, on_reprovision_started},
    {ReprovisionCompleted, on_reprovision_completed},
    {SessionActivated, on_session_activated},
    {SessionCompleted, on_session_completed},
    {ReservationNoShow, on_reservation_no_show},
    {FaultInjected, on_fault_injected},
    {RobotFaulted, on_robot_faulted},
    {CommandAccepted, on_command_accepted},
    {CommandCompleted, on_command_completed},
    {AgentSpawned, on_agent_spawned},
    {PeerRegistered, on_peer_registered},
    {PeerHeartbeat, on_peer_heartbeat},
    {PeerStale, on_peer_stale},
    {PeerEvicted, on_peer_evicted},
    {DeployStored, on_deploy_stored},
    {ScenarioStep, on_scenario_step},
  };
  return table;
}

} // anonymous namespace

//==============================================================================
std::string next_id(const SystemState& state, std::string_view prefix)
{
  const auto it = state.id_counters.find(std::string(prefix));
  const std::uint64_t n = (it == state.id_counters.end() ? 0 : it->second) + 1;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%06llu", static_cast<unsigned long long>(n));
  return std::string(prefix) + buf;
}

std::uint32_t lowest_free_host(const SystemState& state)
{
  if (!state.overlay_free_hosts.empty())
    return *state.overlay_free_hosts.begin();
  return state.overlay_next_host;
}

const Workspace* live_workspace(const SystemState& state, const std::string& student_id)
{
  for (const auto& [id, ws] : state.workspaces)
  {
    if (ws.student_id == student_id && ws.live())
      return &ws;
  }
  return nullptr;
}

NodeUsage node_usage(const SystemState& state, const std::string& node_id)
{
  NodeUsage usage;
  for (const auto& [id, ws] : state.workspaces)
  {
    if (ws.node_id != node_id || !ws.live() || ws.state < WorkspaceState::Placing)
      continue;
    usage.cpu_cores += ws.demand.cpu_cores;
    usage.ram_mb += ws.demand.ram_mb;
    ++usage.workspaces;
  }
  return usage;
}

bool robot_transition_allowed(RobotState from, RobotState to)
{
  using R = RobotState;
  switch (from)
  {
    case R::Idle:
      return to == R::Reserved || to == R::Reprovisioning || to == R::Fault;
    case R::Reserved:
      return to == R::Idle || to == R::Reprovisioning || to == R::Active || to == R::Fault;
    case R::Reprovisioning:
      return to == R::Idle || to == R::Reserved || to == R::Fault;
    case R::Active:
      return to == R::Idle || to == R::Fault;
    case R::Fault:
      return to == R::Reprovisioning;
  }
  return false;
}

bool workspace_transition_allowed(WorkspaceState from, WorkspaceState to)
{
  using W = WorkspaceState;
  switch (from)
  {
    case W::Requested: return to == W::Placing || to == W::Released;
    case W::Placing: return to == W::Pulling || to == W::Fault;
    case W::Pulling: return to == W::Starting || to == W::Fault;
    case W::Starting: return to == W::Ready || to == W::Fault;
    case W::Ready: return to == W::InUse || to == W::Stopping || to == W::Fault;
    case W::InUse: return to == W::Stopping || to == W::Fault;
    case W::Stopping: return to == W::Released;
    case W::Released: return false;
    case W::Fault: return to == W::Stopping;
  }
  return false;
}

bool reservation_transition_allowed(ReservationState from, ReservationState to)
{
  using S = ReservationState;
  if (from == S::Confirmed)
    return to == S::Active || to == S::Cancelled || to == S::NoShow;
  if (from == S::Active)
    return to == S::Completed;
  return false;
}

void apply_event_in_place(SystemState& state, const Event& event)
{
  if (event.seq != state.last_seq + 1)
  {
    throw Error(Errc::SequenceGap,
      "expected seq " + std::to_string(state.last_seq + 1) + ", got "
      + std::to_string(event.seq));
  }
  const auto& table = handlers();
  const auto it = table.find(event.kind);
  if (it == table.end())
    throw Error(Errc::CorruptRecord, "unknown event kind '" + event.kind + "'");
  if (!event.payload.is_object())
    throw Error(Errc::CorruptRecord, "payload must be an object");
  try
  {
    it->second(state, event);
    note_request(state, event.payload);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(Errc::CorruptRecord, event.kind + ": " + e.what());
  }
  state.last_seq = event.seq;
  state.clock = std::max(state.clock, event.ts);
}

SystemState apply_event(SystemState state, const Event& event)
{
  apply_event_in_place(state, event);
  return state;
}

SystemState replay(std::span<const Event> log)
{
  SystemState state;
  for (const auto& event : log)
    apply_event_in_place(state, event);
  return state;
}

//==============================================================================
std::vector<std::string> validate_all(const SystemState& s)
{
  std::vector<std::string> out;
  auto fail = [&](std::string msg) { out.push_back(std::move(msg)); };

  for (const auto& [id, st] : s.students)
  {
    if (st.weekly_quota_min <= 0)
      fail("student " + id + ": non-positive quota");
    if (!st.credential_hash.empty() && !s.credentials.count(st.credential_hash))
      fail("student " + id + ": dangling credential hash");
  }

  for (const auto& [id, r] : s.robots)
  {
    if (!(r.battery_pct >= 0.0 && r.battery_pct <= 100.0))
      fail("robot " + id + ": battery out of range");
    if (r.queue.size() > MaxCommandQueueDepth)
      fail("robot " + id + ": queue deeper than the limit");
    if (r.job.has_value() != (r.state == RobotState::Reprovisioning))
      fail("robot " + id + ": job presence disagrees with state");
    if (!r.field_id.empty())
    {
      const auto f = s.fields.find(r.field_id);
      if (f == s.fields.end())
        fail("robot " + id + ": unknown field");
      else if (!pose_inside(f->second, r.pose))
        fail("robot " + id + ": pose outside field or inside obstacle");
    }
    if (r.state == RobotState::Active)
    {
      const auto rs = s.reservations.find(r.claimed_by);
      if (rs == s.reservations.end() || rs->second.state != ReservationState::Active)
        fail("robot " + id + ": Active without an active session");
    }
  }

  std::vector<const Reservation*> holding;
  for (const auto& [id, r] : s.reservations)
  {
    if (r.robot_ids.empty())
      fail("reservation " + id + ": no robots");
    if (!r.slot.valid())
      fail("reservation " + id + ": invalid slot");
    if (r.holds_robots())
      holding.push_back(&r);
  }
  for (std::size_t i = 0; i < holding.size(); ++i)
  {
    for (std::size_t j = i + 1; j < holding.size(); ++j)
    {
      const auto& a = *holding[i];
      const auto& b = *holding[j];
      if (!a.slot.overlaps(b.slot))
        continue;
      for (const auto& rid : a.robot_ids)
      {
        if (std::binary_search(b.robot_ids.begin(), b.robot_ids.end(), rid))
          fail("double booking of " + rid + " by " + a.id + " and " + b.id);
      }
    }
  }

  std::map<std::string, int> live_per_student;
  for (const auto& [id, ws] : s.workspaces)
  {
    if (ws.live())
      ++live_per_student[ws.student_id];
    const bool placed = ws.state >= WorkspaceState::Placing;
    const bool settled = ws.state == WorkspaceState::Released || ws.state == WorkspaceState::Fault;
    if (!settled && placed != !ws.node_id.empty())
      fail("workspace " + id + ": node assignment disagrees with state");
    if (ws.live() && placed && ws.demand.needs_gpu)
    {
      const auto n = s.nodes.find(ws.node_id);
      if (n != s.nodes.end() && !n->second.has_gpu)
        fail("workspace " + id + ": GPU demand on non-GPU node");
    }
    if ((ws.state == WorkspaceState::Ready || ws.state == WorkspaceState::InUse) && !ws.overlay_addr)
      fail("workspace " + id + ": Ready without overlay address");
  }
  for (const auto& [student, n] : live_per_student)
  {
    if (n > 1)
      fail("student " + student + ": more than one live workspace");
  }

  for (const auto& [id, n] : s.nodes)
  {
    if (n.hourly_rate_cents < 0)
      fail("node " + id + ": negative rate");
    const auto used = node_usage(s, id);
    if (used.cpu_cores > n.cpu_cores || used.ram_mb > n.ram_mb)
      fail("node " + id + ": capacity exceeded");
    if (n.state == NodeState::Released && used.workspaces != 0)
      fail("node " + id + ": Released but hosting workspaces");
    const auto entries = std::count_if(s.ledger.begin(), s.ledger.end(),
      [&](const CostLedgerEntry& l) { return l.node_id == id; });
    if (entries != 1)
      fail("node " + id + ": expected one ledger entry");
  }
  for (const auto& l : s.ledger)
  {
    const auto n = s.nodes.find(l.node_id);
    if (n == s.nodes.end())
      fail("ledger entry for unknown node " + l.node_id);
    else if (l.to.has_value() != (n->second.state == NodeState::Released))
      fail("node " + l.node_id + ": ledger closure disagrees with state");
    if (l.to && *l.to < l.from)
      fail("node " + l.node_id + ": ledger interval reversed");
  }

  std::set<OverlayAddress> seen;
  std::size_t non_evicted = 0;
  for (const auto& [id, p] : s.peers)
  {
    if (p.status == PeerStatus::Evicted)
      continue;
    ++non_evicted;
    if (!seen.insert(p.addr).second)
      fail("duplicate live address " + format_address(p.addr));
    const auto it = s.peer_by_addr.find(p.addr);
    if (it == s.peer_by_addr.end() || it->second != id)
      fail("peer " + id + ": address index out of sync");
    if (p.host == 0 || s.overlay_free_hosts.count(p.host) || p.host >= s.overlay_next_host)
      fail("peer " + id + ": host not allocated");
  }
  if (non_evicted != s.peer_by_addr.size())
    fail("address index holds evicted peers");

  return out;
}

//==============================================================================
void to_json(Json& j, const SystemState& s)
{
  j = Json::object();
  j["last_seq"] = s.last_seq;
  j["clock"] = s.clock;
  j["students"] = s.students;
  j["credentials"] = s.credentials;
  j["robots"] = s.robots;
  j["fields"] = s.fields;
  j["cameras"] = s.cameras;
  j["nodes"] = s.nodes;
  j["workspaces"] = s.workspaces;
  j["reservations"] = s.reservations;
  j["peers"] = s.peers;
  j["peer_by_addr"] = s.peer_by_addr;
  j["ledger"] = s.ledger;
  j["deploys"] = s.deploys;
  j["overlay_next_host"] = s.overlay_next_host;
  j["overlay_free_hosts"] = s.overlay_free_hosts;
  j["id_counters"] = s.id_counters;
  j["applied_requests"] = s.applied_requests;
  j["scenario_step"] = s.scenario_step;
}

void from_json(const Json& j, SystemState& s)
{
  j.at("last_seq").get_to(s.last_seq);
  j.at("clock").get_to(s.clock);
  j.at("students").get_to(s.students);
  j.at("credentials").get_to(s.credentials);
  j.at("robots").get_to(s.robots);
  j.at("fields").get_to(s.fields);
  j.at("cameras").get_to(s.cameras);
  j.at("nodes").get_to(s.nodes);
  j.at("workspaces").get_to(s.workspaces);
  j.at("reservations").get_to(s.reservations);
  j.at("peers").get_to(s.peers);
  j.at("peer_by_addr").get_to(s.peer_by_addr);
  j.at("ledger").get_to(s.ledger);
  j.at("deploys").get_to(s.deploys);
  j.at("overlay_next_host").get_to(s.overlay_next_host);
  j.at("overlay_free_hosts").get_to(s.overlay_free_hosts);
  j.at("id_counters").get_to(s.id_counters);
  j.at("applied_requests").get_to(s.applied_requests);
  j.at("scenario_step").get_to(s.scenario_step);
}

} // namespace rlab
