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

#ifndef RLAB__TYPES_HPP
#define RLAB__TYPES_HPP

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rlab {

using Json = nlohmann::json;

/// UTC seconds since the epoch. Every clock in the system is injected.
using Seconds = std::int64_t;

/// Overlay address as a host-order IPv4 value.
using OverlayAddress = std::uint32_t;

//==============================================================================
enum class Tier : int
{
  Simulated = 1,
  PersonalRobot = 2,
  RemoteLab = 3,
};

enum class Capability : std::uint8_t
{
  DiffDrive = 1 << 0,
  Lidar = 1 << 1,
  Camera = 1 << 2,
  Wifi = 1 << 3,
};

class CapabilitySet
{
public:
  CapabilitySet() = default;
  explicit CapabilitySet(std::uint8_t bits);

  /// Parses "lidar,camera". Throws Error(BadRequest) on unknown names.
  static CapabilitySet parse(const std::string& csv);

  CapabilitySet& add(Capability cap);
  bool has(Capability cap) const;
  bool contains(CapabilitySet other) const;
  std::uint8_t bits() const { return _bits; }
  std::vector<std::string> names() const;
  std::string to_string() const;

  bool operator==(const CapabilitySet&) const = default;

private:
  std::uint8_t _bits = 0;
};

enum class Location { LabField, StudentHome };
enum class RobotState { Idle, Reprovisioning, Reserved, Active, Fault };
enum class ReservationState { Confirmed, Active, Completed, Cancelled, NoShow };
enum class NodeState { Provisioning, Ready, Draining, Released };

/// Ordered so that "state >= Placing" means a node has been assigned.
enum class WorkspaceState
{
  Requested,
  Placing,
  Pulling,
  Starting,
  Ready,
  InUse,
  Stopping,
  Released,
  Fault,
};

enum class PeerKind { CloudWorkspace, StudentDesktop, StudentRobot, LabRobot };
enum class PeerStatus { Live, Stale, Evicted };
enum class FaultKind { Disconnect, BatteryDrain, FlashFailure };

std::string to_string(Tier v);
std::string to_string(Location v);
std::string to_string(RobotState v);
std::string to_string(ReservationState v);
std::string to_string(NodeState v);
std::string to_string(WorkspaceState v);
std::string to_string(PeerKind v);
std::string to_string(PeerStatus v);
std::string to_string(FaultKind v);

Tier tier_from_int(int level);
RobotState robot_state_from_string(const std::string& s);
ReservationState reservation_state_from_string(const std::string& s);
WorkspaceState workspace_state_from_string(const std::string& s);
NodeState node_state_from_string(const std::string& s);
PeerKind peer_kind_from_string(const std::string& s);
PeerStatus peer_status_from_string(const std::string& s);
FaultKind fault_kind_from_string(const std::string& s);

//==============================================================================
struct Pose
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  bool operator==(const Pose&) const = default;
};

constexpr Seconds SlotGridSeconds = 15 * 60;
constexpr int MaxSlotMinutes = 120;

struct TimeSlot
{
  Seconds start = 0;
  int duration_min = 0;

  Seconds end() const { return start + Seconds{duration_min} * 60; }
  bool overlaps(const TimeSlot& other) const
  {
    return start < other.end() && other.start < end();
  }
  bool contains(Seconds t) const { return start <= t && t < end(); }

  /// Aligned to the 15-minute grid with a duration in {15, 30, ..., 120}.
  bool valid() const;

  bool operator==(const TimeSlot&) const = default;
};

/// Index of the ISO week (Monday-based) containing t, counted from the epoch.
std::int64_t iso_week_index(Seconds t);

//==============================================================================
struct Student
{
  std::string id;
  std::string name;
  Tier max_tier = Tier::Simulated;
  std::int64_t weekly_quota_min = 240;
  std::string credential_hash;

  bool operator==(const Student&) const = default;
};

struct Credential
{
  std::string student_id;
  std::string token_hash;
  Seconds issued_at = 0;
  bool revoked = false;

  bool operator==(const Credential&) const = default;
};

struct DriveCommand
{
  double v = 0.0;
  double omega = 0.0;
  std::int32_t duration_ticks = 0;

  bool operator==(const DriveCommand&) const = default;
};

struct QueuedCommand
{
  DriveCommand command;
  std::string reservation_id;
  std::uint64_t accepted_seq = 0;

  bool operator==(const QueuedCommand&) const = default;
};

struct ReprovisionJob
{
  std::string robot_id;
  Seconds started_at = 0;
  Seconds expected_duration_s = 0;
  std::uint64_t target_firmware_version = 0;
  std::string reservation_id;

  Seconds due() const { return started_at + expected_duration_s; }
  bool operator==(const ReprovisionJob&) const = default;
};

constexpr std::int64_t DefaultRobotUnitCostCents = 27000;

struct Robot
{
  std::string id;
  std::string name;
  std::string model;
  CapabilitySet capabilities;
  Location location = Location::LabField;
  std::string owner_id;
  RobotState state = RobotState::Idle;
  std::uint64_t firmware_version = 1;
  std::int64_t firmware_size_mb = 0;
  double battery_pct = 100.0;
  Pose pose;
  double wheel_bias = 0.0;
  std::int64_t unit_cost_cents = DefaultRobotUnitCostCents;
  std::string field_id;

  /// Reservation whose activation currently holds this robot.
  std::string claimed_by;
  std::optional<ReprovisionJob> job;
  bool flash_failure_armed = false;
  bool disconnected = false;
  std::vector<QueuedCommand> queue;

  /// Agent binding, set once the simulated agent has been spawned.
  bool spawned = false;
  std::uint64_t agent_seed = 0;
  /// Last persisted telemetry tick.
  std::uint64_t sim_tick = 0;

  bool operator==(const Robot&) const = default;
};

struct FieldLayout
{
  std::string id;
  std::string name;
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  double cell_m = 1.0;
  /// One string per row, '.' free and '#' obstacle. Row 0 holds y in [0, cell_m).
  std::vector<std::string> cells;

  double width() const { return cols * cell_m; }
  double height() const { return rows * cell_m; }
  bool obstacle_at(double x, double y) const;

  bool operator==(const FieldLayout&) const = default;
};

struct Camera
{
  std::string id;
  std::string field_id;
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool sees(const Pose& p) const
  {
    return x0 <= p.x && p.x <= x1 && y0 <= p.y && p.y <= y1;
  }

  bool operator==(const Camera&) const = default;
};

struct Node
{
  std::string id;
  std::int32_t cpu_cores = 0;
  std::int64_t ram_mb = 0;
  bool has_gpu = false;
  std::int64_t hourly_rate_cents = 0;
  NodeState state = NodeState::Provisioning;
  Seconds provisioned_at = 0;
  Seconds ready_due = 0;
  std::optional<Seconds> idle_since;
  std::optional<Seconds> released_at;

  bool operator==(const Node&) const = default;
};

struct WorkspaceDemand
{
  std::int32_t cpu_cores = 2;
  std::int64_t ram_mb = 4096;
  bool needs_gpu = false;

  bool operator==(const WorkspaceDemand&) const = default;
};

struct Workspace
{
  std::string id;
  std::string student_id;
  std::string node_id;
  WorkspaceState state = WorkspaceState::Requested;
  std::string image_version;
  std::optional<OverlayAddress> overlay_addr;
  std::string peer_id;
  WorkspaceDemand demand;
  /// When the current timed stage (Pulling, Starting) finishes.
  std::optional<Seconds> stage_due;
  /// Brought up by a session activation and released with it.
  bool ephemeral = false;

  bool live() const { return state != WorkspaceState::Released; }
  bool operator==(const Workspace&) const = default;
};

struct Reservation
{
  std::string id;
  std::string student_id;
  std::vector<std::string> robot_ids;
  TimeSlot slot;
  std::string field_layout_id;
  ReservationState state = ReservationState::Confirmed;
  std::uint64_t created_seq = 0;
  std::optional<std::int64_t> request_id;

  /// Seq of the ActivationRequested event; 0 while not yet due.
  std::uint64_t activation_seq = 0;
  std::string workspace_id;
  std::set<std::string> reprovision_started;
  std::set<std::string> reprovision_done;
  std::vector<std::string> deploys;

  bool holds_robots() const
  {
    return state == ReservationState::Confirmed
      || state == ReservationState::Active;
  }
  bool operator==(const Reservation&) const = default;
};

struct OverlayPeer
{
  std::string peer_id;
  PeerKind kind = PeerKind::CloudWorkspace;
  OverlayAddress addr = 0;
  std::uint32_t host = 0;
  std::string subject;
  Seconds enrolled_at = 0;
  Seconds last_heartbeat = 0;
  PeerStatus status = PeerStatus::Live;

  bool operator==(const OverlayPeer&) const = default;
};

struct CostLedgerEntry
{
  std::string node_id;
  Seconds from = 0;
  std::optional<Seconds> to;
  std::int64_t rate_cents_per_hour = 0;

  bool operator==(const CostLedgerEntry&) const = default;
};

struct Deploy
{
  std::string id;
  std::string session_id;
  std::string name;
  std::int64_t size_bytes = 0;
  std::string checksum;
  Seconds at = 0;

  bool operator==(const Deploy&) const = default;
};

/// Who performed a mutation. Recorded on every event.
struct Actor
{
  std::string id;
  bool admin = false;

  static Actor system() { return Actor{"system", true}; }
  static Actor administrator() { return Actor{"admin", true}; }
  static Actor student(std::string student_id) { return Actor{std::move(student_id), false}; }

  bool operator==(const Actor&) const = default;
};

//==============================================================================
std::string format_address(OverlayAddress addr);
/// Throws Error(BadRequest) on malformed dotted quads.
OverlayAddress parse_address(const std::string& dotted);

void to_json(Json& j, const CapabilitySet& v);
void from_json(const Json& j, CapabilitySet& v);
void to_json(Json& j, const Tier& v);
void from_json(const Json& j, Tier& v);

NLOHMANN_JSON_SERIALIZE_ENUM(Location, {
  {Location::LabField, "LabField"},
  {Location::StudentHome, "StudentHome"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(RobotState, {
  {RobotState::Idle, "Idle"},
  {RobotState::Reprovisioning, "Reprovisioning"},
  {RobotState::Reserved, "Reserved"},
  {RobotState::Active, "Active"},
  {RobotState::Fault, "Fault"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(ReservationState, {
  {ReservationState::Confirmed, "Confirmed"},
  {ReservationState::Active, "Active"},
  {ReservationState::Completed, "Completed"},
  {ReservationState::Cancelled, "Cancelled"},
  {ReservationState::NoShow, "NoShow"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(NodeState, {
  {NodeState::Provisioning, "Provisioning"},
  {NodeState::Ready, "Ready"},
  {NodeState::Draining, "Draining"},
  {NodeState::Released, "Released"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(WorkspaceState, {
  {WorkspaceState::Requested, "Requested"},
  {WorkspaceState::Placing, "Placing"},
  {WorkspaceState::Pulling, "Pulling"},
  {WorkspaceState::Starting, "Starting"},
  {WorkspaceState::Ready, "Ready"},
  {WorkspaceState::InUse, "InUse"},
  {WorkspaceState::Stopping, "Stopping"},
  {WorkspaceState::Released, "Released"},
  {WorkspaceState::Fault, "Fault"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(PeerKind, {
  {PeerKind::CloudWorkspace, "CloudWorkspace"},
  {PeerKind::StudentDesktop, "StudentDesktop"},
  {PeerKind::StudentRobot, "StudentRobot"},
  {PeerKind::LabRobot, "LabRobot"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(PeerStatus, {
  {PeerStatus::Live, "Live"},
  {PeerStatus::Stale, "Stale"},
  {PeerStatus::Evicted, "Evicted"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(FaultKind, {
  {FaultKind::Disconnect, "Disconnect"},
  {FaultKind::BatteryDrain, "BatteryDrain"},
  {FaultKind::FlashFailure, "FlashFailure"},
})

} // namespace rlab

namespace nlohmann {

template<typename T>
struct adl_serializer<std::optional<T>>
{
  static void to_json(json& j, const std::optional<T>& opt)
  {
    if (opt)
      j = *opt;
    else
      j = nullptr;
  }

  static void from_json(const json& j, std::optional<T>& opt)
  {
    if (j.is_null())
      opt = std::nullopt;
    else
      opt = j.get<T>();
  }
};

} // namespace nlohmann

namespace rlab {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Pose, x, y, theta)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TimeSlot, start, duration_min)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Student, id, name, max_tier,
  weekly_quota_min, credential_hash)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Credential, student_id, token_hash,
  issued_at, revoked)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DriveCommand, v, omega, duration_ticks)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(QueuedCommand, command, reservation_id,
  accepted_seq)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReprovisionJob, robot_id, started_at,
  expected_duration_s, target_firmware_version, reservation_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Robot, id, name, model, capabilities,
  location, owner_id, state, firmware_version, firmware_size_mb, battery_pct,
  pose, wheel_bias, unit_cost_cents, field_id, claimed_by, job,
  flash_failure_armed, disconnected, queue, spawned, agent_seed, sim_tick)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FieldLayout, id, name, rows, cols, cell_m,
  cells)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Camera, id, field_id, x0, y0, x1, y1)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Node, id, cpu_cores, ram_mb, has_gpu,
  hourly_rate_cents, state, provisioned_at, ready_due, idle_since, released_at)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(WorkspaceDemand, cpu_cores, ram_mb,
  needs_gpu)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Workspace, id, student_id, node_id, state,
  image_version, overlay_addr, peer_id, demand, stage_due, ephemeral)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Reservation, id, student_id, robot_ids,
  slot, field_layout_id, state, created_seq, request_id, activation_seq,
  workspace_id, reprovision_started, reprovision_done, deploys)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OverlayPeer, peer_id, kind, addr, host,
  subject, enrolled_at, last_heartbeat, status)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CostLedgerEntry, node_id, from, to,
  rate_cents_per_hour)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Deploy, id, session_id, name, size_bytes,
  checksum, at)

} // namespace rlab

#endif // RLAB__TYPES_HPP
