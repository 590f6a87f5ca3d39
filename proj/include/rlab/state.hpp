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

#ifndef RLAB__STATE_HPP
#define RLAB__STATE_HPP

#include <rlab/event.hpp>
#include <rlab/types.hpp>

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rlab {

/// Hard ceiling on queued drive commands per robot. The control server may be
/// configured lower, never higher.
constexpr std::size_t MaxCommandQueueDepth = 16;

/// Largest deploy bundle accepted, in bytes.
constexpr std::int64_t MaxBundleBytes = 16 * 1024 * 1024;

/// The complete system state: a fold of apply_event over the event log.
struct SystemState
{
  std::uint64_t last_seq = 0;
  Seconds clock = 0;

  std::map<std::string, Student> students;
  /// Keyed by token hash.
  std::map<std::string, Credential> credentials;
  std::map<std::string, Robot> robots;
  std::map<std::string, FieldLayout> fields;
  std::map<std::string, Camera> cameras;
  std::map<std::string, Node> nodes;
  std::map<std::string, Workspace> workspaces;
  std::map<std::string, Reservation> reservations;
  std::map<std::string, OverlayPeer> peers;
  /// Non-evicted peers only.
  std::map<OverlayAddress, std::string> peer_by_addr;
  std::vector<CostLedgerEntry> ledger;
  std::map<std::string, Deploy> deploys;

  /// Lowest never-allocated host number; freed hosts below it live in
  /// overlay_free_hosts.
  std::uint32_t overlay_next_host = 1;
  std::set<std::uint32_t> overlay_free_hosts;

  std::map<std::string, std::uint64_t> id_counters;
  std::set<std::int64_t> applied_requests;
  std::int64_t scenario_step = -1;

  bool operator==(const SystemState&) const = default;
};

void to_json(Json& j, const SystemState& s);
void from_json(const Json& j, SystemState& s);

/// Id the next created entity with this prefix must carry, e.g. "rb-000003".
std::string next_id(const SystemState& state, std::string_view prefix);

/// Lowest free overlay host number.
std::uint32_t lowest_free_host(const SystemState& state);

/// The student's workspace that is not Released, if any.
const Workspace* live_workspace(const SystemState& state, const std::string& student_id);

struct NodeUsage
{
  std::int32_t cpu_cores = 0;
  std::int64_t ram_mb = 0;
  std::int32_t workspaces = 0;
};

/// Sum of demands of the workspaces a node currently hosts.
NodeUsage node_usage(const SystemState& state, const std::string& node_id);

bool robot_transition_allowed(RobotState from, RobotState to);
bool workspace_transition_allowed(WorkspaceState from, WorkspaceState to);
bool reservation_transition_allowed(ReservationState from, ReservationState to);

/// Pure state transition. Requires event.seq == state.last_seq + 1.
/// Throws Error(SequenceGap), Error(IllegalTransition), Error(ValidationRejected)
/// or Error(CorruptRecord).
SystemState apply_event(SystemState state, const Event& event);

/// In-place variant with the strong guarantee: on throw, state is untouched.
void apply_event_in_place(SystemState& state, const Event& event);

/// Fold of apply_event from the empty state.
SystemState replay(std::span<const Event> log);

/// Checks every type invariant; returns one message per violation.
std::vector<std::string> validate_all(const SystemState& state);

} // namespace rlab

#endif // RLAB__STATE_HPP
