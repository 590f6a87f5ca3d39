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

#ifndef RLAB__SIM__CONTROL_SERVER_HPP
#define RLAB__SIM__CONTROL_SERVER_HPP

#include <rlab/config.hpp>
#include <rlab/overlay.hpp>
#include <rlab/sim/kinematics.hpp>
#include <rlab/store.hpp>

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rlab::sim {

struct VisibleRobot
{
  std::string robot_id;
  Pose pose;
  /// Position inside the camera rectangle, each in [0, 1].
  double u = 0.0;
  double v = 0.0;

  bool operator==(const VisibleRobot&) const = default;
};

struct CameraFrame
{
  std::string camera_id;
  std::uint64_t tick = 0;
  Seconds ts = 0;
  std::vector<VisibleRobot> robots;

  bool operator==(const CameraFrame&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VisibleRobot, robot_id, pose, u, v)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CameraFrame, camera_id, tick, ts, robots)

/// Robots of the camera's field whose pose lies inside its rectangle.
CameraFrame camera_frame(const SystemState& state, const Camera& camera, Seconds now);

/// The in-lab mediator between sessions and simulated robot agents.
class ControlServer
{
public:
  using Subscriber = std::function<void(const Telemetry&)>;

  ControlServer(Store& store, SimConfig config, Overlay& overlay);

  /// Enrolls the agent as a LabRobot overlay peer with its pose at the field
  /// origin. Throws UnknownRobot, UnknownField or AlreadySpawned.
  Robot spawn_agent(const std::string& robot_id, const std::string& field_id,
    std::uint64_t seed, Seconds now, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);

  /// Queues a command for the session's robot and returns the accepting event
  /// seq. Throws UnknownRobot, BadCommand, RobotFault, NotReserved or QueueFull.
  std::uint64_t dispatch(const std::string& session_id, const std::string& robot_id,
    const DriveCommand& command, Seconds now, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);

  /// Steps one connected agent `ticks` times.
  std::vector<Telemetry> step(const std::string& robot_id, std::int64_t ticks, Seconds now);

  /// Steps every connected agent `ticks` times, in robot id order per tick.
  /// With `active_only`, robots outside a running session stay docked.
  std::vector<Telemetry> step_all(std::int64_t ticks, Seconds now, bool active_only = false);

  /// Steps the agent until its queue drains or it faults.
  std::vector<Telemetry> run_until_idle(const std::string& robot_id, Seconds now,
    std::int64_t max_ticks = 1'000'000);

  Event inject_fault(const std::string& robot_id, FaultKind kind, Seconds now,
    const Actor& actor = Actor::system(), std::optional<std::int64_t> request_id = std::nullopt);

  /// Throws UnknownCamera.
  std::vector<CameraFrame> camera_frames(const std::string& camera_id, Seconds now) const;

  /// Telemetry of the given robots is delivered in step order.
  std::uint64_t subscribe(std::vector<std::string> robot_ids, Subscriber callback);
  void unsubscribe(std::uint64_t id);

  /// Current tick of the robot's agent (0 when not spawned).
  std::uint64_t current_tick(const std::string& robot_id) const;

  /// Drops in-memory agents; they reload from the store on next use.
  void rehydrate();

  const SimConfig& config() const { return _config; }

private:
  struct Agent
  {
    AgentSim sim;
    /// Robot fields as last read from or written to the store.
    Pose pose;
    double battery = 0.0;
    std::uint64_t firmware = 0;
    std::string field_id;
    /// Command in progress and its ticks left.
    std::uint64_t cmd_seq = 0;
    std::int64_t remaining = 0;
  };

  struct Subscription
  {
    std::vector<std::string> robot_ids;
    Subscriber callback;
  };

  Agent& agent_for(Transaction& tx, const std::string& robot_id);
  std::optional<Telemetry> step_one(Transaction& tx, const std::string& robot_id, Seconds now);
  void publish(const Telemetry& t);

  Store& _store;
  SimConfig _config;
  Overlay& _overlay;
  std::map<std::string, Agent> _agents;

  mutable std::mutex _subs_mutex;
  std::map<std::uint64_t, Subscription> _subs;
  std::uint64_t _next_sub = 1;
};

} // namespace rlab::sim

#endif // RLAB__SIM__CONTROL_SERVER_HPP
