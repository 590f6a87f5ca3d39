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

#ifndef RLAB__SIM__KINEMATICS_HPP
#define RLAB__SIM__KINEMATICS_HPP

#include <rlab/types.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace rlab::sim {

/// Pose and heading are integer nanometres and nanoradians; battery is
/// integer thousandths of a percent.
constexpr std::int64_t Nano = 1'000'000'000;
constexpr std::int64_t MilliPct = 1000;
constexpr double FaultBatteryPct = 10.0;

std::int64_t to_nano(double v);
double from_nano(std::int64_t v);

struct Telemetry
{
  std::string robot_id;
  std::uint64_t tick = 0;
  Pose pose;
  double battery_pct = 0.0;
  RobotState state = RobotState::Idle;

  bool operator==(const Telemetry&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Telemetry, robot_id, tick, pose, battery_pct, state)

/// Unicycle agent with a per-robot wheel bias, integrated with heading-first
/// Euler steps of length dt and clamped to the field.
class AgentSim
{
public:
  AgentSim(std::string robot_id, FieldLayout field, double wheel_bias, double dt = 0.1);

  /// Advances one tick. Motion happens only when `cmd` is set and the robot
  /// is Active; the battery drains either way. The returned state is Fault
  /// once the battery falls below the fault threshold.
  Telemetry step(const DriveCommand* cmd, RobotState state);

  void load(const Pose& pose, double battery_pct, std::uint64_t tick);
  void set_field(FieldLayout field) { _field = std::move(field); }

  Pose pose() const;
  double battery_pct() const { return static_cast<double>(_battery) / MilliPct; }
  std::uint64_t tick() const { return _tick; }
  const std::string& robot_id() const { return _robot_id; }
  const FieldLayout& field() const { return _field; }
  double wheel_bias() const { return _bias; }

  std::int64_t x_nm() const { return _x; }
  std::int64_t y_nm() const { return _y; }
  std::int64_t theta_nrad() const { return _theta; }

private:
  bool blocked(std::int64_t x, std::int64_t y) const;

  std::string _robot_id;
  FieldLayout _field;
  double _bias;
  double _dt;
  std::int64_t _x = 0;
  std::int64_t _y = 0;
  std::int64_t _theta = 0;
  std::int64_t _battery = 100 * MilliPct;
  std::uint64_t _tick = 0;
};

} // namespace rlab::sim

#endif // RLAB__SIM__KINEMATICS_HPP
