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

#include <rlab/sim/kinematics.hpp>

#include <algorithm>
#include <cmath>

namespace rlab::sim {

std::int64_t to_nano(double v)
{
  return std::llround(v * static_cast<double>(Nano));
}

double from_nano(std::int64_t v)
{
  return static_cast<double>(v) / static_cast<double>(Nano);
}

AgentSim::AgentSim(std::string robot_id, FieldLayout field, double wheel_bias, double dt)
: _robot_id(std::move(robot_id)),
  _field(std::move(field)),
  _bias(wheel_bias),
  _dt(dt)
{
}

void AgentSim::load(const Pose& pose, double battery_pct, std::uint64_t tick)
{
  _x = to_nano(pose.x);
  _y = to_nano(pose.y);
  _theta = to_nano(pose.theta);
  _battery = std::llround(battery_pct * MilliPct);
  _tick = tick;
}

Pose AgentSim::pose() const
{
  return Pose{from_nano(_x), from_nano(_y), from_nano(_theta)};
}

bool AgentSim::blocked(std::int64_t x, std::int64_t y) const
{
  return _field.obstacle_at(from_nano(x), from_nano(y));
}

Telemetry AgentSim::step(const DriveCommand* cmd, RobotState state)
{
  ++_tick;
  const bool drive = cmd && state == RobotState::Active;
  const bool moving = drive && (cmd->v != 0.0 || cmd->omega != 0.0);
  if (drive)
  {
    _theta += to_nano((cmd->omega + _bias * cmd->v) * _dt);
    const double th = from_nano(_theta);
    std::int64_t x = _x + to_nano(cmd->v * std::cos(th) * _dt);
    std::int64_t y = _y + to_nano(cmd->v * std::sin(th) * _dt);
    if (_field.rows > 0 && _field.cols > 0)
    {
      const auto w = static_cast<std::int64_t>(std::floor(_field.width() * Nano));
      const auto h = static_cast<std::int64_t>(std::floor(_field.height() * Nano));
      x = std::clamp<std::int64_t>(x, 0, w);
      y = std::clamp<std::int64_t>(y, 0, h);
      if (!blocked(x, y))
      {
        _x = x;
        _y = y;
      }
    }
    else
    {
      _x = x;
      _y = y;
    }
  }

  const double rate = moving ? 0.05 : 0.005;
  _battery = std::max<std::int64_t>(0, _battery - std::llround(rate * _dt * 10.0 * MilliPct));

  Telemetry t;
  t.robot_id = _robot_id;
  t.tick = _tick;
  t.pose = pose();
  t.battery_pct = battery_pct();
  t.state = (t.battery_pct < FaultBatteryPct) ? RobotState::Fault : state;
  return t;
}

} // namespace rlab::sim
