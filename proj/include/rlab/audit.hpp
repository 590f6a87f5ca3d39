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

#ifndef RLAB__AUDIT_HPP
#define RLAB__AUDIT_HPP

#include <rlab/event.hpp>
#include <rlab/state.hpp>

#include <span>
#include <string>
#include <vector>

namespace rlab {

/// Pairs of non-cancelled reservations that share a robot and overlap in time.
std::vector<std::string> audit_double_booking(const SystemState& state);

/// Every SessionActivated must follow a successful reprovision of each
/// reserved robot, started after the activation request, and find the robot
/// at full battery with an empty queue.
std::vector<std::string> audit_activation_order(std::span<const Event> log);

/// Every completed command belonged to the session holding the robot.
std::vector<std::string> audit_command_ownership(std::span<const Event> log);

/// No node ever hosts more demand than its capacity, checked after each event.
std::vector<std::string> audit_capacity(std::span<const Event> log);

/// Replay of the log differs from `live`.
std::vector<std::string> audit_replay(std::span<const Event> log, const SystemState& live);

} // namespace rlab

#endif // RLAB__AUDIT_HPP
