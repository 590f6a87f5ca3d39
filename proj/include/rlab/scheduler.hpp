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

#ifndef RLAB__SCHEDULER_HPP
#define RLAB__SCHEDULER_HPP

#include <rlab/config.hpp>
#include <rlab/provisioner.hpp>
#include <rlab/state.hpp>
#include <rlab/store.hpp>

#include <optional>
#include <string>
#include <vector>

namespace rlab {

struct ScheduleQuery
{
  TimeSlot window;
  CapabilitySet required_capabilities;
  Tier tier = Tier::RemoteLab;
};

struct ActivationOrder
{
  std::string reservation_id;
  std::vector<std::string> robot_ids;
  std::string workspace_id;
  Seconds due = 0;

  bool operator==(const ActivationOrder&) const = default;
};

/// Robots on the lab field matching the query with no overlapping hold.
std::vector<std::string> available_robots(const SystemState& state, const ScheduleQuery& query);

/// Minutes left in the ISO week containing `week_of`, never negative.
std::int64_t quota_remaining(const SystemState& state, const std::string& student_id,
  Seconds week_of);

/// Time-shared robot calendar with clock-driven session activation and expiry.
class Scheduler
{
public:
  Scheduler(Store& store, SchedulerConfig config, Provisioner& provisioner);

  /// Throws InvalidSlot, UnknownStudent, TierDenied, UnknownRobot,
  /// UnknownField, PastSlot, Conflict or QuotaExceeded, checked in that order.
  Reservation request_reservation(const std::string& student_id,
    std::vector<std::string> robot_ids, const TimeSlot& slot, const std::string& field_layout_id,
    Seconds now, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);

  std::vector<std::string> find_available_robots(const ScheduleQuery& query) const;

  Reservation cancel_reservation(const std::string& reservation_id, const Actor& actor,
    Seconds now, std::optional<std::int64_t> request_id = std::nullopt);

  /// Starts due sessions and drives them to Active once every robot is reset.
  /// Orders are emitted once per reservation.
  std::vector<ActivationOrder> tick_activate(Seconds now);

  /// Completes or no-shows reservations whose slot has ended.
  std::vector<std::string> tick_expire(Seconds now);

  std::int64_t quota_remaining(const std::string& student_id, Seconds week_of) const;

  std::optional<Seconds> next_due(const SystemState& state, Seconds after) const;

  /// Releases auto-provisioned workspaces of finished reservations.
  void reap_workspaces(Seconds now);

  const SchedulerConfig& config() const { return _config; }

private:
  std::string workspace_for(const Reservation& r, Seconds now);

  Store& _store;
  SchedulerConfig _config;
  Provisioner& _provisioner;
};

} // namespace rlab

#endif // RLAB__SCHEDULER_HPP
