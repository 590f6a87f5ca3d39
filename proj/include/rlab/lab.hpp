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

#ifndef RLAB__LAB_HPP
#define RLAB__LAB_HPP

#include <rlab/config.hpp>
#include <rlab/overlay.hpp>
#include <rlab/provisioner.hpp>
#include <rlab/scheduler.hpp>
#include <rlab/sim/control_endpoint.hpp>
#include <rlab/sim/control_server.hpp>
#include <rlab/store.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rlab {

struct RobotSpec
{
  std::string name;
  std::string model = "turtlebot3";
  CapabilitySet capabilities;
  std::int64_t firmware_size_mb = 0;
  Location location = Location::LabField;
  std::string owner_id;
  double wheel_bias = 0.0;
  std::int64_t unit_cost_cents = DefaultRobotUnitCostCents;
};

struct NewStudent
{
  Student student;
  /// Bearer token; only its hash is stored.
  std::string token;
};

/// The whole lab: store, scheduler, provisioner, overlay and control server
/// wired to one clock.
class Lab : public sim::ControlHandler
{
public:
  /// Opens (or creates) the store named by config.store.
  explicit Lab(LabConfig config);
  Lab(LabConfig config, std::unique_ptr<Store> store);
  ~Lab() override;

  Lab(const Lab&) = delete;
  Lab& operator=(const Lab&) = delete;

  /// Admin token or a live student credential. Throws Unauthorized.
  Actor authenticate(std::string_view token) const;
  bool enrollment_token_valid(const SystemState& state, std::string_view token) const;

  NewStudent add_student(const std::string& name, Tier tier,
    std::optional<std::int64_t> quota_min = std::nullopt, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);
  /// Replaces the student's credential and returns the new token.
  std::string issue_credential(const std::string& student_id, const Actor& actor = Actor::system());
  void revoke_credential(const std::string& student_id, const Actor& actor = Actor::system());

  Robot add_robot(RobotSpec spec, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);
  FieldLayout add_field(const std::string& name, std::vector<std::string> cells, double cell_m,
    const Actor& actor = Actor::system(), std::optional<std::int64_t> request_id = std::nullopt);
  Camera add_camera(const std::string& field_id, double x0, double y0, double x1, double y1,
    const Actor& actor = Actor::system(), std::optional<std::int64_t> request_id = std::nullopt);

  /// Latest clock value the lab has been advanced to.
  Seconds now() const { return _now.load(); }

  /// One reconciliation pass at `now` (not before the current clock).
  void tick(Seconds now);

  /// Runs every timer due up to and including `t`, in time order.
  void advance_to(Seconds t);

  std::optional<Seconds> next_due(Seconds after) const;

  /// Stores a code bundle for an Active session and marks the owner's
  /// workspace InUse. Throws TooLarge, UnknownSession, Forbidden,
  /// SessionNotActive, NoWorkspace or BadChecksum, checked in that order.
  Deploy store_deploy(const std::string& session_id, const std::string& name,
    std::string payload, const std::string& checksum, const Actor& actor,
    std::optional<std::int64_t> request_id = std::nullopt);

  /// Bytes of a stored bundle. Throws BadRequest when unknown.
  std::string deploy_bundle(const std::string& deploy_id) const;

  /// Session view: reservation, robots, workspace and deploys.
  Json session_record(const std::string& reservation_id) const;

  std::string hello(const std::string& robot_id, const std::string& token) override;
  std::vector<sim::Telemetry> command(const std::string& session_id,
    const std::string& robot_id, const DriveCommand& command) override;

  Store& store() { return *_store; }
  const Store& store() const { return *_store; }
  Overlay& overlay() { return *_overlay; }
  Provisioner& provisioner() { return *_provisioner; }
  Scheduler& scheduler() { return *_scheduler; }
  sim::ControlServer& control() { return *_control; }
  const LabConfig& config() const { return _config; }

private:
  std::string new_token(const SystemState& state) const;
  Seconds heartbeat_due(const SystemState& state, const OverlayPeer& peer) const;
  bool simulated(const SystemState& state, const OverlayPeer& peer) const;
  void spawn_agents(Seconds now);
  void simulate_heartbeats(Seconds now);

  LabConfig _config;
  std::unique_ptr<Store> _store;
  std::unique_ptr<Overlay> _overlay;
  std::unique_ptr<Provisioner> _provisioner;
  std::unique_ptr<Scheduler> _scheduler;
  std::unique_ptr<sim::ControlServer> _control;
  std::atomic<Seconds> _now{0};
  mutable std::mutex _bundles_mutex;
  std::map<std::string, std::string> _bundles;
};

/// Stable 64-bit FNV-1a, used to derive per-robot agent seeds.
std::uint64_t fnv1a(std::string_view bytes);

} // namespace rlab

#endif // RLAB__LAB_HPP
