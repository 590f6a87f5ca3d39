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

#ifndef RLAB__PROVISIONER_HPP
#define RLAB__PROVISIONER_HPP

#include <rlab/config.hpp>
#include <rlab/overlay.hpp>
#include <rlab/state.hpp>
#include <rlab/store.hpp>

#include <optional>
#include <string>
#include <vector>

namespace rlab {

struct PlacementRequest
{
  std::string workspace_id;
  WorkspaceDemand demand;
};

/// How many copies of `demand` still fit on the node.
std::int64_t free_units(const SystemState& state, const Node& node, const WorkspaceDemand& demand);

/// First fit over Ready nodes ordered by descending free capacity (ties by
/// ascending id). GPU demands only land on GPU nodes.
std::optional<std::string> select_node(const PlacementRequest& request, const SystemState& state);

/// Flash time for a firmware image: base reboot plus size over the flash rate.
Seconds reprovision_duration(std::int64_t firmware_size_mb, const ProvisionerConfig& config);

struct CostLine
{
  std::string node_id;
  std::int64_t billed_minutes = 0;
  std::int64_t rate_cents_per_hour = 0;
  std::int64_t amount_cents = 0;

  bool operator==(const CostLine&) const = default;
};

struct CostReport
{
  Seconds from = 0;
  Seconds to = 0;
  std::int64_t total_cents = 0;
  std::vector<CostLine> nodes;
};

/// Ledger entries clipped to [from, to); open entries run until `now`.
/// Partial minutes bill as whole minutes; cents round up per node.
CostReport cost_report(const SystemState& state, Seconds from, Seconds to, Seconds now);

struct WorkspaceOptions
{
  bool ephemeral = false;
  std::optional<std::int64_t> request_id;
};

/// Drives workspace and robot re-provisioning lifecycles and the node pool.
class Provisioner
{
public:
  Provisioner(Store& store, ProvisionerConfig config, Overlay& overlay);

  Workspace provision_workspace(const std::string& student_id, bool needs_gpu, Seconds now,
    const Actor& actor = Actor::system(), WorkspaceOptions options = {});

  /// Places a Requested workspace, scaling the pool and retrying once when
  /// nothing fits. Returns nullopt while new capacity is still booting.
  std::optional<std::string> place_workspace(const std::string& workspace_id, Seconds now);

  /// Adds nodes for unmet demand (up to max_nodes) and drains idle nodes.
  /// Returns the ids of newly provisioned nodes.
  std::vector<std::string> scale_nodes(Seconds now);

  Node add_node(std::int32_t cpu_cores, std::int64_t ram_mb, bool has_gpu,
    std::int64_t hourly_rate_cents, Seconds now, const Actor& actor = Actor::system(),
    std::optional<std::int64_t> request_id = std::nullopt);

  /// Ready, InUse or Fault -> Stopping -> Released; a Requested workspace is
  /// released directly and a Stopping one is finished.
  Workspace deprovision_workspace(const std::string& workspace_id, Seconds now,
    const Actor& actor = Actor::system(), std::optional<std::int64_t> request_id = std::nullopt);

  /// Ready -> InUse. No-op when already InUse.
  void mark_in_use(const std::string& workspace_id, Seconds now, const Actor& actor);

  ReprovisionJob start_reprovision(const std::string& robot_id, Seconds now,
    const std::string& reservation_id = {}, const Actor& actor = Actor::system());

  /// Throws UnknownJob or TooEarly.
  Robot complete_reprovision(const std::string& robot_id, Seconds now);

  /// Materializes every timed transition due at `now`.
  void tick(Seconds now);

  CostReport cost_report(Seconds from, Seconds to, Seconds now) const;

  std::optional<Seconds> next_due(const SystemState& state, Seconds after) const;

  const ProvisionerConfig& config() const { return _config; }

private:
  void finish_stop(const std::string& workspace_id, Seconds now, const Actor& actor);
  bool capacity_possible(const SystemState& state, const WorkspaceDemand& demand) const;
  std::int32_t active_nodes(const SystemState& state) const;

  Store& _store;
  ProvisionerConfig _config;
  Overlay& _overlay;
};

} // namespace rlab

#endif // RLAB__PROVISIONER_HPP
