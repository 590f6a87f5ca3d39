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

#ifndef RLAB__CONFIG_HPP
#define RLAB__CONFIG_HPP

#include <rlab/types.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace rlab {

struct StoreConfig
{
  std::string log_path;
  std::string snapshot_path;
  std::uint64_t snapshot_every = 1000;
};

struct SchedulerConfig
{
  std::int64_t default_quota_min = 240;
  /// Bring up a workspace for the session owner at activation when none is live.
  bool auto_workspace = true;
  bool auto_workspace_gpu = true;
};

struct ProvisionerConfig
{
  Seconds node_boot_s = 60;
  Seconds image_pull_s = 20;
  Seconds container_start_s = 5;
  Seconds flash_base_s = 120;
  std::int64_t flash_rate_mb_per_s = 40;
  Seconds idle_grace_s = 15 * 60;
  std::int32_t max_nodes = 32;

  /// Template for nodes added by scale-up.
  std::int32_t node_cpu_cores = 16;
  std::int64_t node_ram_mb = 32768;
  bool node_has_gpu = true;
  std::int64_t node_rate_cents = 90;

  WorkspaceDemand workspace_demand;
  std::string image_version = "ros-noetic-desktop:1";
};

struct OverlayConfig
{
  OverlayAddress network = (10u << 24) | (80u << 16);
  int prefix_len = 16;
  Seconds stale_after_s = 90;
  Seconds evict_after_s = 300;
  Seconds heartbeat_s = 30;

  /// Usable host numbers (network and broadcast excluded).
  std::uint32_t pool_size() const
  {
    return (std::uint32_t{1} << (32 - prefix_len)) - 2;
  }
};

struct SimConfig
{
  double dt = 0.1;
  double max_v = 0.5;
  double max_omega = 2.0;
  std::size_t queue_depth = 16;
  std::uint64_t seed = 1;
  std::int32_t field_rows = 10;
  std::int32_t field_cols = 10;
  double field_cell_m = 0.5;
  int control_port = 0;
};

struct AuthConfig
{
  std::string admin_token;
  /// When set, credentials derive from this secret instead of the OS RNG.
  std::string token_secret;
};

struct GatewayConfig
{
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct LabConfig
{
  StoreConfig store;
  SchedulerConfig scheduler;
  ProvisionerConfig provisioner;
  OverlayConfig overlay;
  SimConfig sim;
  AuthConfig auth;
  GatewayConfig gateway;

  /// INI text with sections [store] [scheduler] [provisioner] [overlay]
  /// [sim] [auth] [gateway]. Unknown keys are rejected.
  static LabConfig parse(const std::string& text);
  static LabConfig load(const std::filesystem::path& path);

  /// Throws Error(BadRequest) when a value is out of range.
  void validate() const;
};

} // namespace rlab

#endif // RLAB__CONFIG_HPP
