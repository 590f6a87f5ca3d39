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

#include <rlab/config.hpp>
#include <rlab/error.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rlab {

namespace {

using Setter = std::function<void(LabConfig&, const std::string&)>;

template<typename T>
T parse_number(const std::string& key, const std::string& value)
{
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof())
    throw Error(Errc::BadRequest, "config " + key + ": not a number: '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value)
{
  if (value == "true" || value == "1" || value == "yes")
    return true;
  if (value == "false" || value == "0" || value == "no")
    return false;
  throw Error(Errc::BadRequest, "config " + key + ": not a boolean: '" + value + "'");
}

#define RLAB_NUM(path, field) \
  {path, [](LabConfig& c, const std::string& v) { \
    c.field = parse_number<decltype(c.field)>(path, v); }}
#define RLAB_BOOL(path, field) \
  {path, [](LabConfig& c, const std::string& v) { c.field = parse_bool(path, v); }}
#define RLAB_STR(path, field) \
  {path, [](LabConfig& c, const std::string& v) { c.field = v; }}

const std::map<std::string, Setter>& setters()
{
  static const std::map<std::string, Setter> table = {
    RLAB_STR("store.log", store.log_path),
    RLAB_STR("store.snapshot", store.snapshot_path),
    RLAB_NUM("store.snapshot_every", store.snapshot_every),
    {"scheduler.grid_min", [](LabConfig&, const std::string& v) {
      if (parse_number<int>("scheduler.grid_min", v) != 15)
        throw Error(Errc::BadRequest, "config scheduler.grid_min: only 15 is supported");
    }},
    {"scheduler.max_slot_min", [](LabConfig&, const std::string& v) {
      if (parse_number<int>("scheduler.max_slot_min", v) != MaxSlotMinutes)
        throw Error(Errc::BadRequest, "config scheduler.max_slot_min: only 120 is supported");
    }},
    RLAB_NUM("scheduler.quota_min", scheduler.default_quota_min),
    RLAB_BOOL("scheduler.auto_workspace", scheduler.auto_workspace),
    RLAB_BOOL("scheduler.auto_workspace_gpu", scheduler.auto_workspace_gpu),
    RLAB_NUM("provisioner.node_boot_s", provisioner.node_boot_s),
    RLAB_NUM("provisioner.image_pull_s", provisioner.image_pull_s),
    RLAB_NUM("provisioner.container_start_s", provisioner.container_start_s),
    RLAB_NUM("provisioner.flash_base_s", provisioner.flash_base_s),
    RLAB_NUM("provisioner.flash_rate_mb_s", provisioner.flash_rate_mb_per_s),
    RLAB_NUM("provisioner.idle_grace_s", provisioner.idle_grace_s),
    RLAB_NUM("provisioner.max_nodes", provisioner.max_nodes),
    RLAB_NUM("provisioner.node_cpu", provisioner.node_cpu_cores),
    RLAB_NUM("provisioner.node_ram_mb", provisioner.node_ram_mb),
    RLAB_BOOL("provisioner.node_gpu", provisioner.node_has_gpu),
    RLAB_NUM("provisioner.node_rate_cents", provisioner.node_rate_cents),
    RLAB_NUM("provisioner.workspace_cpu", provisioner.workspace_demand.cpu_cores),
    RLAB_NUM("provisioner.workspace_ram_mb", provisioner.workspace_demand.ram_mb),
    RLAB_STR("provisioner.image", provisioner.image_version),
    {"overlay.subnet", [](LabConfig& c, const std::string& v) {
      const auto slash = v.find('/');
      if (slash == std::string::npos)
        throw Error(Errc::BadRequest, "config overlay.subnet: expected A.B.C.D/N");
      c.overlay.network = parse_address(v.substr(0, slash));
      c.overlay.prefix_len = parse_number<int>("overlay.subnet", v.substr(slash + 1));
    }},
    RLAB_NUM("overlay.stale_s", overlay.stale_after_s),
    RLAB_NUM("overlay.evict_s", overlay.evict_after_s),
    RLAB_NUM("overlay.heartbeat_s", overlay.heartbeat_s),
    RLAB_NUM("sim.dt", sim.dt),
    RLAB_NUM("sim.max_v", sim.max_v),
    RLAB_NUM("sim.max_omega", sim.max_omega),
    RLAB_NUM("sim.queue_depth", sim.queue_depth),
    RLAB_NUM("sim.seed", sim.seed),
    RLAB_NUM("sim.field_rows", sim.field_rows),
    RLAB_NUM("sim.field_cols", sim.field_cols),
    RLAB_NUM("sim.field_cell_m", sim.field_cell_m),
    RLAB_NUM("sim.control_port", sim.control_port),
    RLAB_STR("auth.admin_token", auth.admin_token),
    RLAB_STR("auth.token_secret", auth.token_secret),
    RLAB_STR("gateway.host", gateway.host),
    RLAB_NUM("gateway.port", gateway.port),
  };
  return table;
}

#undef RLAB_NUM
#undef RLAB_BOOL
#undef RLAB_STR

} // anonymous namespace

LabConfig LabConfig::parse(const std::string& text)
{
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try
  {
    pt::ini_parser::read_ini(in, tree);
  }
  catch (const pt::ini_parser_error& e)
  {
    throw Error(Errc::BadRequest, std::string("config: ") + e.what());
  }

  LabConfig config;
  const auto& table = setters();
  for (const auto& [section, keys] : tree)
  {
    if (keys.empty() && !keys.data().empty())
      throw Error(Errc::BadRequest, "config: key '" + section + "' outside a section");
    for (const auto& [key, value] : keys)
    {
      const auto path = section + "." + key;
      const auto it = table.find(path);
      if (it == table.end())
        throw Error(Errc::BadRequest, "config: unknown key '" + path + "'");
      it->second(config, value.data());
    }
  }
  config.validate();
  return config;
}

LabConfig LabConfig::load(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(Errc::IoFailure, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void LabConfig::validate() const
{
  auto require = [](bool ok, const char* what) {
    if (!ok)
      throw Error(Errc::BadRequest, std::string("config: ") + what);
  };
  require(scheduler.default_quota_min > 0, "scheduler.quota_min must be positive");
  require(provisioner.node_boot_s >= 0 && provisioner.image_pull_s >= 0
    && provisioner.container_start_s >= 0 && provisioner.flash_base_s >= 0,
    "provisioner durations must be non-negative");
  require(provisioner.flash_rate_mb_per_s > 0, "provisioner.flash_rate_mb_s must be positive");
  require(provisioner.idle_grace_s >= 0, "provisioner.idle_grace_s must be non-negative");
  require(provisioner.max_nodes >= 0, "provisioner.max_nodes must be non-negative");
  require(provisioner.node_cpu_cores > 0 && provisioner.node_ram_mb > 0,
    "provisioner node template must have capacity");
  require(provisioner.node_rate_cents >= 0, "provisioner.node_rate_cents must be non-negative");
  require(provisioner.workspace_demand.cpu_cores > 0 && provisioner.workspace_demand.ram_mb > 0,
    "workspace demand must be positive");
  require(overlay.prefix_len >= 8 && overlay.prefix_len <= 30, "overlay prefix must be /8../30");
  const std::uint32_t host_mask = (std::uint32_t{1} << (32 - overlay.prefix_len)) - 1;
  require((overlay.network & host_mask) == 0, "overlay.subnet has host bits set");
  require(overlay.stale_after_s > 0 && overlay.evict_after_s > overlay.stale_after_s,
    "overlay TTLs must satisfy 0 < stale < evict");
  require(overlay.heartbeat_s > 0 && overlay.heartbeat_s <= overlay.stale_after_s,
    "overlay.heartbeat_s must be within the stale TTL");
  require(sim.dt > 0.0, "sim.dt must be positive");
  require(sim.max_v > 0.0 && sim.max_omega > 0.0, "sim velocity bounds must be positive");
  require(sim.queue_depth >= 1 && sim.queue_depth <= 16, "sim.queue_depth must be 1..16");
  require(sim.field_rows > 0 && sim.field_cols > 0 && sim.field_cell_m > 0.0,
    "sim default field must be non-empty");
}

} // namespace rlab
