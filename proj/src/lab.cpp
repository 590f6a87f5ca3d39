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

#include <rlab/lab.hpp>
#include <rlab/crypto.hpp>
#include <rlab/error.hpp>

#include <algorithm>
#include <set>

namespace rlab {

std::uint64_t fnv1a(std::string_view bytes)
{
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes)
  {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

StoreOptions store_options(const StoreConfig& c)
{
  StoreOptions o;
  o.log_path = c.log_path;
  o.snapshot_path = c.snapshot_path;
  o.snapshot_every = c.snapshot_every;
  return o;
}

bool is_token_shape(std::string_view token)
{
  return token.size() == 64 && token.find_first_not_of("0123456789abcdef") == std::string_view::npos;
}

} // anonymous namespace

//==============================================================================
Lab::Lab(LabConfig config)
: Lab(config, Store::open(store_options(config.store)))
{
}

Lab::Lab(LabConfig config, std::unique_ptr<Store> store)
: _config(std::move(config)),
  _store(std::move(store))
{
  _config.validate();
  _overlay = std::make_unique<Overlay>(*_store, _config.overlay,
    [this](const SystemState& s, std::string_view token) {
      return enrollment_token_valid(s, token);
    });
  _provisioner = std::make_unique<Provisioner>(*_store, _config.provisioner, *_overlay);
  _scheduler = std::make_unique<Scheduler>(*_store, _config.scheduler, *_provisioner);
  _control = std::make_unique<sim::ControlServer>(*_store, _config.sim, *_overlay);
  _now = _store->snapshot()->clock;
}

Lab::~Lab() = default;

//==============================================================================
Actor Lab::authenticate(std::string_view token) const
{
  const auto& admin = _config.auth.admin_token;
  if (!admin.empty() && token.size() == admin.size() && constant_time_equal(token, admin))
    return Actor::administrator();
  if (!is_token_shape(token))
    throw Error(Errc::Unauthorized, "malformed token");
  const auto s = _store->snapshot();
  const auto it = s->credentials.find(sha256_hex(token));
  if (it == s->credentials.end() || it->second.revoked)
    throw Error(Errc::Unauthorized, "unknown or revoked token");
  return Actor::student(it->second.student_id);
}

bool Lab::enrollment_token_valid(const SystemState& state, std::string_view token) const
{
  const auto& admin = _config.auth.admin_token;
  if (!admin.empty() && token.size() == admin.size() && constant_time_equal(token, admin))
    return true;
  if (!is_token_shape(token))
    return false;
  const auto it = state.credentials.find(sha256_hex(token));
  return it != state.credentials.end() && !it->second.revoked;
}

std::string Lab::new_token(const SystemState& state) const
{
  if (_config.auth.token_secret.empty())
    return random_token();
  return derive_token(_config.auth.token_secret, "cred:" + std::to_string(state.last_seq + 1));
}

NewStudent Lab::add_student(const std::string& name, Tier tier,
  std::optional<std::int64_t> quota_min, const Actor& actor,
  std::optional<std::int64_t> request_id)
{
  return _store->transact([&](Transaction& tx) {
    if (name.empty())
      throw Error(Errc::BadRequest, "student name must not be empty");
    const auto quota = quota_min.value_or(_config.scheduler.default_quota_min);
    if (quota <= 0)
      throw Error(Errc::BadRequest, "weekly quota must be positive");
    for (const auto& [id, st] : tx.state().students)
    {
      if (st.name == name)
        throw Error(Errc::BadRequest, "student name '" + name + "' already taken");
    }
    const auto id = next_id(tx.state(), "stu");
    const auto token = new_token(tx.state());
    Json p;
    p["id"] = id;
    p["name"] = name;
    p["max_tier"] = tier;
    p["weekly_quota_min"] = quota;
    p["token_hash"] = sha256_hex(token);
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::StudentAdded, std::move(p), _now, actor.id);
    return NewStudent{tx.state().students.at(id), token};
  });
}

std::string Lab::issue_credential(const std::string& student_id, const Actor& actor)
{
  return _store->transact([&](Transaction& tx) {
    if (!tx.state().students.count(student_id))
      throw Error(Errc::UnknownStudent, "no student '" + student_id + "'");
    const auto token = new_token(tx.state());
    Json p;
    p["student_id"] = student_id;
    p["token_hash"] = sha256_hex(token);
    tx.append(events::CredentialIssued, std::move(p), _now, actor.id);
    return token;
  });
}

void Lab::revoke_credential(const std::string& student_id, const Actor& actor)
{
  _store->transact([&](Transaction& tx) {
    const auto it = tx.state().students.find(student_id);
    if (it == tx.state().students.end())
      throw Error(Errc::UnknownStudent, "no student '" + student_id + "'");
    if (it->second.credential_hash.empty())
      throw Error(Errc::BadRequest, "student " + student_id + " has no credential");
    Json p;
    p["student_id"] = student_id;
    tx.append(events::CredentialRevoked, std::move(p), _now, actor.id);
  });
}

Robot Lab::add_robot(RobotSpec spec, const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store->transact([&](Transaction& tx) {
    const auto id = next_id(tx.state(), "rb");
    if (spec.name.empty())
      spec.name = id;
    if (spec.firmware_size_mb < 0)
      throw Error(Errc::BadRequest, "firmware size must be non-negative");
    for (const auto& [rid, robot] : tx.state().robots)
    {
      if (robot.name == spec.name)
        throw Error(Errc::BadRequest, "robot name '" + spec.name + "' already taken");
    }
    if (spec.location == Location::StudentHome && !tx.state().students.count(spec.owner_id))
      throw Error(Errc::UnknownStudent, "home robots need an owning student");
    Json p;
    p["id"] = id;
    p["name"] = spec.name;
    p["model"] = spec.model;
    p["capabilities"] = spec.capabilities;
    p["location"] = spec.location;
    p["owner_id"] = spec.owner_id;
    p["firmware_size_mb"] = spec.firmware_size_mb;
    p["wheel_bias"] = spec.wheel_bias;
    p["unit_cost_cents"] = spec.unit_cost_cents;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::RobotAdded, std::move(p), _now, actor.id);
    return tx.state().robots.at(id);
  });
}

FieldLayout Lab::add_field(const std::string& name, std::vector<std::string> cells,
  double cell_m, const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store->transact([&](Transaction& tx) {
    if (cells.empty() || cells.front().empty())
      throw Error(Errc::BadRequest, "field needs at least one cell");
    const auto id = next_id(tx.state(), "fld");
    Json p;
    p["id"] = id;
    p["name"] = name.empty() ? id : name;
    p["rows"] = cells.size();
    p["cols"] = cells.front().size();
    p["cell_m"] = cell_m;
    p["cells"] = cells;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::FieldAdded, std::move(p), _now, actor.id);
    return tx.state().fields.at(id);
  });
}

Camera Lab::add_camera(const std::string& field_id, double x0, double y0, double x1, double y1,
  const Actor& actor, std::optional<std::int64_t> request_id)
{
  return _store->transact([&](Transaction& tx) {
    if (!tx.state().fields.count(field_id))
      throw Error(Errc::UnknownField, "no field layout '" + field_id + "'");
    const auto id = next_id(tx.state(), "cam");
    Json p;
    p["id"] = id;
    p["field_id"] = field_id;
    p["x0"] = x0;
    p["y0"] = y0;
    p["x1"] = x1;
    p["y1"] = y1;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::CameraAdded, std::move(p), _now, actor.id);
    return tx.state().cameras.at(id);
  });
}

//==============================================================================
void Lab::tick(Seconds now)
{
  _store->transact([&](Transaction&) {
    if (now < _now)
      throw Error(Errc::BadRequest, "clock cannot move backwards");
    _now = now;
    _provisioner->tick(now);
    _scheduler->tick_expire(now);
    _scheduler->tick_activate(now);
    spawn_agents(now);
    simulate_heartbeats(now);
    _overlay->sweep(now);
  });
}

void Lab::advance_to(Seconds t)
{
  _store->transact([&](Transaction&) {
    tick(_now);
    for (;;)
    {
      const auto due = next_due(_now);
      if (!due || *due > t)
        break;
      tick(*due);
    }
    if (t > _now)
      tick(t);
  });
}

std::optional<Seconds> Lab::next_due(Seconds after) const
{
  return _store->transact([&](Transaction& tx) {
    const auto& s = tx.state();
    std::optional<Seconds> best;
    auto consider = [&](std::optional<Seconds> t) {
      if (t && *t > after && (!best || *t < *best))
        best = t;
    };
    consider(_provisioner->next_due(s, after));
    consider(_scheduler->next_due(s, after));
    consider(_overlay->next_due(s, after));
    for (const auto& [id, peer] : s.peers)
    {
      if (simulated(s, peer))
        consider(std::max(heartbeat_due(s, peer), after + 1));
    }
    return best;
  });
}

bool Lab::simulated(const SystemState& s, const OverlayPeer& peer) const
{
  if (peer.status == PeerStatus::Evicted)
    return false;
  if (peer.kind == PeerKind::CloudWorkspace)
  {
    const auto it = s.workspaces.find(peer.subject);
    return it != s.workspaces.end()
      && (it->second.state == WorkspaceState::Starting || it->second.state == WorkspaceState::Ready
        || it->second.state == WorkspaceState::InUse);
  }
  if (peer.kind == PeerKind::LabRobot)
  {
    const auto it = s.robots.find(peer.subject);
    return it != s.robots.end() && it->second.spawned && !it->second.disconnected;
  }
  return false;
}

Seconds Lab::heartbeat_due(const SystemState& s, const OverlayPeer& peer) const
{
  const auto interval = _config.overlay.heartbeat_s;
  if (peer.kind == PeerKind::LabRobot && peer.last_heartbeat == peer.enrolled_at)
  {
    const auto seed = s.robots.at(peer.subject).agent_seed;
    return peer.enrolled_at + static_cast<Seconds>(seed % static_cast<std::uint64_t>(interval)) + 1;
  }
  return peer.last_heartbeat + interval;
}

void Lab::spawn_agents(Seconds now)
{
  _store->transact([&](Transaction& tx) {
    std::set<std::string> enrolled;
    for (const auto& [id, peer] : tx.state().peers)
      if (peer.kind == PeerKind::LabRobot)
        enrolled.insert(peer.subject);
    std::vector<std::string> robots;
    for (const auto& [id, robot] : tx.state().robots)
      robots.push_back(id);
    for (const auto& id : robots)
    {
      const auto& robot = tx.state().robots.at(id);
      if (robot.state == RobotState::Active && !robot.spawned)
        _control->spawn_agent(id, robot.field_id, fnv1a(id) ^ _config.sim.seed, now);
      else if (robot.spawned && !robot.disconnected && !enrolled.count(id))
        _overlay->enroll(PeerKind::LabRobot, id, now);
    }
  });
}

void Lab::simulate_heartbeats(Seconds now)
{
  _store->transact([&](Transaction& tx) {
    const auto& s = tx.state();
    std::vector<std::string> beat;
    std::set<std::string> connected;
    for (const auto& [id, peer] : s.peers)
    {
      if (peer.kind == PeerKind::LabRobot && peer.status != PeerStatus::Evicted)
        connected.insert(peer.subject);
      if (!simulated(s, peer) || heartbeat_due(s, peer) > now)
        continue;
      if (status_at(peer.last_heartbeat, now, _config.overlay) == PeerStatus::Evicted)
        continue;
      beat.push_back(id);
    }
    std::vector<std::string> rejoin;
    for (const auto& [id, robot] : s.robots)
    {
      if (robot.spawned && !robot.disconnected && !connected.count(id))
        rejoin.push_back(id);
    }
    for (const auto& id : beat)
      _overlay->heartbeat(id, now);
    for (const auto& id : rejoin)
      _overlay->enroll(PeerKind::LabRobot, id, now);
  });
}

//==============================================================================
Json Lab::session_record(const std::string& reservation_id) const
{
  const auto s = _store->snapshot();
  const auto it = s->reservations.find(reservation_id);
  if (it == s->reservations.end())
    throw Error(Errc::UnknownSession, "no session '" + reservation_id + "'");
  const auto& r = it->second;
  Json out;
  out["id"] = r.id;
  out["student_id"] = r.student_id;
  out["state"] = r.state;
  out["slot"] = r.slot;
  out["field_layout_id"] = r.field_layout_id;
  out["workspace_id"] = r.workspace_id;
  Json robots = Json::array();
  for (const auto& rid : r.robot_ids)
  {
    const auto& robot = s->robots.at(rid);
    Json j;
    j["id"] = rid;
    j["state"] = robot.state;
    j["pose"] = robot.pose;
    j["battery_pct"] = robot.battery_pct;
    j["firmware_version"] = robot.firmware_version;
    j["tick"] = robot.sim_tick;
    for (const auto& [pid, peer] : s->peers)
    {
      if (peer.kind == PeerKind::LabRobot && peer.subject == rid
        && peer.status != PeerStatus::Evicted)
        j["overlay_addr"] = format_address(peer.addr);
    }
    robots.push_back(j);
  }
  out["robots"] = robots;
  const auto ws = s->workspaces.find(r.workspace_id);
  if (ws != s->workspaces.end())
  {
    Json w;
    w["id"] = ws->second.id;
    w["state"] = ws->second.state;
    w["node_id"] = ws->second.node_id;
    if (ws->second.overlay_addr)
      w["overlay_addr"] = format_address(*ws->second.overlay_addr);
    out["workspace"] = w;
  }
  else
  {
    out["workspace"] = nullptr;
  }
  Json deploys = Json::array();
  for (const auto& d : r.deploys)
    deploys.push_back(s->deploys.at(d));
  out["deploys"] = deploys;
  return out;
}

Deploy Lab::store_deploy(const std::string& session_id, const std::string& name,
  std::string payload, const std::string& checksum, const Actor& actor,
  std::optional<std::int64_t> request_id)
{
  if (payload.size() > static_cast<std::size_t>(MaxBundleBytes))
  {
    throw Error(Errc::TooLarge, "bundle of " + std::to_string(payload.size())
      + " bytes exceeds " + std::to_string(MaxBundleBytes));
  }
  return _store->transact([&](Transaction& tx) {
    const auto& s = tx.state();
    const auto it = s.reservations.find(session_id);
    if (it == s.reservations.end())
      throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
    const auto& r = it->second;
    if (!actor.admin && actor.id != r.student_id)
      throw Error(Errc::Forbidden, "session " + session_id + " belongs to another student");
    if (r.state != ReservationState::Active)
      throw Error(Errc::SessionNotActive, "session " + session_id + " is " + to_string(r.state));
    const auto* ws = live_workspace(s, r.student_id);
    if (!ws || (ws->state != WorkspaceState::Ready && ws->state != WorkspaceState::InUse))
      throw Error(Errc::NoWorkspace, "student " + r.student_id + " has no Ready workspace");
    const auto digest = sha256_hex(payload);
    if (checksum != digest)
      throw Error(Errc::BadChecksum, "bundle checksum mismatch", Json{{"expected", digest}});
    const auto id = next_id(s, "dep");
    Json p;
    p["deploy_id"] = id;
    p["session_id"] = session_id;
    p["name"] = name.empty() ? id : name;
    p["size_bytes"] = payload.size();
    p["checksum"] = digest;
    if (request_id)
      p["request_id"] = *request_id;
    tx.append(events::DeployStored, std::move(p), _now, actor.id);
    std::lock_guard<std::mutex> lock(_bundles_mutex);
    _bundles[id] = std::move(payload);
    return tx.state().deploys.at(id);
  });
}

std::string Lab::deploy_bundle(const std::string& deploy_id) const
{
  std::lock_guard<std::mutex> lock(_bundles_mutex);
  const auto it = _bundles.find(deploy_id);
  if (it == _bundles.end())
    throw Error(Errc::BadRequest, "no stored bundle '" + deploy_id + "'");
  return it->second;
}

std::string Lab::hello(const std::string& robot_id, const std::string& token)
{
  const auto actor = authenticate(token);
  const auto s = _store->snapshot();
  for (const auto& [id, r] : s->reservations)
  {
    if (r.state == ReservationState::Active && r.slot.contains(_now)
      && std::binary_search(r.robot_ids.begin(), r.robot_ids.end(), robot_id)
      && (actor.admin || actor.id == r.student_id))
      return id;
  }
  throw Error(Errc::NotReserved, "no active session of this caller holds " + robot_id);
}

std::vector<sim::Telemetry> Lab::command(const std::string& session_id,
  const std::string& robot_id, const DriveCommand& command)
{
  return _store->transact([&](Transaction& tx) {
    const auto r = tx.state().reservations.find(session_id);
    if (r == tx.state().reservations.end())
      throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
    const auto actor = Actor::student(r->second.student_id);
    _control->dispatch(session_id, robot_id, command, _now, actor);
    return _control->run_until_idle(robot_id, _now);
  });
}

} // namespace rlab
