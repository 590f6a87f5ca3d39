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

#include <rlab/gateway.hpp>
#include <rlab/error.hpp>

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <deque>

namespace rlab {

namespace {

using httplib::Request;
using httplib::Response;

constexpr const char* JsonType = "application/json";

void reply(Response& res, int status, const Json& body)
{
  res.status = status;
  res.set_content(body.dump(), JsonType);
}

Json body_json(const Request& req)
{
  if (req.body.empty())
    return Json::object();
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::BadRequest, "body must be a JSON object");
  return j;
}

template<typename T>
T field(const Json& body, const char* key)
{
  if (!body.contains(key))
    throw Error(Errc::BadRequest, std::string("missing field '") + key + "'");
  return body.at(key).get<T>();
}

std::int64_t query_int(const Request& req, const char* key)
{
  if (!req.has_param(key))
    throw Error(Errc::BadRequest, std::string("missing query parameter '") + key + "'");
  const auto v = req.get_param_value(key);
  try
  {
    std::size_t used = 0;
    const auto n = std::stoll(v, &used);
    if (used != v.size())
      throw std::invalid_argument(v);
    return n;
  }
  catch (const std::exception&)
  {
    throw Error(Errc::BadRequest, std::string("query parameter '") + key + "' must be an integer");
  }
}

CapabilitySet caps_from(const Json& j)
{
  if (j.is_string())
    return CapabilitySet::parse(j.get<std::string>());
  if (j.is_array())
  {
    std::string csv;
    for (const auto& c : j)
      csv += (csv.empty() ? "" : ",") + c.get<std::string>();
    return CapabilitySet::parse(csv);
  }
  throw Error(Errc::BadRequest, "capabilities must be a string or a list");
}

Json cost_json(const CostReport& r)
{
  Json nodes = Json::array();
  for (const auto& n : r.nodes)
  {
    nodes.push_back({{"node_id", n.node_id}, {"billed_minutes", n.billed_minutes},
      {"rate_cents_per_hour", n.rate_cents_per_hour}, {"amount_cents", n.amount_cents}});
  }
  return {{"from", r.from}, {"to", r.to}, {"total_cents", r.total_cents}, {"nodes", nodes}};
}

void require_admin(const Actor& actor)
{
  if (!actor.admin)
    throw Error(Errc::Forbidden, "administrator token required");
}

bool session_over(ReservationState s)
{
  return s == ReservationState::Completed || s == ReservationState::Cancelled
    || s == ReservationState::NoShow;
}

} // anonymous namespace

Seconds wall_clock()
{
  return std::chrono::duration_cast<std::chrono::seconds>(
    std::chrono::system_clock::now().time_since_epoch()).count();
}

//==============================================================================
Gateway::Gateway(Lab& lab, GatewayOptions options)
: _lab(lab),
  _options(std::move(options)),
  _server(std::make_unique<httplib::Server>())
{
  _server->set_payload_max_length(4 * static_cast<std::size_t>(MaxBundleBytes));
  routes();
}

Gateway::~Gateway()
{
  stop();
}

void Gateway::sync()
{
  if (!_options.clock)
    return;
  const auto t = _options.clock();
  if (t > _lab.now())
    _lab.advance_to(t);
}

void Gateway::ticker()
{
  const auto period = std::chrono::milliseconds(
    static_cast<std::int64_t>(_lab.config().sim.dt * 1000.0));
  while (_running)
  {
    try
    {
      sync();
      _lab.control().step_all(1, _lab.now(), true);
    }
    catch (const std::exception&)
    {
    }
    std::this_thread::sleep_for(period);
  }
}

int Gateway::start(const std::string& host, int port)
{
  const int bound = (port == 0) ? _server->bind_to_any_port(host) : port;
  if (port != 0 && !_server->bind_to_port(host, port))
    throw Error(Errc::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  if (bound < 0)
    throw Error(Errc::IoFailure, "cannot bind " + host);
  _running = true;
  _thread = std::thread([this] { _server->listen_after_bind(); });
  if (_options.realtime)
    _ticker = std::thread([this] { ticker(); });
  _server->wait_until_ready();
  return bound;
}

void Gateway::listen(const std::string& host, int port)
{
  _running = true;
  if (_options.realtime)
    _ticker = std::thread([this] { ticker(); });
  if (!_server->listen(host, port))
  {
    _running = false;
    if (_ticker.joinable())
      _ticker.join();
    throw Error(Errc::IoFailure, "cannot serve on " + host + ":" + std::to_string(port));
  }
}

void Gateway::stop()
{
  _running = false;
  if (_server)
    _server->stop();
  if (_thread.joinable())
    _thread.join();
  if (_ticker.joinable())
    _ticker.join();
}

//==============================================================================
void Gateway::routes()
{
  using Handler = std::function<void(const Request&, Response&)>;
  auto wrap = [this](Handler fn) {
    return [this, fn](const Request& req, Response& res) {
      try
      {
        sync();
        fn(req, res);
      }
      catch (const Error& e)
      {
        reply(res, http_status(e.code()), e.to_json());
      }
      catch (const nlohmann::json::exception& e)
      {
        reply(res, 400, Error(Errc::BadRequest, e.what()).to_json());
      }
      catch (const std::exception& e)
      {
        reply(res, 500, {{"error", "Internal"}, {"message", e.what()}});
      }
    };
  };
  auto actor_of = [this](const Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0)
      throw Error(Errc::Unauthorized, "missing bearer token");
    return _lab.authenticate(std::string_view(header).substr(prefix.size()));
  };
  auto& srv = *_server;

  srv.Get("/api/v1/health", wrap([this](const Request&, Response& res) {
    reply(res, 200, {{"status", "ok"}, {"now", _lab.now()}, {"last_seq", _lab.store().last_seq()}});
  }));

  // Reservations ---------------------------------------------------------------
  srv.Post("/api/v1/reservations", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    const auto body = body_json(req);
    auto student = body.value("student_id", actor.id);
    if (!actor.admin && student != actor.id)
      throw Error(Errc::Forbidden, "students reserve for themselves");
    const TimeSlot slot{field<Seconds>(body, "start"), field<int>(body, "duration_min")};
    const auto r = _lab.scheduler().request_reservation(student,
      field<std::vector<std::string>>(body, "robot_ids"), slot,
      field<std::string>(body, "field_layout_id"), _lab.now(), actor);
    reply(res, 201, r);
  }));

  srv.Get("/api/v1/reservations", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    const auto s = _lab.store().snapshot();
    Json out = Json::array();
    for (const auto& [id, r] : s->reservations)
    {
      if (actor.admin || r.student_id == actor.id)
        out.push_back(r);
    }
    reply(res, 200, {{"reservations", out}});
  }));

  srv.Delete(R"(/api/v1/reservations/([^/]+))",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      reply(res, 200, _lab.scheduler().cancel_reservation(req.matches[1], actor, _lab.now()));
    }));

  srv.Get("/api/v1/robots", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    const auto s = _lab.store().snapshot();
    ScheduleQuery q;
    q.tier = Tier::RemoteLab;
    if (!actor.admin)
      q.tier = s->students.at(actor.id).max_tier;
    if (req.has_param("capability"))
      q.required_capabilities = CapabilitySet::parse(req.get_param_value("capability"));
    std::vector<std::string> ids;
    if (req.has_param("start"))
    {
      q.window.start = query_int(req, "start");
      q.window.duration_min = req.has_param("duration")
        ? static_cast<int>(query_int(req, "duration")) : 15;
      ids = available_robots(*s, q);
    }
    else if (q.tier >= Tier::RemoteLab)
    {
      for (const auto& [id, robot] : s->robots)
      {
        if (robot.location == Location::LabField
          && robot.capabilities.contains(q.required_capabilities))
          ids.push_back(id);
      }
    }
    Json robots = Json::array();
    for (const auto& id : ids)
    {
      const auto& r = s->robots.at(id);
      robots.push_back({{"id", id}, {"name", r.name}, {"model", r.model},
        {"capabilities", r.capabilities}, {"state", r.state}});
    }
    reply(res, 200, {{"robot_ids", ids}, {"robots", robots}});
  }));

  // Sessions -------------------------------------------------------------------
  auto owned_session = [this](const Actor& actor, const std::string& id) {
    const auto s = _lab.store().snapshot();
    const auto it = s->reservations.find(id);
    if (it == s->reservations.end())
      throw Error(Errc::UnknownSession, "no session '" + id + "'");
    if (!actor.admin && it->second.student_id != actor.id)
      throw Error(Errc::Forbidden, "session " + id + " belongs to another student");
    return it->second;
  };

  srv.Get(R"(/api/v1/sessions/([^/]+))",
    wrap([this, actor_of, owned_session](const Request& req, Response& res) {
      owned_session(actor_of(req), req.matches[1]);
      reply(res, 200, _lab.session_record(req.matches[1]));
    }));

  srv.Post(R"(/api/v1/sessions/([^/]+)/commands)",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      const auto body = body_json(req);
      const std::string session = req.matches[1];
      const auto robot = field<std::string>(body, "robot_id");
      const DriveCommand cmd{field<double>(body, "v"), field<double>(body, "omega"),
        field<std::int32_t>(body, "ticks")};
      const auto seq = _lab.control().dispatch(session, robot, cmd, _lab.now(), actor);
      const auto tel = _lab.control().run_until_idle(robot, _lab.now());
      reply(res, 202, {{"accepted_seq", seq}, {"telemetry", tel}});
    }));

  srv.Get(R"(/api/v1/sessions/([^/]+)/telemetry)",
    [this, wrap, actor_of, owned_session](const Request& req, Response& res) {
      std::string session;
      std::vector<std::string> robots;
      std::size_t limit = 0;
      wrap([&](const Request& r, Response&) {
        const auto rsv = owned_session(actor_of(r), r.matches[1]);
        if (session_over(rsv.state))
          throw Error(Errc::SessionEnded, "session " + rsv.id + " is " + to_string(rsv.state));
        session = rsv.id;
        robots = rsv.robot_ids;
        if (r.has_param("limit"))
          limit = static_cast<std::size_t>(query_int(r, "limit"));
      })(req, res);
      if (session.empty())
        return;

      struct Stream
      {
        std::mutex m;
        std::condition_variable cv;
        std::deque<std::string> lines;
        std::size_t sent = 0;
      };
      auto st = std::make_shared<Stream>();
      const auto sub = _lab.control().subscribe(robots, [st](const sim::Telemetry& t) {
        std::lock_guard<std::mutex> lock(st->m);
        st->lines.push_back(Json(t).dump() + "\n");
        st->cv.notify_one();
      });
      res.set_chunked_content_provider("application/x-ndjson",
        [this, st, session, limit](std::size_t, httplib::DataSink& sink) {
          std::deque<std::string> batch;
          {
            std::unique_lock<std::mutex> lock(st->m);
            st->cv.wait_for(lock, std::chrono::milliseconds(_options.stream_poll_ms),
              [&] { return !st->lines.empty() || !_running; });
            batch.swap(st->lines);
          }
          for (const auto& line : batch)
          {
            if (!sink.write(line.data(), line.size()))
              return false;
            if (limit != 0 && ++st->sent >= limit)
            {
              sink.done();
              return true;
            }
          }
          try
          {
            sync();
          }
          catch (const std::exception&)
          {
          }
          const auto s = _lab.store().snapshot();
          const auto& rsv = s->reservations.at(session);
          if (session_over(rsv.state) || !_running)
          {
            const auto end = Json{{"event", "SessionEnded"}, {"session_id", session},
              {"state", rsv.state}}.dump() + "\n";
            sink.write(end.data(), end.size());
            sink.done();
          }
          return true;
        },
        [this, sub](bool) { _lab.control().unsubscribe(sub); });
    });

  srv.Post(R"(/api/v1/sessions/([^/]+)/deploy)",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      const auto name = req.has_param("name") ? req.get_param_value("name") : std::string();
      const auto d = _lab.store_deploy(req.matches[1], name, req.body,
        req.get_header_value("X-Checksum-Sha256"), actor);
      reply(res, 201, {{"deploy_id", d.id}, {"deploy", d}});
    }));

  srv.Get(R"(/api/v1/cameras/([^/]+)/frames)",
    wrap([this, actor_of](const Request& req, Response& res) {
      actor_of(req);
      reply(res, 200, {{"frames", _lab.control().camera_frames(req.matches[1], _lab.now())}});
    }));

  // Overlay --------------------------------------------------------------------
  srv.Post("/api/v1/peers", wrap([this](const Request& req, Response& res) {
    const auto body = body_json(req);
    std::string token = body.value("token", std::string());
    const auto header = req.get_header_value("Authorization");
    if (token.empty() && header.rfind("Bearer ", 0) == 0)
      token = header.substr(7);
    const auto kind = field<PeerKind>(body, "kind");
    if (kind == PeerKind::CloudWorkspace || kind == PeerKind::LabRobot)
      throw Error(Errc::Forbidden, "workspaces and lab robots are enrolled by the platform");
    const auto peer = _lab.overlay().register_peer(kind, token, _lab.now(),
      body.value("subject", std::string()));
    reply(res, 201, {{"peer_id", peer.peer_id}, {"addr", format_address(peer.addr)},
      {"kind", peer.kind}});
  }));

  srv.Post(R"(/api/v1/peers/([^/]+)/heartbeat)",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      const auto status = _lab.overlay().heartbeat_addr(parse_address(req.matches[1]),
        _lab.now(), actor);
      reply(res, 200, {{"status", status}});
    }));

  srv.Get("/api/v1/peers", wrap([this, actor_of](const Request& req, Response& res) {
    actor_of(req);
    const auto table = _lab.overlay().route_table();
    if (req.get_param_value("format") == "text")
    {
      res.status = 200;
      res.set_content(format_route_table(table), "text/plain");
      return;
    }
    Json out = Json::array();
    for (const auto& e : table)
    {
      out.push_back({{"addr", format_address(e.addr)}, {"peer_id", e.peer_id},
        {"kind", e.kind}, {"status", e.status}});
    }
    reply(res, 200, {{"peers", out}});
  }));

  // Workspaces -----------------------------------------------------------------
  srv.Post("/api/v1/workspaces", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    const auto body = body_json(req);
    const auto student = body.value("student_id", actor.id);
    if (!actor.admin && student != actor.id)
      throw Error(Errc::Forbidden, "students provision their own workspace");
    reply(res, 201, _lab.provisioner().provision_workspace(student, body.value("gpu", true),
      _lab.now(), actor));
  }));

  srv.Get("/api/v1/workspaces", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    const auto s = _lab.store().snapshot();
    Json out = Json::array();
    for (const auto& [id, ws] : s->workspaces)
    {
      if (actor.admin || ws.student_id == actor.id)
        out.push_back(ws);
    }
    reply(res, 200, {{"workspaces", out}});
  }));

  srv.Delete(R"(/api/v1/workspaces/([^/]+))",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      const std::string id = req.matches[1];
      const auto s = _lab.store().snapshot();
      const auto it = s->workspaces.find(id);
      if (it == s->workspaces.end())
        throw Error(Errc::UnknownWorkspace, "no workspace '" + id + "'");
      if (!actor.admin && it->second.student_id != actor.id)
        throw Error(Errc::Forbidden, "workspace " + id + " belongs to another student");
      reply(res, 200, _lab.provisioner().deprovision_workspace(id, _lab.now(), actor));
    }));

  // Administration -------------------------------------------------------------
  srv.Post("/api/v1/admin/students", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    std::optional<std::int64_t> quota;
    if (body.contains("quota_min"))
      quota = body.at("quota_min").get<std::int64_t>();
    const auto tier = body.contains("tier") ? body.at("tier").get<Tier>() : Tier::RemoteLab;
    const auto created = _lab.add_student(field<std::string>(body, "name"), tier, quota, actor);
    reply(res, 201, {{"student", created.student}, {"token", created.token}});
  }));

  srv.Post(R"(/api/v1/admin/students/([^/]+)/credential)",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      require_admin(actor);
      reply(res, 201, {{"student_id", req.matches[1]},
        {"token", _lab.issue_credential(req.matches[1], actor)}});
    }));

  srv.Delete(R"(/api/v1/admin/students/([^/]+)/credential)",
    wrap([this, actor_of](const Request& req, Response& res) {
      const auto actor = actor_of(req);
      require_admin(actor);
      _lab.revoke_credential(req.matches[1], actor);
      reply(res, 200, {{"student_id", req.matches[1]}, {"revoked", true}});
    }));

  srv.Post("/api/v1/admin/robots", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    RobotSpec spec;
    spec.name = body.value("name", std::string());
    spec.model = body.value("model", spec.model);
    if (body.contains("capabilities"))
      spec.capabilities = caps_from(body.at("capabilities"));
    spec.firmware_size_mb = body.value("firmware_mb", std::int64_t{0});
    if (body.contains("location"))
      spec.location = body.at("location").get<Location>();
    spec.owner_id = body.value("owner_id", std::string());
    spec.wheel_bias = body.value("wheel_bias", 0.0);
    spec.unit_cost_cents = body.value("unit_cost_cents", DefaultRobotUnitCostCents);
    reply(res, 201, _lab.add_robot(spec, actor));
  }));

  srv.Post("/api/v1/admin/nodes", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    reply(res, 201, _lab.provisioner().add_node(field<std::int32_t>(body, "cpu"),
      field<std::int64_t>(body, "ram_mb"), body.value("gpu", false),
      field<std::int64_t>(body, "rate_cents"), _lab.now(), actor));
  }));

  srv.Post("/api/v1/admin/fields", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    reply(res, 201, _lab.add_field(body.value("name", std::string()),
      field<std::vector<std::string>>(body, "cells"), body.value("cell_m", 0.5), actor));
  }));

  srv.Post("/api/v1/admin/cameras", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    reply(res, 201, _lab.add_camera(field<std::string>(body, "field_id"),
      field<double>(body, "x0"), field<double>(body, "y0"), field<double>(body, "x1"),
      field<double>(body, "y1"), actor));
  }));

  srv.Post("/api/v1/admin/faults", wrap([this, actor_of](const Request& req, Response& res) {
    const auto actor = actor_of(req);
    require_admin(actor);
    const auto body = body_json(req);
    const auto e = _lab.control().inject_fault(field<std::string>(body, "robot_id"),
      field<FaultKind>(body, "kind"), _lab.now(), actor);
    reply(res, 201, e);
  }));

  srv.Get("/api/v1/admin/cost", wrap([this, actor_of](const Request& req, Response& res) {
    require_admin(actor_of(req));
    reply(res, 200, cost_json(_lab.provisioner().cost_report(query_int(req, "from"),
      query_int(req, "to"), _lab.now())));
  }));

  srv.Get("/api/v1/admin/events", wrap([this, actor_of](const Request& req, Response& res) {
    require_admin(actor_of(req));
    const auto since = req.has_param("since") ? query_int(req, "since") : 0;
    reply(res, 200, {{"events", _lab.store().events_since(static_cast<std::uint64_t>(since))}});
  }));
}

} // namespace rlab
