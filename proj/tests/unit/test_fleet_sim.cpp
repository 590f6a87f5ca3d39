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

#include "fixtures.hpp"

#include <rlab/audit.hpp>
#include <rlab/sim/control_endpoint.hpp>
#include <rlab/sim/control_server.hpp>
#include <rlab/sim/kinematics.hpp>
#include <rlab/sim/wire.hpp>

#include <cmath>

using namespace rlab;
using namespace rlab::test;
using rlab::sim::AgentSim;
using rlab::sim::Telemetry;

namespace {

FieldLayout field(int rows, int cols, double cell = 0.5, std::vector<std::string> cells = {})
{
  FieldLayout f;
  f.id = "fld-000001";
  f.rows = rows;
  f.cols = cols;
  f.cell_m = cell;
  f.cells = cells.empty() ? open_field(rows, cols) : std::move(cells);
  return f;
}

std::vector<Telemetry> drive(AgentSim& a, const DriveCommand& c, int ticks,
  RobotState state = RobotState::Active)
{
  std::vector<Telemetry> out;
  for (int i = 0; i < ticks; ++i)
    out.push_back(a.step(&c, state));
  return out;
}

/// Plain double-precision heading-first Euler.
Pose euler_oracle(double v, double omega, double bias, int ticks, double dt = 0.1)
{
  Pose p;
  for (int i = 0; i < ticks; ++i)
  {
    p.theta += (omega + bias * v) * dt;
    p.x += v * std::cos(p.theta) * dt;
    p.y += v * std::sin(p.theta) * dt;
  }
  return p;
}

/// Alice holds tb1 from 08:15 to 09:15; bob holds tb2 from 09:00.
struct SessionRig
{
  Rig rig;
  NewStudent alice;
  std::string bob;
  std::string tb1;
  std::string tb2;
  std::string session;

  SessionRig()
  {
    alice = rig.student_with_token("alice");
    bob = rig.student("bob");
    tb1 = rig.robot("tb1");
    tb2 = rig.robot("tb2", "diff_drive", 0, 0.1);
    session = rig.reserve(alice.student.id, {tb1}, at(0, 8, 15), 60).id;
    rig.reserve(bob, {tb2}, at(0, 9), 30);
    rig->advance_to(at(0, 8, 20));
    REQUIRE(rig.state().reservations.at(session).state == ReservationState::Active);
  }

  std::uint64_t dispatch(const std::string& robot, DriveCommand c)
  {
    return rig->control().dispatch(session, robot, c, rig->now(), Actor::student(alice.student.id));
  }
};

} // anonymous namespace

TEST_SUITE("fleet-sim")
{
  TEST_CASE("straight drive covers v times t exactly")
  {
    AgentSim a("rb-1", field(10, 10), 0.0);
    const auto tel = drive(a, DriveCommand{1.0, 0.0, 10}, 10);
    CHECK(a.x_nm() == 1'000'000'000);
    CHECK(a.y_nm() == 0);
    CHECK(a.theta_nrad() == 0);
    CHECK(tel.back().pose == Pose{1.0, 0.0, 0.0});
    CHECK(tel.back().tick == 10);
  }

  TEST_CASE("wheel bias of 0.1 rad/m over 1 m turns 0.1 rad")
  {
    AgentSim a("rb-1", field(10, 10), 0.1);
    drive(a, DriveCommand{0.5, 0.0, 20}, 20);
    CHECK(a.theta_nrad() == 100'000'000);
    CHECK(a.pose().theta == 0.1);
    const auto want = euler_oracle(0.5, 0.0, 0.1, 20);
    CHECK(a.pose().x == doctest::Approx(want.x).epsilon(1e-8));
    CHECK(a.pose().y == doctest::Approx(want.y).epsilon(1e-8));
  }

  TEST_CASE("curved drive tracks a floating-point Euler oracle")
  {
    AgentSim a("rb-1", field(20, 20), 0.05);
    a.load(Pose{5.0, 5.0, 0.0}, 100.0, 0);
    drive(a, DriveCommand{0.3, 0.4, 50}, 50);
    auto want = euler_oracle(0.3, 0.4, 0.05, 50);
    CHECK(a.pose().x == doctest::Approx(5.0 + want.x).epsilon(1e-7));
    CHECK(a.pose().y == doctest::Approx(5.0 + want.y).epsilon(1e-7));
    CHECK(a.pose().theta == doctest::Approx(want.theta).epsilon(1e-9));
  }

  TEST_CASE("commands move only an Active robot")
  {
    AgentSim a("rb-1", field(10, 10), 0.0);
    const auto tel = drive(a, DriveCommand{0.5, 0.0, 5}, 5, RobotState::Idle);
    CHECK(a.pose() == Pose{});
    CHECK(tel.back().tick == 5);
    CHECK(a.battery_pct() == doctest::Approx(100.0 - 5 * 0.005));
  }

  TEST_CASE("battery drains linearly and faults below 10")
  {
    AgentSim a("rb-1", field(10, 10), 0.0);
    const DriveCommand spin{0.0, 1.0, 1};
    Telemetry t;
    for (int i = 0; i < 1800; ++i)
      t = a.step(&spin, RobotState::Active);
    CHECK(a.battery_pct() == 10.0);
    CHECK(t.state == RobotState::Active);
    t = a.step(&spin, RobotState::Active);
    CHECK(t.battery_pct == doctest::Approx(9.95));
    CHECK(t.state == RobotState::Fault);
  }

  TEST_CASE("motion clamps at the boundary and at obstacles")
  {
    AgentSim edge("rb-1", field(4, 4), 0.0);
    drive(edge, DriveCommand{-0.5, 0.0, 10}, 10);
    CHECK(edge.pose().x >= 0.0);
    drive(edge, DriveCommand{0.5, 0.0, 100}, 100);
    CHECK(edge.pose().x <= 2.0);
    AgentSim wall("rb-1", field(2, 4, 0.5, {"..#.", "...."}), 0.0);
    drive(wall, DriveCommand{0.5, 0.0, 40}, 40);
    CHECK(wall.pose().x < 1.0);
    CHECK(!wall.field().obstacle_at(wall.pose().x, wall.pose().y));
  }

  TEST_CASE("identical inputs give bit-identical telemetry")
  {
    auto run = [] {
      AgentSim a("rb-1", field(10, 10), 0.07);
      std::vector<Telemetry> out;
      for (int i = 0; i < 30; ++i)
      {
        const DriveCommand c{0.1 * (i % 5), 0.3 * ((i % 7) - 3), 1};
        out.push_back(a.step(&c, RobotState::Active));
      }
      return out;
    };
    CHECK(run() == run());
  }

  TEST_CASE("spawn places the agent at the field origin once")
  {
    Rig rig;
    const auto f = rig->add_field("small", open_field(5, 5), 1.0).id;
    const auto rb = rig.robot("tb1");
    const auto robot = rig->control().spawn_agent(rb, f, 3, rig->now());
    CHECK(robot.pose == Pose{});
    CHECK(robot.spawned);
    CHECK(robot.field_id == f);
    CHECK(error_of([&] { rig->control().spawn_agent(rb, f, 3, rig->now()); }) == Errc::AlreadySpawned);
    CHECK(error_of([&] { rig->control().spawn_agent("rb-999999", f, 3, rig->now()); })
      == Errc::UnknownRobot);
    CHECK(error_of([&] { rig->control().spawn_agent(rig.robot("tb2"), "fld-999999", 3, rig->now()); })
      == Errc::UnknownField);
    bool enrolled = false;
    for (const auto& [id, peer] : rig.state().peers)
      enrolled |= peer.kind == PeerKind::LabRobot && peer.subject == rb;
    CHECK(enrolled);
  }

  TEST_CASE("dispatch acks commands of the holding session")
  {
    SessionRig s;
    const auto seq = s.dispatch(s.tb1, DriveCommand{0.5, 0.0, 10});
    CHECK(seq == s.rig->store().last_seq());
    CHECK(s.rig.state().robots.at(s.tb1).queue.size() == 1);
    const auto tel = s.rig->control().run_until_idle(s.tb1, s.rig->now());
    CHECK(tel.size() == 10);
    CHECK(tel.back().pose.x == 0.5);
    CHECK(s.rig.state().robots.at(s.tb1).queue.empty());
    CHECK(audit_command_ownership(s.rig->store().events()).empty());
  }

  TEST_CASE("dispatch refusals")
  {
    SessionRig s;
    CHECK(error_of([&] { s.dispatch(s.tb2, DriveCommand{0.5, 0.0, 1}); }) == Errc::NotReserved);
    CHECK(error_of([&] { s.dispatch(s.tb1, DriveCommand{0.6, 0.0, 1}); }) == Errc::BadCommand);
    CHECK(error_of([&] { s.dispatch(s.tb1, DriveCommand{0.1, 2.5, 1}); }) == Errc::BadCommand);
    CHECK(error_of([&] { s.dispatch(s.tb1, DriveCommand{0.1, 0.0, 0}); }) == Errc::BadCommand);
    CHECK(error_of([&] { s.dispatch("rb-999999", DriveCommand{0.1, 0.0, 1}); }) == Errc::UnknownRobot);
    for (int i = 0; i < 16; ++i)
      s.dispatch(s.tb1, DriveCommand{0.1, 0.0, 1});
    CHECK(error_of([&] { s.dispatch(s.tb1, DriveCommand{0.1, 0.0, 1}); }) == Errc::QueueFull);
  }

  TEST_CASE("battery drain faults the robot immediately")
  {
    SessionRig s;
    s.rig->control().inject_fault(s.tb1, FaultKind::BatteryDrain, s.rig->now());
    const auto& robot = s.rig.state().robots.at(s.tb1);
    CHECK(robot.state == RobotState::Fault);
    CHECK(robot.battery_pct == 9.0);
    CHECK(error_of([&] { s.dispatch(s.tb1, DriveCommand{0.1, 0.0, 1}); }) == Errc::RobotFault);
  }

  TEST_CASE("a disconnected agent is evicted from the overlay")
  {
    Rig rig;
    const auto rb = rig.robot("tb1");
    rig->control().spawn_agent(rb, rig.field, 1, rig->now());
    rig->advance_to(rig->now() + 600);
    std::string peer;
    for (const auto& [id, p] : rig.state().peers)
    {
      if (p.subject == rb)
        peer = id;
    }
    REQUIRE(!peer.empty());
    CHECK(rig.state().peers.at(peer).status == PeerStatus::Live);
    const auto t = rig->now();
    rig->control().inject_fault(rb, FaultKind::Disconnect, t);
    rig->advance_to(t + 301);
    CHECK(rig.state().peers.at(peer).status == PeerStatus::Evicted);
  }

  TEST_CASE("camera frames list robots inside the rectangle")
  {
    SystemState s;
    auto put = [&](const std::string& id, double x, double y) {
      Robot r;
      r.id = id;
      r.spawned = true;
      r.field_id = "fld-000001";
      r.pose = Pose{x, y, 0.0};
      s.robots.emplace(id, r);
    };
    put("rb-000001", 1.0, 1.0);
    put("rb-000002", 4.0, 4.0);
    const Camera west{"cam-000001", "fld-000001", 0.0, 0.0, 2.5, 5.0};
    const Camera middle{"cam-000002", "fld-000001", 0.5, 0.5, 4.5, 4.5};
    const auto a = sim::camera_frame(s, west, Monday);
    REQUIRE(a.robots.size() == 1);
    CHECK(a.robots[0].robot_id == "rb-000001");
    CHECK(a.robots[0].pose == Pose{1.0, 1.0, 0.0});
    CHECK(a.robots[0].u == doctest::Approx(0.4));
    const auto b = sim::camera_frame(s, middle, Monday);
    REQUIRE(b.robots.size() == 2);
    for (const auto& v : b.robots)
      CHECK(middle.sees(v.pose));
    Rig rig;
    CHECK(error_of([&] { rig->control().camera_frames("cam-999999", rig->now()); })
      == Errc::UnknownCamera);
  }

  TEST_CASE("wire messages have golden encodings")
  {
    using namespace rlab::wire;
    CHECK(format_message(Hello{"rb-000001", "tok"}) == "HELLO rb-000001 tok");
    CHECK(format_message(Cmd{0.5, -0.25, 10}) == "CMD 0.500 -0.250 10");
    CHECK(format_message(Ack{3}) == "ACK 3");
    CHECK(format_message(Rej{4, "QueueFull"}) == "REJ 4 QueueFull");
    CHECK(format_message(Tel{12, 1.0, 0.0, -0.0, 99.4, "Active"}) == "TEL 12 1.000 0.000 0.000 99.400 Active");
    CHECK(format_message(Bye{}) == "BYE");
    CHECK(fixed3(-0.0001) == "0.000");
    CHECK(fixed3(2.0005) == "2.001");
    const auto frame = encode_frame("CMD 0.500 0.000 10");
    CHECK(frame == std::string("\x00\x00\x00\x12", 4) + "CMD 0.500 0.000 10");
    for (const Message& m : {Message{Hello{"rb-1", "t"}}, Message{Cmd{0.5, 0.0, 10}}, Message{Ack{1}},
           Message{Rej{2, "NotReserved"}}, Message{Tel{1, 0.1, 0.2, 0.3, 50.0, "Idle"}}, Message{Bye{}}})
      CHECK(parse_message(format_message(m)) == m);
    CHECK(error_of([] { parse_message("PING"); }) == Errc::ParseError);
    CHECK(error_of([] { parse_message("CMD x 0 1"); }) == Errc::ParseError);
  }

  TEST_CASE("frame decoder reassembles split frames")
  {
    using namespace rlab::wire;
    const auto bytes = encode_frame("ACK 1") + encode_frame("BYE");
    FrameDecoder d;
    std::vector<std::string> got;
    for (char c : bytes)
    {
      for (auto& f : d.feed(std::string_view(&c, 1)))
        got.push_back(f);
    }
    CHECK(got == std::vector<std::string>{"ACK 1", "BYE"});
    CHECK(d.buffered() == 0);
    FrameDecoder big;
    CHECK(error_of([&] { big.feed(std::string("\x00\x01\x00\x01", 4)); }) == Errc::TooLarge);
  }

  TEST_CASE("control endpoint speaks the framed protocol over TCP")
  {
    SessionRig s;
    sim::ControlEndpoint endpoint(*s.rig);
    const int port = endpoint.listen("127.0.0.1", 0);
    {
      sim::ControlClient stranger("127.0.0.1", port);
      stranger.send(wire::Cmd{0.5, 0.0, 2});
      CHECK(stranger.receive() == wire::Message{wire::Rej{1, "Unauthorized"}});
      CHECK(error_of([&] { stranger.receive(); }) == Errc::IoFailure);
    }
    sim::ControlClient client("127.0.0.1", port);
    client.send(wire::Hello{s.tb1, s.alice.token});
    CHECK(client.receive() == wire::Message{wire::Ack{0}});
    client.send(wire::Cmd{0.5, 0.0, 2});
    CHECK(client.receive() == wire::Message{wire::Ack{1}});
    const auto t1 = std::get<wire::Tel>(client.receive());
    const auto t2 = std::get<wire::Tel>(client.receive());
    CHECK(t2.tick == t1.tick + 1);
    CHECK(t2.x == 0.1);
    CHECK(t2.state == "Active");
    client.send(wire::Cmd{0.9, 0.0, 2});
    CHECK(client.receive() == wire::Message{wire::Rej{2, "BadCommand"}});
    client.send(wire::Bye{});
    CHECK(client.receive() == wire::Message{wire::Bye{}});
    endpoint.stop();
  }

  TEST_CASE("HELLO from a student without the robot is rejected")
  {
    SessionRig s;
    sim::ControlEndpoint endpoint(*s.rig);
    const int port = endpoint.listen("127.0.0.1", 0);
    sim::ControlClient client("127.0.0.1", port);
    client.send(wire::Hello{s.tb2, s.alice.token});
    CHECK(client.receive() == wire::Message{wire::Rej{0, "NotReserved"}});
    endpoint.stop();
  }
}
