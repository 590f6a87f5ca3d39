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
#include <rlab/scheduler.hpp>

#include <algorithm>
#include <random>

using namespace rlab;
using namespace rlab::test;

namespace {

std::vector<std::string> available(Rig& rig, Seconds start, int minutes, const std::string& caps)
{
  return rig->scheduler().find_available_robots(
    ScheduleQuery{TimeSlot{start, minutes}, CapabilitySet::parse(caps), Tier::RemoteLab});
}

bool contains(const std::vector<std::string>& v, const std::string& x)
{
  return std::find(v.begin(), v.end(), x) != v.end();
}

/// Books a 30-minute slot at 08:15 and runs the lab until the session is Active.
struct ActiveSession
{
  Rig rig;
  std::string student;
  std::string robot;
  std::string id;

  ActiveSession()
  {
    student = rig.student("alice");
    robot = rig.robot("tb1");
    id = rig.reserve(student, {robot}, at(0, 8, 15), 30).id;
    rig->advance_to(at(0, 8, 20));
    REQUIRE(rig.state().reservations.at(id).state == ReservationState::Active);
  }
};

} // anonymous namespace

TEST_SUITE("scheduler")
{
  TEST_CASE("valid request on an empty calendar is confirmed")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto rb = rig.robot("tb1");
    const auto r = rig.reserve(st, {rb}, at(0, 10), 30);
    CHECK(r.state == ReservationState::Confirmed);
    CHECK(r.robot_ids == std::vector<std::string>{rb});
    CHECK(rig.state().reservations.at(r.id).created_seq == rig->store().last_seq());
  }

  TEST_CASE("overlapping slots on the same robot conflict")
  {
    Rig rig;
    const auto a = rig.student("alice");
    const auto b = rig.student("bob");
    const auto rb = rig.robot("tb1");
    rig.reserve(a, {rb}, at(0, 10), 30);
    try
    {
      rig.reserve(b, {rb}, at(0, 10, 15), 30);
      FAIL("expected Conflict");
    }
    catch (const Error& e)
    {
      CHECK(e.code() == Errc::Conflict);
      CHECK(e.detail().at("robot_id") == rb);
    }
    CHECK(rig.reserve(b, {rb}, at(0, 10, 30), 30).state == ReservationState::Confirmed);
  }

  TEST_CASE("third 120-minute slot exceeds a 240-minute quota")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto rb = rig.robot("tb1");
    rig.reserve(st, {rb}, at(1, 9), 120);
    rig.reserve(st, {rb}, at(1, 12), 120);
    CHECK(error_of([&] { rig.reserve(st, {rb}, at(2, 9), 120); }) == Errc::QuotaExceeded);
    CHECK(rig->scheduler().quota_remaining(st, at(1, 0)) == 0);
  }

  TEST_CASE("quota is charged and refunded per ISO week")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto rb = rig.robot("tb1");
    CHECK(rig->scheduler().quota_remaining(st, at(0, 9)) == 240);
    const auto r = rig.reserve(st, {rb}, at(0, 10), 90);
    CHECK(rig->scheduler().quota_remaining(st, at(0, 9)) == 150);
    CHECK(rig->scheduler().quota_remaining(st, at(7, 9)) == 240);
    rig->scheduler().cancel_reservation(r.id, Actor::student(st), rig->now());
    CHECK(rig->scheduler().quota_remaining(st, at(0, 9)) == 240);
  }

  TEST_CASE("multi-robot slots charge minutes once per slot")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto r1 = rig.robot("tb1");
    const auto r2 = rig.robot("tb2");
    rig.reserve(st, {r1, r2}, at(0, 10), 60);
    CHECK(rig->scheduler().quota_remaining(st, at(0, 9)) == 180);
  }

  TEST_CASE("request validation order")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto sim = rig.student("sim", Tier::Simulated);
    const auto rb = rig.robot("tb1");
    CHECK(error_of([&] { rig.reserve(st, {rb}, at(0, 10, 5), 30); }) == Errc::InvalidSlot);
    CHECK(error_of([&] { rig.reserve(st, {rb}, at(0, 10), 135); }) == Errc::InvalidSlot);
    CHECK(error_of([&] { rig.reserve(st, {rb}, at(0, 10), 0); }) == Errc::InvalidSlot);
    CHECK(error_of([&] { rig.reserve(st, {}, at(0, 10), 30); }) == Errc::UnknownRobot);
    CHECK(error_of([&] { rig.reserve("stu-999999", {rb}, at(0, 10), 30); }) == Errc::UnknownStudent);
    CHECK(error_of([&] { rig.reserve(sim, {rb}, at(0, 10), 30); }) == Errc::TierDenied);
    CHECK(error_of([&] { rig.reserve(st, {"rb-999999"}, at(0, 10), 30); }) == Errc::UnknownRobot);
    CHECK(error_of([&] {
      rig->scheduler().request_reservation(st, {rb}, TimeSlot{at(0, 10), 30}, "fld-999999",
        rig->now());
    }) == Errc::UnknownField);
    CHECK(error_of([&] { rig.reserve(st, {rb}, at(0, 7, 45), 30); }) == Errc::PastSlot);
  }

  TEST_CASE("find_available_robots")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto r1 = rig.robot("tb1", "lidar");
    const auto r2 = rig.robot("tb2", "lidar");
    const auto r3 = rig.robot("tb3", "lidar");
    CHECK(available(rig, at(0, 10), 60, "lidar") == std::vector<std::string>{r1, r2, r3});
    CHECK(available(rig, at(0, 10), 60, "camera").empty());
    rig.reserve(st, {r2}, at(0, 10, 30), 30);
    CHECK(available(rig, at(0, 10), 60, "lidar") == std::vector<std::string>{r1, r3});
    CHECK(available(rig, at(0, 11), 60, "lidar") == std::vector<std::string>{r1, r2, r3});
  }

  TEST_CASE("cancel returns the robot to the pool and the slot can be rebooked")
  {
    Rig rig;
    const auto a = rig.student("alice");
    const auto b = rig.student("bob");
    const auto rb = rig.robot("tb1");
    const auto r = rig.reserve(a, {rb}, at(0, 10), 30);
    CHECK(!contains(available(rig, at(0, 10), 30, "diff_drive"), rb));
    CHECK(error_of([&] { rig->scheduler().cancel_reservation(r.id, Actor::student(b), rig->now()); })
      == Errc::NotOwner);
    const auto c = rig->scheduler().cancel_reservation(r.id, Actor::student(a), rig->now());
    CHECK(c.state == ReservationState::Cancelled);
    CHECK(contains(available(rig, at(0, 10), 30, "diff_drive"), rb));
    CHECK(rig.reserve(b, {rb}, at(0, 10), 30).state == ReservationState::Confirmed);
    CHECK(error_of([&] { rig->scheduler().cancel_reservation(r.id, Actor::student(a), rig->now()); })
      == Errc::NotCancellable);
    CHECK(error_of([&] { rig->scheduler().cancel_reservation("res-999999", Actor::system(), rig->now()); })
      == Errc::UnknownReservation);
  }

  TEST_CASE("cancelling an Active session is refused")
  {
    ActiveSession s;
    CHECK(error_of([&] {
      s.rig->scheduler().cancel_reservation(s.id, Actor::student(s.student), s.rig->now());
    }) == Errc::NotCancellable);
  }

  TEST_CASE("tick_activate orders reprovisioning once per reservation")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto r1 = rig.robot("tb1");
    const auto r2 = rig.robot("tb2");
    const auto r = rig.reserve(st, {r1, r2}, at(0, 9), 30);
    CHECK(rig->scheduler().tick_activate(at(0, 8, 30)).empty());
    const auto orders = rig->scheduler().tick_activate(at(0, 9));
    REQUIRE(orders.size() == 1);
    CHECK(orders[0].reservation_id == r.id);
    CHECK(orders[0].robot_ids == std::vector<std::string>{r1, r2});
    CHECK(orders[0].due == at(0, 9));
    const auto& res = rig.state().reservations.at(r.id);
    CHECK(res.reprovision_started.size() == 2);
    CHECK(res.activation_seq > 0);
    CHECK(rig.state().robots.at(r1).state == RobotState::Reprovisioning);
    CHECK(rig.state().robots.at(r2).state == RobotState::Reprovisioning);
    CHECK(rig->scheduler().tick_activate(at(0, 9)).empty());
  }

  TEST_CASE("session turns Active only after every robot is reset")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto r1 = rig.robot("tb1", "diff_drive", 0);
    const auto r2 = rig.robot("tb2", "diff_drive", 4000);
    const auto r = rig.reserve(st, {r1, r2}, at(0, 9), 30);
    rig->advance_to(at(0, 9) + 150);
    CHECK(rig.state().reservations.at(r.id).state == ReservationState::Confirmed);
    rig->advance_to(at(0, 9) + 230);
    CHECK(rig.state().reservations.at(r.id).state == ReservationState::Active);
    CHECK(audit_activation_order(rig->store().events()).empty());
  }

  TEST_CASE("tick_expire completes a running session and frees its robots")
  {
    ActiveSession s;
    CHECK(s.rig->scheduler().tick_expire(at(0, 8, 30)).empty());
    s.rig->advance_to(at(0, 8, 44));
    const auto done = s.rig->scheduler().tick_expire(at(0, 8, 45));
    CHECK(done == std::vector<std::string>{s.id});
    CHECK(s.rig.state().reservations.at(s.id).state == ReservationState::Completed);
    CHECK(s.rig.state().robots.at(s.robot).state == RobotState::Idle);
    CHECK(s.rig.state().robots.at(s.robot).claimed_by.empty());
  }

  TEST_CASE("a slot that never activated becomes NoShow")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto rb = rig.robot("tb1");
    const auto r = rig.reserve(st, {rb}, at(0, 9), 30);
    rig->control().inject_fault(rb, FaultKind::FlashFailure, rig->now());
    rig->advance_to(at(0, 9, 29));
    CHECK(rig.state().robots.at(rb).state == RobotState::Fault);
    CHECK(rig.state().reservations.at(r.id).state == ReservationState::Confirmed);
    CHECK(rig->scheduler().tick_expire(at(0, 9, 30)) == std::vector<std::string>{r.id});
    CHECK(rig.state().reservations.at(r.id).state == ReservationState::NoShow);
  }

  TEST_CASE("sessions sharing an ephemeral workspace release it once")
  {
    Rig rig;
    const auto st = rig.student("alice");
    const auto a = rig.reserve(st, {rig.robot("tb1")}, at(0, 9), 30);
    const auto b = rig.reserve(st, {rig.robot("tb2")}, at(0, 9), 30);
    rig->advance_to(at(0, 9, 10));
    const auto ws = rig.state().reservations.at(a.id).workspace_id;
    REQUIRE_FALSE(ws.empty());
    CHECK(rig.state().reservations.at(b.id).workspace_id == ws);
    CHECK_NOTHROW(rig->advance_to(at(0, 10)));
    CHECK(rig.state().reservations.at(a.id).state == ReservationState::Completed);
    CHECK(rig.state().reservations.at(b.id).state == ReservationState::Completed);
    CHECK(rig.state().workspaces.at(ws).state == WorkspaceState::Released);
  }

  TEST_CASE("identical request streams yield identical calendars")
  {
    auto run = [] {
      Rig rig;
      std::mt19937_64 rng(99);
      std::vector<std::string> st, rb;
      for (int i = 0; i < 5; ++i)
        st.push_back(rig.student("s" + std::to_string(i)));
      for (int i = 0; i < 4; ++i)
        rb.push_back(rig.robot("r" + std::to_string(i)));
      for (int i = 0; i < 200; ++i)
      {
        const auto start = at(0, 9) + static_cast<Seconds>(rng() % 40) * SlotGridSeconds;
        try
        {
          rig.reserve(st[rng() % st.size()], {rb[rng() % rb.size()]}, start,
            15 * static_cast<int>(1 + rng() % 8));
        }
        catch (const Error&)
        {
        }
      }
      return rig.state().reservations;
    };
    CHECK(run() == run());
  }

  TEST_CASE("random request and cancel streams match an interval oracle")
  {
    Rig rig;
    std::mt19937_64 rng(4);
    std::vector<std::string> st, rb;
    for (int i = 0; i < 8; ++i)
      st.push_back(rig.student("s" + std::to_string(i), Tier::RemoteLab, 100000));
    for (int i = 0; i < 4; ++i)
      rb.push_back(rig.robot("r" + std::to_string(i)));
    struct Held
    {
      std::string robot;
      Seconds start, end;
    };
    std::map<std::string, std::vector<Held>> held;
    int disagreements = 0;
    for (int i = 0; i < 1500; ++i)
    {
      if (rng() % 4 == 0 && !held.empty())
      {
        auto it = std::next(held.begin(), static_cast<long>(rng() % held.size()));
        const auto& owner = rig.state().reservations.at(it->first).student_id;
        rig->scheduler().cancel_reservation(it->first, Actor::student(owner), rig->now());
        held.erase(it);
        continue;
      }
      const auto robot = rb[rng() % rb.size()];
      const auto start = at(0, 9) + static_cast<Seconds>(rng() % 96) * SlotGridSeconds;
      const int minutes = 15 * static_cast<int>(1 + rng() % 8);
      bool oracle_free = true;
      for (const auto& [id, hs] : held)
      {
        for (const auto& h : hs)
          oracle_free &= !(h.robot == robot && start < h.end && h.start < start + minutes * 60);
      }
      const auto err = error_of([&] {
        const auto r = rig.reserve(st[rng() % st.size()], {robot}, start, minutes);
        held[r.id].push_back({robot, start, start + minutes * 60});
      });
      disagreements += oracle_free != !err.has_value();
      if (err && *err != Errc::Conflict)
        FAIL("unexpected " << to_string(*err));
    }
    CHECK(disagreements == 0);
    CHECK(audit_double_booking(rig.state()).empty());
  }
}
