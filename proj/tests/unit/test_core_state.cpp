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
#include <rlab/state.hpp>
#include <rlab/store.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace rlab;
using namespace rlab::test;
namespace fs = std::filesystem;

namespace {

Json student_payload(int n)
{
  char id[16];
  std::snprintf(id, sizeof id, "stu-%06d", n);
  return Json{{"id", id}, {"name", "s" + std::to_string(n)}, {"max_tier", 3},
    {"weekly_quota_min", 240}};
}

fs::path temp_path(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("rlab-unit-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

} // anonymous namespace

TEST_SUITE("core-state")
{
  TEST_CASE("append assigns gapless sequence numbers")
  {
    Store store;
    const auto first = store.append(events::StudentAdded, student_payload(1), Monday);
    CHECK(first.seq == 1);
    for (int i = 2; i <= 41; ++i)
      store.append(events::StudentAdded, student_payload(i), Monday);
    CHECK(store.last_seq() == 41);
    CHECK(store.append(events::StudentAdded, student_payload(42), Monday).seq == 42);
    const auto log = store.events();
    for (std::size_t i = 0; i < log.size(); ++i)
      CHECK(log[i].seq == i + 1);
  }

  TEST_CASE("Idle to Active without a reservation is rejected")
  {
    Rig rig;
    const auto rb = rig.robot("tb1");
    const auto before = rig.lab->store().last_seq();
    CHECK(error_of([&] {
      rig->store().append(events::RobotStateChanged,
        Json{{"robot_id", rb}, {"from", "Idle"}, {"to", "Active"}}, rig->now());
    }) == Errc::ValidationRejected);
    CHECK(rig->store().last_seq() == before);
    CHECK(rig.state().robots.at(rb).state == RobotState::Idle);
  }

  TEST_CASE("apply to empty state adds one student")
  {
    Event e{1, Monday, std::string(events::StudentAdded), "system", student_payload(1)};
    const auto s = apply_event(SystemState{}, e);
    CHECK(s.students.size() == 1);
    CHECK(s.last_seq == 1);
  }

  TEST_CASE("applying the same list twice reports a sequence gap")
  {
    Rig rig;
    rig.student("alice");
    rig.robot("tb1");
    const auto log = rig->store().events();
    auto s = replay(log);
    CHECK(error_of([&] {
      for (const auto& e : log)
        apply_event_in_place(s, e);
    }) == Errc::SequenceGap);
  }

  TEST_CASE("reprovision completion bumps firmware by one")
  {
    Rig rig;
    const auto rb = rig.robot("tb1", "diff_drive", 4000);
    const auto t = rig->now();
    rig->provisioner().start_reprovision(rb, t);
    CHECK(rig.state().robots.at(rb).state == RobotState::Reprovisioning);
    rig->provisioner().complete_reprovision(rb, t + 220);
    const auto& robot = rig.state().robots.at(rb);
    CHECK(robot.state == RobotState::Idle);
    CHECK(robot.firmware_version == 2);
    CHECK(replay(rig->store().events()).robots.at(rb).firmware_version == 2);
  }

  TEST_CASE("replay of an empty log is the empty state")
  {
    CHECK(replay({}) == SystemState{});
  }

  TEST_CASE("replay with a missing seq reports a sequence gap")
  {
    Rig rig;
    rig.student("alice");
    rig.student("bob");
    rig.student("carol");
    auto log = rig->store().events();
    REQUIRE(log.size() >= 4);
    log.erase(log.begin() + 2);
    CHECK(error_of([&] { replay(log); }) == Errc::SequenceGap);
  }

  TEST_CASE("apply_event is pure")
  {
    Rig rig;
    rig.student("alice");
    const auto log = rig->store().events();
    const auto base = replay(std::span(log).first(log.size() - 1));
    const auto a = apply_event(base, log.back());
    const auto b = apply_event(base, log.back());
    CHECK(a == b);
    CHECK(base == replay(std::span(log).first(log.size() - 1)));
  }

  TEST_CASE("unknown kinds and malformed payloads are corrupt records")
  {
    CHECK(error_of([] { apply_event(SystemState{}, Event{1, 0, "Bogus", "system", Json::object()}); })
      == Errc::CorruptRecord);
    CHECK(error_of([] {
      apply_event(SystemState{}, Event{1, 0, "StudentAdded", "system", Json{{"id", 7}}});
    }) == Errc::CorruptRecord);
  }

  TEST_CASE("event lines round-trip byte for byte")
  {
    const Event e{7, 1788739200, "PeerHeartbeat", "system", Json{{"peer_id", "peer-000001"}}};
    const auto line = encode_line(e);
    CHECK(line == R"({"actor":"system","kind":"PeerHeartbeat","payload":{"peer_id":"peer-000001"},"seq":7,"ts":1788739200})");
    CHECK(decode_line(line) == e);
    CHECK(encode_line(decode_line(line)) == line);
  }

  TEST_CASE("snapshot round-trips the empty state")
  {
    const auto path = temp_path("empty.snap");
    snapshot_write(SystemState{}, path);
    CHECK(snapshot_load(path) == SystemState{});
  }

  TEST_CASE("snapshot round-trips a 100-student state")
  {
    Rig rig;
    for (int i = 0; i < 100; ++i)
      rig.student("s" + std::to_string(i));
    const auto path = temp_path("class.snap");
    const auto sum = snapshot_write(rig.state(), path);
    CHECK(sum.size() == 64);
    const auto loaded = snapshot_load(path);
    CHECK(loaded.students.size() == 100);
    CHECK(loaded == rig.state());
    const auto path2 = temp_path("class2.snap");
    CHECK(snapshot_write(loaded, path2) == sum);
  }

  TEST_CASE("truncated snapshot fails its checksum")
  {
    Rig rig;
    rig.student("alice");
    const auto path = temp_path("trunc.snap");
    snapshot_write(rig.state(), path);
    fs::resize_file(path, fs::file_size(path) - 10);
    CHECK(error_of([&] { snapshot_load(path); }) == Errc::ChecksumMismatch);
  }

  TEST_CASE("snapshot with a foreign format version is refused")
  {
    const auto path = temp_path("v9.snap");
    std::ofstream(path) << R"({"checksum":"x","format_version":9,"last_seq":0})" << "\n{}";
    CHECK(error_of([&] { snapshot_load(path); }) == Errc::UnsupportedFormat);
  }

  TEST_CASE("store reopens from its log and drops a torn tail")
  {
    const auto log_path = temp_path("torn.log");
    fs::remove(log_path);
    StoreOptions opts;
    opts.log_path = log_path;
    {
      auto store = Store::open(opts);
      for (int i = 1; i <= 5; ++i)
        store->append(events::StudentAdded, student_payload(i), Monday);
    }
    std::ofstream(log_path, std::ios::app) << R"({"actor":"system","kind":"Stud)";
    std::size_t torn = 0;
    CHECK(read_log(log_path, &torn).size() == 5);
    CHECK(torn > 0);
    auto reopened = Store::open(opts);
    CHECK(reopened->last_seq() == 5);
    CHECK(reopened->append(events::StudentAdded, student_payload(6), Monday).seq == 6);
  }

  TEST_CASE("store refuses appends beyond its capacity")
  {
    StoreOptions opts;
    opts.max_events = 2;
    Store store(opts);
    store.append(events::StudentAdded, student_payload(1), Monday);
    store.append(events::StudentAdded, student_payload(2), Monday);
    CHECK(error_of([&] { store.append(events::StudentAdded, student_payload(3), Monday); })
      == Errc::StorageFull);
  }

  TEST_CASE("random operation streams replay to the live state")
  {
    for (std::uint64_t seed = 1; seed <= 12; ++seed)
    {
      CAPTURE(seed);
      std::mt19937_64 rng(seed);
      Rig rig;
      std::vector<std::string> students, robots, reservations, workspaces;
      rig->provisioner().add_node(16, 32768, true, 90, rig->now());
      for (int op = 0; op < 150; ++op)
      {
        const auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
        try
        {
          switch (rng() % 8)
          {
            case 0: students.push_back(rig.student("s" + std::to_string(op))); break;
            case 1: robots.push_back(rig.robot("r" + std::to_string(op))); break;
            case 2:
              if (!students.empty() && !robots.empty())
              {
                const auto start = (rig->now() / SlotGridSeconds + 1 + rng() % 16) * SlotGridSeconds;
                reservations.push_back(
                  rig.reserve(pick(students), {pick(robots)}, start, 15 * (1 + rng() % 4)).id);
              }
              break;
            case 3:
              if (!reservations.empty())
                rig->scheduler().cancel_reservation(pick(reservations), Actor::system(), rig->now());
              break;
            case 4:
              if (!students.empty())
                workspaces.push_back(
                  rig->provisioner().provision_workspace(pick(students), rng() % 2, rig->now()).id);
              break;
            case 5:
              if (!workspaces.empty())
                rig->provisioner().deprovision_workspace(pick(workspaces), rig->now());
              break;
            case 6:
              if (!robots.empty())
                rig->control().inject_fault(pick(robots), static_cast<FaultKind>(rng() % 3), rig->now());
              break;
            default: rig->advance_to(rig->now() + static_cast<Seconds>(rng() % 1200)); break;
          }
        }
        catch (const Error&)
        {
        }
      }
      const auto live = rig->store().snapshot();
      CHECK(replay(rig->store().events()) == *live);
      const auto violations = validate_all(*live);
      CHECK_MESSAGE(violations.empty(), (violations.empty() ? "" : violations.front()));
      CHECK(audit_double_booking(*live).empty());
    }
  }
}
