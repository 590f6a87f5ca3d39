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

#ifndef RLAB__TESTS__FIXTURES_HPP
#define RLAB__TESTS__FIXTURES_HPP

#include <rlab/error.hpp>
#include <rlab/lab.hpp>
#include <rlab/scenario.hpp>

#include <doctest.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rlab::test {

/// Monday 2026-09-07 00:00 UTC.
inline constexpr Seconds Monday = DefaultScenarioStart;

inline Seconds at(int day, int hh, int mm = 0)
{
  return Monday + day * 86400 + hh * 3600 + mm * 60;
}

inline LabConfig lab_config()
{
  LabConfig c;
  c.auth.admin_token = "admin-token";
  c.auth.token_secret = "unit";
  return c;
}

inline std::vector<std::string> open_field(int rows, int cols)
{
  return std::vector<std::string>(static_cast<std::size_t>(rows), std::string(cols, '.'));
}

/// A lab at Monday 08:00 with one empty 10x10 field of 0.5 m cells.
struct Rig
{
  std::unique_ptr<Lab> lab;
  std::string field;

  explicit Rig(LabConfig config = lab_config())
  : lab(std::make_unique<Lab>(std::move(config)))
  {
    lab->advance_to(at(0, 8));
    field = lab->add_field("arena", open_field(10, 10), 0.5).id;
  }

  Lab& operator*() { return *lab; }
  Lab* operator->() { return lab.get(); }

  std::string student(const std::string& name, Tier tier = Tier::RemoteLab,
    std::optional<std::int64_t> quota = std::nullopt)
  {
    return lab->add_student(name, tier, quota).student.id;
  }

  NewStudent student_with_token(const std::string& name)
  {
    return lab->add_student(name, Tier::RemoteLab);
  }

  std::string robot(const std::string& name, const std::string& caps = "diff_drive,lidar",
    std::int64_t firmware_mb = 0, double bias = 0.0)
  {
    RobotSpec spec;
    spec.name = name;
    spec.capabilities = CapabilitySet::parse(caps);
    spec.firmware_size_mb = firmware_mb;
    spec.wheel_bias = bias;
    return lab->add_robot(spec).id;
  }

  Reservation reserve(const std::string& student, std::vector<std::string> robots,
    Seconds start, int minutes)
  {
    return lab->scheduler().request_reservation(student, std::move(robots),
      TimeSlot{start, minutes}, field, lab->now(), Actor::student(student));
  }

  const SystemState& state() { return *(_snap = lab->store().snapshot()); }

private:
  std::shared_ptr<const SystemState> _snap;
};

/// Runs f and returns the Errc it threw, or nullopt when it returned.
template<typename F>
std::optional<Errc> error_of(F&& f)
{
  try
  {
    f();
  }
  catch (const Error& e)
  {
    return e.code();
  }
  return std::nullopt;
}

} // namespace rlab::test

namespace doctest {

template<>
struct StringMaker<rlab::Errc>
{
  static String convert(rlab::Errc e) { return std::string(rlab::to_string(e)).c_str(); }
};

template<>
struct StringMaker<std::optional<rlab::Errc>>
{
  static String convert(const std::optional<rlab::Errc>& e)
  {
    return e ? std::string(rlab::to_string(*e)).c_str() : "no error";
  }
};

} // namespace doctest

#endif // RLAB__TESTS__FIXTURES_HPP
