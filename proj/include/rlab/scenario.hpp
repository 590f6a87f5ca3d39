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

#ifndef RLAB__SCENARIO_HPP
#define RLAB__SCENARIO_HPP

#include <rlab/config.hpp>
#include <rlab/lab.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rlab {

/// Monday 2026-09-07 00:00 UTC.
inline constexpr Seconds DefaultScenarioStart = 1788739200;

struct ScenarioStatement
{
  std::size_t line = 0;
  std::string text;
  std::string verb;
  std::vector<std::string> args;
  /// key=value tokens.
  std::map<std::string, std::string> options;
};

/// A parsed script: config overrides, start time and the ordered steps.
struct Scenario
{
  std::map<std::string, std::map<std::string, std::string>> config;
  /// Script line of each "section.key" override.
  std::map<std::string, std::size_t> config_lines;
  Seconds start = DefaultScenarioStart;
  std::vector<ScenarioStatement> steps;
};

/// "2026-09-07T08:00:00Z", "2026-09-07T08:00" or epoch seconds.
std::optional<Seconds> parse_timestamp(std::string_view text);

/// Throws Error(ParseError) with detail {"line": N}.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// Lab configuration for a fresh in-memory run of the scenario. Credentials
/// are derived from a fixed secret unless the script sets one.
LabConfig scenario_config(const Scenario& scenario);

struct ScenarioCheck
{
  std::size_t step = 0;
  std::size_t line = 0;
  std::string text;
  bool passed = false;
  std::string message;
};

struct ScenarioReport
{
  std::vector<ScenarioCheck> checks;
  std::vector<std::string> invariant_violations;
  /// Step the run resumed at, or -1 for a fresh run.
  std::int64_t resumed_from = -1;
  std::uint64_t events = 0;
  Seconds clock = 0;

  bool passed() const;
  /// One line per check, then the invariant sweep and a summary.
  std::string text() const;
  Json to_json() const;
};

/// Executes a scenario against a lab. When the lab's log already holds a
/// prefix of an earlier run of the same script, execution resumes from the
/// last step marker and skips requests that were already applied.
class ScenarioRunner
{
public:
  ScenarioRunner(const Scenario& scenario, Lab& lab);

  ScenarioReport run();

private:
  struct Impl;
  const Scenario& _scenario;
  Lab& _lab;
};

ScenarioReport run_scenario(const Scenario& scenario);
ScenarioReport run_scenario(const std::filesystem::path& script_path);

/// Throws Error(AssertionFailed) naming the first failed step.
void require_passed(const ScenarioReport& report);

} // namespace rlab

#endif // RLAB__SCENARIO_HPP
