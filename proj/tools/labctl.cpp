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

#include <rlab/error.hpp>
#include <rlab/scenario.hpp>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>

using namespace rlab;
using Json = nlohmann::json;

namespace {

struct Remote
{
  std::string url = "http://127.0.0.1:8080";
  std::string token;

  Json call(const std::string& method, const std::string& path, const Json& body = nullptr) const
  {
    httplib::Client client(url);
    client.set_connection_timeout(5);
    httplib::Headers headers{{"Authorization", "Bearer " + token}};
    httplib::Result res = method == "GET"
      ? client.Get("/api/v1" + path, headers)
      : client.Post("/api/v1" + path, headers, body.dump(), "application/json");
    if (!res)
      throw Error(Errc::IoFailure, "cannot reach " + url + ": " + httplib::to_string(res.error()));
    const auto reply = Json::parse(res->body, nullptr, false);
    if (res->status >= 400)
    {
      if (!reply.is_object())
        throw Error(Errc::BadRequest, "HTTP " + std::to_string(res->status) + ": " + res->body);
      const auto code = errc_from_string(reply.value("error", std::string()));
      throw Error(code.value_or(Errc::BadRequest), reply.value("message", res->body),
        reply.value("detail", Json()));
    }
    return reply;
  }
};

Seconds timestamp(const std::string& text)
{
  const auto t = parse_timestamp(text);
  if (!t)
    throw Error(Errc::BadRequest, "bad time '" + text + "'");
  return *t;
}

std::string env_or(const char* name, std::string fallback)
{
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

} // anonymous namespace

int main(int argc, char** argv)
{
  CLI::App app{"remote robotics lab admin tool"};
  app.require_subcommand(1);

  Remote remote;
  remote.url = env_or("RLAB_URL", remote.url);
  remote.token = env_or("RLAB_ADMIN_TOKEN", "");
  app.add_option("--url", remote.url, "Gateway base URL (RLAB_URL)");
  app.add_option("--token", remote.token, "Admin token (RLAB_ADMIN_TOKEN)");

  auto* student = app.add_subcommand("student", "Manage students")->require_subcommand(1);
  auto* student_add = student->add_subcommand("add", "Add a student and print the token");
  std::string student_name;
  int tier = 3;
  std::int64_t quota = -1;
  student_add->add_option("NAME", student_name)->required();
  student_add->add_option("--tier", tier, "Tier 1..3")->check(CLI::Range(1, 3));
  student_add->add_option("--quota", quota, "Weekly quota in minutes")->check(CLI::NonNegativeNumber);

  auto* robot = app.add_subcommand("robot", "Manage robots")->require_subcommand(1);
  auto* robot_add = robot->add_subcommand("add", "Add a lab robot");
  std::string model = "turtlebot3";
  std::string caps = "diff_drive";
  std::string robot_name;
  std::int64_t firmware_mb = 0;
  double bias = 0.0;
  robot_add->add_option("--model", model);
  robot_add->add_option("--caps", caps, "e.g. lidar,camera");
  robot_add->add_option("--firmware-mb", firmware_mb)->check(CLI::NonNegativeNumber);
  robot_add->add_option("--name", robot_name);
  robot_add->add_option("--bias", bias, "Wheel bias in rad/m");

  auto* node = app.add_subcommand("node", "Manage compute nodes")->require_subcommand(1);
  auto* node_add = node->add_subcommand("add", "Provision a node");
  int cpu = 0;
  std::int64_t ram = 0;
  bool gpu = false;
  std::int64_t rate = 0;
  node_add->add_option("--cpu", cpu)->required()->check(CLI::PositiveNumber);
  node_add->add_option("--ram", ram, "MiB")->required()->check(CLI::PositiveNumber);
  node_add->add_flag("--gpu", gpu);
  node_add->add_option("--rate", rate, "Cents per hour")->required()->check(CLI::NonNegativeNumber);

  auto* scenario = app.add_subcommand("scenario", "Run scenario scripts")->require_subcommand(1);
  auto* scenario_run = scenario->add_subcommand("run", "Run a script against a fresh in-memory lab");
  std::string script;
  bool as_json = false;
  scenario_run->add_option("FILE", script)->required()->check(CLI::ExistingFile);
  scenario_run->add_flag("--json", as_json);

  auto* report = app.add_subcommand("report", "Reports")->require_subcommand(1);
  auto* report_cost = report->add_subcommand("cost", "Node cost over [from, to)");
  std::string from;
  std::string to;
  report_cost->add_option("--from", from, "ISO-8601 UTC or epoch seconds")->required();
  report_cost->add_option("--to", to, "ISO-8601 UTC or epoch seconds")->required();

  CLI11_PARSE(app, argc, argv);

  try
  {
    if (*student_add)
    {
      Json body{{"name", student_name}, {"tier", tier}};
      if (quota >= 0)
        body["quota_min"] = quota;
      std::cout << remote.call("POST", "/admin/students", body).dump(2) << "\n";
    }
    else if (*robot_add)
    {
      Json body{{"model", model}, {"capabilities", caps}, {"firmware_mb", firmware_mb},
        {"wheel_bias", bias}};
      if (!robot_name.empty())
        body["name"] = robot_name;
      std::cout << remote.call("POST", "/admin/robots", body).dump(2) << "\n";
    }
    else if (*node_add)
    {
      const Json body{{"cpu", cpu}, {"ram_mb", ram}, {"gpu", gpu}, {"rate_cents", rate}};
      std::cout << remote.call("POST", "/admin/nodes", body).dump(2) << "\n";
    }
    else if (*scenario_run)
    {
      const auto result = run_scenario(std::filesystem::path(script));
      std::cout << (as_json ? result.to_json().dump(2) + "\n" : result.text());
      return result.passed() ? 0 : 1;
    }
    else if (*report_cost)
    {
      const auto r = remote.call("GET", "/admin/cost?from=" + std::to_string(timestamp(from))
        + "&to=" + std::to_string(timestamp(to)));
      std::cout << std::left << std::setw(14) << "node" << std::right << std::setw(10) << "minutes"
                << std::setw(10) << "rate" << std::setw(12) << "cents" << "\n";
      for (const auto& line : r.at("nodes"))
      {
        std::cout << std::left << std::setw(14) << line.at("node_id").get<std::string>()
                  << std::right << std::setw(10) << line.at("billed_minutes").get<std::int64_t>()
                  << std::setw(10) << line.at("rate_cents_per_hour").get<std::int64_t>()
                  << std::setw(12) << line.at("amount_cents").get<std::int64_t>() << "\n";
      }
      std::cout << "total " << r.at("total_cents").get<std::int64_t>() << " cents\n";
    }
  }
  catch (const Error& e)
  {
    std::cerr << "labctl: " << e.what() << "\n";
    return e.code() == Errc::ParseError ? 2 : 1;
  }
  return 0;
}
