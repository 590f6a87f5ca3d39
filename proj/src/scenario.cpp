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

#include <rlab/scenario.hpp>
#include <rlab/audit.hpp>
#include <rlab/crypto.hpp>
#include <rlab/error.hpp>
#include <rlab/provisioner.hpp>
#include <rlab/scheduler.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace rlab {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& message)
{
  throw Error(Errc::ParseError, "line " + std::to_string(line) + ": " + message,
    Json{{"line", line}});
}

template<typename T>
std::optional<T> to_number(std::string_view s)
{
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty())
    return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s)
{
  try
  {
    std::size_t used = 0;
    const auto v = std::stod(std::string(s), &used);
    if (used != s.size() || !std::isfinite(v))
      return std::nullopt;
    return v;
  }
  catch (const std::exception&)
  {
    return std::nullopt;
  }
}

/// "1d2h30m15s"; every number needs a unit.
std::optional<Seconds> parse_duration(std::string_view s)
{
  if (s.empty())
    return std::nullopt;
  Seconds total = 0;
  std::size_t i = 0;
  while (i < s.size())
  {
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])))
      ++j;
    if (j == i || j == s.size())
      return std::nullopt;
    const auto n = to_number<Seconds>(s.substr(i, j - i));
    if (!n)
      return std::nullopt;
    switch (s[j])
    {
      case 'd': total += *n * 86400; break;
      case 'h': total += *n * 3600; break;
      case 'm': total += *n * 60; break;
      case 's': total += *n; break;
      default: return std::nullopt;
    }
    i = j + 1;
  }
  return total;
}

/// Slot length in minutes: "45" or a duration such as "1h30m".
std::optional<int> parse_minutes(std::string_view s)
{
  if (const auto n = to_number<int>(s))
    return n;
  const auto d = parse_duration(s);
  if (!d || *d % 60 != 0)
    return std::nullopt;
  return static_cast<int>(*d / 60);
}

std::optional<Seconds> parse_iso(std::string_view s)
{
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char tail = 0;
  const std::string str(s);
  const int n = std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail);
  if (n < 5 || (n == 7 && tail != 'Z'))
    return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59)
    return std::nullopt;
  return Seconds{sys_days{ymd}.time_since_epoch().count()} * 86400 + h * 3600 + mi * 60 + sec;
}

/// dN@HH:MM from midnight of the scenario's first day, +DURATION from the step start, an ISO
/// timestamp or epoch seconds.
std::optional<Seconds> parse_time(std::string_view s, Seconds start, Seconds step_start)
{
  if (s.empty())
    return std::nullopt;
  if (s[0] == '+')
  {
    const auto d = parse_duration(s.substr(1));
    return d ? std::optional<Seconds>(step_start + *d) : std::nullopt;
  }
  if (s[0] == 'd')
  {
    const auto at = s.find('@');
    const auto colon = s.find(':');
    if (at == std::string_view::npos || colon == std::string_view::npos || colon < at)
      return std::nullopt;
    const auto day = to_number<Seconds>(s.substr(1, at - 1));
    const auto hh = to_number<Seconds>(s.substr(at + 1, colon - at - 1));
    const auto mm = to_number<Seconds>(s.substr(colon + 1));
    if (!day || !hh || !mm || *hh > 23 || *mm > 59)
      return std::nullopt;
    const auto midnight = start - ((start % 86400) + 86400) % 86400;
    return midnight + *day * 86400 + *hh * 3600 + *mm * 60;
  }
  if (s.find('T') != std::string_view::npos)
    return parse_iso(s);
  return to_number<Seconds>(s);
}

std::vector<std::string> split(std::string_view s, char sep)
{
  std::vector<std::string> out;
  std::size_t i = 0;
  for (;;)
  {
    const auto j = s.find(sep, i);
    out.emplace_back(s.substr(i, j - i));
    if (j == std::string_view::npos)
      return out;
    i = j + 1;
  }
}

bool is_option(const std::string& token)
{
  const auto eq = token.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == token.size())
    return false;
  return std::all_of(token.begin(), token.begin() + static_cast<std::ptrdiff_t>(eq),
    [](char c) { return std::islower(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
}

bool compare(double a, std::string_view op, double b)
{
  if (op == "=" || op == "==")
    return a == b;
  if (op == "!=")
    return a != b;
  if (op == "<")
    return a < b;
  if (op == "<=")
    return a <= b;
  if (op == ">")
    return a > b;
  if (op == ">=")
    return a >= b;
  return false;
}

bool is_op(std::string_view op)
{
  return op == "=" || op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=";
}

std::string fmt(double v)
{
  std::ostringstream out;
  out << v;
  return out.str();
}

double round3(double v)
{
  return std::round(v * 1000.0) / 1000.0;
}

//==============================================================================
enum class Kind { Student, Robot, Field, Camera, Node, Workspace, Reservation };

std::string_view kind_name(Kind k)
{
  switch (k)
  {
    case Kind::Student: return "student";
    case Kind::Robot: return "robot";
    case Kind::Field: return "field";
    case Kind::Camera: return "camera";
    case Kind::Node: return "node";
    case Kind::Workspace: return "workspace";
    case Kind::Reservation: return "reservation";
  }
  return "?";
}

struct Alias
{
  Kind kind = Kind::Student;
  std::int64_t request_id = 0;
  /// Student alias owning a workspace or reservation.
  std::string owner;
};

using Aliases = std::map<std::string, Alias>;

std::int64_t request_id(std::size_t step, std::size_t sub)
{
  return static_cast<std::int64_t>(step + 1) * 1000 + static_cast<std::int64_t>(sub);
}

std::string bulk_name(const std::string& prefix, std::size_t i, std::size_t count)
{
  const auto width = std::max<std::size_t>(2, std::to_string(count).size());
  auto n = std::to_string(i + 1);
  return prefix + std::string(width - n.size(), '0') + n;
}

/// Student aliases starting with `prefix`, in declaration order.
std::vector<std::string> students_with_prefix(const std::vector<std::string>& order,
  const std::string& prefix)
{
  std::vector<std::string> out;
  for (const auto& a : order)
    if (a.rfind(prefix, 0) == 0)
      out.push_back(a);
  return out;
}

const std::set<std::string, std::less<>> assertion_checks = {
  "invariants", "no-double-booking", "replay", "activation-order", "command-ownership", "capacity",
};

const std::set<std::string, std::less<>> count_targets = {
  "students", "robots", "fields", "cameras", "nodes", "workspaces", "reservations", "peers",
  "deploys", "billed-nodes", "events",
};

struct Analyzer
{
  const Scenario& sc;
  Aliases aliases;
  std::vector<std::string> student_order;

  void define(const ScenarioStatement& st, const std::string& name, Kind kind, std::int64_t rid,
    std::string owner = {})
  {
    if (aliases.count(name))
      parse_fail(st.line, "alias '" + name + "' already defined");
    aliases[name] = Alias{kind, rid, std::move(owner)};
    if (kind == Kind::Student)
      student_order.push_back(name);
  }

  void use(const ScenarioStatement& st, const std::string& name, Kind kind) const
  {
    const auto it = aliases.find(name);
    if (it == aliases.end())
      parse_fail(st.line, "unknown alias '" + name + "'");
    if (it->second.kind != kind)
      parse_fail(st.line, "'" + name + "' is a " + std::string(kind_name(it->second.kind))
        + ", expected a " + std::string(kind_name(kind)));
  }

  void arity(const ScenarioStatement& st, std::size_t lo, std::size_t hi) const
  {
    if (st.args.size() < lo || st.args.size() > hi)
      parse_fail(st.line, "'" + st.verb + "' takes " + std::to_string(lo)
        + (lo == hi ? "" : ".." + std::to_string(hi)) + " arguments");
  }

  void allow(const ScenarioStatement& st, std::initializer_list<std::string_view> keys) const
  {
    for (const auto& [k, v] : st.options)
    {
      if (std::find(keys.begin(), keys.end(), k) == keys.end())
        parse_fail(st.line, "unknown option '" + k + "'");
    }
  }

  template<typename T>
  void number(const ScenarioStatement& st, const std::string& text, const char* what) const
  {
    bool ok = false;
    if constexpr (std::is_floating_point_v<T>)
      ok = to_double(text).has_value();
    else
      ok = to_number<T>(text).has_value();
    if (!ok)
      parse_fail(st.line, std::string("bad ") + what + " '" + text + "'");
  }

  void time(const ScenarioStatement& st, const std::string& text) const
  {
    if (!parse_time(text, 0, 0))
      parse_fail(st.line, "bad time '" + text + "'");
  }

  void flag(const ScenarioStatement& st, std::size_t index, std::string_view name) const
  {
    if (st.args.size() > index && st.args[index] != name)
      parse_fail(st.line, "expected '" + std::string(name) + "', got '" + st.args[index] + "'");
  }

  void actor(const ScenarioStatement& st) const
  {
    const auto it = st.options.find("as");
    if (it != st.options.end() && it->second != "admin")
      use(st, it->second, Kind::Student);
  }

  void run()
  {
    for (std::size_t k = 0; k < sc.steps.size(); ++k)
      step(k, sc.steps[k]);
  }

  void step(std::size_t k, const ScenarioStatement& st)
  {
    const auto& a = st.args;
    const auto& v = st.verb;
    if (const auto it = st.options.find("expect"); it != st.options.end())
    {
      if (v == "advance" || v == "until" || v == "assert")
        parse_fail(st.line, "'" + v + "' takes no expect= option");
      if (!errc_from_string(it->second))
        parse_fail(st.line, "unknown error code '" + it->second + "'");
    }

    if (v == "student")
    {
      arity(st, 1, 1);
      allow(st, {"tier", "quota", "expect"});
      if (st.options.count("tier"))
      {
        const auto t = to_number<int>(st.options.at("tier"));
        if (!t || *t < 1 || *t > 3)
          parse_fail(st.line, "tier must be 1, 2 or 3");
      }
      if (st.options.count("quota"))
        number<std::int64_t>(st, st.options.at("quota"), "quota");
      define(st, a[0], Kind::Student, request_id(k, 0));
    }
    else if (v == "students")
    {
      arity(st, 2, 2);
      allow(st, {"tier", "quota"});
      const auto n = to_number<int>(a[1]);
      if (!n || *n < 1 || *n > 999)
        parse_fail(st.line, "count must be 1..999");
      if (st.options.count("tier"))
      {
        const auto t = to_number<int>(st.options.at("tier"));
        if (!t || *t < 1 || *t > 3)
          parse_fail(st.line, "tier must be 1, 2 or 3");
      }
      if (st.options.count("quota"))
        number<std::int64_t>(st, st.options.at("quota"), "quota");
      for (int i = 0; i < *n; ++i)
        define(st, bulk_name(a[0], static_cast<std::size_t>(i), static_cast<std::size_t>(*n)),
          Kind::Student, request_id(k, static_cast<std::size_t>(i)));
    }
    else if (v == "robot")
    {
      arity(st, 1, 1);
      allow(st, {"caps", "firmware", "bias", "model", "home", "expect"});
      if (st.options.count("caps"))
      {
        try
        {
          CapabilitySet::parse(st.options.at("caps"));
        }
        catch (const Error& e)
        {
          parse_fail(st.line, e.what());
        }
      }
      if (st.options.count("firmware"))
        number<std::int64_t>(st, st.options.at("firmware"), "firmware size");
      if (st.options.count("bias"))
        number<double>(st, st.options.at("bias"), "wheel bias");
      if (st.options.count("home"))
        use(st, st.options.at("home"), Kind::Student);
      define(st, a[0], Kind::Robot, request_id(k, 0));
    }
    else if (v == "field")
    {
      if (a.size() < 2)
        parse_fail(st.line, "'field' takes a name and at least one row");
      allow(st, {"cell", "expect"});
      if (st.options.count("cell"))
        number<double>(st, st.options.at("cell"), "cell size");
      for (std::size_t i = 2; i < a.size(); ++i)
        if (a[i].size() != a[1].size())
          parse_fail(st.line, "field rows differ in length");
      for (std::size_t i = 1; i < a.size(); ++i)
        if (a[i].find_first_not_of(".#") != std::string::npos)
          parse_fail(st.line, "field rows use '.' and '#' only");
      define(st, a[0], Kind::Field, request_id(k, 0));
    }
    else if (v == "camera")
    {
      arity(st, 6, 6);
      allow(st, {"expect"});
      use(st, a[1], Kind::Field);
      for (std::size_t i = 2; i < 6; ++i)
        number<double>(st, a[i], "coordinate");
      define(st, a[0], Kind::Camera, request_id(k, 0));
    }
    else if (v == "node")
    {
      arity(st, 1, 2);
      flag(st, 1, "gpu");
      allow(st, {"cpu", "ram", "rate", "expect"});
      for (const auto* key : {"cpu", "ram", "rate"})
      {
        if (!st.options.count(key))
          parse_fail(st.line, std::string("'node' needs ") + key + "=");
        number<std::int64_t>(st, st.options.at(key), key);
      }
      define(st, a[0], Kind::Node, request_id(k, 0));
    }
    else if (v == "workspace")
    {
      arity(st, 2, 3);
      flag(st, 2, "gpu");
      allow(st, {"expect"});
      use(st, a[1], Kind::Student);
      define(st, a[0], Kind::Workspace, request_id(k, 0), a[1]);
    }
    else if (v == "workspaces")
    {
      arity(st, 1, 2);
      flag(st, 1, "gpu");
      allow(st, {});
      const auto owners = students_with_prefix(student_order, a[0]);
      if (owners.empty())
        parse_fail(st.line, "no student alias starts with '" + a[0] + "'");
      for (std::size_t i = 0; i < owners.size(); ++i)
        define(st, owners[i] + ".ws", Kind::Workspace, request_id(k, i), owners[i]);
    }
    else if (v == "release")
    {
      arity(st, 1, 1);
      allow(st, {"as", "expect"});
      use(st, a[0], Kind::Workspace);
      actor(st);
    }
    else if (v == "reserve")
    {
      arity(st, 6, 6);
      allow(st, {"expect"});
      use(st, a[1], Kind::Student);
      for (const auto& r : split(a[2], ','))
        use(st, r, Kind::Robot);
      use(st, a[3], Kind::Field);
      time(st, a[4]);
      if (!parse_minutes(a[5]))
        parse_fail(st.line, "bad duration '" + a[5] + "'");
      define(st, a[0], Kind::Reservation, request_id(k, 0), a[1]);
    }
    else if (v == "cancel")
    {
      arity(st, 1, 1);
      allow(st, {"as", "expect"});
      use(st, a[0], Kind::Reservation);
      actor(st);
    }
    else if (v == "fault")
    {
      arity(st, 2, 2);
      allow(st, {"expect"});
      use(st, a[0], Kind::Robot);
      try
      {
        fault_kind_from_string(a[1]);
      }
      catch (const Error&)
      {
        parse_fail(st.line, "unknown fault '" + a[1] + "'");
      }
    }
    else if (v == "drive")
    {
      arity(st, 5, 5);
      allow(st, {"expect", "as"});
      use(st, a[0], Kind::Reservation);
      use(st, a[1], Kind::Robot);
      number<double>(st, a[2], "speed");
      number<double>(st, a[3], "turn rate");
      number<std::int32_t>(st, a[4], "tick count");
      actor(st);
    }
    else if (v == "deploy")
    {
      arity(st, 3, 3);
      allow(st, {"expect", "checksum"});
      use(st, a[0], Kind::Reservation);
      number<std::int64_t>(st, a[2], "bundle size");
    }
    else if (v == "advance")
    {
      arity(st, 1, 1);
      allow(st, {});
      const auto d = parse_duration(a[0]);
      if (!d || *d <= 0)
        parse_fail(st.line, "bad duration '" + a[0] + "'");
    }
    else if (v == "until")
    {
      arity(st, 1, 1);
      allow(st, {});
      time(st, a[0]);
    }
    else if (v == "assert")
      assertion(st);
    else
      parse_fail(st.line, "unknown statement '" + v + "'");
  }

  void assertion(const ScenarioStatement& st) const
  {
    const auto& a = st.args;
    if (a.empty())
      parse_fail(st.line, "'assert' needs a check");
    const auto& what = a[0];
    if (assertion_checks.count(what))
    {
      arity(st, 1, 1);
      allow(st, {});
    }
    else if (what == "state")
    {
      arity(st, 3, 3);
      allow(st, {});
      if (!aliases.count(a[1]))
        parse_fail(st.line, "unknown alias '" + a[1] + "'");
    }
    else if (what == "robot")
    {
      arity(st, 2, 2);
      allow(st, {"state", "battery", "firmware", "queue", "x", "y", "theta", "claimed", "peer"});
      use(st, a[1], Kind::Robot);
      if (st.options.empty())
        parse_fail(st.line, "'assert robot' needs at least one key=value");
      for (const auto* key : {"battery", "x", "y", "theta"})
        if (st.options.count(key))
          number<double>(st, st.options.at(key), key);
      for (const auto* key : {"firmware", "queue"})
        if (st.options.count(key))
          number<std::int64_t>(st, st.options.at(key), key);
      if (st.options.count("claimed") && st.options.at("claimed") != "none")
        use(st, st.options.at("claimed"), Kind::Reservation);
    }
    else if (what == "peer")
    {
      arity(st, 3, 3);
      allow(st, {});
      if (!aliases.count(a[1]))
        parse_fail(st.line, "unknown alias '" + a[1] + "'");
    }
    else if (what == "count")
    {
      arity(st, 4, 4);
      allow(st, {});
      const auto target = split(a[1], ':');
      if (target.size() > 2 || !count_targets.count(target[0]))
        parse_fail(st.line, "unknown count target '" + a[1] + "'");
      if (!is_op(a[2]))
        parse_fail(st.line, "bad comparison '" + a[2] + "'");
      number<std::int64_t>(st, a[3], "count");
    }
    else if (what == "cost")
    {
      arity(st, 5, 5);
      allow(st, {});
      time(st, a[1]);
      time(st, a[2]);
      if (!is_op(a[3]))
        parse_fail(st.line, "bad comparison '" + a[3] + "'");
      number<std::int64_t>(st, a[4], "amount");
    }
    else if (what == "quota")
    {
      arity(st, 4, 4);
      allow(st, {});
      use(st, a[1], Kind::Student);
      if (!is_op(a[2]))
        parse_fail(st.line, "bad comparison '" + a[2] + "'");
      number<std::int64_t>(st, a[3], "minutes");
    }
    else if (what == "available")
    {
      arity(st, 5, 5);
      allow(st, {"caps"});
      time(st, a[1]);
      if (!parse_minutes(a[2]))
        parse_fail(st.line, "bad duration '" + a[2] + "'");
      if (a[3] != "=")
        parse_fail(st.line, "expected '='");
      if (a[4] != "none")
        for (const auto& r : split(a[4], ','))
          use(st, r, Kind::Robot);
    }
    else
      parse_fail(st.line, "unknown check '" + what + "'");
  }
};

Aliases analyze(const Scenario& sc)
{
  Analyzer an{sc, {}, {}};
  an.run();
  return std::move(an.aliases);
}

} // anonymous namespace

//==============================================================================
std::optional<Seconds> parse_timestamp(std::string_view text)
{
  if (text.find('T') != std::string_view::npos)
    return parse_iso(text);
  return to_number<Seconds>(text);
}

Scenario parse_scenario(std::string_view text)
{
  Scenario sc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size())
  {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);

    std::istringstream in{std::string(line)};
    std::vector<std::string> tokens;
    for (std::string t; in >> t;)
      tokens.push_back(t);
    if (tokens.empty() || tokens[0][0] == '#')
      continue;

    ScenarioStatement st;
    st.line = line_no;
    st.verb = tokens[0];
    for (std::size_t i = 1; i < tokens.size(); ++i)
    {
      if (is_option(tokens[i]))
      {
        const auto eq = tokens[i].find('=');
        if (!st.options.emplace(tokens[i].substr(0, eq), tokens[i].substr(eq + 1)).second)
          parse_fail(line_no, "duplicate option '" + tokens[i].substr(0, eq) + "'");
      }
      else
        st.args.push_back(tokens[i]);
    }
    {
      std::string joined;
      for (const auto& t : tokens)
        joined += (joined.empty() ? "" : " ") + t;
      st.text = joined;
    }

    if (st.verb == "config" || st.verb == "start")
    {
      if (!sc.steps.empty())
        parse_fail(line_no, "'" + st.verb + "' must precede every step");
      if (st.verb == "start")
      {
        if (st.args.size() != 1 || !st.options.empty())
          parse_fail(line_no, "'start' takes one time");
        const auto t = parse_timestamp(st.args[0]);
        if (!t)
          parse_fail(line_no, "bad start time '" + st.args[0] + "'");
        sc.start = *t;
      }
      else
      {
        if (st.args.size() != 2 || !st.options.empty())
          parse_fail(line_no, "'config' takes SECTION.KEY VALUE");
        const auto dot = st.args[0].find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == st.args[0].size())
          parse_fail(line_no, "config key must be SECTION.KEY");
        sc.config[st.args[0].substr(0, dot)][st.args[0].substr(dot + 1)] = st.args[1];
        sc.config_lines[st.args[0]] = line_no;
      }
      continue;
    }
    sc.steps.push_back(std::move(st));
  }

  try
  {
    scenario_config(sc);
  }
  catch (const Error& e)
  {
    std::size_t line = 0;
    for (const auto& [key, at] : sc.config_lines)
      if (std::string_view(e.what()).find(key) != std::string_view::npos)
        line = at;
    parse_fail(line, e.what());
  }
  analyze(sc);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::IoFailure, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

LabConfig scenario_config(const Scenario& scenario)
{
  std::string ini;
  for (const auto& [section, keys] : scenario.config)
  {
    ini += "[" + section + "]\n";
    for (const auto& [k, v] : keys)
      ini += k + " = " + v + "\n";
  }
  auto config = LabConfig::parse(ini);
  if (config.auth.token_secret.empty())
    config.auth.token_secret = "scenario";
  config.store = StoreConfig{};
  return config;
}

//==============================================================================
bool ScenarioReport::passed() const
{
  return invariant_violations.empty()
    && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ScenarioReport::text() const
{
  std::ostringstream out;
  std::size_t failed = 0;
  if (resumed_from >= 0)
    out << "resumed at step " << resumed_from << "\n";
  for (const auto& c : checks)
  {
    failed += c.passed ? 0 : 1;
    out << (c.passed ? "PASS" : "FAIL") << " step " << c.step << " (line " << c.line << "): "
        << c.text;
    if (!c.message.empty())
      out << " -- " << c.message;
    out << "\n";
  }
  if (invariant_violations.empty())
    out << "invariants: ok\n";
  else
  {
    out << "invariants: " << invariant_violations.size() << " violations\n";
    for (const auto& v : invariant_violations)
      out << "  " << v << "\n";
  }
  out << "summary: " << checks.size() << " checks, " << failed << " failed, " << events
      << " events, clock " << clock << ", " << (passed() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

Json ScenarioReport::to_json() const
{
  Json checks_json = Json::array();
  for (const auto& c : checks)
  {
    checks_json.push_back({{"step", c.step}, {"line", c.line}, {"text", c.text},
      {"passed", c.passed}, {"message", c.message}});
  }
  return Json{{"checks", checks_json}, {"invariant_violations", invariant_violations},
    {"resumed_from", resumed_from}, {"events", events}, {"clock", clock}, {"passed", passed()}};
}

//==============================================================================
struct ScenarioRunner::Impl
{
  const Scenario& sc;
  Lab& lab;
  Aliases aliases;
  std::map<std::int64_t, std::string> created;
  std::uint64_t scanned = 0;
  ScenarioReport report;
  std::size_t step = 0;
  Seconds t0 = 0;

  void refresh()
  {
    for (const auto& e : lab.store().events_since(scanned))
    {
      scanned = e.seq;
      const auto& p = e.payload;
      const auto rid = p.find("request_id");
      const auto id = p.find("id");
      if (rid != p.end() && rid->is_number_integer() && id != p.end() && id->is_string())
        created.emplace(rid->get<std::int64_t>(), id->get<std::string>());
    }
  }

  std::string id_of(const std::string& alias)
  {
    const auto rid = aliases.at(alias).request_id;
    auto it = created.find(rid);
    if (it == created.end())
    {
      refresh();
      it = created.find(rid);
    }
    if (it == created.end())
      throw Error(Errc::BadRequest, "'" + alias + "' was never created");
    return it->second;
  }

  Actor actor_for(const ScenarioStatement& st, const std::string& owner_alias)
  {
    const auto it = st.options.find("as");
    if (it == st.options.end())
      return Actor::student(id_of(owner_alias));
    if (it->second == "admin")
      return Actor::administrator();
    return Actor::student(id_of(it->second));
  }

  void record(const ScenarioStatement& st, bool passed, std::string message)
  {
    report.checks.push_back(ScenarioCheck{step, st.line, st.text, passed, std::move(message)});
  }

  bool applied(std::int64_t rid) const
  {
    return lab.store().snapshot()->applied_requests.count(rid) > 0;
  }

  /// Runs a command once per request id. An applied request only gets its
  /// idempotent completion.
  template<typename Run, typename Complete>
  void command(const ScenarioStatement& st, std::int64_t rid, Run run, Complete complete)
  {
    if (applied(rid))
    {
      complete();
      return;
    }
    const auto expect = st.options.find("expect");
    try
    {
      run(rid);
    }
    catch (const Error& e)
    {
      const auto code = std::string(to_string(e.code()));
      if (expect != st.options.end() && expect->second == code)
        record(st, true, "rejected with " + code);
      else if (expect != st.options.end())
        record(st, false, "expected " + expect->second + ", got " + code + ": " + e.message());
      else
        record(st, false, "unexpected " + code + ": " + e.message());
      return;
    }
    if (expect != st.options.end())
      record(st, false, "expected " + expect->second + ", command succeeded");
  }

  template<typename Run>
  void command(const ScenarioStatement& st, std::int64_t rid, Run run)
  {
    command(st, rid, run, [] {});
  }

  Seconds time(const std::string& text) const
  {
    return *parse_time(text, sc.start, t0);
  }

  void execute(const ScenarioStatement& st)
  {
    const auto& a = st.args;
    const auto& v = st.verb;
    const auto opt = [&](const char* key) -> std::optional<std::string> {
      const auto it = st.options.find(key);
      return it == st.options.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
    const auto now = lab.now();

    try
    {
      if (v == "student" || v == "students")
      {
        const auto tier = tier_from_int(opt("tier") ? *to_number<int>(*opt("tier")) : 3);
        std::optional<std::int64_t> quota;
        if (opt("quota"))
          quota = *to_number<std::int64_t>(*opt("quota"));
        const auto n = v == "student" ? 1 : static_cast<std::size_t>(*to_number<int>(a[1]));
        for (std::size_t i = 0; i < n; ++i)
        {
          const auto name = v == "student" ? a[0] : bulk_name(a[0], i, n);
          command(st, request_id(step, i), [&](std::int64_t rid) {
            lab.add_student(name, tier, quota, Actor::administrator(), rid);
          });
        }
      }
      else if (v == "robot")
      {
        RobotSpec spec;
        spec.name = a[0];
        spec.capabilities = CapabilitySet::parse(opt("caps").value_or("diff_drive"));
        if (opt("model"))
          spec.model = *opt("model");
        if (opt("firmware"))
          spec.firmware_size_mb = *to_number<std::int64_t>(*opt("firmware"));
        if (opt("bias"))
          spec.wheel_bias = *to_double(*opt("bias"));
        if (opt("home"))
        {
          spec.location = Location::StudentHome;
          spec.owner_id = id_of(*opt("home"));
        }
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.add_robot(spec, Actor::administrator(), rid);
        });
      }
      else if (v == "field")
      {
        std::vector<std::string> rows(a.begin() + 1, a.end());
        const auto cell = opt("cell") ? *to_double(*opt("cell")) : lab.config().sim.field_cell_m;
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.add_field(a[0], rows, cell, Actor::administrator(), rid);
        });
      }
      else if (v == "camera")
      {
        const auto field = id_of(a[1]);
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.add_camera(field, *to_double(a[2]), *to_double(a[3]), *to_double(a[4]),
            *to_double(a[5]), Actor::administrator(), rid);
        });
      }
      else if (v == "node")
      {
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.provisioner().add_node(*to_number<std::int32_t>(*opt("cpu")),
            *to_number<std::int64_t>(*opt("ram")), a.size() > 1,
            *to_number<std::int64_t>(*opt("rate")), now, Actor::administrator(), rid);
        });
      }
      else if (v == "workspace" || v == "workspaces")
      {
        std::vector<std::string> names;
        if (v == "workspace")
          names.push_back(a[0]);
        else
        {
          for (const auto& [name, alias] : aliases)
            if (alias.kind == Kind::Workspace && alias.request_id / 1000 == static_cast<std::int64_t>(step) + 1)
              names.push_back(name);
          std::sort(names.begin(), names.end(), [&](const auto& x, const auto& y) {
            return aliases.at(x).request_id < aliases.at(y).request_id;
          });
        }
        const bool gpu = v == "workspace" ? a.size() > 2 : a.size() > 1;
        for (const auto& name : names)
        {
          const auto& alias = aliases.at(name);
          const auto owner = id_of(alias.owner);
          command(st, alias.request_id,
            [&](std::int64_t rid) {
              lab.provisioner().provision_workspace(owner, gpu, now, Actor::student(owner),
                WorkspaceOptions{false, rid});
            },
            [&] { lab.provisioner().place_workspace(id_of(name), now); });
        }
      }
      else if (v == "release")
      {
        const auto& alias = aliases.at(a[0]);
        const auto ws = id_of(a[0]);
        const auto actor = actor_for(st, alias.owner);
        command(st, request_id(step, 0),
          [&](std::int64_t rid) { lab.provisioner().deprovision_workspace(ws, now, actor, rid); },
          [&] {
            const auto s = lab.store().snapshot();
            if (s->workspaces.at(ws).state == WorkspaceState::Stopping)
              lab.provisioner().deprovision_workspace(ws, now, actor);
          });
      }
      else if (v == "reserve")
      {
        const auto student = id_of(a[1]);
        std::vector<std::string> robots;
        for (const auto& r : split(a[2], ','))
          robots.push_back(id_of(r));
        const TimeSlot slot{time(a[4]), *parse_minutes(a[5])};
        const auto field = id_of(a[3]);
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.scheduler().request_reservation(student, robots, slot, field, now,
            Actor::student(student), rid);
        });
      }
      else if (v == "cancel")
      {
        const auto id = id_of(a[0]);
        const auto actor = actor_for(st, aliases.at(a[0]).owner);
        command(st, request_id(step, 0),
          [&](std::int64_t rid) { lab.scheduler().cancel_reservation(id, actor, now, rid); },
          [&] { lab.scheduler().reap_workspaces(now); });
      }
      else if (v == "fault")
      {
        const auto robot = id_of(a[0]);
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.control().inject_fault(robot, fault_kind_from_string(a[1]), now,
            Actor::administrator(), rid);
        });
      }
      else if (v == "drive")
      {
        const auto session = id_of(a[0]);
        const auto robot = id_of(a[1]);
        const auto actor = actor_for(st, aliases.at(a[0]).owner);
        const DriveCommand cmd{*to_double(a[2]), *to_double(a[3]), *to_number<std::int32_t>(a[4])};
        command(st, request_id(step, 0),
          [&](std::int64_t rid) {
            lab.control().dispatch(session, robot, cmd, now, actor, rid);
            lab.control().run_until_idle(robot, now);
          },
          [&] { lab.control().run_until_idle(robot, now); });
      }
      else if (v == "deploy")
      {
        const auto session = id_of(a[0]);
        const auto actor = actor_for(st, aliases.at(a[0]).owner);
        std::string bundle(static_cast<std::size_t>(*to_number<std::int64_t>(a[2])), 'x');
        const auto checksum = opt("checksum").value_or(sha256_hex(bundle));
        command(st, request_id(step, 0), [&](std::int64_t rid) {
          lab.store_deploy(session, a[1], std::move(bundle), checksum, actor, rid);
        });
      }
      else if (v == "advance")
        lab.advance_to(t0 + *parse_duration(a[0]));
      else if (v == "until")
      {
        const auto target = time(a[0]);
        if (target < lab.now())
          record(st, false, "time " + std::to_string(target) + " already passed");
        else
          lab.advance_to(target);
      }
      else if (v == "assert")
      {
        auto [ok, message] = check(st);
        record(st, ok, std::move(message));
      }
    }
    catch (const Error& e)
    {
      record(st, false, "unexpected " + std::string(to_string(e.code())) + ": " + e.message());
    }
  }

  std::pair<bool, std::string> check(const ScenarioStatement& st)
  {
    const auto& a = st.args;
    const auto& what = a[0];
    const auto s = lab.store().snapshot();
    const auto violations = [](std::vector<std::string> v) -> std::pair<bool, std::string> {
      if (v.empty())
        return {true, ""};
      return {false, std::to_string(v.size()) + " violations, first: " + v.front()};
    };

    if (what == "invariants")
      return violations(validate_all(*s));
    if (what == "no-double-booking")
      return violations(audit_double_booking(*s));
    if (what == "replay")
    {
      const auto log = lab.store().events();
      return violations(audit_replay(log, *s));
    }
    if (what == "activation-order")
      return violations(audit_activation_order(lab.store().events()));
    if (what == "command-ownership")
      return violations(audit_command_ownership(lab.store().events()));
    if (what == "capacity")
      return violations(audit_capacity(lab.store().events()));

    if (what == "state")
    {
      const auto& alias = aliases.at(a[1]);
      std::string actual = "none";
      refresh();
      if (const auto c = created.find(alias.request_id); c != created.end())
      {
        const auto& id = c->second;
        switch (alias.kind)
        {
          case Kind::Robot: actual = to_string(s->robots.at(id).state); break;
          case Kind::Reservation: actual = to_string(s->reservations.at(id).state); break;
          case Kind::Workspace: actual = to_string(s->workspaces.at(id).state); break;
          case Kind::Node: actual = to_string(s->nodes.at(id).state); break;
          default: return {false, "'" + a[1] + "' has no state"};
        }
      }
      return {actual == a[2], "state " + actual};
    }
    if (what == "robot")
    {
      const auto& r = s->robots.at(id_of(a[1]));
      std::string failures;
      const auto expect = [&](const std::string& key, bool ok, const std::string& actual) {
        if (!ok)
          failures += (failures.empty() ? "" : ", ") + key + "=" + actual;
      };
      for (const auto& [key, value] : st.options)
      {
        if (key == "state")
          expect(key, to_string(r.state) == value, to_string(r.state));
        else if (key == "battery")
          expect(key, round3(r.battery_pct) == round3(*to_double(value)), fmt(r.battery_pct));
        else if (key == "x")
          expect(key, round3(r.pose.x) == round3(*to_double(value)), fmt(r.pose.x));
        else if (key == "y")
          expect(key, round3(r.pose.y) == round3(*to_double(value)), fmt(r.pose.y));
        else if (key == "theta")
          expect(key, round3(r.pose.theta) == round3(*to_double(value)), fmt(r.pose.theta));
        else if (key == "firmware")
          expect(key, r.firmware_version == *to_number<std::uint64_t>(value),
            std::to_string(r.firmware_version));
        else if (key == "queue")
          expect(key, r.queue.size() == *to_number<std::size_t>(value), std::to_string(r.queue.size()));
        else if (key == "claimed")
        {
          const auto want = value == "none" ? std::string() : id_of(value);
          expect(key, r.claimed_by == want, r.claimed_by.empty() ? "none" : r.claimed_by);
        }
        else if (key == "peer")
        {
          const auto status = peer_status(*s, r.id);
          expect(key, status == value, status);
        }
      }
      return {failures.empty(), failures};
    }
    if (what == "peer")
    {
      const auto status = peer_status(*s, id_of(a[1]));
      return {status == a[2], "peer " + status};
    }
    if (what == "count")
    {
      const auto target = split(a[1], ':');
      const auto n = count(*s, target[0], target.size() > 1 ? target[1] : std::string());
      return {compare(static_cast<double>(n), a[2], static_cast<double>(*to_number<std::int64_t>(a[3]))),
        "count " + std::to_string(n)};
    }
    if (what == "cost")
    {
      const auto r = cost_report(*s, time(a[1]), time(a[2]), lab.now());
      return {compare(static_cast<double>(r.total_cents), a[3],
        static_cast<double>(*to_number<std::int64_t>(a[4]))),
        "total " + std::to_string(r.total_cents) + " cents"};
    }
    if (what == "quota")
    {
      const auto left = quota_remaining(*s, id_of(a[1]), t0);
      return {compare(static_cast<double>(left), a[2], static_cast<double>(*to_number<std::int64_t>(a[3]))),
        "remaining " + std::to_string(left)};
    }
    if (what == "available")
    {
      ScheduleQuery q;
      q.window = TimeSlot{time(a[1]), *parse_minutes(a[2])};
      if (st.options.count("caps"))
        q.required_capabilities = CapabilitySet::parse(st.options.at("caps"));
      auto got = available_robots(*s, q);
      std::vector<std::string> want;
      if (a[4] != "none")
        for (const auto& r : split(a[4], ','))
          want.push_back(id_of(r));
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      std::string listed;
      for (const auto& g : got)
        listed += (listed.empty() ? "" : ",") + g;
      return {got == want, "available " + (listed.empty() ? std::string("none") : listed)};
    }
    return {false, "unknown check"};
  }

  static std::string peer_status(const SystemState& s, const std::string& subject)
  {
    const OverlayPeer* last = nullptr;
    for (const auto& [id, p] : s.peers)
      if (p.subject == subject)
        last = &p;
    return last ? to_string(last->status) : "none";
  }

  std::int64_t count(const SystemState& s, const std::string& what, const std::string& state) const
  {
    const auto tally = [&](const auto& map, auto state_of) {
      std::int64_t n = 0;
      for (const auto& [id, v] : map)
        if (state.empty() || state_of(v) == state)
          ++n;
      return n;
    };
    if (what == "students")
      return static_cast<std::int64_t>(s.students.size());
    if (what == "fields")
      return static_cast<std::int64_t>(s.fields.size());
    if (what == "cameras")
      return static_cast<std::int64_t>(s.cameras.size());
    if (what == "deploys")
      return static_cast<std::int64_t>(s.deploys.size());
    if (what == "events")
      return static_cast<std::int64_t>(s.last_seq);
    if (what == "robots")
      return tally(s.robots, [](const Robot& r) { return to_string(r.state); });
    if (what == "nodes")
      return tally(s.nodes, [](const Node& n) { return to_string(n.state); });
    if (what == "workspaces")
      return tally(s.workspaces, [](const Workspace& w) { return to_string(w.state); });
    if (what == "reservations")
      return tally(s.reservations, [](const Reservation& r) { return to_string(r.state); });
    if (what == "peers")
      return tally(s.peers, [](const OverlayPeer& p) { return to_string(p.status); });
    if (what == "billed-nodes")
    {
      std::set<std::string> ids;
      for (const auto& e : s.ledger)
        ids.insert(e.node_id);
      return static_cast<std::int64_t>(ids.size());
    }
    return 0;
  }
};

ScenarioRunner::ScenarioRunner(const Scenario& scenario, Lab& lab)
: _scenario(scenario),
  _lab(lab)
{
}

ScenarioReport ScenarioRunner::run()
{
  Impl im{_scenario, _lab, analyze(_scenario), {}, 0, {}, 0, 0};
  const auto resume_at = _lab.store().snapshot()->scenario_step;
  im.report.resumed_from = resume_at;
  im.refresh();

  Seconds marker_ts = _lab.now();
  if (resume_at >= 0)
  {
    for (const auto& e : _lab.store().events())
      if (e.kind == events::ScenarioStep && e.payload.at("index") == resume_at)
        marker_ts = e.ts;
  }

  if (resume_at < 0 && _lab.now() < _scenario.start && !_scenario.steps.empty())
    _lab.advance_to(_scenario.start);

  const auto first = static_cast<std::size_t>(std::max<std::int64_t>(resume_at, 0));
  for (std::size_t k = first; k < _scenario.steps.size(); ++k)
  {
    im.step = k;
    if (static_cast<std::int64_t>(k) == resume_at)
      im.t0 = marker_ts;
    else
    {
      im.t0 = _lab.now();
      _lab.store().append(events::ScenarioStep, Json{{"index", k}}, im.t0, "scenario");
    }
    im.execute(_scenario.steps[k]);
  }

  const auto s = _lab.store().snapshot();
  im.report.invariant_violations = validate_all(*s);
  for (auto& v : audit_double_booking(*s))
    im.report.invariant_violations.push_back(std::move(v));
  im.report.events = s->last_seq;
  im.report.clock = _lab.now();
  return std::move(im.report);
}

ScenarioReport run_scenario(const Scenario& scenario)
{
  Lab lab(scenario_config(scenario), std::make_unique<Store>());
  return ScenarioRunner(scenario, lab).run();
}

ScenarioReport run_scenario(const std::filesystem::path& script_path)
{
  return run_scenario(load_scenario(script_path));
}

void require_passed(const ScenarioReport& report)
{
  for (const auto& c : report.checks)
  {
    if (!c.passed)
    {
      throw Error(Errc::AssertionFailed,
        "step " + std::to_string(c.step) + " (line " + std::to_string(c.line) + "): " + c.text
          + (c.message.empty() ? "" : " -- " + c.message),
        Json{{"step", c.step}, {"line", c.line}});
    }
  }
  if (!report.invariant_violations.empty())
  {
    throw Error(Errc::AssertionFailed, "invariant sweep: " + report.invariant_violations.front(),
      Json{{"step", nullptr}});
  }
}

} // namespace rlab
