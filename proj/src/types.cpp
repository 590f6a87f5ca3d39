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

#include <rlab/types.hpp>
#include <rlab/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rlab {

namespace {

struct CapabilityName
{
  Capability cap;
  const char* name;
};

constexpr CapabilityName capability_names[] = {
  {Capability::DiffDrive, "diff_drive"},
  {Capability::Lidar, "lidar"},
  {Capability::Camera, "camera"},
  {Capability::Wifi, "wifi"},
};

template<typename E>
std::string enum_name(E v)
{
  return Json(v).template get<std::string>();
}

template<typename E>
E enum_from(const std::string& s, const char* what)
{
  const Json j = s;
  const E v = j.get<E>();
  // The serializer falls back to the first enumerator on unknown input.
  if (enum_name(v) != s)
    throw Error(Errc::BadRequest, std::string("unknown ") + what + " '" + s + "'");
  return v;
}

} // anonymous namespace

//==============================================================================
CapabilitySet::CapabilitySet(std::uint8_t bits)
: _bits(bits & 0x0F)
{
}

CapabilitySet CapabilitySet::parse(const std::string& csv)
{
  CapabilitySet set;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
  {
    if (item.empty())
      continue;
    bool found = false;
    for (const auto& c : capability_names)
    {
      if (item == c.name)
      {
        set.add(c.cap);
        found = true;
      }
    }
    if (!found)
      throw Error(Errc::BadRequest, "unknown capability '" + item + "'");
  }
  return set;
}

CapabilitySet& CapabilitySet::add(Capability cap)
{
  _bits |= static_cast<std::uint8_t>(cap);
  return *this;
}

bool CapabilitySet::has(Capability cap) const
{
  return (_bits & static_cast<std::uint8_t>(cap)) != 0;
}

bool CapabilitySet::contains(CapabilitySet other) const
{
  return (other._bits & _bits) == other._bits;
}

std::vector<std::string> CapabilitySet::names() const
{
  std::vector<std::string> out;
  for (const auto& c : capability_names)
  {
    if (has(c.cap))
      out.emplace_back(c.name);
  }
  return out;
}

std::string CapabilitySet::to_string() const
{
  std::string out;
  for (const auto& n : names())
  {
    if (!out.empty())
      out += ',';
    out += n;
  }
  return out;
}

void to_json(Json& j, const CapabilitySet& v)
{
  j = v.names();
}

void from_json(const Json& j, CapabilitySet& v)
{
  v = CapabilitySet();
  for (const auto& item : j)
    v = CapabilitySet(v.bits() | CapabilitySet::parse(item.get<std::string>()).bits());
}

void to_json(Json& j, const Tier& v)
{
  j = static_cast<int>(v);
}

void from_json(const Json& j, Tier& v)
{
  v = tier_from_int(j.get<int>());
}

//==============================================================================
std::string to_string(Tier v)
{
  switch (v)
  {
    case Tier::Simulated: return "Simulated";
    case Tier::PersonalRobot: return "PersonalRobot";
    case Tier::RemoteLab: return "RemoteLab";
  }
  return "Simulated";
}

std::string to_string(Location v) { return enum_name(v); }
std::string to_string(RobotState v) { return enum_name(v); }
std::string to_string(ReservationState v) { return enum_name(v); }
std::string to_string(NodeState v) { return enum_name(v); }
std::string to_string(WorkspaceState v) { return enum_name(v); }
std::string to_string(PeerKind v) { return enum_name(v); }
std::string to_string(PeerStatus v) { return enum_name(v); }
std::string to_string(FaultKind v) { return enum_name(v); }

Tier tier_from_int(int level)
{
  if (level < 1 || level > 3)
    throw Error(Errc::BadRequest, "tier must be 1, 2 or 3");
  return static_cast<Tier>(level);
}

RobotState robot_state_from_string(const std::string& s)
{
  return enum_from<RobotState>(s, "robot state");
}

ReservationState reservation_state_from_string(const std::string& s)
{
  return enum_from<ReservationState>(s, "reservation state");
}

WorkspaceState workspace_state_from_string(const std::string& s)
{
  return enum_from<WorkspaceState>(s, "workspace state");
}

NodeState node_state_from_string(const std::string& s)
{
  return enum_from<NodeState>(s, "node state");
}

PeerKind peer_kind_from_string(const std::string& s)
{
  return enum_from<PeerKind>(s, "peer kind");
}

PeerStatus peer_status_from_string(const std::string& s)
{
  return enum_from<PeerStatus>(s, "peer status");
}

FaultKind fault_kind_from_string(const std::string& s)
{
  return enum_from<FaultKind>(s, "fault kind");
}

//==============================================================================
bool TimeSlot::valid() const
{
  if (start % SlotGridSeconds != 0)
    return false;
  return duration_min >= 15 && duration_min <= MaxSlotMinutes
    && duration_min % 15 == 0;
}

std::int64_t iso_week_index(Seconds t)
{
  // 1970-01-01 was a Thursday; shifting by three days puts Monday at zero.
  constexpr std::int64_t day = 86400;
  std::int64_t days = t / day;
  if (t % day < 0)
    --days;
  std::int64_t shifted = days + 3;
  std::int64_t week = shifted / 7;
  if (shifted % 7 < 0)
    --week;
  return week;
}

bool FieldLayout::obstacle_at(double x, double y) const
{
  if (rows <= 0 || cols <= 0)
    return false;
  auto col = static_cast<std::int64_t>(std::floor(x / cell_m));
  auto row = static_cast<std::int64_t>(std::floor(y / cell_m));
  col = std::clamp<std::int64_t>(col, 0, cols - 1);
  row = std::clamp<std::int64_t>(row, 0, rows - 1);
  return cells[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] == '#';
}

//==============================================================================
std::string format_address(OverlayAddress addr)
{
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u",
    (addr >> 24) & 0xFF, (addr >> 16) & 0xFF, (addr >> 8) & 0xFF, addr & 0xFF);
  return buf;
}

OverlayAddress parse_address(const std::string& dotted)
{
  unsigned a = 0, b = 0, c = 0, d = 0;
  char tail = 0;
  if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4
    || a > 255 || b > 255 || c > 255 || d > 255)
    throw Error(Errc::BadRequest, "malformed address '" + dotted + "'");
  return (a << 24) | (b << 16) | (c << 8) | d;
}

} // namespace rlab
