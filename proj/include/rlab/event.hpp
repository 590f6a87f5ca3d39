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

#ifndef RLAB__EVENT_HPP
#define RLAB__EVENT_HPP

#include <rlab/types.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace rlab {

/// One append-only log record. Immutable once appended.
struct Event
{
  std::uint64_t seq = 0;
  Seconds ts = 0;
  std::string kind;
  std::string actor;
  Json payload = Json::object();

  bool operator==(const Event&) const = default;
};

void to_json(Json& j, const Event& event);
void from_json(const Json& j, Event& event);

/// Compact single-line JSON: {"actor":..,"kind":..,"payload":{..},"seq":..,"ts":..}.
/// Keys are emitted in sorted order so identical events encode to identical bytes.
std::string encode_line(const Event& event);

/// Throws Error(CorruptRecord) when the line is not a well-formed record.
Event decode_line(std::string_view line);

namespace events {

inline constexpr std::string_view StudentAdded = "StudentAdded";
inline constexpr std::string_view CredentialIssued = "CredentialIssued";
inline constexpr std::string_view CredentialRevoked = "CredentialRevoked";
inline constexpr std::string_view RobotAdded = "RobotAdded";
inline constexpr std::string_view FieldAdded = "FieldAdded";
inline constexpr std::string_view CameraAdded = "CameraAdded";
inline constexpr std::string_view NodeProvisioned = "NodeProvisioned";
inline constexpr std::string_view NodeReady = "NodeReady";
inline constexpr std::string_view NodeDraining = "NodeDraining";
inline constexpr std::string_view NodeReleased = "NodeReleased";
inline constexpr std::string_view WorkspaceRequested = "WorkspaceRequested";
inline constexpr std::string_view WorkspacePlaced = "WorkspacePlaced";
inline constexpr std::string_view WorkspacePulling = "WorkspacePulling";
inline constexpr std::string_view WorkspaceStarting = "WorkspaceStarting";
inline constexpr std::string_view WorkspaceReady = "WorkspaceReady";
inline constexpr std::string_view WorkspaceInUse = "WorkspaceInUse";
inline constexpr std::string_view WorkspaceStopping = "WorkspaceStopping";
inline constexpr std::string_view WorkspaceReleased = "WorkspaceReleased";
inline constexpr std::string_view WorkspaceFaulted = "WorkspaceFaulted";
inline constexpr std::string_view ReservationConfirmed = "ReservationConfirmed";
inline constexpr std::string_view ReservationCancelled = "ReservationCancelled";
inline constexpr std::string_view ActivationRequested = "ActivationRequested";
inline constexpr std::string_view RobotStateChanged = "RobotStateChanged";
inline constexpr std::string_view ReprovisionStarted = "ReprovisionStarted";
inline constexpr std::string_view ReprovisionCompleted = "ReprovisionCompleted";
inline constexpr std::string_view SessionActivated = "SessionActivated";
inline constexpr std::string_view SessionCompleted = "SessionCompleted";
inline constexpr std::string_view ReservationNoShow = "ReservationNoShow";
inline constexpr std::string_view FaultInjected = "FaultInjected";
inline constexpr std::string_view RobotFaulted = "RobotFaulted";
inline constexpr std::string_view CommandAccepted = "CommandAccepted";
inline constexpr std::string_view CommandCompleted = "CommandCompleted";
inline constexpr std::string_view AgentSpawned = "AgentSpawned";
inline constexpr std::string_view PeerRegistered = "PeerRegistered";
inline constexpr std::string_view PeerHeartbeat = "PeerHeartbeat";
inline constexpr std::string_view PeerStale = "PeerStale";
inline constexpr std::string_view PeerEvicted = "PeerEvicted";
inline constexpr std::string_view DeployStored = "DeployStored";
inline constexpr std::string_view ScenarioStep = "ScenarioStep";

} // namespace events

} // namespace rlab

#endif // RLAB__EVENT_HPP
