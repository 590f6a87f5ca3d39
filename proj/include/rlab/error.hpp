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

#ifndef RLAB__ERROR_HPP
#define RLAB__ERROR_HPP

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rlab {

/// Every failure a module can report. The gateway maps each code onto
/// exactly one wire status (see http_status).
enum class Errc
{
  // core-state
  StorageFull,
  ValidationRejected,
  SequenceGap,
  IllegalTransition,
  CorruptRecord,
  IoFailure,
  ChecksumMismatch,
  UnsupportedFormat,
  // scheduler
  Conflict,
  QuotaExceeded,
  UnknownRobot,
  TierDenied,
  PastSlot,
  InvalidSlot,
  NotCancellable,
  NotOwner,
  UnknownStudent,
  UnknownReservation,
  UnknownField,
  // provisioner
  AlreadyProvisioned,
  NoCapacity,
  UnknownWorkspace,
  AlreadyReleased,
  WorkspaceNotReady,
  Busy,
  TooEarly,
  UnknownJob,
  BadRange,
  UnknownNode,
  // overlay
  InvalidToken,
  PoolExhausted,
  UnknownPeer,
  Evicted,
  // fleet-sim
  AlreadySpawned,
  NotReserved,
  QueueFull,
  RobotFault,
  BadCommand,
  UnknownCamera,
  // gateway
  Unauthorized,
  Forbidden,
  UnknownSession,
  SessionEnded,
  NoWorkspace,
  SessionNotActive,
  BadChecksum,
  TooLarge,
  BadRequest,
  ParseError,
  AssertionFailed,
};

std::string_view to_string(Errc code);
std::optional<Errc> errc_from_string(std::string_view name);

/// Wire status for a module error. Total over Errc.
int http_status(Errc code);

class Error : public std::runtime_error
{
public:
  Error(Errc code, const std::string& message, nlohmann::json detail = {});

  Errc code() const { return _code; }
  /// Message without the code prefix carried by what().
  const std::string& message() const { return _message; }
  const nlohmann::json& detail() const { return _detail; }

  /// {"error": <code>, "message": ..., "detail": ...}
  nlohmann::json to_json() const;

private:
  Errc _code;
  std::string _message;
  nlohmann::json _detail;
};

} // namespace rlab

#endif // RLAB__ERROR_HPP
