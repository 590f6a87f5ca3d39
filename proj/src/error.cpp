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

namespace rlab {

std::string_view to_string(Errc code)
{
  switch (code)
  {
    case Errc::StorageFull: return "StorageFull";
    case Errc::ValidationRejected: return "ValidationRejected";
    case Errc::SequenceGap: return "SequenceGap";
    case Errc::IllegalTransition: return "IllegalTransition";
    case Errc::CorruptRecord: return "CorruptRecord";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::Conflict: return "Conflict";
    case Errc::QuotaExceeded: return "QuotaExceeded";
    case Errc::UnknownRobot: return "UnknownRobot";
    case Errc::TierDenied: return "TierDenied";
    case Errc::PastSlot: return "PastSlot";
    case Errc::InvalidSlot: return "InvalidSlot";
    case Errc::NotCancellable: return "NotCancellable";
    case Errc::NotOwner: return "NotOwner";
    case Errc::UnknownStudent: return "UnknownStudent";
    case Errc::UnknownReservation: return "UnknownReservation";
    case Errc::UnknownField: return "UnknownField";
    case Errc::AlreadyProvisioned: return "AlreadyProvisioned";
    case Errc::NoCapacity: return "NoCapacity";
    case Errc::UnknownWorkspace: return "UnknownWorkspace";
    case Errc::AlreadyReleased: return "AlreadyReleased";
    case Errc::WorkspaceNotReady: return "WorkspaceNotReady";
    case Errc::Busy: return "Busy";
    case Errc::TooEarly: return "TooEarly";
    case Errc::UnknownJob: return "UnknownJob";
    case Errc::BadRange: return "BadRange";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::InvalidToken: return "InvalidToken";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::UnknownPeer: return "UnknownPeer";
    case Errc::Evicted: return "Evicted";
    case Errc::AlreadySpawned: return "AlreadySpawned";
    case Errc::NotReserved: return "NotReserved";
    case Errc::QueueFull: return "QueueFull";
    case Errc::RobotFault: return "RobotFault";
    case Errc::BadCommand: return "BadCommand";
    case Errc::UnknownCamera: return "UnknownCamera";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::Forbidden: return "Forbidden";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::SessionEnded: return "SessionEnded";
    case Errc::NoWorkspace: return "NoWorkspace";
    case Errc::SessionNotActive: return "SessionNotActive";
    case Errc::BadChecksum: return "BadChecksum";
    case Errc::TooLarge: return "TooLarge";
    case Errc::BadRequest: return "BadRequest";
    case Errc::ParseError: return "ParseError";
    case Errc::AssertionFailed: return "AssertionFailed";
  }
  return "Unknown";
}

std::optional<Errc> errc_from_string(std::string_view name)
{
  for (int i = 0; i <= static_cast<int>(Errc::AssertionFailed); ++i)
  {
    if (to_string(static_cast<Errc>(i)) == name)
      return static_cast<Errc>(i);
  }
  return std::nullopt;
}

int http_status(Errc code)
{
  switch (code)
  {
    case Errc::StorageFull: return 507;
    case Errc::ValidationRejected: return 422;
    case Errc::SequenceGap: return 500;
    case Errc::IllegalTransition: return 409;
    case Errc::CorruptRecord: return 500;
    case Errc::IoFailure: return 500;
    case Errc::ChecksumMismatch: return 500;
    case Errc::UnsupportedFormat: return 500;
    case Errc::Conflict: return 409;
    case Errc::QuotaExceeded: return 429;
    case Errc::UnknownRobot: return 404;
    case Errc::TierDenied: return 403;
    case Errc::PastSlot: return 422;
    case Errc::InvalidSlot: return 422;
    case Errc::NotCancellable: return 409;
    case Errc::NotOwner: return 403;
    case Errc::UnknownStudent: return 404;
    case Errc::UnknownReservation: return 404;
    case Errc::UnknownField: return 404;
    case Errc::AlreadyProvisioned: return 409;
    case Errc::NoCapacity: return 503;
    case Errc::UnknownWorkspace: return 404;
    case Errc::AlreadyReleased: return 410;
    case Errc::WorkspaceNotReady: return 409;
    case Errc::Busy: return 409;
    case Errc::TooEarly: return 425;
    case Errc::UnknownJob: return 404;
    case Errc::BadRange: return 400;
    case Errc::UnknownNode: return 404;
    case Errc::InvalidToken: return 401;
    case Errc::PoolExhausted: return 503;
    case Errc::UnknownPeer: return 404;
    case Errc::Evicted: return 410;
    case Errc::AlreadySpawned: return 409;
    case Errc::NotReserved: return 403;
    case Errc::QueueFull: return 429;
    case Errc::RobotFault: return 409;
    case Errc::BadCommand: return 400;
    case Errc::UnknownCamera: return 404;
    case Errc::Unauthorized: return 401;
    case Errc::Forbidden: return 403;
    case Errc::UnknownSession: return 404;
    case Errc::SessionEnded: return 410;
    case Errc::NoWorkspace: return 409;
    case Errc::SessionNotActive: return 409;
    case Errc::BadChecksum: return 400;
    case Errc::TooLarge: return 413;
    case Errc::BadRequest: return 400;
    case Errc::ParseError: return 400;
    case Errc::AssertionFailed: return 500;
  }
  return 500;
}

Error::Error(Errc code, const std::string& message, nlohmann::json detail)
: std::runtime_error(std::string(to_string(code)) + ": " + message),
  _code(code),
  _message(message),
  _detail(std::move(detail))
{
}

nlohmann::json Error::to_json() const
{
  nlohmann::json j;
  j["error"] = std::string(to_string(_code));
  j["message"] = _message;
  if (!_detail.is_null())
    j["detail"] = _detail;
  return j;
}

} // namespace rlab
