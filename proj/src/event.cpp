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

#include <rlab/event.hpp>
#include <rlab/error.hpp>

namespace rlab {

void to_json(Json& j, const Event& event)
{
  j = Json::object();
  j["seq"] = event.seq;
  j["ts"] = event.ts;
  j["kind"] = event.kind;
  j["actor"] = event.actor;
  j["payload"] = event.payload;
}

void from_json(const Json& j, Event& event)
{
  event.seq = j.at("seq").get<std::uint64_t>();
  event.ts = j.at("ts").get<Seconds>();
  event.kind = j.at("kind").get<std::string>();
  event.actor = j.at("actor").get<std::string>();
  event.payload = j.at("payload");
}

std::string encode_line(const Event& event)
{
  return Json(event).dump();
}

Event decode_line(std::string_view line)
{
  Json j;
  try
  {
    j = Json::parse(line);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(Errc::CorruptRecord, std::string("unparseable log line: ") + e.what());
  }
  try
  {
    auto event = j.get<Event>();
    if (!event.payload.is_object())
      throw Error(Errc::CorruptRecord, "payload must be an object");
    return event;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(Errc::CorruptRecord, std::string("malformed log record: ") + e.what());
  }
}

} // namespace rlab
