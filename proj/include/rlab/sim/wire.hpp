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

#ifndef RLAB__SIM__WIRE_HPP
#define RLAB__SIM__WIRE_HPP

#include <rlab/types.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rlab::wire {

constexpr std::size_t MaxFrameBytes = 64 * 1024;

struct Hello
{
  std::string robot_id;
  std::string token;
  bool operator==(const Hello&) const = default;
};

struct Cmd
{
  double v = 0.0;
  double omega = 0.0;
  std::int32_t ticks = 0;
  bool operator==(const Cmd&) const = default;
};

struct Ack
{
  std::uint64_t seq = 0;
  bool operator==(const Ack&) const = default;
};

struct Rej
{
  std::uint64_t seq = 0;
  std::string reason;
  bool operator==(const Rej&) const = default;
};

struct Tel
{
  std::uint64_t tick = 0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double battery = 0.0;
  std::string state;
  bool operator==(const Tel&) const = default;
};

struct Bye
{
  bool operator==(const Bye&) const = default;
};

using Message = std::variant<Hello, Cmd, Ack, Rej, Tel, Bye>;

/// Three decimals, with negative zero printed as 0.000.
std::string fixed3(double v);

/// Text body of a message, e.g. "CMD 0.500 0.000 10".
std::string format_message(const Message& m);

/// Throws Error(ParseError) on unknown kinds or malformed fields.
Message parse_message(std::string_view body);

/// 4-byte big-endian length followed by the body.
std::string encode_frame(std::string_view body);

/// Incremental splitter for a byte stream of frames.
class FrameDecoder
{
public:
  /// Appends bytes and returns every frame completed by them. Throws
  /// Error(TooLarge) when a length prefix exceeds MaxFrameBytes.
  std::vector<std::string> feed(std::string_view bytes);

  std::size_t buffered() const { return _buf.size(); }

private:
  std::string _buf;
};

} // namespace rlab::wire

#endif // RLAB__SIM__WIRE_HPP
