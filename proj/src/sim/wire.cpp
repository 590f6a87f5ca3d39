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

#include <rlab/sim/wire.hpp>
#include <rlab/error.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>

namespace rlab::wire {

namespace {

std::vector<std::string_view> split(std::string_view s)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size())
  {
    const auto j = s.find(' ', i);
    const auto end = (j == std::string_view::npos) ? s.size() : j;
    if (end == i)
      throw Error(Errc::ParseError, "empty field in message");
    out.push_back(s.substr(i, end - i));
    i = end + 1;
    if (j != std::string_view::npos && i == s.size())
      throw Error(Errc::ParseError, "trailing space in message");
  }
  return out;
}

double parse_double(std::string_view s)
{
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw Error(Errc::ParseError, "bad number '" + std::string(s) + "'");
  return v;
}

template<typename T>
T parse_int(std::string_view s)
{
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(Errc::ParseError, "bad integer '" + std::string(s) + "'");
  return v;
}

void expect_fields(const std::vector<std::string_view>& f, std::size_t n)
{
  if (f.size() != n)
  {
    throw Error(Errc::ParseError, std::string(f.front()) + " takes "
      + std::to_string(n - 1) + " fields");
  }
}

} // anonymous namespace

std::string fixed3(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s(buf);
  if (s == "-0.000")
    s = "0.000";
  return s;
}

std::string format_message(const Message& m)
{
  struct Visitor
  {
    std::string operator()(const Hello& h) const { return "HELLO " + h.robot_id + " " + h.token; }
    std::string operator()(const Cmd& c) const
    {
      return "CMD " + fixed3(c.v) + " " + fixed3(c.omega) + " " + std::to_string(c.ticks);
    }
    std::string operator()(const Ack& a) const { return "ACK " + std::to_string(a.seq); }
    std::string operator()(const Rej& r) const
    {
      return "REJ " + std::to_string(r.seq) + " " + r.reason;
    }
    std::string operator()(const Tel& t) const
    {
      return "TEL " + std::to_string(t.tick) + " " + fixed3(t.x) + " " + fixed3(t.y) + " "
        + fixed3(t.theta) + " " + fixed3(t.battery) + " " + t.state;
    }
    std::string operator()(const Bye&) const { return "BYE"; }
  };
  return std::visit(Visitor{}, m);
}

Message parse_message(std::string_view body)
{
  if (body.empty())
    throw Error(Errc::ParseError, "empty message");
  const auto f = split(body);
  const auto kind = f.front();
  if (kind == "HELLO")
  {
    expect_fields(f, 3);
    return Hello{std::string(f[1]), std::string(f[2])};
  }
  if (kind == "CMD")
  {
    expect_fields(f, 4);
    return Cmd{parse_double(f[1]), parse_double(f[2]), parse_int<std::int32_t>(f[3])};
  }
  if (kind == "ACK")
  {
    expect_fields(f, 2);
    return Ack{parse_int<std::uint64_t>(f[1])};
  }
  if (kind == "REJ")
  {
    if (f.size() < 3)
      throw Error(Errc::ParseError, "REJ takes a seq and a reason");
    const auto reason_at = static_cast<std::size_t>(f[2].data() - body.data());
    return Rej{parse_int<std::uint64_t>(f[1]), std::string(body.substr(reason_at))};
  }
  if (kind == "TEL")
  {
    expect_fields(f, 7);
    return Tel{parse_int<std::uint64_t>(f[1]), parse_double(f[2]), parse_double(f[3]),
      parse_double(f[4]), parse_double(f[5]), std::string(f[6])};
  }
  if (kind == "BYE")
  {
    expect_fields(f, 1);
    return Bye{};
  }
  throw Error(Errc::ParseError, "unknown message kind '" + std::string(kind) + "'");
}

std::string encode_frame(std::string_view body)
{
  if (body.size() > MaxFrameBytes)
    throw Error(Errc::TooLarge, "frame exceeds " + std::to_string(MaxFrameBytes) + " bytes");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

std::vector<std::string> FrameDecoder::feed(std::string_view bytes)
{
  _buf.append(bytes);
  std::vector<std::string> frames;
  std::size_t pos = 0;
  while (_buf.size() - pos >= 4)
  {
    const auto* b = reinterpret_cast<const unsigned char*>(_buf.data() + pos);
    const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16)
      | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
    if (n > MaxFrameBytes)
      throw Error(Errc::TooLarge, "frame length " + std::to_string(n) + " exceeds limit");
    if (_buf.size() - pos - 4 < n)
      break;
    frames.emplace_back(_buf.substr(pos + 4, n));
    pos += 4 + n;
  }
  _buf.erase(0, pos);
  return frames;
}

} // namespace rlab::wire
