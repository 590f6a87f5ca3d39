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

#include <rlab/sim/control_endpoint.hpp>
#include <rlab/error.hpp>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

namespace rlab::sim {

namespace {

bool write_all(int fd, const std::string& bytes)
{
  std::size_t off = 0;
  while (off < bytes.size())
  {
    const auto n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n <= 0)
      return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

bool send_message(int fd, const wire::Message& m)
{
  return write_all(fd, wire::encode_frame(wire::format_message(m)));
}

} // anonymous namespace

wire::Tel to_wire(const Telemetry& t)
{
  return wire::Tel{t.tick, t.pose.x, t.pose.y, t.pose.theta, t.battery_pct, to_string(t.state)};
}

//==============================================================================
ControlEndpoint::ControlEndpoint(ControlHandler& handler)
: _handler(handler)
{
}

ControlEndpoint::~ControlEndpoint()
{
  stop();
}

int ControlEndpoint::listen(const std::string& host, int port)
{
  _listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (_listen_fd < 0)
    throw Error(Errc::IoFailure, "socket: " + std::string(std::strerror(errno)));
  int one = 1;
  ::setsockopt(_listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::BadRequest, "control host must be a dotted IPv4 address");
  if (::bind(_listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0
    || ::listen(_listen_fd, 16) != 0)
  {
    const std::string why = std::strerror(errno);
    ::close(_listen_fd);
    _listen_fd = -1;
    throw Error(Errc::IoFailure, "bind " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(_listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
  _running = true;
  _acceptor = std::thread([this] { accept_loop(); });
  return ntohs(addr.sin_port);
}

void ControlEndpoint::stop()
{
  if (!_running.exchange(false))
    return;
  ::shutdown(_listen_fd, SHUT_RDWR);
  ::close(_listen_fd);
  _listen_fd = -1;
  if (_acceptor.joinable())
    _acceptor.join();
  std::list<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(_mutex);
    for (int fd : _open_fds)
      ::shutdown(fd, SHUT_RDWR);
    workers.swap(_workers);
  }
  for (auto& w : workers)
  {
    if (w.joinable())
      w.join();
  }
}

void ControlEndpoint::accept_loop()
{
  while (_running)
  {
    const int fd = ::accept(_listen_fd, nullptr, nullptr);
    if (fd < 0)
    {
      if (!_running)
        return;
      continue;
    }
    std::lock_guard<std::mutex> lock(_mutex);
    _open_fds.push_back(fd);
    _workers.emplace_back([this, fd] { serve(fd); });
  }
}

void ControlEndpoint::serve(int fd)
{
  wire::FrameDecoder decoder;
  std::string session;
  std::string robot;
  std::uint64_t seq = 0;
  bool open = true;
  char buf[4096];
  while (open)
  {
    const auto n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0)
      break;
    std::vector<std::string> frames;
    try
    {
      frames = decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
    catch (const Error& e)
    {
      send_message(fd, wire::Rej{seq, std::string(to_string(e.code()))});
      break;
    }
    for (const auto& body : frames)
    {
      if (!open)
        break;
      try
      {
        const auto msg = wire::parse_message(body);
        if (const auto* hello = std::get_if<wire::Hello>(&msg))
        {
          session = _handler.hello(hello->robot_id, hello->token);
          robot = hello->robot_id;
          open = send_message(fd, wire::Ack{0});
        }
        else if (const auto* cmd = std::get_if<wire::Cmd>(&msg))
        {
          ++seq;
          if (session.empty())
            throw Error(Errc::Unauthorized, "HELLO first");
          const auto tel = _handler.command(session, robot,
            DriveCommand{cmd->v, cmd->omega, cmd->ticks});
          open = send_message(fd, wire::Ack{seq});
          for (const auto& t : tel)
          {
            if (open)
              open = send_message(fd, to_wire(t));
          }
        }
        else if (std::holds_alternative<wire::Bye>(msg))
        {
          send_message(fd, wire::Bye{});
          open = false;
        }
        else
        {
          throw Error(Errc::BadRequest, "unexpected message from client");
        }
      }
      catch (const Error& e)
      {
        open = send_message(fd, wire::Rej{seq, std::string(to_string(e.code()))});
        if (session.empty())
          open = false;
      }
    }
  }
  std::lock_guard<std::mutex> lock(_mutex);
  ::close(fd);
  std::erase(_open_fds, fd);
}

//==============================================================================
ControlClient::ControlClient(const std::string& host, int port)
{
  _fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (_fd < 0 || ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1
    || ::connect(_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
  {
    if (_fd >= 0)
      ::close(_fd);
    throw Error(Errc::IoFailure, "cannot connect to " + host + ":" + std::to_string(port));
  }
}

ControlClient::~ControlClient()
{
  if (_fd >= 0)
    ::close(_fd);
}

void ControlClient::send(const wire::Message& m)
{
  if (!send_message(_fd, m))
    throw Error(Errc::IoFailure, "control connection closed");
}

wire::Message ControlClient::receive()
{
  char buf[4096];
  while (_pending.empty())
  {
    const auto n = ::recv(_fd, buf, sizeof(buf), 0);
    if (n <= 0)
      throw Error(Errc::IoFailure, "control connection closed");
    auto frames = _decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    _pending.insert(_pending.end(), frames.begin(), frames.end());
  }
  const auto body = _pending.front();
  _pending.erase(_pending.begin());
  return wire::parse_message(body);
}

} // namespace rlab::sim
