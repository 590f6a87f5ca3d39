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

#ifndef RLAB__SIM__CONTROL_ENDPOINT_HPP
#define RLAB__SIM__CONTROL_ENDPOINT_HPP

#include <rlab/sim/kinematics.hpp>
#include <rlab/sim/wire.hpp>

#include <atomic>
#include <list>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rlab::sim {

/// Session logic behind the control socket.
class ControlHandler
{
public:
  virtual ~ControlHandler() = default;

  /// Resolves the session that lets `token` drive `robot_id`. Throws Error.
  virtual std::string hello(const std::string& robot_id, const std::string& token) = 0;

  /// Queues and executes one command. Throws Error on rejection.
  virtual std::vector<Telemetry> command(const std::string& session_id,
    const std::string& robot_id, const DriveCommand& command) = 0;
};

wire::Tel to_wire(const Telemetry& t);

/// Stream listener speaking the framed control protocol:
/// HELLO -> ACK 0 | REJ 0; CMD -> ACK n, TEL... | REJ n; BYE -> BYE.
class ControlEndpoint
{
public:
  explicit ControlEndpoint(ControlHandler& handler);
  ~ControlEndpoint();

  ControlEndpoint(const ControlEndpoint&) = delete;
  ControlEndpoint& operator=(const ControlEndpoint&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port; returns the port.
  int listen(const std::string& host, int port);
  void stop();

private:
  void accept_loop();
  void serve(int fd);

  ControlHandler& _handler;
  int _listen_fd = -1;
  std::atomic<bool> _running{false};
  std::thread _acceptor;
  std::mutex _mutex;
  std::list<std::thread> _workers;
  std::vector<int> _open_fds;
};

/// Blocking client for the control protocol.
class ControlClient
{
public:
  ControlClient(const std::string& host, int port);
  ~ControlClient();

  ControlClient(const ControlClient&) = delete;
  ControlClient& operator=(const ControlClient&) = delete;

  void send(const wire::Message& m);
  /// Throws Error(IoFailure) when the peer closes first.
  wire::Message receive();

private:
  int _fd = -1;
  wire::FrameDecoder _decoder;
  std::vector<std::string> _pending;
};

} // namespace rlab::sim

#endif // RLAB__SIM__CONTROL_ENDPOINT_HPP
