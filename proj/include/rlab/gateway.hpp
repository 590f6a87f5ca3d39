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

#ifndef RLAB__GATEWAY_HPP
#define RLAB__GATEWAY_HPP

#include <rlab/lab.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace rlab {

struct GatewayOptions
{
  /// Source of the current time; the lab is advanced to it before each request.
  std::function<Seconds()> clock;
  /// Step agents of running sessions at the simulation rate from a background thread.
  bool realtime = false;
  /// How long a telemetry stream waits for new records before re-checking the session.
  int stream_poll_ms = 100;
};

/// Seconds since the Unix epoch.
Seconds wall_clock();

/// HTTP/JSON surface of the lab under /api/v1.
class Gateway
{
public:
  Gateway(Lab& lab, GatewayOptions options);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and serves from a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);

  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);

  void stop();

private:
  void routes();
  void sync();
  void ticker();

  Lab& _lab;
  GatewayOptions _options;
  std::unique_ptr<httplib::Server> _server;
  std::thread _thread;
  std::thread _ticker;
  std::atomic<bool> _running{false};
};

} // namespace rlab

#endif // RLAB__GATEWAY_HPP
