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
#include <rlab/gateway.hpp>
#include <rlab/lab.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <memory>

using namespace rlab;

namespace {

int serve(const std::string& config_path, int port_override)
{
  auto config = LabConfig::load(config_path);
  if (port_override >= 0)
    config.gateway.port = port_override;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Lab lab(config);
  lab.advance_to(std::max(lab.now(), wall_clock()));

  GatewayOptions options;
  options.clock = wall_clock;
  options.realtime = true;
  Gateway gateway(lab, options);
  const auto port = gateway.start(config.gateway.host, config.gateway.port);
  std::cout << "labd: http://" << config.gateway.host << ":" << port << "/api/v1" << std::endl;

  std::unique_ptr<sim::ControlEndpoint> control;
  if (config.sim.control_port > 0)
  {
    control = std::make_unique<sim::ControlEndpoint>(lab);
    const auto cport = control->listen(config.gateway.host, config.sim.control_port);
    std::cout << "labd: control on " << config.gateway.host << ":" << cport << std::endl;
  }

  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "labd: stopping" << std::endl;
  if (control)
    control->stop();
  gateway.stop();
  return 0;
}

} // anonymous namespace

int main(int argc, char** argv)
{
  CLI::App app{"remote robotics lab daemon"};
  app.require_subcommand(1);

  std::string config_path;
  int port = -1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the lab service");
  serve_cmd->add_option("--config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "Override gateway.port");

  CLI11_PARSE(app, argc, argv);
  try
  {
    if (*serve_cmd)
      return serve(config_path, port);
  }
  catch (const Error& e)
  {
    std::cerr << "labd: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
