#pragma once

#include <memory>

#include "depthrover/config.hpp"
#include "depthrover/rover.hpp"
#include "depthrover/scene.hpp"

namespace depthrover {

/// Websocket teleoperation service. One control loop owns the rover and
/// runs on the real-clock perception pipeline; clients only reach it through
/// a serialized command queue. Each client has its own outgoing queue in
/// which streaming messages are coalesced, so a slow reader loses frames
/// rather than stalling the loop.
class TeleopServer {
 public:
  TeleopServer(AppConfig config, SceneDescription scene);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  /// Binds, then starts the network and control threads.
  void start();
  void stop();

  /// Bound port; useful with port 0.
  unsigned short port() const;
  RoverState rover_state() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace depthrover
