#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "depthrover/rover.hpp"

namespace depthrover {

enum class MessageType {
  hello,
  frame,
  detections,
  depth,
  snapshot_meta,
  telemetry,
  pose,
  cmd,
  path_load,
  resume,
  halt_event,
  error,
};

std::string to_string(MessageType type);
std::optional<MessageType> message_type_from_string(const std::string& name);

/// Raised for anything a peer sent that does not parse as a WireMessage.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// {"type": ..., "seq": n, "ts": seconds, "payload": {...}}
struct WireMessage {
  MessageType type = MessageType::hello;
  std::uint64_t seq = 0;
  double ts = 0.0;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const WireMessage&) const = default;
};

nlohmann::json to_json(const WireMessage& m);
/// Validates the envelope and the payload of client-originated types.
WireMessage message_from_json(const nlohmann::json& j);

std::string encode(const WireMessage& m);
WireMessage decode(const std::string& text);

/// Client requests after validation.
struct CmdRequest {
  std::string key;
};
struct PathLoadRequest {
  std::optional<std::string> name;
  std::optional<PathPlan> plan;
};
struct ResumeRequest {};

using ClientRequest = std::variant<CmdRequest, PathLoadRequest, ResumeRequest>;

/// Throws ProtocolError unless `m` is cmd, path_load or resume with a
/// well-formed payload.
ClientRequest parse_request(const WireMessage& m);

}  // namespace depthrover
