#include "depthrover/protocol.hpp"

#include <array>
#include <utility>

namespace depthrover {
namespace {

constexpr std::array<std::pair<MessageType, const char*>, 12> kNames{{
    {MessageType::hello, "hello"},
    {MessageType::frame, "frame"},
    {MessageType::detections, "detections"},
    {MessageType::depth, "depth"},
    {MessageType::snapshot_meta, "snapshot_meta"},
    {MessageType::telemetry, "telemetry"},
    {MessageType::pose, "pose"},
    {MessageType::cmd, "cmd"},
    {MessageType::path_load, "path_load"},
    {MessageType::resume, "resume"},
    {MessageType::halt_event, "halt_event"},
    {MessageType::error, "error"},
}};

}  // namespace

std::string to_string(MessageType type) {
  for (const auto& [t, name] : kNames)
    if (t == type) return name;
  return "unknown";
}

std::optional<MessageType> message_type_from_string(const std::string& name) {
  for (const auto& [t, n] : kNames)
    if (name == n) return t;
  return std::nullopt;
}

nlohmann::json to_json(const WireMessage& m) {
  return {{"type", to_string(m.type)}, {"seq", m.seq}, {"ts", m.ts}, {"payload", m.payload}};
}

WireMessage message_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  for (const char* key : {"type", "seq", "ts"})
    if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  if (!j.at("type").is_string()) throw ProtocolError("'type' must be a string");
  const auto type = message_type_from_string(j.at("type").get<std::string>());
  if (!type) throw ProtocolError("unknown message type '" + j.at("type").get<std::string>() + "'");
  if (!j.at("seq").is_number_unsigned() && !(j.at("seq").is_number_integer() && j.at("seq").get<std::int64_t>() >= 0))
    throw ProtocolError("'seq' must be a non-negative integer");
  if (!j.at("ts").is_number()) throw ProtocolError("'ts' must be a number");
  for (const auto& item : j.items())
    if (item.key() != "type" && item.key() != "seq" && item.key() != "ts" && item.key() != "payload")
      throw ProtocolError("unexpected field '" + item.key() + "'");

  WireMessage m;
  m.type = *type;
  m.seq = j.at("seq").get<std::uint64_t>();
  m.ts = j.at("ts").get<double>();
  if (j.contains("payload")) {
    if (!j.at("payload").is_object()) throw ProtocolError("'payload' must be an object");
    m.payload = j.at("payload");
  }
  return m;
}

std::string encode(const WireMessage& m) { return to_json(m).dump(); }

WireMessage decode(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  return message_from_json(j);
}

ClientRequest parse_request(const WireMessage& m) {
  const nlohmann::json& p = m.payload;
  switch (m.type) {
    case MessageType::cmd:
      if (!p.contains("key") || !p.at("key").is_string())
        throw ProtocolError("cmd needs a string 'key'");
      return CmdRequest{p.at("key").get<std::string>()};
    case MessageType::path_load: {
      PathLoadRequest req;
      if (p.contains("name")) {
        if (!p.at("name").is_string()) throw ProtocolError("path_load 'name' must be a string");
        req.name = p.at("name").get<std::string>();
      }
      if (p.contains("plan")) {
        try {
          req.plan = path_from_json(p.at("plan"));
        } catch (const std::exception& e) {
          throw ProtocolError(std::string("invalid inline plan: ") + e.what());
        }
      }
      if (req.name.has_value() == req.plan.has_value())
        throw ProtocolError("path_load needs exactly one of 'name' or 'plan'");
      return req;
    }
    case MessageType::resume:
      return ResumeRequest{};
    default:
      throw ProtocolError("clients may not send '" + to_string(m.type) + "'");
  }
}

}  // namespace depthrover
