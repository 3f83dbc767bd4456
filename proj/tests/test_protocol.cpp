#include <doctest.h>

#include "depthrover/protocol.hpp"

using namespace depthrover;

TEST_CASE("message type names") {
  for (int i = 0; i <= int(MessageType::error); ++i) {
    const auto t = MessageType(i);
    CHECK(message_type_from_string(to_string(t)) == t);
  }
  CHECK_FALSE(message_type_from_string("launch"));
}

TEST_CASE("envelope round trip") {
  WireMessage m;
  m.type = MessageType::pose;
  m.seq = 42;
  m.ts = 1.25;
  m.payload = {{"x", 1.0}, {"halted", false}};
  CHECK(decode(encode(m)) == m);
  const auto j = to_json(m);
  CHECK(j.at("type") == "pose");
  CHECK(j.at("seq") == 42);

  // Payload may be omitted.
  const WireMessage r = decode(R"({"type":"resume","seq":1,"ts":0})");
  CHECK(r.type == MessageType::resume);
  CHECK(r.payload.empty());
}

TEST_CASE("malformed envelopes") {
  for (const char* text : {
           "not json",
           "[]",
           R"({"seq":1,"ts":0})",
           R"({"type":"cmd","ts":0})",
           R"({"type":"cmd","seq":1})",
           R"({"type":7,"seq":1,"ts":0})",
           R"({"type":"launch","seq":1,"ts":0})",
           R"({"type":"cmd","seq":-1,"ts":0})",
           R"({"type":"cmd","seq":1.5,"ts":0})",
           R"({"type":"cmd","seq":1,"ts":"now"})",
           R"({"type":"cmd","seq":1,"ts":0,"payload":[]})",
           R"({"type":"cmd","seq":1,"ts":0,"extra":true})",
       }) {
    CAPTURE(text);
    CHECK_THROWS_AS(decode(text), ProtocolError);
  }
}

TEST_CASE("client requests") {
  const auto req = [](const char* text) { return parse_request(decode(text)); };
  const ClientRequest c = req(R"({"type":"cmd","seq":1,"ts":0,"payload":{"key":"w"}})");
  REQUIRE(std::holds_alternative<CmdRequest>(c));
  CHECK(std::get<CmdRequest>(c).key == "w");

  const ClientRequest p = req(R"({"type":"path_load","seq":2,"ts":0,"payload":{"name":"loop"}})");
  REQUIRE(std::holds_alternative<PathLoadRequest>(p));
  CHECK(*std::get<PathLoadRequest>(p).name == "loop");

  const ClientRequest inline_plan = req(
      R"({"type":"path_load","seq":3,"ts":0,"payload":{"plan":{"steps":[{"duration_s":1,"left":1,"right":1}]}}})");
  REQUIRE(std::holds_alternative<PathLoadRequest>(inline_plan));
  CHECK(std::get<PathLoadRequest>(inline_plan).plan->steps.size() == 1);

  CHECK(std::holds_alternative<ResumeRequest>(req(R"({"type":"resume","seq":4,"ts":0})")));

  CHECK_THROWS_AS(req(R"({"type":"cmd","seq":1,"ts":0,"payload":{}})"), ProtocolError);
  CHECK_THROWS_AS(req(R"({"type":"cmd","seq":1,"ts":0,"payload":{"key":3}})"), ProtocolError);
  CHECK_THROWS_AS(req(R"({"type":"path_load","seq":1,"ts":0,"payload":{}})"), ProtocolError);
  CHECK_THROWS_AS(
      req(R"({"type":"path_load","seq":1,"ts":0,"payload":{"name":"a","plan":{"steps":[]}}})"),
      ProtocolError);
  CHECK_THROWS_AS(
      req(R"({"type":"path_load","seq":1,"ts":0,"payload":{"plan":{"steps":[{"duration_s":-1,"left":1,"right":1}]}}})"),
      ProtocolError);
  // Server-originated types are not requests.
  CHECK_THROWS_AS(req(R"({"type":"frame","seq":1,"ts":0,"payload":{}})"), ProtocolError);
}
