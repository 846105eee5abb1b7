#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "confslate/error.hpp"
#include "confslate/server.hpp"
#include "confslate/service.hpp"

using namespace confslate;
using namespace confslate::service;
using nlohmann::json;

namespace beast = boost::beast;
namespace http = beast::http;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

const json kShort = {{"seed", 3},
                     {"dss_calibration", "well"},
                     {"config", {{"n_practice", 1}, {"n_trials", 2}, {"segment_time_limit_ms", 500}}}};

// Drain polls until a segment ends; returns every message seen.
std::vector<json> run_segment(SessionManager& m, const std::string& id) {
  std::vector<json> all;
  for (int i = 0; i < 1000; ++i) {
    for (auto& msg : m.poll(id)) {
      const bool end = msg.at("type") == "segment_end";
      all.push_back(std::move(msg));
      if (end) return all;
    }
  }
  ADD_FAILURE() << "segment never ended";
  return all;
}

void finish_teleop(SessionManager& m, const std::string& id) {
  for (int robot = 0; robot < 2; ++robot) {
    m.on_stream_message(id, R"({"v":1,"type":"ready"})");
    run_segment(m, id);
  }
}

struct HttpReply {
  unsigned status;
  std::string body;
  std::string content_type;
};

HttpReply request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = {}) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
  }
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {res.result_int(), res.body(), std::string(res[http::field::content_type])};
}

}  // namespace

TEST(Manager, CreateStatusInference) {
  SessionManager m;
  const auto created = m.create_session(kShort);
  const auto id = created.at("session_id").get<std::string>();
  EXPECT_EQ(created.at("phase"), "TeleopA");
  EXPECT_EQ(created.at("practice"), true);
  EXPECT_EQ(m.status(id).at("seed"), 3);

  m.attach_stream(id);
  finish_teleop(m, id);
  EXPECT_EQ(m.status(id).at("phase"), "InitialInference");

  const auto first = m.submit_inference(id, {{"stage", "initial"}, {"choice", "A"}, {"confidence", 3}});
  EXPECT_TRUE(first.contains("ai"));
  EXPECT_EQ(first.at("phase"), "ChangeDecision");
  const auto kept = m.submit_inference(id, {{"stage", "no_change"}});
  EXPECT_TRUE(kept.contains("resolved"));
  EXPECT_EQ(kept.at("phase"), "TeleopA");
  EXPECT_EQ(kept.at("practice"), false);

  for (int t = 0; t < 2; ++t) {
    finish_teleop(m, id);
    m.submit_inference(id, {{"stage", "initial"}, {"choice", "B"}, {"confidence", 1}});
    m.submit_inference(id, {{"stage", "final"}, {"choice", "A"}, {"confidence", 2}});
  }
  EXPECT_EQ(m.status(id).at("phase"), "Done");
  EXPECT_EQ(m.status(id).at("n_records"), 2);
  const auto csv = m.records_csv(id);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(m.events(id).back().kind, "session_done");
}

TEST(Manager, Errors) {
  SessionManager m;
  EXPECT_EQ(code_of([&] { m.create_session({{"dss_calibration", "medium"}}); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { m.create_session({{"seed", 1}}); }), ErrorCode::ValidationError);
  EXPECT_EQ(code_of([&] { m.status("nope"); }), ErrorCode::NotFound);
  const auto id = m.create_session(kShort).at("session_id").get<std::string>();
  EXPECT_EQ(code_of([&] { m.submit_inference(id, {{"stage", "final"}, {"choice", "A"}, {"confidence", 2}}); }),
            ErrorCode::ProtocolViolation);
  m.attach_stream(id);
  EXPECT_EQ(code_of([&] { m.attach_stream(id); }), ErrorCode::Conflict);
  finish_teleop(m, id);
  EXPECT_EQ(code_of([&] { m.submit_inference(id, {{"stage", "initial"}, {"choice", "A"}, {"confidence", 5}}); }),
            ErrorCode::InvalidConfidence);

  const auto reply = m.on_stream_message(id, R"({"v":1,"type":"cmd","seq":1,"linear":0.5,"angular":0})");
  ASSERT_EQ(reply.size(), 1u);
  EXPECT_EQ(reply[0].at("type"), "error");
  EXPECT_EQ(reply[0].at("code"), std::string(to_string(ErrorCode::ProtocolViolation)));
  EXPECT_EQ(m.on_stream_message(id, R"({"type":"ready"})")[0].at("type"), "error");
  EXPECT_EQ(m.on_stream_message(id, "not json")[0].at("type"), "error");

  EXPECT_EQ(http_status(ErrorCode::InvalidConfidence), 400);
  EXPECT_EQ(http_status(ErrorCode::NotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::ProtocolViolation), 409);
  EXPECT_EQ(http_status(ErrorCode::IoError), 500);
}

TEST(Manager, StreamTimeoutEndsSegment) {
  SessionManager m;
  const auto id = m.create_session(kShort).at("session_id").get<std::string>();
  m.attach_stream(id);
  EXPECT_TRUE(m.poll(id).size() >= 1);  // initial phase message
  EXPECT_TRUE(m.poll(id).empty());      // nothing moves until ready or a command
  const auto ready = m.on_stream_message(id, R"({"v":1,"type":"ready"})");
  ASSERT_EQ(ready.size(), 2u);
  EXPECT_EQ(ready[1].at("type"), "state");
  const auto msgs = run_segment(m, id);
  EXPECT_EQ(msgs.back().at("reason"), "timeout");
  EXPECT_EQ(m.status(id).at("phase"), "TeleopB");

  m.on_stream_message(id, R"({"v":1,"type":"cmd","seq":5,"linear":1.0,"angular":0})");
  const auto stale = m.on_stream_message(id, R"({"v":1,"type":"cmd","seq":5,"linear":1.0,"angular":0})");
  ASSERT_EQ(stale.size(), 1u);
  EXPECT_EQ(stale[0].at("code"), std::string(to_string(ErrorCode::OutOfOrderCommand)));
  m.detach_stream(id);
  EXPECT_TRUE(m.poll(id).empty());
}

TEST(Server, HttpAndWebSocket) {
  SessionManager m;
  Server server(m, "127.0.0.1", 0);
  server.start();
  const auto port = server.port();
  ASSERT_NE(port, 0);

  const auto created = request(port, http::verb::post, "/sessions", kShort.dump());
  ASSERT_EQ(created.status, 201u) << created.body;
  const auto id = json::parse(created.body).at("session_id").get<std::string>();

  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id).status, 200u);
  EXPECT_EQ(request(port, http::verb::get, "/sessions/missing").status, 404u);
  EXPECT_EQ(request(port, http::verb::post, "/sessions", R"({"dss_calibration":"medium"})").status, 400u);
  const auto early = request(port, http::verb::post, "/sessions/" + id + "/inference",
                             R"({"stage":"initial","choice":"A","confidence":2})");
  EXPECT_EQ(early.status, 409u);
  EXPECT_EQ(json::parse(early.body).at("type"), "error");
  EXPECT_EQ(request(port, http::verb::get, "/sessions/" + id + "/stream").status, 426u);

  {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    beast::websocket::stream<tcp::socket> ws(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/sessions/" + id + "/stream");
    ws.write(net::buffer(std::string(R"({"v":1,"type":"ready"})")));
    int segment_ends = 0;
    int states = 0;
    beast::flat_buffer buf;
    while (segment_ends < 2) {
      ws.read(buf);
      const auto msg = json::parse(beast::buffers_to_string(buf.data()));
      buf.consume(buf.size());
      EXPECT_EQ(msg.at("v"), 1);
      if (msg.at("type") == "state") ++states;
      if (msg.at("type") == "segment_end") {
        ++segment_ends;
        if (segment_ends == 1) ws.write(net::buffer(std::string(R"({"v":1,"type":"ready"})")));
      }
    }
    EXPECT_GT(states, 2);
    ws.close(beast::websocket::close_code::normal);
  }

  const auto first = request(port, http::verb::post, "/sessions/" + id + "/inference",
                             R"({"stage":"initial","choice":"A","confidence":2})");
  ASSERT_EQ(first.status, 200u) << first.body;
  EXPECT_TRUE(json::parse(first.body).contains("ai"));
  const auto records = request(port, http::verb::get, "/sessions/" + id + "/records");
  EXPECT_EQ(records.status, 200u);
  EXPECT_NE(records.content_type.find("text/csv"), std::string::npos);
  server.stop();
}
