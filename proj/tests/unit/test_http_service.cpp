#include "doctest.h"

#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "nvlab/analysis.hpp"
#include "nvlab/http_service.hpp"

using namespace nvlab;
using namespace nvlab::live;
using nlohmann::json;

namespace {

struct Server {
  SessionManager manager;
  HttpService service{manager, ServiceOptions{"", std::chrono::milliseconds(10)}};
  int port = 0;
  std::thread thread;

  Server() {
    port = service.bind("127.0.0.1", 0);
    thread = std::thread([this] { service.run(); });
    service.wait_ready();
  }
  ~Server() {
    service.stop();
    thread.join();
  }
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

std::string error_code(const httplib::Result& r) {
  auto j = body_of(r);
  REQUIRE(j.contains("error"));
  return j["error"]["code"].get<std::string>();
}

httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
  return c.Post(path, body.dump(), "application/json");
}

}  // namespace

TEST_CASE("config bodies") {
  auto cfg = parse_session_config(R"({"treatment":"LM_HU","humans":2,"rounds":4,"seed":9})");
  CHECK(cfg.treatment.label == TreatmentLabel::LM_HU);
  CHECK(cfg.humans == 2);
  CHECK(cfg.bots.size() == 2);
  CHECK(cfg.n_rounds == 4);
  CHECK(cfg.seed == 9);
  CHECK(cfg.stage_timeout == std::chrono::milliseconds(20000));

  cfg = parse_session_config(R"({"humans":1,"bots":["focal:0.5","ptc:0.5","directional:0.4:0.5"]})");
  CHECK(std::holds_alternative<sim::FocalPolicy>(cfg.bots[0]));
  CHECK(cfg.seats() == 4);

  cfg = parse_session_config(R"({"params":{"c":4.0,"x":10}})");
  CHECK(cfg.treatment.params.c == 4.0);
  CHECK(cfg.treatment.params.q_cap == 120);

  CHECK_THROWS_AS(parse_session_config("{not json"), ApiError);
  CHECK_THROWS_AS(parse_session_config(R"({"treatment":"ZZ"})"), ApiError);
  CHECK_THROWS_AS(parse_session_config(R"({"bots":"equilibrium"})"), ApiError);
  CHECK_THROWS_AS(parse_session_config(R"({"bots":["bogus"]})"), ApiError);
  CHECK_THROWS_AS(parse_session_config(R"({"humans":"two"})"), ApiError);
}

TEST_CASE("full session over http") {
  Server server;
  httplib::Client c("127.0.0.1", server.port);

  auto created = post(c, "/sessions", {{"treatment", "HM_LU"}, {"humans", 1}, {"rounds", 2}, {"seed", 31},
                                      {"stage_timeout_ms", 10000}, {"reveal_ms", 0}, {"feedback_ms", 0}});
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto id = body_of(created)["session"].get<std::string>();
  CHECK(body_of(created)["seats"] == 4);
  const std::string base = "/sessions/" + id;

  auto joined = post(c, base + "/join", json::object());
  REQUIRE(joined);
  CHECK(joined->status == 200);
  const auto token = body_of(joined)["token"].get<std::string>();
  CHECK(body_of(joined)["subject"] == 1);
  CHECK(error_code(post(c, base + "/join", json::object())) == "session_full");

  auto state = c.Get(base + "/state?token=" + token);
  REQUIRE(state);
  auto s = body_of(state);
  CHECK(s["stage"] == "PriceStage");
  CHECK(s["awaiting_price"] == true);
  CHECK_FALSE(s["current"].contains("opp_price"));
  CHECK(s["params"]["c"] == 3.0);

  httplib::Headers seat{{"X-Seat-Token", token}};
  CHECK(body_of(c.Get(base + "/state", seat))["subject"] == 1);

  auto off = post(c, base + "/price", {{"token", token}, {"price", 10.05}});
  CHECK(off->status == 400);
  CHECK(error_code(off) == "off_grid");
  CHECK(error_code(post(c, base + "/price", {{"token", token}, {"price", "ten"}})) == "bad_request");
  CHECK(error_code(post(c, base + "/quantity", {{"token", token}, {"quantity", 50}})) == "wrong_stage");
  CHECK(error_code(post(c, base + "/log", json::object())) == "not_found");
  CHECK(c.Get(base + "/log")->status == 409);

  for (int round = 1; round <= 2; ++round) {
    auto ack = post(c, base + "/price", {{"token", token}, {"price", 10.0}});
    REQUIRE(ack);
    CHECK(ack->status == 200);
    auto a = body_of(ack);
    CHECK(a["ack"] == true);
    CHECK(a["state"]["stage"] == "QuantityStage");
    CHECK(a["state"]["current"].contains("opp_price"));
    CHECK(a["state"]["current"].contains("demand_lo"));
    CHECK_FALSE(a["state"]["current"].contains("demand"));

    auto frac = post(c, base + "/quantity", {{"token", token}, {"quantity", 50.5}});
    CHECK(frac->status == 400);
    CHECK(error_code(frac) == "out_of_range");
    auto qa = post(c, base + "/quantity", {{"token", token}, {"quantity", 90}});
    REQUIRE(qa);
    CHECK(qa->status == 200);
  }

  s = body_of(c.Get(base + "/state?token=" + token));
  CHECK(s["stage"] == "Finished");
  CHECK(s["history"].size() == 2);

  auto log_json = c.Get(base + "/log");
  REQUIRE(log_json);
  CHECK(log_json->status == 200);
  const auto record = sim::import_record(log_json->body);
  CHECK(record.records.size() == 8);
  CHECK(sim::check_log(record).empty());

  auto log_csv = c.Get(base + "/log?format=csv");
  REQUIRE(log_csv);
  CHECK(log_csv->status == 200);
  CHECK(analysis::ingest_csv_text(log_csv->body) == record);
  CHECK(c.Get(base + "/log?format=xml")->status == 400);
}

TEST_CASE("http errors") {
  Server server;
  httplib::Client c("127.0.0.1", server.port);

  auto missing = c.Get("/sessions/s9999/state?token=x");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(error_code(missing) == "unknown_session");

  auto bad = c.Post("/sessions", "{oops", "application/json");
  CHECK(bad->status == 400);
  CHECK(error_code(bad) == "bad_request");

  auto zero = post(c, "/sessions", {{"humans", 0}, {"bots", {"equilibrium", "equilibrium", "equilibrium", "equilibrium"}}});
  CHECK(zero->status == 400);
  CHECK(error_code(zero) == "invalid_config");

  auto lm = post(c, "/sessions", {{"treatment", "LM_LU"}, {"humans", 2}, {"rounds", 1}});
  const auto id = body_of(lm)["session"].get<std::string>();
  auto first = post(c, "/sessions/" + id + "/join", {{"seat", 1}});
  CHECK(first->status == 200);
  auto again = post(c, "/sessions/" + id + "/join", {{"seat", 1}});
  CHECK(again->status == 409);
  CHECK(error_code(again) == "seat_taken");
  post(c, "/sessions/" + id + "/join", {{"seat", 2}});

  const auto token = body_of(first)["token"].get<std::string>();
  auto low = post(c, "/sessions/" + id + "/price", {{"token", token}, {"price", 8.5}});
  CHECK(low->status == 400);
  CHECK(error_code(low) == "out_of_range");
  CHECK(error_code(c.Get("/sessions/" + id + "/state?token=nope")) == "unknown_token");
  CHECK(error_code(c.Get("/sessions/" + id + "/state")) == "bad_request");
  CHECK(c.Get("/nothing/here")->status == 404);
}

TEST_CASE("the ticker applies timeouts without client traffic") {
  Server server;
  httplib::Client c("127.0.0.1", server.port);
  auto created = post(c, "/sessions", {{"humans", 1}, {"rounds", 1}, {"stage_timeout_ms", 100},
                                      {"reveal_ms", 0}, {"feedback_ms", 0}});
  const auto base = "/sessions/" + body_of(created)["session"].get<std::string>();
  post(c, base + "/join", json::object());

  std::this_thread::sleep_for(std::chrono::milliseconds(150));
  httplib::Result log;
  for (int i = 0; i < 100; ++i) {
    log = c.Get(base + "/log");
    if (log && log->status == 200) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(log);
  REQUIRE(log->status == 200);
  const auto record = sim::import_record(log->body);
  for (const auto& r : record.records) {
    if (r.subject != 1) continue;
    CHECK(r.price == 12.0);
    CHECK(r.substituted == (sim::kPriceSubstituted | sim::kQuantitySubstituted));
  }
}
