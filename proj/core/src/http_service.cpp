#include "nvlab/http_service.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace nvlab::live {

namespace {

using nlohmann::json;

ApiError bad_request(const std::string& msg) { return ApiError("bad_request", 400, msg); }

json parse_body(const std::string& body) {
  try {
    auto j = json::parse(body.empty() ? std::string("{}") : body);
    if (!j.is_object()) throw bad_request("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw bad_request(std::string("malformed JSON: ") + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw bad_request(std::string("field '") + key + "' has the wrong type");
  }
}

json params_json(const GameParams& g) {
  return {{"c", g.c}, {"r", g.r}, {"d_H", g.d_high}, {"d_L", g.d_low},
          {"x", g.x}, {"price_step", g.price_step}, {"q_cap", g.q_cap}};
}

json outcome_json(const PriceOutcome& o) {
  return {{"outcome", std::string(to_string(o.kind))}, {"segment", std::string(to_string(o.segment))}};
}

json substituted_json(unsigned flags) {
  json a = json::array();
  if (flags & sim::kPriceSubstituted) a.push_back("price");
  if (flags & sim::kQuantitySubstituted) a.push_back("quantity");
  return a;
}

json record_json(const sim::RoundRecord& r) {
  json j = {{"round", r.round},     {"subject", r.subject},   {"group", r.group},
            {"pair", r.pair},       {"price", r.price},       {"opp_price", r.opp_price},
            {"quantity", r.quantity}, {"demand", r.demand},   {"profit", r.profit},
            {"cumulative", r.cumulative}, {"substituted", substituted_json(r.substituted)}};
  j.update(outcome_json(r.outcome));
  return j;
}

void send_error(httplib::Response& res, const ApiError& e) {
  res.status = e.status();
  res.set_content(json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

std::string token_of(const httplib::Request& req, const json* body) {
  if (body && body->contains("token")) {
    if (!(*body)["token"].is_string()) throw bad_request("field 'token' must be a string");
    return (*body)["token"].get<std::string>();
  }
  if (req.has_param("token")) return req.get_param_value("token");
  if (req.has_header("X-Seat-Token")) return req.get_header_value("X-Seat-Token");
  throw bad_request("missing seat token");
}

}  // namespace

SessionConfig parse_session_config(const std::string& body, const std::string& persist_dir) {
  const auto j = parse_body(body);
  SessionConfig cfg;
  const auto label_text = field<std::string>(j, "treatment", "HM_LU");
  const auto label = parse_treatment_label(label_text);
  if (!label) throw ApiError("invalid_config", 400, "unknown treatment '" + label_text + "'");
  cfg.treatment = preset(*label);
  if (j.contains("params")) {
    const auto& p = j["params"];
    if (!p.is_object()) throw bad_request("field 'params' must be an object");
    auto& g = cfg.treatment.params;
    g.c = field(p, "c", g.c);
    g.r = field(p, "r", g.r);
    g.d_high = field(p, "d_H", g.d_high);
    g.d_low = field(p, "d_L", g.d_low);
    g.x = field(p, "x", g.x);
    g.price_step = field(p, "price_step", g.price_step);
    g.q_cap = field(p, "q_cap", static_cast<int>(std::ceil(g.d_high + g.x)) + 10);
  }
  cfg.humans = field(j, "humans", 1);
  if (j.contains("bots")) {
    if (!j["bots"].is_array()) throw bad_request("field 'bots' must be an array of policy strings");
    for (const auto& b : j["bots"]) {
      if (!b.is_string()) throw bad_request("field 'bots' must be an array of policy strings");
      try {
        cfg.bots.push_back(sim::parse_policy(b.get<std::string>()));
      } catch (const std::exception& e) {
        throw ApiError("invalid_config", 400, e.what());
      }
    }
  } else if (cfg.humans >= 1) {
    const int seats = (cfg.humans + 3) / 4 * 4;
    cfg.bots.assign(static_cast<std::size_t>(seats - cfg.humans), sim::EquilibriumPolicy{});
  }
  cfg.n_rounds = field(j, "rounds", 50);
  cfg.seed = field<std::uint64_t>(j, "seed", 0);
  cfg.stage_timeout = std::chrono::milliseconds(field<std::int64_t>(j, "stage_timeout_ms", 20000));
  cfg.reveal_duration = std::chrono::milliseconds(field<std::int64_t>(j, "reveal_ms", 3000));
  cfg.feedback_duration = std::chrono::milliseconds(field<std::int64_t>(j, "feedback_ms", 5000));
  cfg.persist_dir = persist_dir;
  cfg.validate();
  return cfg;
}

std::string view_json(const StageView& v) {
  json j;
  j["session"] = v.session;
  j["treatment"] = std::string(to_string(v.treatment.label));
  j["params"] = params_json(v.treatment.params);
  j["stage"] = std::string(to_string(v.stage));
  j["round"] = v.round;
  j["n_rounds"] = v.n_rounds;
  j["subject"] = v.subject;
  j["group"] = v.group;
  j["joined"] = v.joined;
  j["humans"] = v.humans;
  j["deadline_ms"] = v.deadline_ms ? json(*v.deadline_ms) : json(nullptr);
  j["awaiting_price"] = v.awaiting_price;
  j["awaiting_quantity"] = v.awaiting_quantity;
  j["cumulative"] = v.cumulative;
  if (v.current) {
    const auto& c = *v.current;
    json cur = {{"round", c.round}, {"substituted", substituted_json(c.substituted)}};
    if (c.price) cur["price"] = *c.price;
    if (c.opp_price) cur["opp_price"] = *c.opp_price;
    if (c.outcome) cur.update(outcome_json(*c.outcome));
    if (c.demand_lo) cur["demand_lo"] = *c.demand_lo;
    if (c.demand_hi) cur["demand_hi"] = *c.demand_hi;
    if (c.quantity) cur["quantity"] = *c.quantity;
    if (c.demand) cur["demand"] = *c.demand;
    if (c.profit) cur["profit"] = *c.profit;
    if (c.cumulative) cur["cumulative"] = *c.cumulative;
    if (c.opp_quantity) cur["opp_quantity"] = *c.opp_quantity;
    if (c.opp_profit) cur["opp_profit"] = *c.opp_profit;
    j["current"] = cur;
  } else {
    j["current"] = nullptr;
  }
  json hist = json::array();
  for (const auto& r : v.history) hist.push_back(record_json(r));
  j["history"] = hist;
  return j.dump();
}

// ---------------------------------------------------------------------------

struct HttpService::Impl {
  SessionManager& manager;
  ServiceOptions options;
  httplib::Server server;
  std::thread ticker;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  Impl(SessionManager& m, ServiceOptions o) : manager(m), options(std::move(o)) {}

  template <class Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ApiError& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, ApiError("internal", 500, e.what()));
      }
    };
  }

  void routes() {
    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto id = manager.create(parse_session_config(req.body, options.persist_dir));
      const auto& cfg = manager.get(id)->config();
      send_json(res, {{"session", id}, {"seats", cfg.seats()}, {"humans", cfg.humans}}, 201);
    }));

    server.Post(R"(/sessions/([^/]+)/join)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto session = manager.get(req.matches[1]);
      const auto body = parse_body(req.body);
      std::optional<int> seat;
      if (body.contains("seat") && !body["seat"].is_null()) {
        if (!body["seat"].is_number_integer()) throw bad_request("field 'seat' must be an integer");
        seat = body["seat"].get<int>();
      }
      const auto joined = session->join(seat);
      send_json(res, {{"session", session->id()}, {"token", joined.token}, {"subject", joined.subject}});
    }));

    server.Post(R"(/sessions/([^/]+)/price)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto session = manager.get(req.matches[1]);
      const auto body = parse_body(req.body);
      const auto token = token_of(req, &body);
      if (!body.contains("price") || !body["price"].is_number()) throw bad_request("field 'price' must be a number");
      session->submit_price(token, body["price"].get<double>());
      send_json(res, {{"ack", true}, {"state", json::parse(view_json(session->view(token)))}});
    }));

    server.Post(R"(/sessions/([^/]+)/quantity)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto session = manager.get(req.matches[1]);
      const auto body = parse_body(req.body);
      const auto token = token_of(req, &body);
      if (!body.contains("quantity") || !body["quantity"].is_number()) {
        throw bad_request("field 'quantity' must be a number");
      }
      if (!body["quantity"].is_number_integer()) {
        throw ApiError("out_of_range", 400, "quantity must be an integer");
      }
      session->submit_quantity(token, body["quantity"].get<long>());
      send_json(res, {{"ack", true}, {"state", json::parse(view_json(session->view(token)))}});
    }));

    server.Get(R"(/sessions/([^/]+)/state)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto session = manager.get(req.matches[1]);
      res.status = 200;
      res.set_content(view_json(session->view(token_of(req, nullptr))), "application/json");
    }));

    server.Get(R"(/sessions/([^/]+)/log)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto session = manager.get(req.matches[1]);
      const auto log = session->log();
      const auto format = req.has_param("format") ? req.get_param_value("format") : std::string("json");
      if (format == "csv") {
        res.set_content(sim::export_csv(log), "text/csv");
      } else if (format == "json") {
        res.set_content(sim::export_record(log), "application/json");
      } else {
        throw bad_request("format must be csv or json");
      }
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send_error(res, ApiError(res.status == 404 ? "not_found" : "bad_request", res.status, "no such endpoint"));
    });
  }
};

HttpService::HttpService(SessionManager& manager, ServiceOptions options)
    : impl_(std::make_unique<Impl>(manager, std::move(options))) {
  impl_->routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::run() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = false;
  }
  impl_->ticker = std::thread([this] {
    std::unique_lock lock(impl_->mu);
    while (!impl_->stopping) {
      impl_->cv.wait_for(lock, impl_->options.tick_interval);
      if (impl_->stopping) break;
      lock.unlock();
      impl_->manager.tick_all();
      lock.lock();
    }
  });
  impl_->server.listen_after_bind();
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->ticker.joinable()) impl_->ticker.join();
}

void HttpService::wait_ready() const { impl_->server.wait_until_ready(); }

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
}

}  // namespace nvlab::live
