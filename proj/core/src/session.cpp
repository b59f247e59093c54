#include "nvlab/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <variant>

namespace nvlab::live {

namespace {

ApiError invalid_config(const std::string& msg) { return ApiError("invalid_config", 400, msg); }

bool snaps_to_grid(const sim::AgentPolicy& p) {
  if (const auto* e = std::get_if<sim::EquilibriumPolicy>(&p)) return e->snap_to_grid;
  if (const auto* f = std::get_if<sim::FocalPolicy>(&p)) return f->snap_to_grid;
  if (const auto* t = std::get_if<sim::PtcPolicy>(&p)) return t->snap_to_grid;
  return true;
}

std::string random_token() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Lobby: return "Lobby";
    case Stage::PriceStage: return "PriceStage";
    case Stage::SegmentReveal: return "SegmentReveal";
    case Stage::QuantityStage: return "QuantityStage";
    case Stage::Feedback: return "Feedback";
    case Stage::Finished: return "Finished";
  }
  return "?";
}

void SessionConfig::validate() const {
  try {
    treatment.params.validate();
  } catch (const std::exception& e) {
    throw invalid_config(e.what());
  }
  if (humans < 1) throw invalid_config("a live session needs at least one human seat; use simulate for bot-only runs");
  if (seats() % 4 != 0) throw invalid_config("seat count (humans + bots) must be divisible by 4");
  if (n_rounds < 1) throw invalid_config("rounds must be >= 1");
  if (stage_timeout.count() <= 0) throw invalid_config("stage timeout must be positive");
  if (reveal_duration.count() < 0 || feedback_duration.count() < 0) {
    throw invalid_config("reveal and feedback durations must be >= 0");
  }
  for (const auto& b : bots) {
    try {
      sim::validate_policy(b);
    } catch (const std::exception& e) {
      throw invalid_config(e.what());
    }
    if (std::holds_alternative<sim::ExternalPolicy>(b)) throw invalid_config("bots cannot use the external policy");
    if (!snaps_to_grid(b)) throw invalid_config("bots must post grid prices");
  }
}

// ---------------------------------------------------------------------------
// LiveSession.

LiveSession::LiveSession(std::string id, SessionConfig config, Clock clock)
    : id_(std::move(id)), config_(std::move(config)), clock_(std::move(clock)), rng_(config_.seed) {
  config_.validate();
  const auto n = static_cast<std::size_t>(config_.seats());
  seat_taken_.assign(static_cast<std::size_t>(config_.humans) + 1, false);
  log_.treatment = config_.treatment;
  log_.seed = config_.seed;
  group_of_.assign(n + 1, 0);
  histories_.assign(n + 1, {});
  earnings_.assign(n + 1, {});
}

const sim::AgentPolicy& LiveSession::bot_policy(int subject) const {
  return config_.bots[static_cast<std::size_t>(subject - config_.humans - 1)];
}

int LiveSession::subject_of(const std::string& token) const {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) throw ApiError("unknown_token", 404, "token does not belong to this session");
  return it->second;
}

JoinResult LiveSession::join(std::optional<int> seat) {
  Lock lock(mu_);
  const auto now = clock_();
  advance(now);
  if (seat) {
    if (*seat < 1 || *seat > config_.humans) {
      throw ApiError("bad_request", 400, "seat must be between 1 and " + std::to_string(config_.humans));
    }
    if (seat_taken_[static_cast<std::size_t>(*seat)]) {
      throw ApiError("seat_taken", 409, "seat " + std::to_string(*seat) + " is already taken");
    }
  } else {
    for (int s = 1; s <= config_.humans; ++s) {
      if (!seat_taken_[static_cast<std::size_t>(s)]) {
        seat = s;
        break;
      }
    }
    if (!seat) throw ApiError("session_full", 409, "every human seat is taken");
  }
  seat_taken_[static_cast<std::size_t>(*seat)] = true;
  JoinResult res{random_token(), *seat};
  tokens_[res.token] = *seat;

  if (static_cast<int>(tokens_.size()) == config_.humans) start(now);
  return res;
}

void LiveSession::start(TimePoint now) {
  log_.groups = sim::assign_groups(config_.seats(), rng_);
  for (std::size_t gi = 0; gi < log_.groups.size(); ++gi) {
    for (int s : log_.groups[gi]) group_of_[static_cast<std::size_t>(s)] = static_cast<int>(gi) + 1;
  }
  round_ = 1;
  begin_price_stage(now);
}

void LiveSession::begin_price_stage(TimePoint now) {
  const int n = config_.seats();
  const auto& g = config_.treatment.params;
  pairs_ = sim::pair_round(log_.groups, rng_);
  pending_.assign(static_cast<std::size_t>(n) + 1, {});
  has_price_.assign(static_cast<std::size_t>(n) + 1, false);
  has_quantity_.assign(static_cast<std::size_t>(n) + 1, false);
  for (int s = 1; s <= n; ++s) {
    auto& r = pending_[static_cast<std::size_t>(s)];
    r.round = round_;
    r.subject = s;
    r.group = group_of_[static_cast<std::size_t>(s)];
    if (is_human(s)) continue;
    sim::DecisionContext ctx{g, rng_, nullptr, round_, s};
    r.price = sim::decide_price(bot_policy(s), histories_[static_cast<std::size_t>(s)], ctx);
    has_price_[static_cast<std::size_t>(s)] = true;
  }
  stage_ = Stage::PriceStage;
  deadline_ = now + config_.stage_timeout;
}

void LiveSession::close_price_stage(TimePoint now) {
  const auto& g = config_.treatment.params;
  for (std::size_t s = 1; s < pending_.size(); ++s) {
    if (!has_price_[s]) {
      pending_[s].price = g.r;
      pending_[s].substituted |= sim::kPriceSubstituted;
      has_price_[s] = true;
    }
  }
  for (std::size_t k = 0; k < pairs_.size(); ++k) {
    auto& a = pending_[static_cast<std::size_t>(pairs_[k][0])];
    auto& b = pending_[static_cast<std::size_t>(pairs_[k][1])];
    const auto outcomes = sim::resolve_pair(a.price, b.price, rng_);
    a.outcome = outcomes[0];
    b.outcome = outcomes[1];
    a.opp_price = b.price;
    b.opp_price = a.price;
    a.pair = b.pair = static_cast<int>(k) + 1;
  }
  stage_ = Stage::SegmentReveal;
  deadline_ = now + config_.reveal_duration;
}

void LiveSession::begin_quantity_stage(TimePoint now) {
  const auto& g = config_.treatment.params;
  for (int s = 1; s <= config_.seats(); ++s) {
    if (is_human(s)) continue;
    auto& r = pending_[static_cast<std::size_t>(s)];
    sim::DecisionContext ctx{g, rng_, nullptr, round_, s};
    r.quantity = sim::decide_quantity(bot_policy(s), r.price, r.outcome, ctx);
    has_quantity_[static_cast<std::size_t>(s)] = true;
  }
  stage_ = Stage::QuantityStage;
  deadline_ = now + config_.stage_timeout;
}

void LiveSession::close_quantity_stage(TimePoint now) {
  const auto& g = config_.treatment.params;
  for (std::size_t s = 1; s < pending_.size(); ++s) {
    auto& r = pending_[s];
    if (!has_quantity_[s]) {
      r.quantity = std::lround(segment_mean(g, r.outcome.segment));
      r.substituted |= sim::kQuantitySubstituted;
      has_quantity_[s] = true;
    }
  }
  for (std::size_t s = 1; s < pending_.size(); ++s) {
    auto& r = pending_[s];
    r.demand = sim::draw_demand(g, r.outcome.segment, rng_);
    sim::settle_record(g, r, earnings_[s]);
    histories_[s].push_back(r);
    log_.records.push_back(r);
  }
  stage_ = Stage::Feedback;
  deadline_ = now + config_.feedback_duration;
}

void LiveSession::finish() {
  stage_ = Stage::Finished;
  if (config_.persist_dir.empty()) return;
  try {
    namespace fs = std::filesystem;
    fs::create_directories(config_.persist_dir);
    const fs::path base = fs::path(config_.persist_dir) / id_;
    std::ofstream(base.string() + ".csv", std::ios::binary) << sim::export_csv(log_);
    std::ofstream(base.string() + ".json", std::ios::binary) << sim::export_record(log_);
  } catch (const std::exception& e) {
    std::cerr << "session " << id_ << ": could not persist log: " << e.what() << '\n';
  }
}

void LiveSession::advance(TimePoint now) {
  // stages chain from the deadline that expired, not from when we notice it
  for (;;) {
    switch (stage_) {
      case Stage::Lobby:
      case Stage::Finished:
        return;
      case Stage::PriceStage: {
        bool all = true;
        for (std::size_t s = 1; s < has_price_.size(); ++s) all = all && has_price_[s];
        if (!all && now < deadline_) return;
        close_price_stage(all ? std::min(now, deadline_) : deadline_);
        break;
      }
      case Stage::SegmentReveal:
        if (now < deadline_) return;
        begin_quantity_stage(deadline_);
        break;
      case Stage::QuantityStage: {
        bool all = true;
        for (std::size_t s = 1; s < has_quantity_.size(); ++s) all = all && has_quantity_[s];
        if (!all && now < deadline_) return;
        close_quantity_stage(all ? std::min(now, deadline_) : deadline_);
        break;
      }
      case Stage::Feedback:
        if (now < deadline_) return;
        if (round_ == config_.n_rounds) {
          finish();
          return;
        }
        ++round_;
        begin_price_stage(deadline_);
        break;
    }
  }
}

void LiveSession::submit_price(const std::string& token, double price) {
  Lock lock(mu_);
  const auto now = clock_();
  advance(now);
  const int s = subject_of(token);
  const auto& g = config_.treatment.params;
  if (stage_ != Stage::PriceStage) {
    throw ApiError("wrong_stage", 409, "prices are accepted only in the price stage (now " +
                                           std::string(to_string(stage_)) + ")");
  }
  if (has_price_[static_cast<std::size_t>(s)]) {
    throw ApiError("duplicate_submission", 409, "a price was already submitted this round");
  }
  if (!std::isfinite(price) || price < g.c - 1e-9 || price > g.r + 1e-9) {
    throw ApiError("out_of_range", 400, "price must lie in [c, r]");
  }
  if (!on_price_grid(g, price)) throw ApiError("off_grid", 400, "price is not on the price grid");
  pending_[static_cast<std::size_t>(s)].price = from_tenths(to_tenths(price));
  has_price_[static_cast<std::size_t>(s)] = true;
  advance(now);
}

void LiveSession::submit_quantity(const std::string& token, long quantity) {
  Lock lock(mu_);
  const auto now = clock_();
  advance(now);
  const int s = subject_of(token);
  if (stage_ != Stage::QuantityStage) {
    throw ApiError("wrong_stage", 409, "quantities are accepted only in the quantity stage (now " +
                                           std::string(to_string(stage_)) + ")");
  }
  if (has_quantity_[static_cast<std::size_t>(s)]) {
    throw ApiError("duplicate_submission", 409, "a quantity was already submitted this round");
  }
  if (quantity < 0 || quantity > config_.treatment.params.q_cap) {
    throw ApiError("out_of_range", 400, "quantity must be an integer in [0, " +
                                            std::to_string(config_.treatment.params.q_cap) + "]");
  }
  pending_[static_cast<std::size_t>(s)].quantity = quantity;
  has_quantity_[static_cast<std::size_t>(s)] = true;
  advance(now);
}

StageView LiveSession::view(const std::string& token) {
  Lock lock(mu_);
  const auto now = clock_();
  advance(now);
  const int s = subject_of(token);
  const auto si = static_cast<std::size_t>(s);
  const auto& g = config_.treatment.params;

  StageView v;
  v.session = id_;
  v.treatment = config_.treatment;
  v.stage = stage_;
  v.round = round_;
  v.n_rounds = config_.n_rounds;
  v.subject = s;
  v.group = group_of_[si];
  v.joined = static_cast<int>(tokens_.size());
  v.humans = config_.humans;
  v.history = histories_[si];
  v.cumulative = earnings_[si].value;

  const bool timed = stage_ != Stage::Lobby && stage_ != Stage::Finished;
  if (timed) {
    v.deadline_ms = std::max<std::int64_t>(
        0, std::chrono::duration_cast<std::chrono::milliseconds>(deadline_ - now).count());
  }
  if (stage_ == Stage::Feedback) v.history.pop_back();  // shown as the current round instead

  if (timed) {
    const auto& r = pending_[si];
    RoundView cur;
    cur.round = round_;
    if (has_price_[si]) cur.price = r.price;
    if (stage_ == Stage::PriceStage) {
      v.awaiting_price = !has_price_[si];
    } else {
      cur.opp_price = r.opp_price;
      cur.outcome = r.outcome;
      const auto spec = demand_spec(g, r.outcome.segment);
      cur.demand_lo = spec.lo();
      cur.demand_hi = spec.hi();
      if (has_quantity_[si]) cur.quantity = r.quantity;
      v.awaiting_quantity = stage_ == Stage::QuantityStage && !has_quantity_[si];
    }
    if (stage_ == Stage::Feedback) {
      const auto& done = histories_[si].back();
      cur.demand = done.demand;
      cur.profit = done.profit;
      cur.cumulative = done.cumulative;
      cur.substituted = done.substituted;
      for (const auto& pr : pairs_) {
        const int opp = pr[0] == s ? pr[1] : (pr[1] == s ? pr[0] : 0);
        if (opp == 0) continue;
        const auto& o = histories_[static_cast<std::size_t>(opp)].back();
        cur.opp_quantity = o.quantity;
        cur.opp_profit = o.profit;
      }
    } else {
      cur.substituted = r.substituted;
    }
    v.current = cur;
  }
  return v;
}

void LiveSession::tick() {
  Lock lock(mu_);
  advance(clock_());
}

Stage LiveSession::stage() {
  Lock lock(mu_);
  advance(clock_());
  return stage_;
}

int LiveSession::round() {
  Lock lock(mu_);
  advance(clock_());
  return round_;
}

bool LiveSession::owns_token(const std::string& token) {
  Lock lock(mu_);
  return tokens_.count(token) > 0;
}

sim::SessionLog LiveSession::log() {
  Lock lock(mu_);
  advance(clock_());
  if (stage_ != Stage::Finished) throw ApiError("not_finished", 409, "the session has not finished");
  return log_;
}

// ---------------------------------------------------------------------------
// SessionManager.

SessionManager::SessionManager(Clock clock) : clock_(std::move(clock)) {}

std::string SessionManager::create(SessionConfig config) {
  config.validate();
  std::lock_guard lock(mu_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04llu", static_cast<unsigned long long>(next_id_++));
  auto session = std::make_shared<LiveSession>(buf, std::move(config), clock_);
  sessions_.emplace(buf, session);
  return buf;
}

std::shared_ptr<LiveSession> SessionManager::get(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError("unknown_session", 404, "no session '" + id + "'");
  return it->second;
}

void SessionManager::tick_all() {
  std::vector<std::shared_ptr<LiveSession>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) s->tick();
}

std::size_t SessionManager::size() {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

}  // namespace nvlab::live
