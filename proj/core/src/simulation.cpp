#include "nvlab/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "nvlab/equilibrium.hpp"

namespace nvlab::sim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& spec) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw std::invalid_argument("bad number in policy '" + spec + "'");
  return v;
}

InputChannel& channel_for(const DecisionContext& ctx, const ExternalPolicy& ext) {
  if (ctx.channels == nullptr) throw ChannelError("no input channels attached for '" + ext.channel_id + "'");
  auto it = ctx.channels->find(ext.channel_id);
  if (it == ctx.channels->end() || it->second == nullptr) {
    throw ChannelError("unknown input channel '" + ext.channel_id + "'");
  }
  return *it->second;
}

bool both_on_tenths(double a, double b) { return is_tenth_multiple(a) && is_tenth_multiple(b); }

bool prices_equal(double a, double b) {
  if (both_on_tenths(a, b)) return to_tenths(a) == to_tenths(b);
  return a == b;
}

// Running earnings of one subject: exact in tenths while every profit so far
// was a grid profit, plain double afterwards.

}  // namespace

// ---------------------------------------------------------------------------
// Policies.

void validate_policy(const AgentPolicy& policy) {
  std::visit(overloaded{
                 [](const EquilibriumPolicy&) {},
                 [](const FocalPolicy& p) {
                   if (!unit_interval(p.phi)) throw std::invalid_argument("focal: phi must be in [0, 1]");
                 },
                 [](const PtcPolicy& p) {
                   if (!unit_interval(p.lambda)) throw std::invalid_argument("ptc: lambda must be in [0, 1]");
                   if (p.jitter < 0) throw std::invalid_argument("ptc: jitter must be >= 0");
                 },
                 [](const DirectionalPolicy& p) {
                   if (p.delta_up < 0.0 || p.delta_down < 0.0) {
                     throw std::invalid_argument("directional: deltas must be >= 0");
                   }
                 },
                 [](const ExternalPolicy& p) {
                   if (p.channel_id.empty()) throw std::invalid_argument("external: empty channel id");
                 },
             },
             policy);
}

AgentPolicy parse_policy(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.empty()) throw std::invalid_argument("empty policy");
  const auto& kind = parts[0];
  AgentPolicy out;
  if (kind == "equilibrium" && parts.size() <= 2) {
    EquilibriumPolicy p;
    if (parts.size() == 2) {
      if (parts[1] != "nosnap") throw std::invalid_argument("bad policy '" + spec + "'");
      p.snap_to_grid = false;
    }
    out = p;
  } else if (kind == "focal" && parts.size() == 2) {
    out = FocalPolicy{to_double(parts[1], spec), true};
  } else if (kind == "ptc" && (parts.size() == 2 || parts.size() == 3)) {
    PtcPolicy p;
    p.lambda = to_double(parts[1], spec);
    if (parts.size() == 3) p.jitter = static_cast<int>(to_double(parts[2], spec));
    out = p;
  } else if (kind == "directional" && (parts.size() == 3 || parts.size() == 4)) {
    DirectionalPolicy p;
    p.delta_up = to_double(parts[1], spec);
    p.delta_down = to_double(parts[2], spec);
    if (parts.size() == 4) p.initial = to_double(parts[3], spec);
    out = p;
  } else if (kind == "external" && parts.size() == 2) {
    out = ExternalPolicy{parts[1]};
  } else {
    throw std::invalid_argument("bad policy '" + spec + "'");
  }
  validate_policy(out);
  return out;
}

std::string describe(const AgentPolicy& policy) {
  std::ostringstream s;
  std::visit(overloaded{
                 [&](const EquilibriumPolicy& p) { s << "equilibrium" << (p.snap_to_grid ? "" : ":nosnap"); },
                 [&](const FocalPolicy& p) { s << "focal:" << p.phi; },
                 [&](const PtcPolicy& p) {
                   s << "ptc:" << p.lambda;
                   if (p.jitter) s << ":" << p.jitter;
                 },
                 [&](const DirectionalPolicy& p) {
                   s << "directional:" << p.delta_up << ":" << p.delta_down;
                   if (p.initial) s << ":" << *p.initial;
                 },
                 [&](const ExternalPolicy& p) { s << "external:" << p.channel_id; },
             },
             policy);
  return s.str();
}

// ---------------------------------------------------------------------------
// Records.

int SessionLog::n_rounds() const {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.round);
  return n;
}

std::vector<RoundRecord> SessionLog::history(int subject) const {
  std::vector<RoundRecord> out;
  for (const auto& r : records) {
    if (r.subject == subject) out.push_back(r);
  }
  return out;
}

bool operator==(const SessionLog& a, const SessionLog& b) {
  return a.treatment.label == b.treatment.label && a.treatment.params == b.treatment.params &&
         a.seed == b.seed && a.groups == b.groups && a.records == b.records;
}

double record_profit(const GameParams& params, double price, long quantity, long demand) {
  if (both_on_tenths(price, params.c)) {
    return from_tenths(realized_profit_tenths(to_tenths(price), quantity, demand, to_tenths(params.c)));
  }
  return realized_profit(price, quantity, demand, params.c);
}

double Earnings::add(std::optional<std::int64_t> profit_tenths, double profit) {
  if (exact && profit_tenths) {
    tenths += *profit_tenths;
    value = from_tenths(tenths);
  } else {
    exact = false;
    value += profit;
  }
  return value;
}

void settle_record(const GameParams& params, RoundRecord& r, Earnings& earnings) {
  if (both_on_tenths(r.price, params.c)) {
    const auto pt = realized_profit_tenths(to_tenths(r.price), r.quantity, r.demand, to_tenths(params.c));
    r.profit = from_tenths(pt);
    r.cumulative = earnings.add(pt, r.profit);
  } else {
    r.profit = realized_profit(r.price, r.quantity, r.demand, params.c);
    r.cumulative = earnings.add(std::nullopt, r.profit);
  }
}

std::vector<LogViolation> check_log(const SessionLog& log) {
  std::vector<LogViolation> out;
  constexpr auto kStructural = std::numeric_limits<std::size_t>::max();
  const auto& g = log.treatment.params;

  std::map<int, int> group_of;
  for (std::size_t gi = 0; gi < log.groups.size(); ++gi) {
    for (int s : log.groups[gi]) {
      if (!group_of.emplace(s, static_cast<int>(gi) + 1).second) {
        out.push_back({kStructural, "subject " + std::to_string(s) + " appears in two groups"});
      }
    }
  }

  std::map<int, Earnings> running;
  // (round, pair) -> record indices
  std::map<std::pair<int, int>, std::vector<std::size_t>> pairs;
  std::map<std::pair<int, int>, std::set<int>> round_group_members;

  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    auto bad = [&](const std::string& msg) { out.push_back({i, msg}); };

    auto it = group_of.find(r.subject);
    if (it == group_of.end()) bad("subject " + std::to_string(r.subject) + " is in no group");
    else if (it->second != r.group) bad("group does not match the fixed group assignment");

    if (!(r.price >= g.c - 1e-9 && r.price <= g.r + 1e-9)) bad("price outside [c, r]");
    if (r.quantity < 0 || r.quantity > g.q_cap) bad("quantity outside [0, q_cap]");
    if (!r.outcome.consistent()) bad("segment inconsistent with outcome");

    const bool tie = prices_equal(r.price, r.opp_price);
    const auto expected_kind =
        tie ? OutcomeKind::Tie : (r.price < r.opp_price ? OutcomeKind::Lower : OutcomeKind::Higher);
    if (r.outcome.kind != expected_kind) bad("outcome inconsistent with price comparison");

    if (!demand_spec(g, r.outcome.segment).contains(r.demand)) bad("demand outside the segment support");

    auto& earn = running[r.subject];
    if (both_on_tenths(r.price, g.c)) {
      const auto expect = realized_profit_tenths(to_tenths(r.price), r.quantity, r.demand, to_tenths(g.c));
      if (!is_tenth_multiple(r.profit) || to_tenths(r.profit) != expect) bad("profit != p*min(q,d) - c*q");
      earn.add(expect, from_tenths(expect));
    } else {
      const double expect = realized_profit(r.price, r.quantity, r.demand, g.c);
      if (r.profit != expect) bad("profit != p*min(q,d) - c*q");
      earn.add(std::nullopt, expect);
    }
    if (earn.exact ? (!is_tenth_multiple(r.cumulative) || to_tenths(r.cumulative) != earn.tenths)
                   : r.cumulative != earn.value) {
      bad("cumulative is not the running sum");
    }

    pairs[{r.round, r.pair}].push_back(i);
    if (!round_group_members[{r.round, r.group}].insert(r.subject).second) {
      bad("subject appears twice in one round");
    }
  }

  for (const auto& [key, idx] : pairs) {
    const auto [round, pair] = key;
    const std::string where = "round " + std::to_string(round) + " pair " + std::to_string(pair);
    if (idx.size() != 2) {
      out.push_back({idx.front(), where + " does not have exactly two members"});
      continue;
    }
    const auto& a = log.records[idx[0]];
    const auto& b = log.records[idx[1]];
    if (a.group != b.group) out.push_back({idx[1], where + " crosses groups"});
    if (a.price != b.opp_price || b.price != a.opp_price) {
      out.push_back({idx[1], where + " opponent prices do not match"});
    }
    if (a.outcome.kind == OutcomeKind::Tie && b.outcome.kind == OutcomeKind::Tie &&
        a.outcome.segment == b.outcome.segment) {
      out.push_back({idx[1], where + " tie did not split the segments"});
    }
  }
  for (const auto& [key, members] : round_group_members) {
    if (members.size() != 4) {
      out.push_back({kStructural, "round " + std::to_string(key.first) + " group " +
                                      std::to_string(key.second) + " does not have four records"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// QueueChannel.

void QueueChannel::push_price(double p) {
  {
    std::lock_guard lock(mu_);
    prices_.push_back(p);
  }
  cv_.notify_all();
}

void QueueChannel::push_quantity(long q) {
  {
    std::lock_guard lock(mu_);
    quantities_.push_back(q);
  }
  cv_.notify_all();
}

void QueueChannel::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

template <class T>
T QueueChannel::pop(std::deque<T>& queue, const char* what) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout_, [&] { return !queue.empty() || closed_; })) {
    throw ChannelError(std::string("timed out waiting for ") + what);
  }
  if (queue.empty()) throw ChannelError(std::string("channel closed while waiting for ") + what);
  T v = queue.front();
  queue.pop_front();
  return v;
}

double QueueChannel::next_price(const StageRequest&) { return pop(prices_, "a price"); }
long QueueChannel::next_quantity(const StageRequest&) { return pop(quantities_, "a quantity"); }

// ---------------------------------------------------------------------------
// Decisions.

double decide_price(const AgentPolicy& policy, const std::vector<RoundRecord>& history,
                    DecisionContext& ctx) {
  const auto& g = ctx.params;
  return std::visit(
      overloaded{
          [&](const EquilibriumPolicy& p) { return sample_price(g, ctx.rng, p.snap_to_grid); },
          [&](const FocalPolicy& p) {
            std::bernoulli_distribution focal(p.phi);
            if (focal(ctx.rng)) return g.r;
            return sample_price(g, ctx.rng, p.snap_to_grid);
          },
          [&](const PtcPolicy& p) { return sample_price(g, ctx.rng, p.snap_to_grid); },
          [&](const DirectionalPolicy& p) {
            if (history.empty()) {
              return snap_to_grid(g, p.initial.value_or(price_quantile(g, 0.5)));
            }
            const auto& last = history.back();
            double next = last.price;
            if (last.outcome.kind == OutcomeKind::Lower) next += p.delta_up;
            else if (last.outcome.kind == OutcomeKind::Higher) next -= p.delta_down;
            return snap_to_grid(g, std::clamp(next, g.c, g.r));
          },
          [&](const ExternalPolicy& p) {
            auto& ch = channel_for(ctx, p);
            const StageRequest req{ctx.round, ctx.subject, 0.0, std::nullopt};
            for (;;) {
              const double v = ch.next_price(req);
              if (on_price_grid(g, v)) return from_tenths(to_tenths(v));
            }
          },
      },
      policy);
}

long decide_quantity(const AgentPolicy& policy, double p, const PriceOutcome& outcome,
                     DecisionContext& ctx) {
  const auto& g = ctx.params;
  auto clamp_order = [&](long q) { return std::clamp<long>(q, 0, g.q_cap); };
  auto normative = [&] { return clamp_order(round_half_up(optimal_quantity(g, p, outcome))); };
  return std::visit(
      overloaded{
          [&](const EquilibriumPolicy&) { return normative(); },
          [&](const FocalPolicy&) { return normative(); },
          [&](const DirectionalPolicy&) { return normative(); },
          [&](const PtcPolicy& pol) {
            const double anchor = segment_mean(g, outcome.segment);
            const double blend = pol.lambda * anchor + (1.0 - pol.lambda) * optimal_quantity(g, p, outcome);
            long q = round_half_up(blend);
            if (pol.jitter > 0) {
              std::uniform_int_distribution<int> j(-pol.jitter, pol.jitter);
              q += j(ctx.rng);
            }
            return clamp_order(q);
          },
          [&](const ExternalPolicy& pol) {
            auto& ch = channel_for(ctx, pol);
            const StageRequest req{ctx.round, ctx.subject, p, outcome};
            for (;;) {
              const long v = ch.next_quantity(req);
              if (v >= 0 && v <= g.q_cap) return v;
            }
          },
      },
      policy);
}

// ---------------------------------------------------------------------------
// Engine.

std::vector<std::array<int, 4>> assign_groups(int n_subjects, Rng& rng) {
  if (n_subjects <= 0 || n_subjects % 4 != 0) {
    throw std::invalid_argument("number of subjects must be a positive multiple of 4");
  }
  std::vector<int> ids(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::array<int, 4>> groups;
  for (std::size_t i = 0; i < ids.size(); i += 4) {
    std::array<int, 4> grp{ids[i], ids[i + 1], ids[i + 2], ids[i + 3]};
    std::sort(grp.begin(), grp.end());
    groups.push_back(grp);
  }
  return groups;
}

std::vector<std::array<int, 2>> pair_round(const std::vector<std::array<int, 4>>& groups, Rng& rng) {
  std::vector<std::array<int, 2>> pairs;
  pairs.reserve(groups.size() * 2);
  for (auto grp : groups) {
    std::shuffle(grp.begin(), grp.end(), rng);
    pairs.push_back({grp[0], grp[1]});
    pairs.push_back({grp[2], grp[3]});
  }
  return pairs;
}

std::array<PriceOutcome, 2> resolve_pair(double price_a, double price_b, Rng& rng) {
  if (prices_equal(price_a, price_b)) {
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) return {PriceOutcome::tie(Segment::High), PriceOutcome::tie(Segment::Low)};
    return {PriceOutcome::tie(Segment::Low), PriceOutcome::tie(Segment::High)};
  }
  if (price_a < price_b) return {PriceOutcome::lower(), PriceOutcome::higher()};
  return {PriceOutcome::higher(), PriceOutcome::lower()};
}

long draw_demand(const GameParams& params, Segment segment, Rng& rng) {
  const auto spec = demand_spec(params, segment);
  std::uniform_int_distribution<long> d(spec.lo(), spec.hi());
  return d(rng);
}

SessionLog run_session(const Treatment& treatment, const std::vector<AgentPolicy>& policies,
                       int n_subjects, int n_rounds, std::uint64_t seed,
                       const SessionOptions& options) {
  const auto& g = treatment.params;
  g.validate();
  if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
  if (policies.size() != 1 && policies.size() != static_cast<std::size_t>(n_subjects)) {
    throw std::invalid_argument("need one policy per subject or a single shared policy");
  }
  for (const auto& p : policies) validate_policy(p);
  auto policy_of = [&](int subject) -> const AgentPolicy& {
    return policies.size() == 1 ? policies.front() : policies[static_cast<std::size_t>(subject - 1)];
  };

  Rng rng(seed);
  SessionLog log;
  log.treatment = treatment;
  log.seed = seed;
  log.groups = assign_groups(n_subjects, rng);

  std::vector<int> group_of(static_cast<std::size_t>(n_subjects) + 1);
  for (std::size_t gi = 0; gi < log.groups.size(); ++gi) {
    for (int s : log.groups[gi]) group_of[static_cast<std::size_t>(s)] = static_cast<int>(gi) + 1;
  }

  const auto n = static_cast<std::size_t>(n_subjects);
  std::vector<std::vector<RoundRecord>> histories(n + 1);
  std::vector<Earnings> earnings(n + 1);
  log.records.reserve(n * static_cast<std::size_t>(n_rounds));

  for (int round = 1; round <= n_rounds; ++round) {
    const auto pairs = pair_round(log.groups, rng);
    std::vector<RoundRecord> rec(n + 1);

    for (int s = 1; s <= n_subjects; ++s) {
      DecisionContext ctx{g, rng, options.channels, round, s};
      try {
        rec[static_cast<std::size_t>(s)].price = decide_price(policy_of(s), histories[static_cast<std::size_t>(s)], ctx);
      } catch (const std::exception& e) {
        throw SessionError(round, s, std::string("price decision failed: ") + e.what());
      }
    }

    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto& a = rec[static_cast<std::size_t>(pairs[k][0])];
      auto& b = rec[static_cast<std::size_t>(pairs[k][1])];
      const auto outcomes = resolve_pair(a.price, b.price, rng);
      a.outcome = outcomes[0];
      b.outcome = outcomes[1];
      a.opp_price = b.price;
      b.opp_price = a.price;
      a.pair = b.pair = static_cast<int>(k) + 1;
    }

    for (int s = 1; s <= n_subjects; ++s) {
      auto& r = rec[static_cast<std::size_t>(s)];
      DecisionContext ctx{g, rng, options.channels, round, s};
      try {
        r.quantity = decide_quantity(policy_of(s), r.price, r.outcome, ctx);
      } catch (const std::exception& e) {
        throw SessionError(round, s, std::string("quantity decision failed: ") + e.what());
      }
    }

    for (int s = 1; s <= n_subjects; ++s) {
      const auto si = static_cast<std::size_t>(s);
      auto& r = rec[si];
      r.round = round;
      r.subject = s;
      r.group = group_of[si];
      r.demand = draw_demand(g, r.outcome.segment, rng);
      settle_record(g, r, earnings[si]);
      histories[si].push_back(r);
      log.records.push_back(r);
    }
  }
  return log;
}

}  // namespace nvlab::sim
