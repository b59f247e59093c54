#include "doctest.h"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "nvlab/analysis.hpp"
#include "nvlab/equilibrium.hpp"

using namespace nvlab;
using namespace nvlab::analysis;
using sim::RoundRecord;
using sim::SessionLog;

namespace {

// Hand-made log: subjects 4g+1..4g+4 form group g+1, pairs are (1,2) and (3,4)
// of each group in every round, demand sits at the segment mean.
SessionLog build_log(const Treatment& t, const std::vector<std::vector<double>>& prices_by_round,
                     const std::function<long(double, PriceOutcome)>& order) {
  SessionLog log;
  log.treatment = t;
  const int n = static_cast<int>(prices_by_round.front().size());
  for (int g = 0; g < n / 4; ++g) log.groups.push_back({4 * g + 1, 4 * g + 2, 4 * g + 3, 4 * g + 4});
  std::vector<sim::Earnings> earn(n + 1);
  int round = 0;
  for (const auto& prices : prices_by_round) {
    ++round;
    for (int s = 1; s <= n; ++s) {
      const int mate = (s % 2 == 1) ? s + 1 : s - 1;
      RoundRecord r;
      r.round = round;
      r.subject = s;
      r.group = (s - 1) / 4 + 1;
      r.pair = (s - 1) / 2 + 1;
      r.price = prices[s - 1];
      r.opp_price = prices[mate - 1];
      if (r.price < r.opp_price) r.outcome = PriceOutcome::lower();
      else if (r.price > r.opp_price) r.outcome = PriceOutcome::higher();
      else r.outcome = PriceOutcome::tie(s % 2 == 1 ? Segment::High : Segment::Low);
      r.quantity = order(r.price, r.outcome);
      r.demand = static_cast<long>(segment_mean(t.params, r.outcome.segment));
      sim::settle_record(t.params, r, earn[s]);
      log.records.push_back(r);
    }
  }
  return log;
}

const Treatment kHmLu = preset(TreatmentLabel::HM_LU);

long q_star_order(double p, PriceOutcome o) { return round_half_up(optimal_quantity(kHmLu.params, p, o)); }

}  // namespace

TEST_CASE("quantile helpers") {
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.9) == 5.0);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(mean({1, 2, 3, 6}) == 3.0);
  CHECK(sample_sd({2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(2.13808993));
  CHECK(sample_sd({1}) == 0.0);
  CHECK_THROWS(quantile({}, 0.5));

  auto uniform = [](double v) { return std::clamp(v, 0.0, 1.0); };
  CHECK(ks_distance({0.5}, uniform) == doctest::Approx(0.5));
  CHECK(ks_distance({0.125, 0.375, 0.625, 0.875}, uniform) == doctest::Approx(0.125));
}

TEST_CASE("group medians are averaged, not pooled") {
  const auto log = build_log(kHmLu, {{4, 4, 4, 4, 10, 11, 12, 12}}, q_star_order);
  const auto s = price_stats(log, kHmLu.params);
  REQUIRE(s.groups.size() == 2);
  CHECK(s.groups[0].second.median == 4.0);
  CHECK(s.groups[1].second.median == 11.5);
  CHECK(s.pooled.median == doctest::Approx(7.75));
  std::vector<double> all{4, 4, 4, 4, 10, 11, 12, 12};
  CHECK(median(all) == doctest::Approx(7.0));
  CHECK(s.sd_across_groups.median == doctest::Approx(sample_sd({4.0, 11.5})));
  CHECK(s.pooled.prop_below_threshold == doctest::Approx(0.5));
  CHECK(s.pooled.prop_at_r == doctest::Approx(0.25));
  CHECK(s.ne_median == doctest::Approx(8.931).epsilon(1e-3));
}

TEST_CASE("prices at the grid start are not below the threshold") {
  const auto log = build_log(kHmLu, {{7.5, 7.5, 7.5, 7.5}, {7.5, 7.5, 7.5, 7.5}}, q_star_order);
  CHECK(price_stats(log, kHmLu.params).pooled.prop_below_threshold == 0.0);
  const auto below = build_log(kHmLu, {{7.4, 7.5, 7.5, 7.5}}, q_star_order);
  CHECK(price_stats(below, kHmLu.params).pooled.prop_below_threshold == doctest::Approx(0.25));
}

TEST_CASE("focal play") {
  const auto log = sim::run_session(kHmLu, {sim::FocalPolicy{1.0}}, 8, 20, 3);
  const auto p = price_stats(log, kHmLu.params);
  CHECK(p.pooled.prop_at_r == 1.0);
  CHECK(p.pooled.median == 12.0);
  CHECK(p.pooled.iqr == 0.0);

  const auto q = quantity_stats(log, kHmLu.params);
  CHECK(q.split(OutcomeKind::Tie).count == 160);
  CHECK(q.split(OutcomeKind::Lower).count == 0);

  const auto dev = compare_to_ne(p, q, kHmLu.params);
  CHECK(dev.mass_at_r == 1.0);
  CHECK(dev.median_gap == doctest::Approx(12.0 - ne_summary(kHmLu.params).median));
  CHECK_FALSE(dev.q_gap[0]);
  CHECK(dev.q_gap[2]);
}

TEST_CASE("quantities by outcome") {
  const auto anchors = sim::run_session(kHmLu, {sim::PtcPolicy{1.0}}, 8, 50, 4);
  const auto q = quantity_stats(anchors, kHmLu.params);
  CHECK(q.split(OutcomeKind::Lower).mean_q == 100.0);
  CHECK(q.split(OutcomeKind::Higher).mean_q == 50.0);
  CHECK(q.split(OutcomeKind::Lower).sd_individual == 0.0);
  CHECK(q.total == anchors.records.size());
  const auto dev = compare_to_ne(price_stats(anchors, kHmLu.params), q, kHmLu.params);
  REQUIRE(dev.q_gap[0]);
  CHECK(*dev.q_gap[0] < 0.0);

  const auto eq = sim::run_session(kHmLu, {sim::EquilibriumPolicy{}}, 24, 400, 5);
  const auto qe = quantity_stats(eq, kHmLu.params);
  const auto& lower = qe.split(OutcomeKind::Lower);
  CHECK(std::abs(lower.mean_q - lower.q_star) <= 1.0);
  CHECK(lower.q_star == doctest::Approx(optimal_quantity(kHmLu.params, lower.median_price, PriceSide::Lower)));

  const auto one_tie = build_log(kHmLu, {{9.0, 9.0, 9.0, 10.0}}, q_star_order);
  CHECK(quantity_stats(one_tie, kHmLu.params).split(OutcomeKind::Tie).count == 2);
}

TEST_CASE("large equilibrium logs sit on the benchmark") {
  const auto log = sim::run_session(kHmLu, {sim::EquilibriumPolicy{}}, 24, 2000, 8);
  const auto p = price_stats(log, kHmLu.params);
  CHECK(std::abs(p.pooled.median - 8.931) < 0.1);
  const auto dev = compare_to_ne(p, quantity_stats(log, kHmLu.params), kHmLu.params);
  CHECK(std::abs(dev.median_gap) < 0.1);
  CHECK(std::abs(dev.iqr_gap) < 0.15);
  CHECK(dev.mass_below_threshold == 0.0);
  REQUIRE(dev.q_gap[0]);
  CHECK(std::abs(*dev.q_gap[0]) < 1.0);
}

TEST_CASE("pull-to-center ratio") {
  CHECK(ptc_ratio(108, 104, 100) == doctest::Approx(1.0));
  CHECK(ptc_ratio(58, 58, 50) == 0.0);
  for (double k : {0.5, 2.0, 7.0})
    CHECK(ptc_ratio(108 * k, 104 * k, 100 * k) == doctest::Approx(ptc_ratio(108, 104, 100)));
  for (double k : {0.3, 3.0})
    CHECK(ptc_ratio(41.7 * k, 46.2 * k, 50 * k) == doctest::Approx(ptc_ratio(41.7, 46.2, 50)));

  // subject 1 wins at 10 and orders 104
  const auto one = build_log(kHmLu, {{10.0, 11.0, 12.0, 12.0}}, [](double p, PriceOutcome o) {
    return o.kind == OutcomeKind::Lower && p == 10.0 ? 104L : 60L;
  });
  const auto rounds = ptc_rounds(one, kHmLu.params);
  REQUIRE_FALSE(rounds.empty());
  CHECK(rounds.front().subject == 1);
  CHECK(rounds.front().ratio == doctest::Approx(1.0));
  for (const auto& r : rounds) CHECK(r.kind != OutcomeKind::Tie);
}

TEST_CASE("ptc indices") {
  SUBCASE("orders at q* give zero indices") {
    const auto log = build_log(kHmLu, {{10, 12, 12, 12}, {12, 10, 12, 12}, {10, 12, 12, 12}}, q_star_order);
    const auto rep = ptc_indices(log, kHmLu.params);
    const auto& s1 = rep.subjects.front();
    REQUIRE(s1.alpha_lp);
    REQUIRE(s1.alpha_hp);
    CHECK(*s1.alpha_lp == 0.0);
    CHECK(*s1.alpha_hp == 0.0);
    REQUIRE(s1.d);
    CHECK(*s1.d == 0.0);
  }
  SUBCASE("anchor orders are excluded") {
    const auto log = sim::run_session(kHmLu, {sim::PtcPolicy{1.0}}, 4, 20, 2);
    const auto rep = ptc_indices(log, kHmLu.params);
    CHECK(rep.rounds_lp == 0);
    CHECK(rep.rounds_hp == 0);
    int excluded = 0;
    for (const auto& s : rep.subjects) excluded += s.excluded_lp + s.excluded_hp;
    CHECK(excluded > 0);
  }
  SUBCASE("pooled sd") {
    // subject 1: LP ratios 1 and 3 (q = 104, 102 at p = 10), HP ratio 0 (q = 58 at p = 10)
    int call = 0;
    const auto log = build_log(kHmLu, {{10, 12, 12, 12}, {10, 12, 12, 12}, {10, 9, 12, 12}},
                               [&](double p, PriceOutcome o) -> long {
                                 ++call;
                                 if (call == 1) return 104;
                                 if (call == 5) return 102;
                                 if (call == 9) return 58;
                                 return round_half_up(optimal_quantity(kHmLu.params, p, o));
                               });
    const auto rep = ptc_indices(log, kHmLu.params);
    const auto& s1 = rep.subjects.front();
    REQUIRE(s1.alpha_lp);
    CHECK(*s1.alpha_lp == doctest::Approx(2.0));
    CHECK(*s1.alpha_hp == doctest::Approx(0.0));
    // sqrt((2 * 1 + 0) / (2 + 1 - 2))
    REQUIRE(s1.pooled_sd);
    CHECK(*s1.pooled_sd == doctest::Approx(std::sqrt(2.0)));
    CHECK(*s1.d == doctest::Approx(2.0 / std::sqrt(2.0)));
  }
  SUBCASE("bad epsilon") {
    const auto log = sim::run_session(kHmLu, {sim::EquilibriumPolicy{}}, 4, 2, 2);
    CHECK_THROWS_AS(ptc_indices(log, kHmLu.params, 0.0), std::invalid_argument);
  }
}

TEST_CASE("half pull-to-center gives ratios near one") {
  const auto log = sim::run_session(kHmLu, {sim::PtcPolicy{0.5}}, 24, 500, 9);
  const auto rep = ptc_indices(log, kHmLu.params);
  REQUIRE(rep.mean_ratio_lp);
  REQUIRE(rep.mean_ratio_hp);
  // integer orders bias the mean ratio upward a little, see the acceptance notes
  CHECK(*rep.mean_ratio_lp == doctest::Approx(1.0).epsilon(0.05));
  CHECK(*rep.mean_ratio_hp == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("quintile bins") {
  std::vector<std::pair<double, double>> uniform;
  for (int i = 0; i < 103; ++i) uniform.emplace_back(7.5 + 0.01 * i, 1.0);
  const auto bins = quintile_bins(uniform);
  REQUIRE(bins.size() == 5);
  std::size_t total = 0;
  for (const auto& b : bins) {
    CHECK(b.count >= 20);
    CHECK(b.count <= 21);
    CHECK(b.lo <= b.hi);
    total += b.count;
  }
  CHECK(total == uniform.size());

  std::vector<std::pair<double, double>> at_r(40, {12.0, 0.7});
  const auto one = quintile_bins(at_r);
  REQUIRE(one.size() == 1);
  CHECK(one[0].count == 40);
  CHECK(one[0].mean_ratio == doctest::Approx(0.7));
  CHECK(quintile_bins({}).empty());
}

TEST_CASE("trend sign test") {
  auto bins = [](std::vector<double> means) {
    std::vector<QuintileBin> out;
    for (double m : means) out.push_back({0, 0, 10, m, 0});
    return out;
  };
  CHECK(trend_sign_test(bins({1, 2, 3, 4, 5})) == doctest::Approx(0.125));
  CHECK(trend_sign_test(bins({1, 1, 1})) == 1.0);
  CHECK(trend_sign_test(bins({1, 2, 1, 2, 1})) == 1.0);

  const auto log = sim::run_session(kHmLu, {sim::PtcPolicy{0.5}}, 24, 300, 12);
  const auto q = ptc_by_price_quintile(log, kHmLu.params);
  CHECK_FALSE(q.lower.empty());
  CHECK(trend_sign_test(q.lower) > 0.05);
}

TEST_CASE("full report") {
  const auto log = sim::run_session(preset(TreatmentLabel::LM_HU), {sim::PtcPolicy{0.3}}, 8, 30, 14);
  const auto rep = analyze(log);
  const auto text = format_report(log, rep);
  CHECK(text.find("LM_HU") != std::string::npos);
  const auto json = report_json(log, rep);
  CHECK(json.find("\"ptc\"") != std::string::npos);
  CHECK_THROWS(price_stats(SessionLog{}, kHmLu.params));
}
