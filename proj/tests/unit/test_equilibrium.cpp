#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "nvlab/equilibrium.hpp"

using namespace nvlab;

namespace {

GameParams params_of(TreatmentLabel l) { return preset(l).params; }

// Larger root of the threshold quadratic, written out independently.
double threshold_by_hand(const GameParams& p) {
  const double k = p.d_low * p.r + (p.d_high - p.d_low) * p.c + p.c * p.c * p.x / p.r;
  const double disc = k * k - 4 * p.d_high * p.c * p.c * p.x;
  return (k + std::sqrt(disc)) / (2 * p.d_high);
}

}  // namespace

TEST_CASE("threshold price") {
  CHECK(threshold_price(params_of(TreatmentLabel::HM_LU)) == doctest::Approx(7.406986).epsilon(1e-6));
  CHECK(threshold_price(params_of(TreatmentLabel::HM_HU)) == doctest::Approx(7.307345).epsilon(1e-6));
  CHECK(threshold_price(params_of(TreatmentLabel::LM_LU)) == doctest::Approx(10.273060).epsilon(1e-6));
  CHECK(threshold_price(params_of(TreatmentLabel::LM_HU)) == doctest::Approx(9.940659).epsilon(1e-6));
  for (const auto& t : all_presets())
    CHECK(threshold_price(t.params) == doctest::Approx(threshold_by_hand(t.params)).epsilon(1e-12));

  auto flat = params_of(TreatmentLabel::HM_LU);
  flat.x = 0.0;
  CHECK(threshold_price(flat) == doctest::Approx(7.5));
}

TEST_CASE("equilibrium value") {
  CHECK(equilibrium_value(params_of(TreatmentLabel::HM_LU)) == doctest::Approx(405.0));
  CHECK(equilibrium_value(params_of(TreatmentLabel::HM_HU)) == doctest::Approx(360.0));
  CHECK(equilibrium_value(params_of(TreatmentLabel::LM_LU)) == doctest::Approx(105.0));
  CHECK(equilibrium_value(params_of(TreatmentLabel::LM_HU)) == doctest::Approx(60.0));
  auto flat = params_of(TreatmentLabel::LM_LU);
  flat.x = 0.0;
  CHECK(equilibrium_value(flat) == doctest::Approx(150.0));
}

TEST_CASE("price cdf") {
  const auto p = params_of(TreatmentLabel::HM_LU);
  CHECK(price_cdf(p, 12.0) == 1.0);
  CHECK(price_cdf(p, threshold_price(p)) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  CHECK(price_cdf(p, 10.0) == doctest::Approx(1.0 - 2.0 * (50.0 - 180.0 / 120.0) / (7.0 * 50.0)));
  CHECK(price_cdf(p, 10.0) == doctest::Approx(0.722857).epsilon(1e-6));
  CHECK(price_cdf(p, 5.0) == 0.0);
  CHECK_THROWS_AS(price_cdf(p, 2.9), std::domain_error);
  CHECK_THROWS_AS(price_cdf(p, 12.1), std::domain_error);
}

TEST_CASE("cdf is a continuous distribution on the support") {
  for (const auto& t : all_presets()) {
    const auto& p = t.params;
    const double lo = threshold_price(p);
    const int n = 10000;
    double prev = price_cdf(p, lo);
    CHECK(prev == doctest::Approx(0.0).scale(1.0));
    double max_jump = 0.0;
    for (int i = 1; i <= n; ++i) {
      const double v = price_cdf(p, lo + (p.r - lo) * i / n);
      CHECK(v >= prev - 1e-15);
      CHECK(v <= 1.0);
      max_jump = std::max(max_jump, v - prev);
      prev = v;
    }
    CHECK(prev == 1.0);
    CHECK(max_jump < 10.0 / n);
  }
}

TEST_CASE("indifference on the support") {
  for (const auto& t : all_presets()) {
    const auto& p = t.params;
    const double v = equilibrium_value(p);
    const double lo = threshold_price(p);
    for (int i = 0; i <= 1000; ++i) {
      const double price = lo + (p.r - lo) * i / 1000.0;
      const double f = price_cdf(p, price);
      const double value = f * (p.d_low - p.d_high) * (price - p.c) + p.d_high * (price - p.c) -
                           p.c * p.x + p.c * p.c * p.x / price;
      CHECK(std::abs(value - v) < 1e-9 * v);
    }
  }
}

TEST_CASE("quantiles") {
  const auto hm = params_of(TreatmentLabel::HM_LU);
  CHECK(price_quantile(hm, 0.5) == doctest::Approx(8.931).epsilon(0.005 / 8.931));
  CHECK(price_quantile(params_of(TreatmentLabel::LM_HU), 0.5) ==
        doctest::Approx(10.476).epsilon(0.005 / 10.476));
  CHECK(price_quantile(hm, 1.0) == 12.0);
  CHECK(price_quantile(hm, 0.0) == doctest::Approx(threshold_price(hm)));
  CHECK_THROWS(price_quantile(hm, -0.1));
  CHECK_THROWS(price_quantile(hm, 1.1));

  for (const auto& t : all_presets()) {
    const double lo = threshold_price(t.params);
    for (int i = 0; i <= 200; ++i) {
      const double price = lo + (t.params.r - lo) * i / 200.0;
      CHECK(price_quantile(t.params, price_cdf(t.params, price)) == doctest::Approx(price).epsilon(1e-8));
    }
  }
}

TEST_CASE("ne summary") {
  struct Row {
    TreatmentLabel label;
    double median, iqr;
  };
  for (const Row& row : {Row{TreatmentLabel::HM_LU, 8.931, 2.097}, Row{TreatmentLabel::HM_HU, 8.858, 2.141},
                         Row{TreatmentLabel::LM_LU, 10.800, 0.765}, Row{TreatmentLabel::LM_HU, 10.476, 0.860}}) {
    const auto s = ne_summary(params_of(row.label));
    CHECK(std::abs(s.median - row.median) <= 0.005);
    CHECK(std::abs(s.iqr() - row.iqr) <= 0.005);
    CHECK(s.support_hi == 12.0);
  }
}

TEST_CASE("sampling") {
  const auto p = params_of(TreatmentLabel::HM_LU);
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(sample_price(p, a) == sample_price(p, b));

  std::mt19937_64 rng(2024);
  const double lo = threshold_price(p);
  for (int i = 0; i < 20000; ++i) {
    const double s = sample_price(p, rng);
    CHECK(s >= lo - 1e-9);
    const double g = sample_price(p, rng, true);
    CHECK(on_price_grid(p, g));
    CHECK(g >= 7.5 - 1e-9);
  }
}

TEST_CASE("optimal quantity") {
  const auto hm = params_of(TreatmentLabel::HM_LU);
  CHECK(optimal_quantity(hm, 10.0, PriceSide::Lower) == doctest::Approx(108.0));
  CHECK(optimal_quantity(hm, 10.0, PriceSide::Higher) == doctest::Approx(58.0));
  for (const auto& t : all_presets()) {
    CHECK(optimal_quantity(t.params, 2 * t.params.c, PriceSide::Lower) == t.params.d_high);
    CHECK(optimal_quantity(t.params, 2 * t.params.c, PriceSide::Higher) == t.params.d_low);
  }
  CHECK_THROWS(optimal_quantity(hm, 0.0, PriceSide::Lower));
  CHECK(optimal_quantity(hm, 10.0, PriceOutcome::lower()) == doctest::Approx(108.0));
  CHECK(optimal_quantity(hm, 10.0, PriceOutcome::higher()) == doctest::Approx(58.0));
}

TEST_CASE("tie quantity") {
  CHECK(tie_optimal_quantity(params_of(TreatmentLabel::LM_LU), 10.0).lo == doctest::Approx(38.0));
  CHECK(tie_optimal_quantity(params_of(TreatmentLabel::HM_HU), 8.0).lo == doctest::Approx(85.0));

  const auto hu = params_of(TreatmentLabel::HM_HU);
  const auto rule = tie_rule(hu);
  CHECK(rule.situation == TieSituation::Overlap);
  CHECK(rule.upper_boundary == doctest::Approx(9.6));
  CHECK(tie_regime(hu, 9.6) == TieRegime::Middle);
  CHECK(tie_regime(hu, 9.7) == TieRegime::High);
  // both neighbouring expressions give d_L + x at the upper boundary
  const double p = rule.upper_boundary;
  const double middle = 0.5 * (hu.d_high + hu.d_low) + (1 - 2 * hu.c / p) * hu.x;
  const double high = hu.d_high + (1 - 4 * hu.c / p) * hu.x;
  CHECK(middle == doctest::Approx(90.0));
  CHECK(high == doctest::Approx(90.0));

  const auto lm_hu = params_of(TreatmentLabel::LM_HU);
  CHECK(tie_rule(lm_hu).lower_boundary == doctest::Approx(1440.0 / 110.0));
  CHECK(tie_rule(lm_hu).lower_boundary > lm_hu.r);
  for (double price : {9.0, 10.5, 12.0}) CHECK(tie_regime(lm_hu, price) == TieRegime::Low);
  CHECK(tie_optimal_quantity(lm_hu, 12.0).lo == doctest::Approx(170.0 - 1440.0 / 12.0));

  const auto hm = params_of(TreatmentLabel::HM_LU);
  CHECK(tie_rule(hm).situation == TieSituation::NoOverlap);
  const auto at_2c = tie_optimal_quantity(hm, 6.0);
  CHECK(at_2c.is_interval());
  CHECK(at_2c.lo == doctest::Approx(70.0));
  CHECK(at_2c.hi == doctest::Approx(80.0));
  CHECK(optimal_quantity(hm, 6.0, PriceOutcome::tie(Segment::High)) == doctest::Approx(75.0));
  CHECK(tie_optimal_quantity(hm, 5.0).regime == TieRegime::Low);
  CHECK(tie_optimal_quantity(hm, 7.0).regime == TieRegime::High);
  CHECK_THROWS(tie_optimal_quantity(hm, 2.0));
}

TEST_CASE("tie regimes join continuously") {
  for (const auto& t : all_presets()) {
    const auto& p = t.params;
    const auto rule = tie_rule(p);
    if (rule.situation != TieSituation::Overlap) continue;
    const double a = rule.lower_boundary, b = rule.upper_boundary;
    CHECK(p.d_low + (3 - 4 * p.c / a) * p.x == doctest::Approx(p.d_high - p.x));
    CHECK(0.5 * (p.d_high + p.d_low) + (1 - 2 * p.c / a) * p.x == doctest::Approx(p.d_high - p.x));
    CHECK(0.5 * (p.d_high + p.d_low) + (1 - 2 * p.c / b) * p.x == doctest::Approx(p.d_low + p.x));
    CHECK(p.d_high + (1 - 4 * p.c / b) * p.x == doctest::Approx(p.d_low + p.x));
    if (a >= p.c && a <= p.r) CHECK(tie_optimal_quantity(p, a).lo == doctest::Approx(p.d_high - p.x));
    if (b >= p.c && b <= p.r) CHECK(tie_optimal_quantity(p, b).lo == doctest::Approx(p.d_low + p.x));
  }
}

TEST_CASE("comparative statics in x") {
  for (double c : {3.0, 9.0}) {
    GameParams prev_p;
    double prev = 1e9;
    for (double x = 5; x <= 40; x += 5) {
      GameParams p;
      p.c = c;
      p.x = x;
      const double t = threshold_price(p);
      CHECK(t < prev);
      if (x > 5) {
        const double lo = std::max(threshold_price(prev_p), t);
        for (int i = 0; i <= 50; ++i) {
          const double price = lo + (p.r - lo) * i / 50.0;
          CHECK(price_cdf(p, price) >= price_cdf(prev_p, price) - 1e-12);
        }
      }
      for (double price = c + 0.1; price <= 12.0; price += 0.1) {
        auto wider = p;
        wider.x = x + 1e-3;
        const double dq = optimal_quantity(wider, price, PriceSide::Lower) -
                          optimal_quantity(p, price, PriceSide::Lower);
        if (price > 2 * c + 1e-9) CHECK(dq > 0);
        if (price < 2 * c - 1e-9) CHECK(dq < 0);
      }
      prev = t;
      prev_p = p;
    }
  }
}

TEST_CASE("round half up") {
  CHECK(round_half_up(107.5) == 108);
  CHECK(round_half_up(107.49) == 107);
  CHECK(round_half_up(-0.5) == 0);
}

TEST_CASE("prediction table") {
  const auto rows = prediction_table({preset(TreatmentLabel::HM_LU), preset(TreatmentLabel::HM_HU),
                                       preset(TreatmentLabel::LM_LU), preset(TreatmentLabel::LM_HU)});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].treatment.label == TreatmentLabel::HM_LU);
  CHECK(rows[0].support_start == doctest::Approx(7.5));
  CHECK(rows[1].support_start == doctest::Approx(7.4));
  CHECK(rows[2].support_start == doctest::Approx(10.3));
  CHECK(rows[3].support_start == doctest::Approx(10.0));

  int hu_ties = 0;
  for (const auto& b : rows[1].branches) {
    if (b.quantity != "q=") continue;
    ++hu_ties;
    if (b.lo < 9.0) CHECK(b.hi == doctest::Approx(9.6));
    else CHECK(b.lo == doctest::Approx(9.7));
  }
  CHECK(hu_ties == 2);

  int lm_hu_ties = 0;
  for (const auto& b : rows[3].branches) {
    if (b.quantity != "q=") continue;
    ++lm_hu_ties;
    CHECK(b.expression.find("1440") != std::string::npos);
  }
  CHECK(lm_hu_ties == 1);

  for (const auto& row : rows)
    for (const auto& b : row.branches) CHECK(b.probes.size() <= static_cast<std::size_t>(kProbesPerBranch));

  CHECK(format_prediction_records(rows) == format_prediction_records(
                     prediction_table({preset(TreatmentLabel::HM_LU), preset(TreatmentLabel::HM_HU),
                                       preset(TreatmentLabel::LM_LU), preset(TreatmentLabel::LM_HU)})));
  CHECK_FALSE(format_prediction_table(rows).empty());
}
