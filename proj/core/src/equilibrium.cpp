#include "nvlab/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace nvlab {

namespace {

constexpr double kBoundaryEps = 1e-9;
constexpr double kBisectionTol = 1e-10;

double rhs_constant(const GameParams& g) {
  return g.d_low * g.r + (g.d_high - g.d_low) * g.c + g.c * g.c * g.x / g.r;
}

}  // namespace

double threshold_price(const GameParams& params) {
  const double K = rhs_constant(params);
  const double a = params.d_high;
  const double c2x = params.c * params.c * params.x;
  if (c2x == 0.0) return K / a;

  const double disc = K * K - 4.0 * a * c2x;
  if (disc < 0.0) throw std::domain_error("threshold_price: no real root");
  const double sq = std::sqrt(disc);
  // Stable pair: large root directly, small root via the product of roots.
  const double big = (K + sq) / (2.0 * a);
  const double small = (2.0 * c2x) / (K + sq);
  for (double root : {big, small}) {
    if (root > params.c && root < params.r) return root;
  }
  throw std::domain_error("threshold_price: no root in (c, r)");
}

double equilibrium_value(const GameParams& params) {
  const auto& g = params;
  return g.d_low * (g.r - g.c) - g.c * g.x + g.c * g.c * g.x / g.r;
}

double cdf_constant(const GameParams& params) {
  const auto& g = params;
  const double spread = g.d_high - g.d_low;
  return g.d_low * g.r / spread + g.c + g.c * g.c * g.x / (g.r * spread);
}

double price_cdf(const GameParams& params, double p) {
  const auto& g = params;
  if (!(p >= g.c - 1e-12 && p <= g.r + 1e-12)) {
    throw std::domain_error("price_cdf: price outside [c, r]");
  }
  if (p >= g.r) return 1.0;
  if (p < threshold_price(g)) return 0.0;
  const double tail = (g.r - p) * (g.d_low - g.c * g.c * g.x / (p * g.r)) /
                      ((p - g.c) * (g.d_high - g.d_low));
  return std::clamp(1.0 - tail, 0.0, 1.0);
}

double price_quantile(const GameParams& params, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("price_quantile: u outside [0, 1]");
  const double p_tilde = threshold_price(params);
  if (u == 0.0) return p_tilde;
  if (u == 1.0) return params.r;
  double lo = p_tilde;
  double hi = params.r;
  while (hi - lo >= kBisectionTol) {
    const double mid = 0.5 * (lo + hi);
    if (price_cdf(params, mid) < u) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double optimal_quantity(const GameParams& params, double p, PriceSide side) {
  if (!(p > 0.0)) throw std::domain_error("optimal_quantity: price must be > 0");
  const double mean = side == PriceSide::Lower ? params.d_high : params.d_low;
  return mean + (1.0 - 2.0 * params.c / p) * params.x;
}

TieQuantityRule tie_rule(const GameParams& params) {
  const auto& g = params;
  const double spread = g.d_high - g.d_low;
  if (2.0 * g.x <= spread) return {TieSituation::NoOverlap, 2.0 * g.c, 2.0 * g.c};
  const double four_cx = 4.0 * g.c * g.x;
  return {TieSituation::Overlap, four_cx / (4.0 * g.x - spread), four_cx / spread};
}

TieRegime tie_regime(const GameParams& params, double p) {
  const auto rule = tie_rule(params);
  if (p < rule.lower_boundary - kBoundaryEps) return TieRegime::Low;
  if (p <= rule.upper_boundary + kBoundaryEps) return TieRegime::Middle;
  return TieRegime::High;
}

TieQuantity tie_optimal_quantity(const GameParams& params, double p) {
  const auto& g = params;
  if (!(p >= g.c - 1e-12 && p <= g.r + 1e-12)) {
    throw std::domain_error("tie_optimal_quantity: price outside [c, r]");
  }
  const auto regime = tie_regime(g, p);
  switch (regime) {
    case TieRegime::Low: {
      const double q = g.d_low + (3.0 - 4.0 * g.c / p) * g.x;
      return {regime, q, q};
    }
    case TieRegime::High: {
      const double q = g.d_high + (1.0 - 4.0 * g.c / p) * g.x;
      return {regime, q, q};
    }
    case TieRegime::Middle:
      if (tie_rule(g).situation == TieSituation::NoOverlap) {
        return {regime, g.d_low + g.x, g.d_high - g.x};
      } else {
        const double q = 0.5 * (g.d_high + g.d_low) + (1.0 - 2.0 * g.c / p) * g.x;
        return {regime, q, q};
      }
  }
  throw std::logic_error("unreachable tie regime");
}

double optimal_quantity(const GameParams& params, double p, const PriceOutcome& outcome) {
  switch (outcome.kind) {
    case OutcomeKind::Lower: return optimal_quantity(params, p, PriceSide::Lower);
    case OutcomeKind::Higher: return optimal_quantity(params, p, PriceSide::Higher);
    case OutcomeKind::Tie: return tie_optimal_quantity(params, p).midpoint();
  }
  throw std::logic_error("unreachable outcome kind");
}

long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

EquilibriumSolution ne_summary(const GameParams& params) {
  params.validate();
  EquilibriumSolution s;
  s.params = params;
  s.p_tilde = threshold_price(params);
  s.value = equilibrium_value(params);
  s.k = cdf_constant(params);
  s.support_lo = s.p_tilde;
  s.support_hi = params.r;
  s.median = price_quantile(params, 0.5);
  s.q1 = price_quantile(params, 0.25);
  s.q3 = price_quantile(params, 0.75);
  return s;
}

// ---------------------------------------------------------------------------
// Prediction table.

namespace {

std::string num(double v) {
  if (std::abs(v - std::round(v)) < 1e-9) {
    return std::to_string(static_cast<long long>(std::llround(v)));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

std::string grid_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

// "A - B/p", "A + B/p" or "A".
std::string affine_in_inverse_p(double constant, double inverse_coeff) {
  if (std::abs(inverse_coeff) < 1e-12) return num(constant);
  return num(constant) + (inverse_coeff > 0 ? " - " : " + ") + num(std::abs(inverse_coeff)) + "/p";
}

// Scaled so the leading coefficient of the numerator factor is 10, which
// reproduces the integer form used for the four experimental treatments.
std::string cdf_expression(const GameParams& g) {
  const double scale = 10.0;
  const double b = scale * g.c * g.c * g.x / (g.r * g.d_low);
  const double den = scale * (g.d_high - g.d_low) / g.d_low;
  std::string factor = "(" + num(scale) + "p";
  if (std::abs(b) > 1e-12) factor += " - " + num(b);
  factor += ")";
  return "1 - (" + num(g.r) + " - p)" + factor + "/(" + num(den) + "p(p - " + num(g.c) + "))";
}

std::string tie_expression(const GameParams& g, TieRegime regime) {
  const double four_cx = 4.0 * g.c * g.x;
  switch (regime) {
    case TieRegime::Low: return affine_in_inverse_p(g.d_low + 3.0 * g.x, four_cx);
    case TieRegime::High: return affine_in_inverse_p(g.d_high + g.x, four_cx);
    case TieRegime::Middle:
      if (tie_rule(g).situation == TieSituation::NoOverlap) {
        return "[" + num(g.d_low + g.x) + ", " + num(g.d_high - g.x) + "]";
      }
      return affine_in_inverse_p(0.5 * (g.d_high + g.d_low) + g.x, 2.0 * g.c * g.x);
  }
  return "?";
}

template <class Eval>
PredictionBranch make_branch(std::string quantity, std::string expression, double lo, double hi,
                             Eval eval) {
  PredictionBranch b{std::move(quantity), std::move(expression), lo, hi, {}};
  for (int k = 0; k < kProbesPerBranch; ++k) {
    const double p = lo + (hi - lo) * static_cast<double>(k) / (kProbesPerBranch - 1);
    b.probes.emplace_back(p, eval(p));
  }
  return b;
}

}  // namespace

std::vector<PredictionRow> prediction_table(const std::vector<Treatment>& treatments) {
  std::vector<PredictionRow> rows;
  rows.reserve(treatments.size());
  for (const auto& t : treatments) {
    const auto& g = t.params;
    g.validate();
    PredictionRow row{t, threshold_price(g), 0.0, {}};
    row.support_start = grid_ceil(g, row.p_tilde);

    if (auto below = grid_below(g, row.p_tilde)) {
      row.branches.push_back(make_branch("F", "0", g.c, *below, [](double) { return 0.0; }));
    }
    row.branches.push_back(make_branch("F", cdf_expression(g), row.support_start, g.r,
                                       [&](double p) { return price_cdf(g, p); }));
    row.branches.push_back(make_branch(
        "q<", affine_in_inverse_p(g.d_high + g.x, 2.0 * g.c * g.x), row.support_start, g.r,
        [&](double p) { return optimal_quantity(g, p, PriceSide::Lower); }));

    // Tie regimes as runs of consecutive grid prices inside the support.
    std::vector<std::pair<TieRegime, std::pair<double, double>>> runs;
    for (double p : price_grid(g)) {
      if (p < row.support_start - 1e-9) continue;
      const auto regime = tie_regime(g, p);
      if (runs.empty() || runs.back().first != regime) runs.push_back({regime, {p, p}});
      else runs.back().second.second = p;
    }
    for (const auto& [regime, range] : runs) {
      row.branches.push_back(make_branch("q=", tie_expression(g, regime), range.first, range.second,
                                         [&](double p) { return tie_optimal_quantity(g, p).midpoint(); }));
    }

    row.branches.push_back(make_branch(
        "q>", affine_in_inverse_p(g.d_low + g.x, 2.0 * g.c * g.x), row.support_start, g.r,
        [&](double p) { return optimal_quantity(g, p, PriceSide::Higher); }));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_prediction_records(const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  char buf[160];
  for (const auto& row : rows) {
    const auto& g = row.treatment.params;
    out << "treatment " << to_string(row.treatment.label) << " c=" << num(g.c) << " r=" << num(g.r)
        << " d_H=" << num(g.d_high) << " d_L=" << num(g.d_low) << " x=" << num(g.x) << "\n";
    std::snprintf(buf, sizeof buf, "threshold %.12f support_start %s\n", row.p_tilde,
                  grid_num(row.support_start).c_str());
    out << buf;
    for (const auto& b : row.branches) {
      out << "branch " << b.quantity << " [" << grid_num(b.lo) << ", " << grid_num(b.hi) << "] "
          << b.expression << "\n";
      for (const auto& [p, v] : b.probes) {
        std::snprintf(buf, sizeof buf, "probe %s %.12f %.12f\n", b.quantity.c_str(), p, v);
        out << buf;
      }
    }
    out << "end\n";
  }
  return out.str();
}

std::string format_prediction_table(const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  auto label_for = [](const std::string& q) -> std::string {
    if (q == "F") return "F*(p)";
    if (q == "q<") return "q*  p_i < p_j";
    if (q == "q=") return "q*  p_i = p_j";
    return "q*  p_i > p_j";
  };
  char buf[256];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%s  (threshold %.4f, support [%s, %s])\n",
                  std::string(to_string(row.treatment.label)).c_str(), row.p_tilde,
                  grid_num(row.support_start).c_str(), grid_num(row.treatment.params.r).c_str());
    out << buf;
    for (const auto& b : row.branches) {
      const std::string range = "[" + grid_num(b.lo) + ", " + grid_num(b.hi) + "]";
      std::snprintf(buf, sizeof buf, "  %-15s %-44s if p in %s\n", label_for(b.quantity).c_str(),
                    b.expression.c_str(), range.c_str());
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace nvlab
