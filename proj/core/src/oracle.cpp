#include "nvlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "nvlab/equilibrium.hpp"

namespace nvlab::oracle {

namespace {

template <class T, class Eval>
BestResponseReport<T> sweep(const std::vector<T>& candidates, Eval eval) {
  BestResponseReport<T> report;
  std::vector<double> values;
  values.reserve(candidates.size());
  double best = -std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    const double v = eval(cand);
    values.push_back(v);
    best = std::max(best, v);
    worst = std::min(worst, v);
  }
  const double tol = kArgmaxRelTol * std::max(1.0, std::abs(best));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (values[i] >= best - tol) report.argmax.push_back(candidates[i]);
  }
  std::sort(report.argmax.begin(), report.argmax.end());
  report.max_value = best;
  report.spread = best - worst;
  return report;
}

std::vector<long> order_range(const GameParams& params) {
  std::vector<long> qs(static_cast<std::size_t>(params.q_cap) + 1);
  for (long q = 0; q <= params.q_cap; ++q) qs[static_cast<std::size_t>(q)] = q;
  return qs;
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

// Root of d_H p + c^2 x / p = K on (c, r) by plain bisection, kept apart from
// the quadratic formula used in production.
double threshold_by_bisection(const GameParams& g) {
  const double K = g.d_low * g.r + (g.d_high - g.d_low) * g.c + g.c * g.c * g.x / g.r;
  auto h = [&](double p) { return g.d_high * p + g.c * g.c * g.x / p - K; };
  double lo = g.c;
  double hi = g.r;
  for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

BestResponseReport<long> best_quantity_discrete(const GameParams& params, const DemandSpec& spec,
                                                double p) {
  return sweep(order_range(params),
               [&](long q) { return expected_profit_discrete(params, spec, p, q); });
}

BestResponseReport<long> best_tie_quantity_discrete(const GameParams& params, double p) {
  const auto high = demand_spec(params, Segment::High);
  const auto low = demand_spec(params, Segment::Low);
  return sweep(order_range(params), [&](long q) {
    return 0.5 * expected_profit_discrete(params, high, p, q) +
           0.5 * expected_profit_discrete(params, low, p, q);
  });
}

double conditional_profit(const GameParams& params, double mean, double p) {
  const auto& g = params;
  return mean * (p - g.c) - g.c * g.x + g.c * g.c * g.x / p;
}

double price_objective(const GameParams& params, const std::function<double(double)>& opponent_cdf,
                       double p) {
  const double lose = opponent_cdf(p);
  return lose * conditional_profit(params, params.d_low, p) +
         (1.0 - lose) * conditional_profit(params, params.d_high, p);
}

BestResponseReport<double> best_price_response(const GameParams& params,
                                               const std::function<double(double)>& opponent_cdf,
                                               const std::vector<double>& grid,
                                               double support_lo, double support_hi) {
  double prev = -1.0;
  for (double p : grid) {
    const double f = opponent_cdf(p);
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("best_price_response: CDF outside [0, 1]");
    if (f < prev - 1e-15) throw std::invalid_argument("best_price_response: CDF is not monotone");
    prev = f;
  }
  auto report = sweep(grid, [&](double p) { return price_objective(params, opponent_cdf, p); });

  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (double p : grid) {
    if (p < support_lo - 1e-12 || p > support_hi + 1e-12) continue;
    const double v = price_objective(params, opponent_cdf, p);
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  report.spread = hi >= lo ? hi - lo : 0.0;
  return report;
}

double indifference_residual(const GameParams& params, int n_grid) {
  if (n_grid < 2) throw std::invalid_argument("indifference_residual: n_grid must be >= 2");
  const double p_tilde = threshold_price(params);
  const double V = equilibrium_value(params);
  auto F = [&](double p) { return price_cdf(params, p); };
  double worst = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    const double p = i == n_grid - 1
                         ? params.r
                         : p_tilde + (params.r - p_tilde) * static_cast<double>(i) / (n_grid - 1);
    worst = std::max(worst, std::abs(price_objective(params, F, p) - V));
  }
  return worst;
}

CdfValidityReport cdf_validity(const GameParams& params, int n_grid) {
  if (n_grid < 2) throw std::invalid_argument("cdf_validity: n_grid must be >= 2");
  CdfValidityReport rep;
  const double p_tilde = threshold_price(params);
  rep.endpoints = std::abs(price_cdf(params, p_tilde)) < 1e-9 && price_cdf(params, params.r) == 1.0;
  double prev = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    const double p = i == n_grid - 1
                         ? params.r
                         : p_tilde + (params.r - p_tilde) * static_cast<double>(i) / (n_grid - 1);
    const double f = price_cdf(params, p);
    if (f < 0.0 || f > 1.0) rep.in_range = false;
    if (i > 0) {
      if (f < prev) rep.monotone = false;
      rep.max_jump = std::max(rep.max_jump, f - prev);
    }
    prev = f;
  }
  rep.no_atoms = rep.max_jump < 10.0 / n_grid;
  return rep;
}

std::vector<CheckResult> verify_treatment(const Treatment& treatment, std::uint64_t seed) {
  const auto& g = treatment.params;
  std::vector<CheckResult> out;
  const double p_tilde = threshold_price(g);
  const double V = equilibrium_value(g);

  {
    const double ref = threshold_by_bisection(g);
    const bool ok = std::abs(ref - p_tilde) < 1e-9 && p_tilde > g.c && p_tilde < g.r;
    out.push_back({"threshold", ok, fmt("p~=%.6f bisection=%.6f", p_tilde, ref)});
  }
  {
    const auto rep = cdf_validity(g, 10000);
    out.push_back({"cdf-validity", rep.passed(), fmt("max jump %.2e", rep.max_jump)});
  }
  {
    const double res = indifference_residual(g, 10000);
    out.push_back({"indifference", res < 1e-9 * V, fmt("residual %.2e (V=%.1f)", res, V)});
  }
  {
    auto F = [&](double p) { return price_cdf(g, p); };
    std::vector<double> fine;
    for (double p = p_tilde; p < g.r; p += 0.01) fine.push_back(p);
    fine.push_back(g.r);
    const auto rep = best_price_response(g, F, fine, p_tilde, g.r);
    out.push_back({"support-flat", rep.spread < 1e-6 * V, fmt("spread %.2e", rep.spread)});

    bool dominated = true;
    double worst_gap = std::numeric_limits<double>::infinity();
    for (double p : price_grid(g)) {
      if (p >= p_tilde) break;
      const double v = price_objective(g, F, p);
      worst_gap = std::min(worst_gap, V - v);
      if (!(v < V)) dominated = false;
    }
    out.push_back({"dominance", dominated, fmt("min gap below p~ %.3f", worst_gap)});
  }

  std::mt19937_64 rng(seed);
  const auto grid = price_grid(g);
  // p = c earns nothing on any unit, so every order up to the lowest demand ties.
  std::uniform_int_distribution<std::size_t> pick(1, grid.size() - 1);
  {
    int bad = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double p = grid[pick(rng)];
      const auto side = i % 2 == 0 ? PriceSide::Lower : PriceSide::Higher;
      const auto seg = side == PriceSide::Lower ? Segment::High : Segment::Low;
      const long target = round_half_up(optimal_quantity(g, p, side));
      for (long q : best_quantity_discrete(g, demand_spec(g, seg), p).argmax) {
        const double d = std::abs(static_cast<double>(q - target));
        worst = std::max(worst, d);
        if (d > 1.0) ++bad;
      }
    }
    out.push_back({"quantity-oracle", bad == 0, fmt("max |argmax - q*| = %.0f", worst)});
  }
  {
    int bad = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double p = grid[pick(rng)];
      const auto tq = tie_optimal_quantity(g, p);
      for (long q : best_tie_quantity_discrete(g, p).argmax) {
        // Any integer inside an optimal interval counts as agreement.
        const double lo = std::floor(tq.lo + 0.5);
        const double hi = std::floor(tq.hi + 0.5);
        const double qd = static_cast<double>(q);
        const double d = qd < lo ? lo - qd : (qd > hi ? qd - hi : 0.0);
        worst = std::max(worst, d);
        if (d > 1.0) ++bad;
      }
    }
    out.push_back({"tie-oracle", bad == 0, fmt("max distance = %.0f", worst)});
  }
  {
    // Comparative statics in x around this treatment's cost level.
    bool decreasing = true;
    bool fosd = true;
    double prev_threshold = std::numeric_limits<double>::infinity();
    GameParams prev_params = g;
    for (int xi = 5; xi <= 40; xi += 5) {
      GameParams h = g;
      h.x = xi;
      h.q_cap = std::max(h.q_cap, static_cast<int>(h.d_high + h.x) + 10);
      const double t = threshold_price(h);
      if (!(t < prev_threshold)) decreasing = false;
      if (xi > 5) {
        for (int i = 0; i <= 200; ++i) {
          const double p = t + (g.r - t) * i / 200.0;
          if (p < threshold_price(prev_params)) continue;
          if (price_cdf(h, p) < price_cdf(prev_params, p) - 1e-12) fosd = false;
        }
      }
      prev_threshold = t;
      prev_params = h;
    }
    bool signs = true;
    for (double p : grid) {
      if (std::abs(p - 2.0 * g.c) < 1e-9) continue;
      GameParams a = g, b = g;
      a.x = g.x;
      b.x = g.x + 1.0;
      const double dq = optimal_quantity(b, p, PriceSide::Lower) - optimal_quantity(a, p, PriceSide::Lower);
      if ((p > 2.0 * g.c) != (dq > 0.0)) signs = false;
    }
    out.push_back({"statics-threshold", decreasing, "x in {5,...,40}"});
    out.push_back({"statics-fosd", fosd, "x in {5,...,40}"});
    out.push_back({"statics-quantity", signs, "sign of dq*/dx vs p - 2c"});
  }
  return out;
}

}  // namespace nvlab::oracle
