#pragma once

// Closed-form symmetric subgame-perfect equilibrium of the price-inventory
// duopoly: the threshold price, the mixed pricing CDF and its inverse, the
// stage-2 order rules (including price ties), and the piecewise
// prediction table.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "nvlab/market.hpp"

namespace nvlab {

/// Lowest price in the equilibrium support: the root in (c, r) of
/// d_H p^2 - K p + c^2 x = 0 with K = d_L r + (d_H - d_L) c + c^2 x / r.
/// Throws std::domain_error when no root lies in (c, r).
double threshold_price(const GameParams& params);

/// Constant equilibrium expected profit V = d_L (r - c) - c x + c^2 x / r.
double equilibrium_value(const GameParams& params);

/// Integration constant k of the CDF construction.
double cdf_constant(const GameParams& params);

/// F*(p): 0 below the threshold, 1 at r. Throws std::domain_error for p
/// outside [c, r].
double price_cdf(const GameParams& params, double p);

/// Inverse of price_cdf by bisection to |hi - lo| < 1e-10.
/// u = 0 gives the threshold price, u = 1 gives r.
double price_quantile(const GameParams& params, double u);

/// Inverse-transform draw from F*. With `snap`, the draw is moved to the
/// nearest grid price, but never below the first grid price of the support.
template <class Engine>
double sample_price(const GameParams& params, Engine& rng, bool snap = false) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double p = price_quantile(params, unit(rng));
  if (!snap) return p;
  return std::max(snap_to_grid(params, p), grid_ceil(params, threshold_price(params)));
}

enum class PriceSide { Lower, Higher };

/// d + (1 - 2c/p) x with d = d_H (Lower) or d_L (Higher). Real-valued.
double optimal_quantity(const GameParams& params, double p, PriceSide side);

enum class TieSituation { NoOverlap, Overlap };

enum class TieRegime {
  Low,     ///< d_L + (3 - 4c/p) x
  Middle,  ///< NoOverlap: the interval [d_L + x, d_H - x]; Overlap: (d_H + d_L)/2 + (1 - 2c/p) x
  High,    ///< d_H + (1 - 4c/p) x
};

/// Optimal order when both sellers post the same price. `lo == hi` except
/// at p = 2c without overlap, where every order in [lo, hi] is optimal.
struct TieQuantity {
  TieRegime regime;
  double lo;
  double hi;

  double midpoint() const { return 0.5 * (lo + hi); }
  bool is_interval() const { return lo != hi; }
};

/// Price boundaries separating the tie regimes. NoOverlap: both equal 2c.
/// Overlap: 4cx / (4x - (d_H - d_L)) and 4cx / (d_H - d_L).
struct TieQuantityRule {
  TieSituation situation;
  double lower_boundary;
  double upper_boundary;
};

TieQuantityRule tie_rule(const GameParams& params);
TieRegime tie_regime(const GameParams& params, double p);
TieQuantity tie_optimal_quantity(const GameParams& params, double p);

/// Quantity a seller should order once its outcome is known, as a real number.
/// Ties at an optimal interval resolve to its midpoint.
double optimal_quantity(const GameParams& params, double p, const PriceOutcome& outcome);

/// Round half up, the convention for integer order contexts.
long round_half_up(double v);

struct EquilibriumSolution {
  GameParams params;
  double p_tilde = 0.0;
  double value = 0.0;
  double k = 0.0;
  double support_lo = 0.0;
  double support_hi = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;

  double iqr() const { return q3 - q1; }
};

EquilibriumSolution ne_summary(const GameParams& params);

// ---------------------------------------------------------------------------
// Prediction table.

/// One piece of a piecewise rule, valid on the grid interval [lo, hi].
struct PredictionBranch {
  std::string quantity;    ///< "F", "q<", "q=", "q>"
  std::string expression;  ///< rendered closed form in p
  double lo = 0.0;
  double hi = 0.0;
  /// Exact branch value at each probe price.
  std::vector<std::pair<double, double>> probes;
};

struct PredictionRow {
  Treatment treatment;
  double p_tilde = 0.0;
  double support_start = 0.0;  ///< smallest grid price >= p_tilde
  std::vector<PredictionBranch> branches;
};

inline constexpr int kProbesPerBranch = 5;

std::vector<PredictionRow> prediction_table(const std::vector<Treatment>& treatments);

/// Line-oriented record format used for the golden reproduction file.
std::string format_prediction_records(const std::vector<PredictionRow>& rows);
/// Aligned plain-text rendering for terminals.
std::string format_prediction_table(const std::vector<PredictionRow>& rows);

}  // namespace nvlab
