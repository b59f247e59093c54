#pragma once

// Brute-force checks of the closed forms. Nothing here calls the
// equilibrium order rules: quantities are found by exhaustive search over the
// integer demand support, and price values by direct evaluation of the
// stage-1 objective.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nvlab/market.hpp"

namespace nvlab::oracle {

template <class T>
struct BestResponseReport {
  std::vector<T> argmax;  ///< every maximizer, smallest first
  double max_value = 0.0;
  double spread = 0.0;    ///< max - min of the objective over the evaluated set

  /// max_value minus the objective at `candidate` (>= 0 by construction).
  double gap_to(double candidate_value) const { return max_value - candidate_value; }
};

/// Relative tolerance for treating two objective values as tied.
inline constexpr double kArgmaxRelTol = 1e-12;

/// Exhaustive sweep of expected_profit_discrete over q in [0, q_cap].
BestResponseReport<long> best_quantity_discrete(const GameParams& params, const DemandSpec& spec,
                                                double p);

/// Same sweep for a price tie: the seller faces either segment with equal odds.
BestResponseReport<long> best_tie_quantity_discrete(const GameParams& params, double p);

/// Expected profit at the optimal order after winning (mean = d_H) or losing
/// (mean = d_L): mean (p - c) - c x + c^2 x / p.
double conditional_profit(const GameParams& params, double mean, double p);

/// Stage-1 objective against an opponent whose prices follow `opponent_cdf`:
/// F(p) * E[profit | lose] + (1 - F(p)) * E[profit | win].
double price_objective(const GameParams& params, const std::function<double(double)>& opponent_cdf,
                       double p);

/// Evaluates price_objective on every grid price. `spread` is max - min over
/// grid prices inside [support_lo, support_hi]. Throws std::invalid_argument
/// if the CDF decreases along the grid or leaves [0, 1].
BestResponseReport<double> best_price_response(const GameParams& params,
                                               const std::function<double(double)>& opponent_cdf,
                                               const std::vector<double>& grid,
                                               double support_lo, double support_hi);

/// Max over an n_grid mesh of the support of |objective(F*) - V|.
double indifference_residual(const GameParams& params, int n_grid);

struct CdfValidityReport {
  bool monotone = true;
  bool in_range = true;
  bool endpoints = true;  ///< F(p~) = 0 and F(r) = 1
  bool no_atoms = true;   ///< max adjacent jump < 10 / n_grid
  double max_jump = 0.0;

  bool passed() const { return monotone && in_range && endpoints && no_atoms; }
};

CdfValidityReport cdf_validity(const GameParams& params, int n_grid);

// ---------------------------------------------------------------------------
// Verification suite used by the `verify` subcommand.

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs every oracle check for one treatment. `seed` drives the random price
/// samples of the quantity checks.
std::vector<CheckResult> verify_treatment(const Treatment& treatment, std::uint64_t seed = 20250101);

}  // namespace nvlab::oracle
