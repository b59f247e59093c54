#pragma once

// Descriptive statistics over session logs: two-level price summaries,
// order quantities by price-competition outcome, pull-to-center indices and
// their asymmetry, and CSV ingestion with full invariant checking.

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nvlab/market.hpp"
#include "nvlab/simulation.hpp"

namespace nvlab::analysis {

// ---------------------------------------------------------------------------
// Small statistics helpers (linear-interpolation quantiles, R type 7).

double quantile(std::vector<double> values, double prob);
double median(std::vector<double> values);
double mean(const std::vector<double>& values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_sd(const std::vector<double>& values);
/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

// ---------------------------------------------------------------------------
// Prices.

struct PriceSummary {
  double median = 0.0;
  double mean = 0.0;
  double iqr = 0.0;
  double prop_at_r = 0.0;
  double prop_below_threshold = 0.0;  ///< strictly below the exact threshold root
  std::size_t n = 0;
};

struct PriceStats {
  std::vector<std::pair<int, PriceSummary>> groups;  ///< by group id
  PriceSummary pooled;         ///< each field averaged over groups
  PriceSummary sd_across_groups;
  double ne_median = 0.0;
  double ne_iqr = 0.0;
  double p_tilde = 0.0;
};

/// Summaries per fixed group first, then averaged across groups.
/// Throws std::invalid_argument for an empty log or a group without records.
PriceStats price_stats(const sim::SessionLog& log, const GameParams& params);

// ---------------------------------------------------------------------------
// Quantities.

struct QuantitySplit {
  OutcomeKind kind = OutcomeKind::Lower;
  std::size_t count = 0;
  double mean_q = 0.0;
  double sd_individual = 0.0;  ///< across individual decisions
  double sd_groups = 0.0;      ///< across fixed-group means
  double median_price = 0.0;
  double q_star = 0.0;         ///< optimal order at the split's median price
};

struct QuantityStats {
  std::array<QuantitySplit, 3> splits;  ///< Lower, Higher, Tie
  std::size_t total = 0;

  const QuantitySplit& split(OutcomeKind k) const { return splits[static_cast<std::size_t>(k)]; }
};

QuantityStats quantity_stats(const sim::SessionLog& log, const GameParams& params);

// ---------------------------------------------------------------------------
// Pull-to-center.

inline constexpr double kDefaultAnchorEpsilon = 0.5;

/// One usable round: (q* - q) / (q - anchor) with anchor d_H after a lower
/// price and d_L after a higher price. Ties never enter.
struct PtcRound {
  int subject = 0;
  int group = 0;
  int round = 0;
  OutcomeKind kind = OutcomeKind::Lower;
  double price = 0.0;
  double ratio = 0.0;
};

struct SubjectPtc {
  int subject = 0;
  int group = 0;
  std::optional<double> alpha_lp;
  std::optional<double> alpha_hp;
  int n_lp = 0;
  int n_hp = 0;
  int excluded_lp = 0;  ///< |q - d_H| < epsilon
  int excluded_hp = 0;  ///< |q - d_L| < epsilon
  std::optional<double> pooled_sd;
  std::optional<double> d;  ///< (alpha_lp - alpha_hp) / pooled_sd
};

struct PtcReport {
  std::vector<SubjectPtc> subjects;
  std::optional<double> mean_alpha_lp;  ///< over subjects with alpha_lp
  std::optional<double> mean_alpha_hp;
  std::optional<double> mean_d;
  int n_d = 0;
  /// Mean of every usable per-round ratio in each class.
  std::optional<double> mean_ratio_lp;
  std::optional<double> mean_ratio_hp;
  int rounds_lp = 0;
  int rounds_hp = 0;
};

/// (q_star - q) / (q - anchor).
double ptc_ratio(double q_star, double q, double anchor);

std::vector<PtcRound> ptc_rounds(const sim::SessionLog& log, const GameParams& params,
                                 double eps_anchor = kDefaultAnchorEpsilon);

/// Throws std::invalid_argument unless eps_anchor > 0.
PtcReport ptc_indices(const sim::SessionLog& log, const GameParams& params,
                      double eps_anchor = kDefaultAnchorEpsilon);

struct QuintileBin {
  double lo = 0.0;  ///< smallest price in the bin
  double hi = 0.0;  ///< largest price in the bin
  std::size_t count = 0;
  double mean_ratio = 0.0;
  double sd_ratio = 0.0;
};

struct QuintileReport {
  std::vector<QuintileBin> lower;   ///< rounds won with the lower price
  std::vector<QuintileBin> higher;  ///< rounds lost with the higher price
};

/// Bins by the empirical price quintiles of each class. Coinciding edges
/// collapse, so heavily clustered prices give fewer than five bins.
std::vector<QuintileBin> quintile_bins(const std::vector<std::pair<double, double>>& price_ratio);
QuintileReport ptc_by_price_quintile(const sim::SessionLog& log, const GameParams& params,
                                     double eps_anchor = kDefaultAnchorEpsilon);

/// Two-sided sign-test p-value for a monotone trend in successive bin means.
double trend_sign_test(const std::vector<QuintileBin>& bins);

// ---------------------------------------------------------------------------
// Deviation from the equilibrium benchmark.

struct DeviationReport {
  double median_gap = 0.0;  ///< observed median - NE median
  double iqr_gap = 0.0;
  double mass_at_r = 0.0;
  double mass_below_threshold = 0.0;
  std::array<std::optional<double>, 3> q_gap;  ///< mean q - q*(median p), by outcome
};

DeviationReport compare_to_ne(const PriceStats& prices, const QuantityStats& quantities,
                              const GameParams& params);

// ---------------------------------------------------------------------------
// Ingestion.

struct IngestProblem {
  std::size_t line = 0;  ///< 1-based line in the file (the header is line 1); 0 if file-wide
  std::string message;
};

class IngestError : public std::runtime_error {
 public:
  explicit IngestError(std::vector<IngestProblem> problems);
  const std::vector<IngestProblem>& problems() const { return problems_; }

 private:
  std::vector<IngestProblem> problems_;
};

/// Parses and validates a session CSV. Parameters come from the treatment
/// label unless `params` overrides them. Throws IngestError listing every
/// problem with its line number.
sim::SessionLog ingest_csv_text(const std::string& text,
                                const std::optional<GameParams>& params = std::nullopt);
sim::SessionLog ingest_csv(const std::string& path,
                           const std::optional<GameParams>& params = std::nullopt);

// ---------------------------------------------------------------------------
// Reports.

struct FullReport {
  PriceStats prices;
  QuantityStats quantities;
  PtcReport ptc;
  QuintileReport quintiles;
  DeviationReport deviation;
};

FullReport analyze(const sim::SessionLog& log, double eps_anchor = kDefaultAnchorEpsilon);
/// Aligned plain-text tables (price summary, quantities by outcome, PtC).
std::string format_report(const sim::SessionLog& log, const FullReport& report);
/// Structured record of the same content.
std::string report_json(const sim::SessionLog& log, const FullReport& report);

}  // namespace nvlab::analysis
