#pragma once

// Core domain types for the sequential duopoly price-inventory game:
// treatment parameters, demand segments, price outcomes, and the
// realized/expected profit primitives every other module builds on.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nvlab {

/// Game parameters for one treatment. Prices and costs are in tokens,
/// demands in units.
struct GameParams {
  double c = 3.0;            ///< unit cost
  double r = 12.0;           ///< reservation price
  double d_high = 100.0;     ///< mean demand of the segment won by the lower price
  double d_low = 50.0;       ///< mean demand of the segment left to the higher price
  double x = 20.0;           ///< demand half-width
  double price_step = 0.1;   ///< admissible price increment
  int q_cap = 130;           ///< maximum orderable quantity

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  friend bool operator==(const GameParams&, const GameParams&) = default;
};

enum class TreatmentLabel { HM_LU, HM_HU, LM_LU, LM_HU };

std::string_view to_string(TreatmentLabel label);
std::optional<TreatmentLabel> parse_treatment_label(std::string_view text);

struct Treatment {
  TreatmentLabel label;
  GameParams params;
};

/// The four experimental treatments: c in {3 (HM), 9 (LM)}, x in {20 (LU), 40 (HU)},
/// r = 12, d_H = 100, d_L = 50, q_cap = d_H + x + 10.
Treatment preset(TreatmentLabel label);
std::vector<Treatment> all_presets();

/// Reads key=value lines (c, r, d_H, d_L, x, price_step, q_cap). Blank lines
/// and '#' comments are ignored; unspecified keys keep the HM_LU preset value
/// except q_cap, which defaults to d_H + x + 10.
GameParams parse_params(std::string_view text);
GameParams load_params_file(const std::string& path);

enum class Segment { High, Low };
enum class OutcomeKind { Lower, Higher, Tie };

std::string_view to_string(Segment s);
std::string_view to_string(OutcomeKind k);
std::optional<Segment> parse_segment(std::string_view text);
std::optional<OutcomeKind> parse_outcome_kind(std::string_view text);

/// Result of the price stage for one seller. Lower always wins High, Higher
/// always gets Low; a Tie carries whichever segment the coin assigned.
struct PriceOutcome {
  OutcomeKind kind;
  Segment segment;

  static PriceOutcome lower() { return {OutcomeKind::Lower, Segment::High}; }
  static PriceOutcome higher() { return {OutcomeKind::Higher, Segment::Low}; }
  static PriceOutcome tie(Segment s) { return {OutcomeKind::Tie, s}; }

  bool consistent() const;
  friend bool operator==(const PriceOutcome&, const PriceOutcome&) = default;
};

/// Integer demand drawn uniformly from [mean - half_width, mean + half_width].
struct DemandSpec {
  long mean = 0;
  long half_width = 0;

  long lo() const { return mean - half_width; }
  long hi() const { return mean + half_width; }
  long cardinality() const { return 2 * half_width + 1; }
  bool contains(long d) const { return d >= lo() && d <= hi(); }
};

double segment_mean(const GameParams& params, Segment s);
DemandSpec demand_spec(const GameParams& params, Segment s);

// ---------------------------------------------------------------------------
// Tenth-token arithmetic. Grid prices, costs and profits are whole multiples
// of 0.1 token, so they are carried as integer tenths wherever exactness
// matters (profit accounting, CSV round trips).

/// Nearest integer number of tenths.
std::int64_t to_tenths(double tokens);
/// True when `tokens` is within 1e-9 of a multiple of 0.1.
bool is_tenth_multiple(double tokens);
double from_tenths(std::int64_t tenths);
/// "492.5", "-12.0": always one decimal place.
std::string format_tenths(std::int64_t tenths);
/// Parses a decimal with at most one fractional digit into tenths.
std::optional<std::int64_t> parse_tenths(std::string_view text);

// ---------------------------------------------------------------------------
// Price grid {c, c + step, ..., r}.

bool on_price_grid(const GameParams& params, double p);
/// Nearest grid price, clamped to [c, r].
double snap_to_grid(const GameParams& params, double p);
/// Smallest grid price >= p (clamped to r).
double grid_ceil(const GameParams& params, double p);
/// Largest grid price strictly below p, if any.
std::optional<double> grid_below(const GameParams& params, double p);
std::vector<double> price_grid(const GameParams& params);

// ---------------------------------------------------------------------------
// Profit primitives.

/// p * min(q, d) - c * q.
double realized_profit(double p, long q, long d, double c);
/// Same, in exact tenths for grid prices and costs.
std::int64_t realized_profit_tenths(std::int64_t p_tenths, long q, long d, std::int64_t c_tenths);

/// Expected profit against demand uniform on the continuous interval
/// [mean - x, mean + x]. Requires x > 0.
double expected_profit_continuous(const GameParams& params, double mean, double p, double q);

/// Exact expectation over the integer demand support of `spec`.
double expected_profit_discrete(const GameParams& params, const DemandSpec& spec, double p, long q);

}  // namespace nvlab
