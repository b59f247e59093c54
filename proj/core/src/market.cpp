#include "nvlab/market.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvlab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("invalid GameParams: ") + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw std::invalid_argument("params: bad value for '" + std::string(key) + "': '" +
                                std::string(value) + "'");
  }
  return out;
}

}  // namespace

void GameParams::validate() const {
  require(c > 0.0, "c must be > 0");
  require(c < r, "c must be < r");
  require(d_low > 0.0, "d_L must be > 0");
  require(d_low < d_high, "d_L must be < d_H");
  require(x >= 0.0, "x must be >= 0");
  require(x <= d_low, "x must be <= d_L");
  require(price_step > 0.0, "price_step must be > 0");
  require(is_tenth_multiple(c) && is_tenth_multiple(r), "c and r must be multiples of 0.1");
  require(is_tenth_multiple(price_step), "price_step must be a multiple of 0.1");
  require((to_tenths(r) - to_tenths(c)) % to_tenths(price_step) == 0,
          "r - c must be a whole number of price steps");
  require(static_cast<double>(q_cap) >= d_high + x, "q_cap must be >= d_H + x");
}

std::string_view to_string(TreatmentLabel label) {
  switch (label) {
    case TreatmentLabel::HM_LU: return "HM_LU";
    case TreatmentLabel::HM_HU: return "HM_HU";
    case TreatmentLabel::LM_LU: return "LM_LU";
    case TreatmentLabel::LM_HU: return "LM_HU";
  }
  return "?";
}

std::optional<TreatmentLabel> parse_treatment_label(std::string_view text) {
  for (auto label : {TreatmentLabel::HM_LU, TreatmentLabel::HM_HU, TreatmentLabel::LM_LU,
                     TreatmentLabel::LM_HU}) {
    if (to_string(label) == text) return label;
  }
  return std::nullopt;
}

Treatment preset(TreatmentLabel label) {
  GameParams p;
  const bool high_margin = label == TreatmentLabel::HM_LU || label == TreatmentLabel::HM_HU;
  const bool low_uncertainty = label == TreatmentLabel::HM_LU || label == TreatmentLabel::LM_LU;
  p.c = high_margin ? 3.0 : 9.0;
  p.r = 12.0;
  p.d_high = 100.0;
  p.d_low = 50.0;
  p.x = low_uncertainty ? 20.0 : 40.0;
  p.price_step = 0.1;
  p.q_cap = static_cast<int>(p.d_high + p.x) + 10;
  return {label, p};
}

std::vector<Treatment> all_presets() {
  return {preset(TreatmentLabel::HM_LU), preset(TreatmentLabel::LM_LU),
          preset(TreatmentLabel::HM_HU), preset(TreatmentLabel::LM_HU)};
}

GameParams parse_params(std::string_view text) {
  GameParams p = preset(TreatmentLabel::HM_LU).params;
  bool cap_given = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("params line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "c") p.c = parse_number(key, value);
    else if (key == "r") p.r = parse_number(key, value);
    else if (key == "d_H") p.d_high = parse_number(key, value);
    else if (key == "d_L") p.d_low = parse_number(key, value);
    else if (key == "x") p.x = parse_number(key, value);
    else if (key == "price_step") p.price_step = parse_number(key, value);
    else if (key == "q_cap") {
      p.q_cap = static_cast<int>(parse_number(key, value));
      cap_given = true;
    } else {
      throw std::invalid_argument("params line " + std::to_string(line_no) + ": unknown key '" +
                                  std::string(key) + "'");
    }
  }
  if (!cap_given) p.q_cap = static_cast<int>(std::ceil(p.d_high + p.x)) + 10;
  p.validate();
  return p;
}

GameParams load_params_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open params file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_params(buf.str());
}

std::string_view to_string(Segment s) { return s == Segment::High ? "High" : "Low"; }

std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Lower: return "Lower";
    case OutcomeKind::Higher: return "Higher";
    case OutcomeKind::Tie: return "Tie";
  }
  return "?";
}

std::optional<Segment> parse_segment(std::string_view text) {
  if (text == "High") return Segment::High;
  if (text == "Low") return Segment::Low;
  return std::nullopt;
}

std::optional<OutcomeKind> parse_outcome_kind(std::string_view text) {
  if (text == "Lower") return OutcomeKind::Lower;
  if (text == "Higher") return OutcomeKind::Higher;
  if (text == "Tie") return OutcomeKind::Tie;
  return std::nullopt;
}

bool PriceOutcome::consistent() const {
  if (kind == OutcomeKind::Lower) return segment == Segment::High;
  if (kind == OutcomeKind::Higher) return segment == Segment::Low;
  return true;
}

double segment_mean(const GameParams& params, Segment s) {
  return s == Segment::High ? params.d_high : params.d_low;
}

DemandSpec demand_spec(const GameParams& params, Segment s) {
  const double mean = segment_mean(params, s);
  if (mean != std::floor(mean) || params.x != std::floor(params.x)) {
    throw std::invalid_argument("integer demand support needs integer means and half-width");
  }
  return {static_cast<long>(mean), static_cast<long>(params.x)};
}

std::int64_t to_tenths(double tokens) { return std::llround(tokens * 10.0); }

bool is_tenth_multiple(double tokens) {
  return std::abs(tokens * 10.0 - std::round(tokens * 10.0)) < 1e-8;
}

double from_tenths(std::int64_t tenths) { return static_cast<double>(tenths) / 10.0; }

std::string format_tenths(std::int64_t tenths) {
  const bool neg = tenths < 0;
  const auto mag = static_cast<std::uint64_t>(neg ? -tenths : tenths);
  return (neg ? "-" : "") + std::to_string(mag / 10) + "." + std::to_string(mag % 10);
}

std::optional<std::int64_t> parse_tenths(std::string_view text) {
  if (text.empty()) return std::nullopt;
  bool neg = false;
  if (text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  const auto whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() || frac.size() > 1 || (dot != std::string_view::npos && frac.empty())) {
    return std::nullopt;
  }
  std::int64_t w = 0;
  auto [ptr, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), w);
  if (ec != std::errc() || ptr != whole.data() + whole.size()) return std::nullopt;
  std::int64_t f = 0;
  if (!frac.empty()) {
    if (frac[0] < '0' || frac[0] > '9') return std::nullopt;
    f = frac[0] - '0';
  }
  const std::int64_t v = w * 10 + f;
  return neg ? -v : v;
}

bool on_price_grid(const GameParams& params, double p) {
  if (!is_tenth_multiple(p)) return false;
  const auto pt = to_tenths(p);
  const auto ct = to_tenths(params.c);
  const auto rt = to_tenths(params.r);
  return pt >= ct && pt <= rt && (pt - ct) % to_tenths(params.price_step) == 0;
}

double snap_to_grid(const GameParams& params, double p) {
  const double k = std::round((p - params.c) / params.price_step);
  const double snapped = params.c + k * params.price_step;
  return from_tenths(to_tenths(std::clamp(snapped, params.c, params.r)));
}

double grid_ceil(const GameParams& params, double p) {
  double k = std::ceil((p - params.c) / params.price_step - 1e-9);
  if (k < 0) k = 0;
  return from_tenths(to_tenths(std::min(params.c + k * params.price_step, params.r)));
}

std::optional<double> grid_below(const GameParams& params, double p) {
  const double k = std::ceil((p - params.c) / params.price_step - 1e-9) - 1.0;
  if (k < 0) return std::nullopt;
  return from_tenths(to_tenths(std::min(params.c + k * params.price_step, params.r)));
}

std::vector<double> price_grid(const GameParams& params) {
  std::vector<double> grid;
  const auto ct = to_tenths(params.c);
  const auto rt = to_tenths(params.r);
  const auto st = to_tenths(params.price_step);
  for (auto t = ct; t <= rt; t += st) grid.push_back(from_tenths(t));
  return grid;
}

double realized_profit(double p, long q, long d, double c) {
  return p * static_cast<double>(std::min(q, d)) - c * static_cast<double>(q);
}

std::int64_t realized_profit_tenths(std::int64_t p_tenths, long q, long d, std::int64_t c_tenths) {
  return p_tenths * std::min(q, d) - c_tenths * q;
}

double expected_profit_continuous(const GameParams& params, double mean, double p, double q) {
  const double x = params.x;
  if (x <= 0.0) {
    throw std::domain_error("expected_profit_continuous: x must be > 0 (use realized_profit with d = mean)");
  }
  const double lo = mean - x;
  const double hi = mean + x;
  const double c = params.c;
  if (q < lo) return (p - c) * q;
  if (q > hi) return p * mean - c * q;
  return p * q * (hi - q) / (2.0 * x) + p * (q * q - lo * lo) / (4.0 * x) - c * q;
}

double expected_profit_discrete(const GameParams& params, const DemandSpec& spec, double p, long q) {
  if (spec.half_width < 0) throw std::invalid_argument("expected_profit_discrete: empty demand support");
  // Sum of min(q, d) over the support in closed integer arithmetic, then one
  // floating division.
  long long sold = 0;
  for (long d = spec.lo(); d <= spec.hi(); ++d) sold += std::min(q, d);
  const double n = static_cast<double>(spec.cardinality());
  return p * static_cast<double>(sold) / n - params.c * static_cast<double>(q);
}

}  // namespace nvlab
