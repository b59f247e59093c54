#include "nvlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "nvlab/equilibrium.hpp"

namespace nvlab::analysis {

namespace {

constexpr std::size_t idx(OutcomeKind k) { return static_cast<std::size_t>(k); }

bool at_reservation(const GameParams& g, double p) {
  if (is_tenth_multiple(p) && is_tenth_multiple(g.r)) return to_tenths(p) == to_tenths(g.r);
  return p == g.r;
}

PriceSummary summarize(const std::vector<double>& prices, const GameParams& g, double p_tilde) {
  PriceSummary s;
  s.n = prices.size();
  s.median = median(prices);
  s.mean = mean(prices);
  s.iqr = quantile(prices, 0.75) - quantile(prices, 0.25);
  std::size_t at_r = 0;
  std::size_t below = 0;
  for (double p : prices) {
    if (at_reservation(g, p)) ++at_r;
    if (p < p_tilde) ++below;
  }
  s.prop_at_r = static_cast<double>(at_r) / static_cast<double>(s.n);
  s.prop_below_threshold = static_cast<double>(below) / static_cast<double>(s.n);
  return s;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v, const char* pattern = "%.3f") {
  return v ? fmt(pattern, *v) : std::string("n/a");
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistics helpers.

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile: prob outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean: empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Prices.

PriceStats price_stats(const sim::SessionLog& log, const GameParams& params) {
  if (log.records.empty()) throw std::invalid_argument("price_stats: empty log");
  PriceStats out;
  out.p_tilde = threshold_price(params);
  const auto ne = ne_summary(params);
  out.ne_median = ne.median;
  out.ne_iqr = ne.iqr();

  std::map<int, std::vector<double>> by_group;
  for (std::size_t gi = 0; gi < log.groups.size(); ++gi) by_group[static_cast<int>(gi) + 1];
  for (const auto& r : log.records) by_group[r.group].push_back(r.price);

  for (const auto& [id, prices] : by_group) {
    if (prices.empty()) throw std::invalid_argument("price_stats: group " + std::to_string(id) + " has no records");
    out.groups.emplace_back(id, summarize(prices, params, out.p_tilde));
  }

  auto across = [&](auto field) {
    std::vector<double> v;
    for (const auto& [id, s] : out.groups) v.push_back(s.*field);
    return std::pair(mean(v), sample_sd(v));
  };
  std::tie(out.pooled.median, out.sd_across_groups.median) = across(&PriceSummary::median);
  std::tie(out.pooled.mean, out.sd_across_groups.mean) = across(&PriceSummary::mean);
  std::tie(out.pooled.iqr, out.sd_across_groups.iqr) = across(&PriceSummary::iqr);
  std::tie(out.pooled.prop_at_r, out.sd_across_groups.prop_at_r) = across(&PriceSummary::prop_at_r);
  std::tie(out.pooled.prop_below_threshold, out.sd_across_groups.prop_below_threshold) =
      across(&PriceSummary::prop_below_threshold);
  out.pooled.n = log.records.size();
  out.sd_across_groups.n = out.groups.size();
  return out;
}

// ---------------------------------------------------------------------------
// Quantities.

QuantityStats quantity_stats(const sim::SessionLog& log, const GameParams& params) {
  QuantityStats out;
  out.total = log.records.size();
  std::array<std::vector<double>, 3> qs;
  std::array<std::vector<double>, 3> ps;
  std::array<std::map<int, std::vector<double>>, 3> by_group;
  for (const auto& r : log.records) {
    const auto k = idx(r.outcome.kind);
    qs[k].push_back(static_cast<double>(r.quantity));
    ps[k].push_back(r.price);
    by_group[k][r.group].push_back(static_cast<double>(r.quantity));
  }
  for (auto kind : {OutcomeKind::Lower, OutcomeKind::Higher, OutcomeKind::Tie}) {
    const auto k = idx(kind);
    auto& s = out.splits[k];
    s.kind = kind;
    s.count = qs[k].size();
    if (s.count == 0) continue;
    s.mean_q = mean(qs[k]);
    s.sd_individual = sample_sd(qs[k]);
    std::vector<double> group_means;
    for (const auto& [id, v] : by_group[k]) group_means.push_back(mean(v));
    s.sd_groups = sample_sd(group_means);
    s.median_price = median(ps[k]);
    switch (kind) {
      case OutcomeKind::Lower: s.q_star = optimal_quantity(params, s.median_price, PriceSide::Lower); break;
      case OutcomeKind::Higher: s.q_star = optimal_quantity(params, s.median_price, PriceSide::Higher); break;
      case OutcomeKind::Tie: s.q_star = tie_optimal_quantity(params, s.median_price).midpoint(); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pull-to-center.

double ptc_ratio(double q_star, double q, double anchor) { return (q_star - q) / (q - anchor); }

std::vector<PtcRound> ptc_rounds(const sim::SessionLog& log, const GameParams& params, double eps_anchor) {
  if (!(eps_anchor > 0.0)) throw std::invalid_argument("ptc: eps_anchor must be > 0");
  std::vector<PtcRound> out;
  for (const auto& r : log.records) {
    if (r.outcome.kind == OutcomeKind::Tie) continue;
    const bool lower = r.outcome.kind == OutcomeKind::Lower;
    const double anchor = lower ? params.d_high : params.d_low;
    const double q = static_cast<double>(r.quantity);
    if (std::abs(q - anchor) < eps_anchor) continue;
    const double q_star = optimal_quantity(params, r.price, lower ? PriceSide::Lower : PriceSide::Higher);
    out.push_back({r.subject, r.group, r.round, r.outcome.kind, r.price, ptc_ratio(q_star, q, anchor)});
  }
  return out;
}

PtcReport ptc_indices(const sim::SessionLog& log, const GameParams& params, double eps_anchor) {
  if (!(eps_anchor > 0.0)) throw std::invalid_argument("ptc_indices: eps_anchor must be > 0");
  struct Acc {
    int group = 0;
    std::vector<double> lp, hp;
    int excluded_lp = 0, excluded_hp = 0;
  };
  std::map<int, Acc> acc;
  for (const auto& r : log.records) {
    auto& a = acc[r.subject];
    a.group = r.group;
    if (r.outcome.kind == OutcomeKind::Tie) continue;
    const bool lower = r.outcome.kind == OutcomeKind::Lower;
    const double anchor = lower ? params.d_high : params.d_low;
    const double q = static_cast<double>(r.quantity);
    if (std::abs(q - anchor) < eps_anchor) {
      ++(lower ? a.excluded_lp : a.excluded_hp);
      continue;
    }
    const double q_star = optimal_quantity(params, r.price, lower ? PriceSide::Lower : PriceSide::Higher);
    (lower ? a.lp : a.hp).push_back(ptc_ratio(q_star, q, anchor));
  }

  PtcReport out;
  std::vector<double> alphas_lp, alphas_hp, ds, all_lp, all_hp;
  for (const auto& [subject, a] : acc) {
    SubjectPtc s;
    s.subject = subject;
    s.group = a.group;
    s.n_lp = static_cast<int>(a.lp.size());
    s.n_hp = static_cast<int>(a.hp.size());
    s.excluded_lp = a.excluded_lp;
    s.excluded_hp = a.excluded_hp;
    if (!a.lp.empty()) s.alpha_lp = mean(a.lp);
    if (!a.hp.empty()) s.alpha_hp = mean(a.hp);
    const int dof = s.n_lp + s.n_hp - 2;
    if (dof > 0) {
      auto ss = [](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double sd = sample_sd(v);
        return sd * sd * static_cast<double>(v.size() - 1);
      };
      s.pooled_sd = std::sqrt((ss(a.lp) + ss(a.hp)) / dof);
    }
    if (s.alpha_lp && s.alpha_hp && s.pooled_sd) {
      // no spread and no gap counts as no asymmetry; a gap with no spread stays undefined
      if (*s.pooled_sd > 0.0) s.d = (*s.alpha_lp - *s.alpha_hp) / *s.pooled_sd;
      else if (*s.alpha_lp == *s.alpha_hp) s.d = 0.0;
      if (s.d) ds.push_back(*s.d);
    }
    if (s.alpha_lp) alphas_lp.push_back(*s.alpha_lp);
    if (s.alpha_hp) alphas_hp.push_back(*s.alpha_hp);
    all_lp.insert(all_lp.end(), a.lp.begin(), a.lp.end());
    all_hp.insert(all_hp.end(), a.hp.begin(), a.hp.end());
    out.subjects.push_back(s);
  }
  if (!alphas_lp.empty()) out.mean_alpha_lp = mean(alphas_lp);
  if (!alphas_hp.empty()) out.mean_alpha_hp = mean(alphas_hp);
  if (!ds.empty()) out.mean_d = mean(ds);
  out.n_d = static_cast<int>(ds.size());
  if (!all_lp.empty()) out.mean_ratio_lp = mean(all_lp);
  if (!all_hp.empty()) out.mean_ratio_hp = mean(all_hp);
  out.rounds_lp = static_cast<int>(all_lp.size());
  out.rounds_hp = static_cast<int>(all_hp.size());
  return out;
}

std::vector<QuintileBin> quintile_bins(const std::vector<std::pair<double, double>>& price_ratio) {
  if (price_ratio.empty()) return {};
  std::vector<double> prices;
  prices.reserve(price_ratio.size());
  for (const auto& pr : price_ratio) prices.push_back(pr.first);
  std::vector<double> edges;
  for (double prob : {0.2, 0.4, 0.6, 0.8}) edges.push_back(quantile(prices, prob));
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<std::vector<std::pair<double, double>>> bins(edges.size() + 1);
  for (const auto& pr : price_ratio) {
    const auto b = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), pr.first) - edges.begin());
    bins[b].push_back(pr);
  }
  std::vector<QuintileBin> out;
  for (const auto& bin : bins) {
    if (bin.empty()) continue;
    QuintileBin q;
    q.count = bin.size();
    q.lo = std::numeric_limits<double>::infinity();
    q.hi = -std::numeric_limits<double>::infinity();
    std::vector<double> ratios;
    for (const auto& [p, ratio] : bin) {
      q.lo = std::min(q.lo, p);
      q.hi = std::max(q.hi, p);
      ratios.push_back(ratio);
    }
    q.mean_ratio = mean(ratios);
    q.sd_ratio = sample_sd(ratios);
    out.push_back(q);
  }
  return out;
}

QuintileReport ptc_by_price_quintile(const sim::SessionLog& log, const GameParams& params, double eps_anchor) {
  std::vector<std::pair<double, double>> lower, higher;
  for (const auto& r : ptc_rounds(log, params, eps_anchor)) {
    (r.kind == OutcomeKind::Lower ? lower : higher).emplace_back(r.price, r.ratio);
  }
  return {quintile_bins(lower), quintile_bins(higher)};
}

double trend_sign_test(const std::vector<QuintileBin>& bins) {
  int pos = 0;
  int neg = 0;
  for (std::size_t i = 1; i < bins.size(); ++i) {
    const double diff = bins[i].mean_ratio - bins[i - 1].mean_ratio;
    if (diff > 0.0) ++pos;
    else if (diff < 0.0) ++neg;
  }
  const int n = pos + neg;
  if (n == 0) return 1.0;
  const int k = std::min(pos, neg);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

// ---------------------------------------------------------------------------
// Deviation report.

DeviationReport compare_to_ne(const PriceStats& prices, const QuantityStats& quantities, const GameParams&) {
  DeviationReport d;
  d.median_gap = prices.pooled.median - prices.ne_median;
  d.iqr_gap = prices.pooled.iqr - prices.ne_iqr;
  d.mass_at_r = prices.pooled.prop_at_r;
  d.mass_below_threshold = prices.pooled.prop_below_threshold;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = quantities.splits[k];
    if (s.count > 0) d.q_gap[k] = s.mean_q - s.q_star;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Reports.

FullReport analyze(const sim::SessionLog& log, double eps_anchor) {
  const auto& g = log.treatment.params;
  FullReport rep;
  rep.prices = price_stats(log, g);
  rep.quantities = quantity_stats(log, g);
  rep.ptc = ptc_indices(log, g, eps_anchor);
  rep.quintiles = ptc_by_price_quintile(log, g, eps_anchor);
  rep.deviation = compare_to_ne(rep.prices, rep.quantities, g);
  return rep;
}

std::string format_report(const sim::SessionLog& log, const FullReport& rep) {
  std::ostringstream out;
  char line[256];
  const auto& ps = rep.prices;
  out << "Treatment " << to_string(log.treatment.label) << "  seed " << log.seed << "  subjects "
      << log.n_subjects() << "  rounds " << log.n_rounds() << "\n\n";

  out << "Price summary (group statistics averaged over " << ps.groups.size() << " groups)\n";
  std::snprintf(line, sizeof line, "  %-22s %10s %10s %10s\n", "", "observed", "sd(group)", "NE");
  out << line;
  auto row = [&](const char* name, double obs, double sd, const std::string& ne) {
    std::snprintf(line, sizeof line, "  %-22s %10.3f %10.3f %10s\n", name, obs, sd, ne.c_str());
    out << line;
  };
  row("median", ps.pooled.median, ps.sd_across_groups.median, fmt("%.3f", ps.ne_median));
  row("mean", ps.pooled.mean, ps.sd_across_groups.mean, "");
  row("IQR", ps.pooled.iqr, ps.sd_across_groups.iqr, fmt("%.3f", ps.ne_iqr));
  row("share at r", ps.pooled.prop_at_r, ps.sd_across_groups.prop_at_r, "0.000");
  row("share below threshold", ps.pooled.prop_below_threshold, ps.sd_across_groups.prop_below_threshold,
      "0.000");
  std::snprintf(line, sizeof line, "  threshold price %.4f\n\n", ps.p_tilde);
  out << line;

  out << "Order quantity by price outcome\n";
  std::snprintf(line, sizeof line, "  %-8s %8s %10s %10s %10s %12s %10s %10s\n", "outcome", "count", "mean q",
                "sd(indiv)", "sd(group)", "median p", "q*", "gap");
  out << line;
  for (const auto& s : rep.quantities.splits) {
    if (s.count == 0) {
      std::snprintf(line, sizeof line, "  %-8s %8zu %10s %10s %10s %12s %10s %10s\n",
                    std::string(to_string(s.kind)).c_str(), s.count, "-", "-", "-", "-", "-", "-");
    } else {
      std::snprintf(line, sizeof line, "  %-8s %8zu %10.3f %10.3f %10.3f %12.3f %10.3f %+10.3f\n",
                    std::string(to_string(s.kind)).c_str(), s.count, s.mean_q, s.sd_individual, s.sd_groups,
                    s.median_price, s.q_star, s.mean_q - s.q_star);
    }
    out << line;
  }
  out << '\n';

  const auto& pt = rep.ptc;
  out << "Pull-to-center\n";
  out << "  mean alpha (lower price)   " << opt_fmt(pt.mean_alpha_lp) << "   rounds " << pt.rounds_lp << '\n';
  out << "  mean alpha (higher price)  " << opt_fmt(pt.mean_alpha_hp) << "   rounds " << pt.rounds_hp << '\n';
  out << "  mean ratio (lower price)   " << opt_fmt(pt.mean_ratio_lp) << '\n';
  out << "  mean ratio (higher price)  " << opt_fmt(pt.mean_ratio_hp) << '\n';
  out << "  mean d                     " << opt_fmt(pt.mean_d) << "   subjects " << pt.n_d << '\n';
  int excl_lp = 0, excl_hp = 0;
  for (const auto& s : pt.subjects) {
    excl_lp += s.excluded_lp;
    excl_hp += s.excluded_hp;
  }
  out << "  rounds at the anchor (excluded)  lower " << excl_lp << "  higher " << excl_hp << "\n\n";

  auto bins = [&](const char* name, const std::vector<QuintileBin>& v) {
    out << "  " << name << " (sign test p = " << fmt("%.3f", trend_sign_test(v)) << ")\n";
    for (const auto& b : v) {
      std::snprintf(line, sizeof line, "    [%7.3f, %7.3f] n=%-7zu mean %8.3f  sd %8.3f\n", b.lo, b.hi, b.count,
                    b.mean_ratio, b.sd_ratio);
      out << line;
    }
  };
  out << "PtC ratio by price quintile\n";
  bins("lower price", rep.quintiles.lower);
  bins("higher price", rep.quintiles.higher);
  return out.str();
}

std::string report_json(const sim::SessionLog& log, const FullReport& rep) {
  using nlohmann::json;
  auto summary = [](const PriceSummary& s) {
    return json{{"median", s.median}, {"mean", s.mean}, {"iqr", s.iqr}, {"prop_at_r", s.prop_at_r},
                {"prop_below_threshold", s.prop_below_threshold}, {"n", s.n}};
  };
  json j;
  j["treatment"] = std::string(to_string(log.treatment.label));
  j["seed"] = log.seed;
  j["subjects"] = log.n_subjects();
  j["rounds"] = log.n_rounds();

  json groups = json::array();
  for (const auto& [id, s] : rep.prices.groups) {
    auto g = summary(s);
    g["group"] = id;
    groups.push_back(g);
  }
  j["prices"] = {{"groups", groups},
                 {"pooled", summary(rep.prices.pooled)},
                 {"sd_across_groups", summary(rep.prices.sd_across_groups)},
                 {"ne_median", rep.prices.ne_median},
                 {"ne_iqr", rep.prices.ne_iqr},
                 {"threshold", rep.prices.p_tilde}};

  json splits = json::array();
  for (const auto& s : rep.quantities.splits) {
    splits.push_back({{"outcome", std::string(to_string(s.kind))},
                      {"count", s.count},
                      {"mean_q", s.mean_q},
                      {"sd_individual", s.sd_individual},
                      {"sd_groups", s.sd_groups},
                      {"median_price", s.median_price},
                      {"q_star", s.q_star}});
  }
  j["quantities"] = {{"total", rep.quantities.total}, {"splits", splits}};

  json subjects = json::array();
  for (const auto& s : rep.ptc.subjects) {
    subjects.push_back({{"subject", s.subject},
                        {"group", s.group},
                        {"alpha_lp", opt_json(s.alpha_lp)},
                        {"alpha_hp", opt_json(s.alpha_hp)},
                        {"n_lp", s.n_lp},
                        {"n_hp", s.n_hp},
                        {"excluded_lp", s.excluded_lp},
                        {"excluded_hp", s.excluded_hp},
                        {"pooled_sd", opt_json(s.pooled_sd)},
                        {"d", opt_json(s.d)}});
  }
  j["ptc"] = {{"subjects", subjects},
              {"mean_alpha_lp", opt_json(rep.ptc.mean_alpha_lp)},
              {"mean_alpha_hp", opt_json(rep.ptc.mean_alpha_hp)},
              {"mean_d", opt_json(rep.ptc.mean_d)},
              {"n_d", rep.ptc.n_d},
              {"mean_ratio_lp", opt_json(rep.ptc.mean_ratio_lp)},
              {"mean_ratio_hp", opt_json(rep.ptc.mean_ratio_hp)},
              {"rounds_lp", rep.ptc.rounds_lp},
              {"rounds_hp", rep.ptc.rounds_hp}};

  auto bins = [](const std::vector<QuintileBin>& v) {
    json a = json::array();
    for (const auto& b : v) {
      a.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean_ratio", b.mean_ratio},
                   {"sd_ratio", b.sd_ratio}});
    }
    return a;
  };
  j["quintiles"] = {{"lower", bins(rep.quintiles.lower)}, {"higher", bins(rep.quintiles.higher)}};

  const auto& d = rep.deviation;
  j["deviation"] = {{"median_gap", d.median_gap},
                    {"iqr_gap", d.iqr_gap},
                    {"mass_at_r", d.mass_at_r},
                    {"mass_below_threshold", d.mass_below_threshold},
                    {"q_gap_lower", opt_json(d.q_gap[0])},
                    {"q_gap_higher", opt_json(d.q_gap[1])},
                    {"q_gap_tie", opt_json(d.q_gap[2])}};
  return j.dump(2) + "\n";
}

}  // namespace nvlab::analysis
