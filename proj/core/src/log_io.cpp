#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "nvlab/analysis.hpp"
#include "nvlab/simulation.hpp"

namespace nvlab {

namespace sim {

namespace {

using nlohmann::json;

std::string tenths_field(double v, const char* what) {
  if (!is_tenth_multiple(v)) {
    throw std::invalid_argument(std::string("export_csv: ") + what + " is not on the 0.1 grid");
  }
  return format_tenths(to_tenths(v));
}

json params_json(const GameParams& g) {
  return {{"c", g.c},         {"r", g.r}, {"d_H", g.d_high}, {"d_L", g.d_low},
          {"x", g.x},         {"price_step", g.price_step}, {"q_cap", g.q_cap}};
}

GameParams params_from_json(const json& j) {
  GameParams g;
  g.c = j.at("c").get<double>();
  g.r = j.at("r").get<double>();
  g.d_high = j.at("d_H").get<double>();
  g.d_low = j.at("d_L").get<double>();
  g.x = j.at("x").get<double>();
  g.price_step = j.at("price_step").get<double>();
  g.q_cap = j.at("q_cap").get<int>();
  g.validate();
  return g;
}

}  // namespace

std::string export_csv(const SessionLog& log) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  const auto label = to_string(log.treatment.label);
  for (const auto& r : log.records) {
    out << label << ',' << log.seed << ',' << r.group << ',' << r.pair << ',' << r.round << ','
        << r.subject << ',' << tenths_field(r.price, "price") << ','
        << tenths_field(r.opp_price, "opponent price") << ',' << to_string(r.outcome.kind) << ','
        << to_string(r.outcome.segment) << ',' << r.quantity << ',' << r.demand << ','
        << tenths_field(r.profit, "profit") << ',' << tenths_field(r.cumulative, "cumulative") << '\n';
  }
  return out.str();
}

std::string export_record(const SessionLog& log) {
  json j;
  j["treatment"] = std::string(to_string(log.treatment.label));
  j["params"] = params_json(log.treatment.params);
  j["seed"] = log.seed;
  j["groups"] = log.groups;
  auto& recs = j["records"] = json::array();
  for (const auto& r : log.records) {
    json flags = json::array();
    if (r.substituted & kPriceSubstituted) flags.push_back("price");
    if (r.substituted & kQuantitySubstituted) flags.push_back("quantity");
    recs.push_back({{"round", r.round},
                    {"subject", r.subject},
                    {"group", r.group},
                    {"pair", r.pair},
                    {"price", r.price},
                    {"opp_price", r.opp_price},
                    {"outcome", std::string(to_string(r.outcome.kind))},
                    {"segment", std::string(to_string(r.outcome.segment))},
                    {"quantity", r.quantity},
                    {"demand", r.demand},
                    {"profit", r.profit},
                    {"cumulative", r.cumulative},
                    {"substituted", flags}});
  }
  return j.dump(1) + "\n";
}

SessionLog import_record(const std::string& json_text) {
  SessionLog log;
  try {
    const auto j = json::parse(json_text);
    const auto label = parse_treatment_label(j.at("treatment").get<std::string>());
    if (!label) throw std::invalid_argument("import_record: unknown treatment label");
    log.treatment = {*label, params_from_json(j.at("params"))};
    log.seed = j.at("seed").get<std::uint64_t>();
    log.groups = j.at("groups").get<std::vector<std::array<int, 4>>>();
    for (const auto& jr : j.at("records")) {
      RoundRecord r;
      r.round = jr.at("round").get<int>();
      r.subject = jr.at("subject").get<int>();
      r.group = jr.at("group").get<int>();
      r.pair = jr.at("pair").get<int>();
      r.price = jr.at("price").get<double>();
      r.opp_price = jr.at("opp_price").get<double>();
      const auto kind = parse_outcome_kind(jr.at("outcome").get<std::string>());
      const auto seg = parse_segment(jr.at("segment").get<std::string>());
      if (!kind || !seg) throw std::invalid_argument("import_record: bad outcome or segment");
      r.outcome = {*kind, *seg};
      r.quantity = jr.at("quantity").get<long>();
      r.demand = jr.at("demand").get<long>();
      r.profit = jr.at("profit").get<double>();
      r.cumulative = jr.at("cumulative").get<double>();
      for (const auto& f : jr.at("substituted")) {
        const auto s = f.get<std::string>();
        if (s == "price") r.substituted |= kPriceSubstituted;
        else if (s == "quantity") r.substituted |= kQuantitySubstituted;
        else throw std::invalid_argument("import_record: unknown substitution flag '" + s + "'");
      }
      log.records.push_back(r);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("import_record: ") + e.what());
  }
  return log;
}

}  // namespace sim

namespace analysis {

namespace {

std::string describe_problems(const std::vector<IngestProblem>& problems) {
  std::string msg = "ingest failed:";
  const std::size_t shown = std::min<std::size_t>(problems.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    msg += "\n  ";
    if (problems[i].line > 0) msg += "line " + std::to_string(problems[i].line) + ": ";
    msg += problems[i].message;
  }
  if (problems.size() > shown) msg += "\n  ... " + std::to_string(problems.size() - shown) + " more";
  return msg;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

template <class Int>
std::optional<Int> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    if constexpr (std::is_same_v<Int, std::uint64_t>) {
      if (s.front() == '-') return std::nullopt;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) return std::nullopt;
      return v;
    } else {
      const auto v = std::stoll(s, &pos);
      if (pos != s.size()) return std::nullopt;
      if (v < std::numeric_limits<Int>::min() || v > std::numeric_limits<Int>::max()) return std::nullopt;
      return static_cast<Int>(v);
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

IngestError::IngestError(std::vector<IngestProblem> problems)
    : std::runtime_error(describe_problems(problems)), problems_(std::move(problems)) {}

sim::SessionLog ingest_csv_text(const std::string& text, const std::optional<GameParams>& params) {
  std::vector<IngestProblem> problems;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw IngestError({{0, "empty file"}});
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != sim::kCsvHeader) {
    throw IngestError({{1, "header does not match the expected schema: " + std::string(sim::kCsvHeader)}});
  }

  if (params) params->validate();

  std::optional<TreatmentLabel> label;
  std::optional<std::uint64_t> seed;
  GameParams g;
  struct Row {
    sim::RoundRecord rec;
    std::size_t line;
  };
  std::vector<Row> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto bad = [&](const std::string& msg) { problems.push_back({line_no, msg}); };

    const auto f = split_fields(line);
    if (f.size() != 14) {
      bad("expected 14 fields, found " + std::to_string(f.size()));
      continue;
    }
    const auto row_label = parse_treatment_label(f[0]);
    if (!row_label) {
      bad("unknown treatment label '" + f[0] + "'");
      continue;
    }
    if (!label) {
      label = row_label;
      g = params ? *params : preset(*label).params;
    } else if (*label != *row_label) {
      bad("treatment label differs from earlier rows");
      continue;
    }
    const auto row_seed = parse_int<std::uint64_t>(f[1]);
    if (!row_seed) {
      bad("seed is not a non-negative integer");
      continue;
    }
    if (!seed) seed = row_seed;
    else if (*seed != *row_seed) bad("seed differs from earlier rows");

    sim::RoundRecord r;
    const auto group = parse_int<int>(f[2]);
    const auto pair = parse_int<int>(f[3]);
    const auto round = parse_int<int>(f[4]);
    const auto subject = parse_int<int>(f[5]);
    if (!group || !pair || !round || !subject || *group < 1 || *pair < 1 || *round < 1 || *subject < 1) {
      bad("group, pair, round and subject must be positive integers");
      continue;
    }
    r.group = *group;
    r.pair = *pair;
    r.round = *round;
    r.subject = *subject;

    const auto price = parse_tenths(f[6]);
    const auto opp = parse_tenths(f[7]);
    if (!price || !opp) {
      bad("prices must be decimals with at most one fractional digit");
      continue;
    }
    r.price = from_tenths(*price);
    r.opp_price = from_tenths(*opp);
    if (!on_price_grid(g, r.price)) bad("price " + f[6] + " is not on the price grid");
    if (!on_price_grid(g, r.opp_price)) bad("opponent price " + f[7] + " is not on the price grid");

    const auto kind = parse_outcome_kind(f[8]);
    const auto seg = parse_segment(f[9]);
    if (!kind || !seg) {
      bad("unknown outcome or segment");
      continue;
    }
    r.outcome = {*kind, *seg};

    const auto q = parse_int<long>(f[10]);
    const auto d = parse_int<long>(f[11]);
    if (!q || !d) {
      bad("quantity and demand must be integers");
      continue;
    }
    r.quantity = *q;
    r.demand = *d;

    const auto profit = parse_tenths(f[12]);
    const auto cum = parse_tenths(f[13]);
    if (!profit || !cum) {
      bad("profit and cumulative must be decimals with at most one fractional digit");
      continue;
    }
    r.profit = from_tenths(*profit);
    r.cumulative = from_tenths(*cum);
    rows.push_back({r, line_no});
  }

  if (rows.empty() && problems.empty()) problems.push_back({0, "no data rows"});
  if (!problems.empty()) throw IngestError(std::move(problems));

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::pair(a.rec.round, a.rec.subject) < std::pair(b.rec.round, b.rec.subject);
  });

  sim::SessionLog log;
  log.treatment = {*label, g};
  log.seed = *seed;

  // Fixed groups from the group column.
  std::map<int, std::set<int>> members;
  for (const auto& row : rows) members[row.rec.group].insert(row.rec.subject);
  int expect_id = 1;
  for (const auto& [id, subjects] : members) {
    if (id != expect_id++) {
      problems.push_back({0, "group ids are not numbered 1..G"});
      break;
    }
    if (subjects.size() != 4) {
      problems.push_back({0, "group " + std::to_string(id) + " has " + std::to_string(subjects.size()) +
                                 " members instead of 4"});
      continue;
    }
    std::array<int, 4> arr{};
    std::copy(subjects.begin(), subjects.end(), arr.begin());
    log.groups.push_back(arr);
  }
  if (!problems.empty()) throw IngestError(std::move(problems));

  for (const auto& row : rows) log.records.push_back(row.rec);
  for (const auto& v : sim::check_log(log)) {
    const bool structural = v.record_index >= rows.size();
    problems.push_back({structural ? 0 : rows[v.record_index].line, v.message});
  }
  std::stable_sort(problems.begin(), problems.end(),
                   [](const IngestProblem& a, const IngestProblem& b) { return a.line < b.line; });
  if (!problems.empty()) throw IngestError(std::move(problems));
  return log;
}

sim::SessionLog ingest_csv(const std::string& path, const std::optional<GameParams>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_csv_text(buf.str(), params);
}

}  // namespace analysis

}  // namespace nvlab
