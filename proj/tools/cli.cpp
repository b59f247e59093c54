#include "cli.hpp"

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "nvlab/analysis.hpp"
#include "nvlab/equilibrium.hpp"
#include "nvlab/http_service.hpp"
#include "nvlab/market.hpp"
#include "nvlab/oracle.hpp"
#include "nvlab/session.hpp"
#include "nvlab/simulation.hpp"

namespace nvlab::cli {

namespace {

namespace fs = std::filesystem;

struct CliFailure {
  int code;
  std::string message;
};

struct TreatmentArgs {
  std::string label = "HM_LU";
  std::string params_file;

  void add_to(CLI::App& app) {
    app.add_option("-t,--treatment", label, "Treatment label: HM_LU, HM_HU, LM_LU, LM_HU")->capture_default_str();
    app.add_option("--params", params_file, "key=value parameter file overriding the preset");
  }

  Treatment resolve() const {
    const auto parsed = parse_treatment_label(label);
    if (!parsed) throw CliFailure{kUsage, "unknown treatment '" + label + "'"};
    Treatment t = preset(*parsed);
    if (!params_file.empty()) {
      if (!fs::exists(params_file)) throw CliFailure{kIoError, "no such file: " + params_file};
      try {
        t.params = load_params_file(params_file);
      } catch (const std::invalid_argument& e) {
        throw CliFailure{kInvalidData, e.what()};
      }
    }
    return t;
  }
};

fs::path output_path(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv("NVLAB_OUT_DIR"); dir && *dir) p = fs::path(dir) / p;
  }
  return p;
}

void write_output(const std::string& path, const std::string& content, bool force, std::ostream& out) {
  const auto p = output_path(path);
  if (fs::exists(p) && !force) {
    throw CliFailure{kIoError, "refusing to overwrite " + p.string() + " (pass --force)"};
  }
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw CliFailure{kIoError, "cannot write " + p.string()};
  f << content;
  if (!f) throw CliFailure{kIoError, "write failed: " + p.string()};
  out << "wrote " << p.string() << '\n';
}

std::string describe_params(const GameParams& g) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "c=%.1f r=%.1f d_H=%g d_L=%g x=%g step=%.1f q_cap=%d", g.c, g.r, g.d_high,
                g.d_low, g.x, g.price_step, g.q_cap);
  return buf;
}

// ---------------------------------------------------------------------------

void solve_one(const Treatment& t, std::ostream& out, nlohmann::json& rec) {
  const auto s = ne_summary(t.params);
  const double start = grid_ceil(t.params, s.p_tilde);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s  %s\n"
                "  threshold price   %.4f   (grid start %.1f)\n"
                "  equilibrium value %.3f\n"
                "  NE median price   %.3f\n"
                "  NE IQR            %.3f   [%.3f, %.3f]\n",
                std::string(to_string(t.label)).c_str(), describe_params(t.params).c_str(), s.p_tilde, start,
                s.value, s.median, s.iqr(), s.q1, s.q3);
  out << buf;
  rec.push_back({{"treatment", std::string(to_string(t.label))},
                 {"threshold", s.p_tilde},
                 {"grid_start", start},
                 {"value", s.value},
                 {"median", s.median},
                 {"q1", s.q1},
                 {"q3", s.q3},
                 {"iqr", s.iqr()}});
}

int cmd_solve(const TreatmentArgs& ta, bool all, const std::string& out_file, bool force, std::ostream& out) {
  auto rec = nlohmann::json::array();
  if (all) {
    for (const auto& t : all_presets()) solve_one(t, out, rec);
  } else {
    solve_one(ta.resolve(), out, rec);
  }
  if (!out_file.empty()) write_output(out_file, rec.dump(2) + "\n", force, out);
  return kOk;
}

int cmd_table(const std::string& format, const std::string& out_file, bool force, std::ostream& out) {
  const auto rows = prediction_table(all_presets());
  std::string text;
  if (format == "records") text = format_prediction_records(rows);
  else text = format_prediction_table(rows);
  if (out_file.empty()) out << text;
  else write_output(out_file, text, force, out);
  return kOk;
}

int cmd_verify(const TreatmentArgs& ta, bool all, std::uint64_t seed, std::ostream& out) {
  std::vector<Treatment> ts = all ? all_presets() : std::vector<Treatment>{ta.resolve()};
  int failed = 0;
  int total = 0;
  for (const auto& t : ts) {
    for (const auto& c : oracle::verify_treatment(t, seed)) {
      ++total;
      if (!c.passed) ++failed;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%-4s %-6s %-18s %s\n", c.passed ? "ok" : "FAIL",
                    std::string(to_string(t.label)).c_str(), c.name.c_str(), c.detail.c_str());
      out << buf;
    }
  }
  out << (total - failed) << "/" << total << " checks passed\n";
  return failed == 0 ? kOk : kVerifyFailed;
}

struct SimulateArgs {
  TreatmentArgs treatment;
  int subjects = 24;
  int rounds = 50;
  std::uint64_t seed = 1;
  std::vector<std::string> policies;
  std::string csv_out;
  std::string record_out;
  bool force = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const auto t = a.treatment.resolve();
  if (a.subjects < 4 || a.subjects % 4 != 0) throw CliFailure{kUsage, "--subjects must be a positive multiple of 4"};
  if (a.rounds < 1) throw CliFailure{kUsage, "--rounds must be >= 1"};
  std::vector<sim::AgentPolicy> policies;
  try {
    for (const auto& p : a.policies) policies.push_back(sim::parse_policy(p));
  } catch (const std::invalid_argument& e) {
    throw CliFailure{kUsage, e.what()};
  }
  if (policies.empty()) policies.push_back(sim::EquilibriumPolicy{});
  if (policies.size() != 1 && policies.size() != static_cast<std::size_t>(a.subjects)) {
    throw CliFailure{kUsage, "give one --policy for everyone or one per subject"};
  }
  for (const auto& p : policies) {
    if (std::holds_alternative<sim::ExternalPolicy>(p)) {
      throw CliFailure{kUsage, "external seats need a live session (use serve)"};
    }
  }

  const auto log = sim::run_session(t, policies, a.subjects, a.rounds, a.seed);

  double total = 0.0;
  std::vector<double> prices;
  for (const auto& r : log.records) {
    total += r.profit;
    prices.push_back(r.price);
  }
  const double per_round = total / static_cast<double>(log.records.size());
  const double v = equilibrium_value(t.params);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s  seed %llu  subjects %d  rounds %d  policy %s\n"
                "  mean profit per subject-round  %.3f   (V = %.3f)\n"
                "  median price                   %.3f   (NE %.3f)\n",
                std::string(to_string(t.label)).c_str(), static_cast<unsigned long long>(a.seed), a.subjects,
                a.rounds, policies.size() == 1 ? sim::describe(policies.front()).c_str() : "mixed", per_round, v,
                analysis::median(prices), ne_summary(t.params).median);
  out << buf;

  if (!a.csv_out.empty()) {
    std::string csv;
    try {
      csv = sim::export_csv(log);
    } catch (const std::invalid_argument& e) {
      throw CliFailure{kUsage, std::string(e.what()) + "; off-grid runs can only be written with --record"};
    }
    write_output(a.csv_out, csv, a.force, out);
  }
  if (!a.record_out.empty()) write_output(a.record_out, sim::export_record(log), a.force, out);
  return kOk;
}

int cmd_analyze(const std::string& input, const std::string& params_file, double eps, const std::string& out_file,
                bool force, std::ostream& out) {
  if (!fs::exists(input)) throw CliFailure{kIoError, "no such file: " + input};
  std::optional<GameParams> params;
  if (!params_file.empty()) {
    if (!fs::exists(params_file)) throw CliFailure{kIoError, "no such file: " + params_file};
    try {
      params = load_params_file(params_file);
    } catch (const std::invalid_argument& e) {
      throw CliFailure{kInvalidData, e.what()};
    }
  }
  if (!(eps > 0.0)) throw CliFailure{kUsage, "--eps must be positive"};
  sim::SessionLog log;
  try {
    log = analysis::ingest_csv(input, params);
  } catch (const analysis::IngestError& e) {
    throw CliFailure{kInvalidData, e.what()};
  }
  const auto rep = analysis::analyze(log, eps);
  out << analysis::format_report(log, rep);
  if (!out_file.empty()) write_output(out_file, analysis::report_json(log, rep), force, out);
  return kOk;
}

live::HttpService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const std::string& host, int port, const std::string& persist, std::ostream& out) {
  std::string dir = persist;
  if (dir.empty()) dir = output_path("sessions").string();
  live::SessionManager manager;
  live::HttpService service(manager, {dir, std::chrono::milliseconds(100)});
  int bound = 0;
  try {
    bound = service.bind(host, port);
  } catch (const std::runtime_error& e) {
    throw CliFailure{kIoError, e.what()};
  }
  out << "listening on http://" << host << ":" << bound << "  (completed sessions -> " << dir << ")\n"
      << std::flush;
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.run();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Price-inventory duopoly: equilibrium solver, oracle checks, simulation, analysis, live sessions",
               "nvlab"};
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "Threshold price, value and NE price quantiles");
  TreatmentArgs solve_t;
  bool solve_all = false;
  std::string solve_out;
  bool solve_force = false;
  solve_t.add_to(*solve);
  solve->add_flag("--all", solve_all, "Solve all four treatments");
  solve->add_option("-o,--out", solve_out, "Also write a JSON record here");
  solve->add_flag("-f,--force", solve_force, "Overwrite existing output");

  auto* table = app.add_subcommand("table", "Piecewise equilibrium prediction table for the four treatments");
  std::string table_format = "text";
  std::string table_out;
  bool table_force = false;
  table->add_option("--format", table_format, "text or records")
      ->check(CLI::IsMember({"text", "records"}))
      ->capture_default_str();
  table->add_option("-o,--out", table_out, "Write to a file instead of standard output");
  table->add_flag("-f,--force", table_force, "Overwrite existing output");

  auto* verify = app.add_subcommand("verify", "Brute-force oracle checks; nonzero exit on failure");
  TreatmentArgs verify_t;
  bool verify_all = false;
  std::uint64_t verify_seed = 20250101;
  verify_t.add_to(*verify);
  verify->add_flag("--all", verify_all, "Check all four treatments");
  verify->add_option("--seed", verify_seed, "Seed for sampled prices")->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Run a batch session with scripted agents");
  SimulateArgs sim_args;
  sim_args.treatment.add_to(*simulate);
  simulate->add_option("-n,--subjects", sim_args.subjects, "Number of subjects (multiple of 4)")->capture_default_str();
  simulate->add_option("-r,--rounds", sim_args.rounds, "Number of rounds")->capture_default_str();
  simulate->add_option("-s,--seed", sim_args.seed, "Random seed")->capture_default_str();
  simulate->add_option("-p,--policy", sim_args.policies,
                       "Agent policy, once for everyone or once per subject: equilibrium[:nosnap], focal:PHI, "
                       "ptc:LAMBDA[:JITTER], directional:UP:DOWN[:P0]");
  simulate->add_option("-o,--out", sim_args.csv_out, "Write the flat CSV log here");
  simulate->add_option("--record", sim_args.record_out, "Write the structured JSON log here");
  simulate->add_flag("-f,--force", sim_args.force, "Overwrite existing output");

  auto* analyze = app.add_subcommand("analyze", "Ingest a session CSV and report price, quantity and PtC statistics");
  std::string analyze_in;
  std::string analyze_params;
  double analyze_eps = analysis::kDefaultAnchorEpsilon;
  std::string analyze_out;
  bool analyze_force = false;
  analyze->add_option("input", analyze_in, "Session CSV")->required();
  analyze->add_option("--params", analyze_params, "Parameter file overriding the treatment preset");
  analyze->add_option("--eps", analyze_eps, "Exclusion band around the anchor, in units")->capture_default_str();
  analyze->add_option("-o,--out", analyze_out, "Write the JSON report here");
  analyze->add_flag("-f,--force", analyze_force, "Overwrite existing output");

  auto* serve = app.add_subcommand("serve", "Serve live sessions over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string persist;
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str();
  serve->add_option("--persist", persist, "Directory for completed session logs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*solve) return cmd_solve(solve_t, solve_all, solve_out, solve_force, out);
    if (*table) return cmd_table(table_format, table_out, table_force, out);
    if (*verify) {
      const bool all = verify_all || verify->count("--treatment") + verify->count("--params") == 0;
      return cmd_verify(verify_t, all, verify_seed, out);
    }
    if (*simulate) return cmd_simulate(sim_args, out);
    if (*analyze) return cmd_analyze(analyze_in, analyze_params, analyze_eps, analyze_out, analyze_force, out);
    if (*serve) return cmd_serve(host, port, persist, out);
  } catch (const CliFailure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace nvlab::cli
