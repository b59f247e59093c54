#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cli.hpp"
#include "nvlab/analysis.hpp"

namespace fs = std::filesystem;
using nvlab::cli::ExitCode;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run nvlab_run(std::vector<std::string> args) {
  args.insert(args.begin(), "nvlab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = nvlab::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("help and usage") {
  auto help = nvlab_run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(nvlab_run({"simulate", "--help"}).code == 0);
  CHECK(nvlab_run({}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"frobnicate"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"solve", "-t", "XX"}).code == ExitCode::kUsage);
}

TEST_CASE("solve") {
  auto r = nvlab_run({"solve", "--treatment", "HM_LU"});
  CHECK(r.code == 0);
  CHECK(r.out.find("7.407") != std::string::npos);
  CHECK(r.out.find("405.0") != std::string::npos);
  CHECK(r.out.find("8.931") != std::string::npos);

  auto all = nvlab_run({"solve", "--all"});
  CHECK(all.code == 0);
  for (const char* label : {"HM_LU", "HM_HU", "LM_LU", "LM_HU"}) CHECK(all.out.find(label) != std::string::npos);

  TempDir dir("nvlab_cli_solve");
  const auto params = dir / "p.txt";
  std::ofstream(params) << "c=9\nx=40\n";
  auto custom = nvlab_run({"solve", "--params", params});
  CHECK(custom.code == 0);
  CHECK(custom.out.find("9.9407") != std::string::npos);
  CHECK(nvlab_run({"solve", "--params", dir / "missing.txt"}).code == ExitCode::kIoError);
  std::ofstream(params) << "c=13\n";
  CHECK(nvlab_run({"solve", "--params", params}).code == ExitCode::kInvalidData);
}

TEST_CASE("table matches the golden records") {
  auto r = nvlab_run({"table", "--format", "records"});
  CHECK(r.code == 0);
  CHECK(r.out == slurp(fs::path(NVLAB_GOLDEN_DIR) / "prediction_table.txt"));
  auto text = nvlab_run({"table"});
  CHECK(text.code == 0);
  CHECK(text.out.find("HM_HU") != std::string::npos);
  CHECK(nvlab_run({"table", "--format", "yaml"}).code == ExitCode::kUsage);
}

TEST_CASE("verify") {
  auto r = nvlab_run({"verify", "--all"});
  CHECK(r.code == 0);
  auto one = nvlab_run({"verify", "-t", "LM_HU"});
  CHECK(one.code == 0);
}

TEST_CASE("simulate is deterministic and never overwrites silently") {
  TempDir dir("nvlab_cli_sim");
  const std::vector<std::string> base{"simulate", "--treatment", "LM_HU", "--subjects", "24", "--rounds", "50",
                                      "--seed", "7"};
  auto a_args = base;
  a_args.insert(a_args.end(), {"-o", dir / "a.csv", "--record", dir / "a.json"});
  auto b_args = base;
  b_args.insert(b_args.end(), {"-o", dir / "b.csv", "--record", dir / "b.json"});
  CHECK(nvlab_run(a_args).code == 0);
  CHECK(nvlab_run(b_args).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(nvlab::analysis::ingest_csv(dir / "a.csv").records.size() == 24 * 50);

  const auto before = slurp(dir / "a.csv");
  auto again = nvlab_run({"simulate", "-t", "LM_HU", "-s", "8", "-o", dir / "a.csv"});
  CHECK(again.code == ExitCode::kIoError);
  CHECK(slurp(dir / "a.csv") == before);
  CHECK(nvlab_run({"simulate", "-t", "LM_HU", "-s", "8", "-o", dir / "a.csv", "--force"}).code == 0);
  CHECK(slurp(dir / "a.csv") != before);

  CHECK(nvlab_run({"simulate", "-n", "6"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"simulate", "-p", "external:me"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"simulate", "-p", "focal:7"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"simulate", "-p", "equilibrium:nosnap", "-o", dir / "x.csv"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"simulate", "-n", "8", "-r", "5", "-p", "focal:0.2", "-p", "ptc:0.5"}).code == ExitCode::kUsage);
  auto mixed = nvlab_run({"simulate", "-n", "4", "-r", "5", "-p", "focal:0.2", "-p", "ptc:0.5", "-p", "equilibrium",
                          "-p", "directional:0.4:0.5"});
  CHECK(mixed.code == 0);
}

TEST_CASE("relative outputs land in NVLAB_OUT_DIR") {
  TempDir dir("nvlab_cli_outdir");
  ::setenv("NVLAB_OUT_DIR", dir.path.c_str(), 1);
  auto r = nvlab_run({"simulate", "-r", "3", "-n", "4", "-o", "rel.csv"});
  ::unsetenv("NVLAB_OUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.path / "rel.csv"));
}

TEST_CASE("analyze") {
  TempDir dir("nvlab_cli_analyze");
  REQUIRE(nvlab_run({"simulate", "-t", "HM_LU", "-n", "8", "-r", "40", "-p", "ptc:0.5", "-o", dir / "s.csv"}).code == 0);
  auto r = nvlab_run({"analyze", dir / "s.csv", "-o", dir / "report.json"});
  CHECK(r.code == 0);
  CHECK(r.out.find("HM_LU") != std::string::npos);
  CHECK(fs::exists(dir.path / "report.json"));
  CHECK(nvlab_run({"analyze", dir / "s.csv", "--eps", "0"}).code == ExitCode::kUsage);
  CHECK(nvlab_run({"analyze", dir / "nope.csv"}).code == ExitCode::kIoError);

  auto text = slurp(dir / "s.csv");
  const auto pos = text.find('\n', text.find('\n') + 1);
  text.insert(pos, "9");  // corrupts the cumulative column of the first data row
  std::ofstream(dir / "bad.csv") << text;
  auto bad = nvlab_run({"analyze", dir / "bad.csv"});
  CHECK(bad.code == ExitCode::kInvalidData);
  CHECK(bad.err.find("line 2") != std::string::npos);
}
