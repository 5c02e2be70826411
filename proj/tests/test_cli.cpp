#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "fkw/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FKW_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fkw_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, KmProbExample) {
  const auto r = run("km-prob --r 2 --x 0,2 --y 0,2 --n 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("count 3\n"), std::string::npos);
  EXPECT_NE(r.out.find("probability 0.1875\n"), std::string::npos);
}

TEST_F(Cli, DualExample) {
  const auto r = run("dual --q 2 --p 0.25");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.857143\n");
}

TEST_F(Cli, DpKernelMatchesKmCount) {
  const auto r = run("dp-kernel --x 0,2 --y 0,2 --n 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("count 3\n"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("dual --p 0.3 --bogus 1").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("dual --p 1.5").code, 2);
  EXPECT_EQ(run("km-prob --r 2 --x 0,1 --y 0,1 --n 4").code, 2);  // mixed parity
  EXPECT_EQ(run("km-prob --r 3 --x 0,2 --y 0,2 --n 4").code, 2);
  EXPECT_EQ(run("estimate-tau --n-list 4,x").code, 2);
  EXPECT_EQ(run("sample-conditioned --q 2 --method splitting").code, 2);
  EXPECT_EQ(run("convergence --n-list 7,8").code, 2);
}

TEST_F(Cli, HelpForEverySubcommand) {
  for (const char* sub : {"sample-fk", "sample-conditioned", "skeleton", "walk-bridge", "km-prob", "dp-kernel",
                          "estimate-v", "watermelon", "estimate-tau", "scaling", "convergence", "repulsion",
                          "duality", "report", "dual"}) {
    const auto r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, SameArgvAndSeedGiveIdenticalFiles) {
  for (const std::string& args :
       {std::string("sample-fk --p 0.5 --q 2 --n 3 --height 1 --count 5 --seed 3 --out ") + path("a.jsonl"),
        std::string("estimate-tau --n-list 4,6,8 --samples 2000 --seed 3 --out ") + path("a.json"),
        std::string("watermelon --r 2 --count 200 --seed 3 --out ") + path("a.csv")}) {
    ASSERT_EQ(run(args).code, 0) << args;
    const auto file = args.substr(args.rfind(' ') + 1);
    const auto first = fkw::io::read_file(file);
    ASSERT_EQ(run(args).code, 0);
    EXPECT_EQ(first, fkw::io::read_file(file)) << args;
    EXPECT_FALSE(fs::exists(file + ".tmp"));
  }
}

TEST_F(Cli, ThreadCountDoesNotChangeOutput) {
  const std::string base = "estimate-tau --n-list 4,6,8 --samples 2000 --out " + path("t.csv");
  ASSERT_EQ(run(base + " --threads 1").code, 0);
  const auto one = fkw::io::read_file(path("t.csv"));
  ASSERT_EQ(run(base + " --threads 4").code, 0);
  EXPECT_EQ(one, fkw::io::read_file(path("t.csv")));
}

TEST_F(Cli, ManifestInEveryFormat) {
  ASSERT_EQ(run("walk-bridge --n 8 --count 2 --out " + path("w.csv")).code, 0);
  const auto csv = fkw::io::read_file(path("w.csv"));
  ASSERT_EQ(csv.rfind("# manifest: ", 0), 0u);
  const auto m = fkw::io::Json::parse(csv.substr(12, csv.find('\n') - 12));
  EXPECT_EQ(m["subcommand"], "walk-bridge");
  EXPECT_EQ(m["params"]["n"], "8");

  ASSERT_EQ(run("dual --p 0.7 --out " + path("d.json")).code, 0);
  const auto j = fkw::io::Json::parse(fkw::io::read_file(path("d.json")));
  EXPECT_EQ(j["manifest"]["params"]["p"], "0.7");
  EXPECT_NEAR(j["results"]["p_star"].get<double>(), 0.3, 1e-15);

  ASSERT_EQ(run("sample-fk --count 2 --out " + path("s.jsonl")).code, 0);
  const auto lines = fkw::io::read_file(path("s.jsonl"));
  EXPECT_TRUE(fkw::io::Json::parse(lines.substr(0, lines.find('\n'))).contains("manifest"));
}

TEST_F(Cli, ConfigValuesAreOverriddenByFlags) {
  fkw::io::write_atomic(path("run.cfg"), "# replay\nsubcommand = dual\nseed = 9\np = 0.2\nq = 2\n");
  ASSERT_EQ(run("--config " + path("run.cfg") + " --out " + path("a.json")).code, 0);
  auto j = fkw::io::Json::parse(fkw::io::read_file(path("a.json")));
  EXPECT_EQ(j["manifest"]["seed"], 9);
  EXPECT_EQ(j["manifest"]["params"]["p"], "0.2");
  EXPECT_EQ(j["manifest"]["params"]["q"], "2");
  ASSERT_EQ(run("dual --config " + path("run.cfg") + " --p 0.4 --out " + path("b.json")).code, 0);
  j = fkw::io::Json::parse(fkw::io::read_file(path("b.json")));
  EXPECT_EQ(j["manifest"]["params"]["p"], "0.4");
  EXPECT_EQ(j["manifest"]["params"]["q"], "2");
  fkw::io::write_atomic(path("bad.cfg"), "p 0.3\n");
  EXPECT_EQ(run("dual --config " + path("bad.cfg")).code, 2);
  fkw::io::write_atomic(path("unknown.cfg"), "frobnicate = 1\n");
  EXPECT_EQ(run("dual --p 0.3 --config " + path("unknown.cfg")).code, 2);
}

TEST_F(Cli, ManifestReplaysRun) {
  ASSERT_EQ(run("estimate-tau --n-list 4,6 --samples 1000 --seed 4 --out " + path("a.json")).code, 0);
  const auto j = fkw::io::Json::parse(fkw::io::read_file(path("a.json")));
  fkw::io::RunManifest m;
  m.subcommand = j["manifest"]["subcommand"];
  m.seed = j["manifest"]["seed"];
  for (const auto& [k, v] : j["manifest"]["params"].items()) m.params[k] = v.get<std::string>();
  fkw::io::write_atomic(path("replay.cfg"), m.to_config());
  ASSERT_EQ(run("--config " + path("replay.cfg") + " --out " + path("a.json")).code, 0);
  const auto k = fkw::io::Json::parse(fkw::io::read_file(path("a.json")));
  EXPECT_EQ(j["results"], k["results"]);
}

TEST_F(Cli, BudgetExhaustionExitsThreeWithPartialReport) {
  const auto r = run("sample-conditioned --p 0.05 --n 30 --method rejection --count 5 --budget-seconds 0.5 --out " +
                     path("b.json"));
  EXPECT_EQ(r.code, 3);
  const auto j = fkw::io::Json::parse(fkw::io::read_file(path("b.json")));
  EXPECT_TRUE(j["partial"].get<bool>());
  EXPECT_TRUE(j["results"].contains("error"));
}

TEST_F(Cli, ReportSummarisesChecks) {
  ASSERT_EQ(run("scaling --model walk --out " + path("s.json")).code, 0);
  const auto r = run("report " + path("s.json") + " --out " + path("r.csv"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("PASS scaling rho_within_0.15"), std::string::npos);
  EXPECT_NE(fkw::io::read_file(path("r.csv")).find("scaling,rho_within_0.15,true"), std::string::npos);
  EXPECT_EQ(run("report " + path("missing.json")).code, 2);
}
