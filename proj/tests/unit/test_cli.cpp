#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svyconform/cli.hpp"
#include "svyconform/csv.hpp"

using namespace svyconform;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "svyconform");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "svyconform_test_cli";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate, draw and predict") {
  const auto dir = scratch();
  const auto pop = (dir / "pop.csv").string();
  auto g = cli({"generate", "--out", pop, "--n-units", "800", "--n-strata", "2", "--n-clusters", "40",
                "--covariate-dim", "2", "--seed", "3"});
  REQUIRE(g.code == 0);
  CHECK(g.out.find("800") != std::string::npos);

  const auto sample = (dir / "sample.csv").string();
  auto d = cli({"draw", "--population", pop, "--x-cols", "x1,x2", "--size-col", "size", "--design", "pps-wr",
                "--n", "120", "--seed", "5", "--out", sample});
  REQUIRE(d.code == 0);
  const auto st = csv::read_file(sample);
  CHECK(st.rows.size() == 120);
  CHECK(st.column("weight").has_value());

  const auto test = (dir / "test.csv").string();
  std::ofstream(test) << "id,x1,x2,w\na,0.1,0.2,40\nb,-1,0.5,5\n";
  const auto preds = (dir / "pred.csv").string();
  auto p = cli({"predict", "--train", sample, "--test", test, "--x-cols", "x1,x2", "--design", "pps-wr",
                "--test-weight-col", "w", "--alpha", "0.2", "--out", preds});
  REQUIRE(p.code == 0);
  const auto pt = csv::read_file(preds);
  REQUIRE(pt.rows.size() == 2);
  CHECK(pt.header == std::vector<std::string>{"id", "lower", "upper", "level", "method", "vacuous"});
  CHECK(pt.rows[0][0] == "a");
  CHECK(pt.rows[0][4] == "split-weighted");
  CHECK(*csv::parse_double(pt.rows[0][1]) < *csv::parse_double(pt.rows[0][2]));

  // Non-exchangeable design without test weights is refused.
  auto refused = cli({"predict", "--train", sample, "--test", test, "--x-cols", "x1,x2", "--design", "pps-wr"});
  CHECK(refused.code == 1);
  CHECK(refused.err.find("error") != std::string::npos);

  auto grid = cli({"predict", "--train", sample, "--test", test, "--x-cols", "x1,x2", "--design", "pps-wr",
                   "--weight-grid", "1,10,1000"});
  REQUIRE(grid.code == 0);
  std::istringstream gin(grid.out);
  CHECK(csv::read(gin).rows.size() == 6);

  auto full = cli({"predict", "--train", sample, "--test", test, "--x-cols", "x1,x2", "--design", "pps-wr",
                   "--test-weight", "7", "--method", "full", "--grid-points", "60"});
  CHECK(full.code == 0);

  // Cluster and stratified engines.
  const auto csample = (dir / "csample.csv").string();
  REQUIRE(cli({"draw", "--population", pop, "--cluster-col", "cluster", "--design", "cluster", "--n", "12",
               "--out", csample})
              .code == 0);
  std::ofstream(dir / "utest.csv") << "id\nu1\n";
  for (const char* m : {"cluster-sub1", "cluster-subB", "cluster-pool", "cluster-double"}) {
    auto c = cli({"predict", "--train", csample, "--test", (dir / "utest.csv").string(), "--cluster-col", "cluster",
                  "--design", "cluster", "--task", "unsupervised", "--method", m, "--alpha", "0.2"});
    CHECK(c.code == 0);
    CHECK(c.out.find("u1") != std::string::npos);
  }

  const auto ssample = (dir / "ssample.csv").string();
  REQUIRE(cli({"draw", "--population", pop, "--x-cols", "x1,x2", "--stratum-col", "stratum", "--design",
               "stratified", "--alloc", "S1=40,S2=30", "--out", ssample})
              .code == 0);
  std::ofstream(dir / "stest.csv") << "id,x1,x2,stratum\nq,0,0,S2\n";
  auto s = cli({"predict", "--train", ssample, "--test", (dir / "stest.csv").string(), "--x-cols", "x1,x2",
                "--stratum-col", "stratum", "--design", "stratified", "--method", "stratified"});
  CHECK(s.code == 0);
  CHECK(s.out.find("stratified") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code != 0);
  CHECK(cli({"draw"}).code != 0);
  CHECK(cli({"predict", "--train", "/nonexistent.csv", "--test", "/nonexistent.csv"}).code == 1);
  CHECK(cli({"generate", "--out", (scratch() / "x.csv").string(), "--informativeness", "3"}).code == 1);
}

TEST_CASE("simulate is reproducible and reports band failures") {
  const auto dir = scratch();
  const auto cfg = dir / "sim.json";
  std::ofstream(cfg) << R"({
    "name": "tiny",
    "population": {"synthetic": {"n_units": 600, "seed": 2}},
    "task": "regression",
    "design": {"kind": "srs-wor", "n": 60},
    "methods": [{"label": "split"}, {"label": "naive", "conformal": false}],
    "alphas": [0.2],
    "replicates": 40,
    "bands": [{"method": "split", "min": 0.5}]
  })";
  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  auto a = cli({"simulate", "--config", cfg.string(), "--out", out1.string()});
  auto b = cli({"simulate", "--config", cfg.string(), "--out", out2.string(), "--serial"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(out1 / "tiny.csv") == slurp(out2 / "tiny.csv"));
  CHECK(slurp(out1 / "tiny.json") == slurp(out2 / "tiny.json"));
  CHECK(fs::exists(out1 / "tiny.txt"));
  CHECK(fs::exists(out1 / "tiny.config.json"));

  std::ofstream(dir / "fail.json") << R"({
    "name": "fail",
    "population": {"synthetic": {"n_units": 600}},
    "design": {"kind": "srs-wor", "n": 30},
    "methods": [{"label": "m"}],
    "alphas": [0.2],
    "replicates": 5,
    "bands": [{"method": "m", "max": 0.01}]
  })";
  CHECK(cli({"simulate", "--config", (dir / "fail.json").string(), "--out", (dir / "run3").string()}).code == 2);
}

TEST_CASE("the installed executable runs") {
  const auto dir = scratch();
  const std::string cmd = std::string("\"") + SVYCONFORM_EXE + "\" generate --out \"" + (dir / "exe.csv").string() +
                          "\" --n-units 50 > \"" + (dir / "exe.log").string() + "\"";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(csv::read_file((dir / "exe.csv").string()).rows.size() == 50);
}
