#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = tsqr::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tsqr_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

fs::path simulated(const std::string& name, std::size_t n, int seed) {
  const auto dir = scratch(name);
  const auto r = cli({"simulate", "--n", std::to_string(n), "--seed", std::to_string(seed),
                      "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  return dir / "series.csv";
}

}  // namespace

TEST_CASE("simulate is reproducible from the seed") {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  REQUIRE(cli({"simulate", "--seed", "7", "--output-dir", a.string()}).code == 0);
  REQUIRE(cli({"simulate", "--seed", "7", "--output-dir", b.string()}).code == 0);
  CHECK(slurp(a / "series.csv") == slurp(b / "series.csv"));
  CHECK(slurp(a / "series.csv").rfind("t,y\n", 0) == 0);
  const auto c = scratch("sim_c");
  REQUIRE(cli({"simulate", "--seed", "8", "--output-dir", c.string()}).code == 0);
  CHECK(slurp(a / "series.csv") != slurp(c / "series.csv"));

  const auto m = read_json(a / "manifest.json");
  CHECK(m.at("command") == "simulate");
  CHECK(m.at("seed") == 7);
  CHECK(m.at("schema_version") == 1);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
  CHECK(m.at("config_hash") == read_json(b / "manifest.json").at("config_hash"));
  CHECK(m.contains("start_time"));
  CHECK(m.contains("end_time"));
  CHECK(m.at("outputs").size() == 2);
  CHECK(m.at("config").at("n") == 1000);
}

TEST_CASE("estimate on a simulated default series") {
  const auto csv = simulated("est_in", 2000, 3);
  const auto dir = scratch("est_out");
  const auto r = cli({"estimate", "--input", csv.string(), "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  const auto e = read_json(dir / "estimate.json");
  CHECK(e.at("boundary_flag") == false);
  const double tau = e.at("tau_hat").get<double>();
  CHECK(tau > 0.05);
  CHECK(tau < 0.95);
  CHECK(slurp(dir / "objective_curve.csv").rfind("tau,objective,refinement\n", 0) == 0);
  CHECK(fs::exists(dir / "sqe_path.csv"));
  const auto m = read_json(dir / "manifest.json");
  CHECK(m.at("command") == "estimate");
  CHECK(m.at("config").at("input") == csv.string());
  CHECK(m.at("outputs").size() == 3);

  // the same run through a config file and with more threads
  const auto cfgdir = scratch("est_cfg");
  json cfg = m.at("config");
  cfg.erase("input");
  write_text(cfgdir / "c.json", cfg.dump());
  const auto d2 = scratch("est_out2");
  REQUIRE(cli({"estimate", "--input", csv.string(), "--config", (cfgdir / "c.json").string(),
               "--threads", "2", "--output-dir", d2.string()})
              .code == 0);
  CHECK(slurp(dir / "estimate.json") == slurp(d2 / "estimate.json"));
  CHECK(slurp(dir / "sqe_path.csv") == slurp(d2 / "sqe_path.csv"));
}

TEST_CASE("input errors exit 2") {
  const auto dir = scratch("bad");
  std::string ten = "t,y\n";
  for (int t = 1; t <= 10; ++t) ten += std::to_string(t) + "," + std::to_string(0.1 * t) + "\n";
  write_text(dir / "ten.csv", ten);
  auto r = cli({"estimate", "--input", (dir / "ten.csv").string(), "--output-dir", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "manifest.json"));

  write_text(dir / "bad.csv", "t,y\n1,0.5\n2,abc\n3,0.1\n");
  r = cli({"estimate", "--input", (dir / "bad.csv").string(), "--output-dir", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);

  write_text(dir / "hdr.csv", "time,value\n1,0.5\n");
  CHECK(cli({"estimate", "--input", (dir / "hdr.csv").string()}).code == 2);
  CHECK(cli({"estimate", "--input", (dir / "missing.csv").string()}).code == 2);
  CHECK(cli({"estimate"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"simulate", "--dgp", "nope", "--output-dir", dir.string()}).code == 2);
  const auto csv = simulated("bad_in", 300, 1);
  CHECK(cli({"estimate", "--input", csv.string(), "--tau-grid", "0.1"}).code == 2);
  CHECK(cli({"estimate", "--input", csv.string(), "--weight", "cubic"}).code == 2);
  CHECK(cli({"estimate", "--input", csv.string(), "--family", "1.5,1"}).code == 2);
  CHECK(cli({"estimate", "--input", csv.string(), "--threads", "0"}).code == 2);
  write_text(dir / "v2.json", R"({"schema_version": 2})");
  CHECK(cli({"estimate", "--input", csv.string(), "--config", (dir / "v2.json").string()}).code == 2);
  CHECK(cli({"bootstrap", "--input", csv.string(), "--method", "bca"}).code == 2);
}

TEST_CASE("boundary estimate exits 0 with a warning") {
  const auto csv = simulated("bnd_in", 1500, 4);
  const auto dir = scratch("bnd_out");
  // a grid far from tau0 = 1 - 1/e puts the minimum on its edge
  const auto r = cli({"estimate", "--input", csv.string(), "--tau-grid", "0.45,0.01",
                      "--output-dir", dir.string()});
  CHECK(r.code == 0);
  const auto e = read_json(dir / "estimate.json");
  CHECK(e.at("boundary_flag") == true);
  CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("bootstrap, oracle and montecarlo subcommands") {
  const auto csv = simulated("bs_in", 500, 2);
  const auto dir = scratch("bs_out");
  auto r = cli({"bootstrap", "--input", csv.string(), "--boot-J", "20", "--seed", "3", "--tau1",
                "0.6", "--output-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("only 20 bootstrap replications") != std::string::npos);
  const auto b = read_json(dir / "bootstrap.json");
  CHECK(b.at("gamma1_sq_hat").get<double>() >= 0.0);
  CHECK(b.contains("wald_tau"));
  CHECK(read_json(dir / "manifest.json").at("seed") == 3);
  const auto d2 = scratch("bs_out2");
  REQUIRE(cli({"bootstrap", "--input", csv.string(), "--boot-J", "20", "--seed", "3", "--tau1",
               "0.6", "--threads", "2", "--output-dir", d2.string()})
              .code == 0);
  CHECK(slurp(dir / "bootstrap.json") == slurp(d2 / "bootstrap.json"));
  CHECK(slurp(dir / "bootstrap_draws.csv") == slurp(d2 / "bootstrap_draws.csv"));

  const auto od = scratch("orc");
  r = cli({"oracle", "--dgp", "asym_arch", "--mc-paths", "10000", "--s-points", "3", "--tau-grid",
           "0.2,0.2", "--skip-identification", "--output-dir", od.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(od / "bias_curve.csv").rfind("tau,delta0_0,delta0_1,se_0,se_1\n", 0) == 0);
  const auto o = read_json(od / "oracle.json");
  CHECK(o.at("tau0").get<double>() == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
  CHECK_FALSE(o.contains("identification"));

  const auto md = scratch("mc");
  r = cli({"montecarlo", "--dgp", "asym_tvarch", "--n", "200,400", "--reps", "3", "--seed", "5",
           "--output-dir", md.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(md / "metrics.csv").rfind("dgp,n,parameter,truth,mean,bias,sd,rmse", 0) == 0);
  CHECK(slurp(md / "rates.csv").rfind("dgp,parameter,n1,n2,rmse_ratio\n", 0) == 0);
  const auto mm = read_json(md / "manifest.json");
  CHECK(mm.at("config").at("replication_seeds").size() == 6);
  const auto md2 = scratch("mc2");
  REQUIRE(cli({"montecarlo", "--dgp", "asym_tvarch", "--n", "200,400", "--reps", "3", "--seed",
               "5", "--threads", "2", "--output-dir", md2.string()})
              .code == 0);
  CHECK(slurp(md / "metrics.csv") == slurp(md2 / "metrics.csv"));
  CHECK(slurp(md / "raw.csv") == slurp(md2 / "raw.csv"));
  CHECK(cli({"montecarlo", "--n", "20", "--reps", "3", "--output-dir", md.string()}).code == 3);
}

TEST_CASE("the installed binary reports exit codes") {
  const auto dir = scratch("bin");
  write_text(dir / "ten.csv", "t,y\n1,1\n2,2\n3,3\n4,4\n5,5\n6,6\n7,7\n8,8\n9,9\n10,10\n");
  const std::string tool = TSQR_TOOL_PATH;
  const std::string cmd = "\"" + tool + "\" estimate --input \"" + (dir / "ten.csv").string() +
                          "\" --output-dir \"" + dir.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
  const int help = std::system(("\"" + tool + "\" --help >/dev/null").c_str());
  REQUIRE(WIFEXITED(help));
  CHECK(WEXITSTATUS(help) == 0);
}
