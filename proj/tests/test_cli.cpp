#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ncvx/construct.hpp"
#include "ncvx/io.hpp"
#include "ncvx/verify.hpp"

using namespace ncvx;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& out_dir) {
  const std::string cmd = "NCVX_OUT_DIR='" + out_dir + "' '" + NCVX_CLI_PATH + "' " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("ncvx_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::string kScenarios = NCVX_SCENARIO_DIR;

}  // namespace

TEST_CASE("field dumps round-trip bit for bit") {
  const auto f = explicit_disk_solution(0.7, -1, Vec2d(0.1, -0.2));
  const std::string a = dump_field(f);
  CHECK(a.find("\"schema\": \"ncvx.field/1\"") != std::string::npos);
  const auto g = load_field(a);
  CHECK(dump_field(g) == a);
  CHECK(g.cells().size() == f.cells().size());
  CHECK(g.cells()[0].gradient == f.cells()[0].gradient);
  CHECK(g.datum().gradient == f.datum().gradient);
  CHECK(audit(g, AuditSpec::datum(), 500, 3).to_text() == audit(f, AuditSpec::datum(), 500, 3).to_text());

  // 17 significant digits
  CHECK(a.find("0.69999999999999996") != std::string::npos);
  CHECK_THROWS_AS(load_field("{\"schema\": \"other/2\"}"), Error);
  CHECK_THROWS_AS(load_field("not json"), Error);
}

TEST_CASE("metrics tables round-trip") {
  std::vector<StageMetrics> rows(2);
  rows[0].stage = 1;
  rows[0].round = 1;
  rows[0].bad_fraction = 0.8333333333333334;
  rows[0].p95 = 0.1;
  rows[0].cells = 7;
  rows[1] = rows[0];
  rows[1].round = 2;
  rows[1].sampled = true;
  const std::string t = metrics_table(rows);
  CHECK(t.rfind("# schema ncvx.metrics/1\nstage\tround\tbad_fraction\tp50\tp95\tmax\tsup_dev\tcells", 0) == 0);
  const auto back = parse_metrics(t);
  REQUIRE(back.size() == 2);
  CHECK(back[0].bad_fraction == rows[0].bad_fraction);
  CHECK(back[1].sampled);
  CHECK(metrics_table(back) == t);
}

TEST_CASE("laminate --split3d prints the worked-example amplitudes") {
  const auto dir = scratch("split3d");
  const auto r = run("--config '" + kScenarios + "/split3d.toml'", dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("delta = 0.1854049") != std::string::npos);
  CHECK(r.out.find("epsilon = 0.1870828") != std::string::npos);
  CHECK(fs::exists(dir / "split3d.laminate.json"));
}

TEST_CASE("oversized datum exits 3 naming the condition") {
  const auto dir = scratch("bad");
  const auto r = run("--config '" + kScenarios + "/bad_datum.toml'", dir);
  CHECK(r.code == 3);
  CHECK(r.out.find("ess sup |e(v)| < 3/(2√2) violated") != std::string::npos);
  CHECK(r.out.find("|e(v)| = 1.2") != std::string::npos);
}

TEST_CASE("configuration errors exit 2") {
  const auto dir = scratch("config");
  CHECK(run("integrate --no-such-flag", dir).code == 2);
  CHECK(run("", dir).code == 2);
  CHECK(run("pompe --a 1 2", dir).code == 2);
  const fs::path bad = dir / "wrong_schema.toml";
  std::ofstream(bad) << "schema = \"ncvx-scenario/0\"\n[laminate]\nsplit3d = true\n";
  CHECK(run("--config '" + bad.string() + "'", dir).code == 2);
  const fs::path typo = dir / "typo.toml";
  std::ofstream(typo) << "schema = \"ncvx-scenario/1\"\n[laminate]\nsplit3dd = true\n";
  CHECK(run("--config '" + typo.string() + "'", dir).code == 2);
}

TEST_CASE("explicit-disk dump audits identically after the round trip") {
  const auto dir = scratch("disk");
  const auto r = run("--config '" + kScenarios + "/explicit_disk.toml'", dir);
  REQUIRE(r.code == 0);
  const std::string report = slurp(dir / "explicit_disk.audit.txt");
  CHECK(report.rfind("audit ok=1", 0) == 0);
  const auto again = run("--name again --samples 10000 audit --spec wells --wells LINEAR3D_K0 --field '" +
                             (dir / "explicit_disk.json").string() + "'",
                         dir);
  CHECK(again.code == 0);
  CHECK(slurp(dir / "again.audit.txt") == report);

  // a failing audit exits 4
  const auto fail = run("--name fail audit --spec wells --wells NONLINEAR_K --e 0.9 1 1.1 --field '" +
                            (dir / "explicit_disk.json").string() + "'",
                        dir);
  CHECK(fail.code == 4);
}

TEST_CASE("pompe scenario and a segment re-audit agree") {
  const auto dir = scratch("pompe");
  const auto r = run("--config '" + kScenarios + "/pompe.toml'", dir);
  REQUIRE(r.code == 0);
  const auto again = run("--name again --samples 5000 audit --spec segment --a 0.1 -0.2 0.05 --b -0.2 -0.6 -0.45 "
                         "--lambda 0.4 --eps 0.25 --field '" +
                             (dir / "pompe.json").string() + "'",
                         dir);
  CHECK(again.code == 0);
  CHECK(slurp(dir / "again.audit.txt") == slurp(dir / "pompe.audit.txt"));
}

TEST_CASE("runs are byte-identical across thread counts") {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  const std::string args = "--quiet --samples 2000 integrate --stages 2 --rounds 6 --cells 2000 --particle-cap 5000";
  const auto a = run("--threads 1 " + args, d1);
  const auto b = run("--threads 4 " + args, d2);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  for (const char* f : {"integrate.metrics.tsv", "integrate.json", "integrate.audit.txt"}) {
    CAPTURE(f);
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  const std::string metrics = slurp(d1 / "integrate.metrics.tsv");
  CHECK(metrics.find("stage\tround\tbad_fraction\tp50\tp95\tmax\tsup_dev\tcells") != std::string::npos);
}

TEST_CASE("render subcommand") {
  const auto dir = scratch("render");
  REQUIRE(run("--quiet --name disk explicit-disk", dir).code == 0);
  const std::string field = (dir / "disk.json").string();
  CHECK(run("--name mesh render --mode mesh --field '" + field + "'", dir).code == 0);
  CHECK(slurp(dir / "mesh.svg").find("magnification s = ") != std::string::npos);
  CHECK(run("--name heat render --mode heatmap --field '" + field + "'", dir).code == 0);
  CHECK(fs::exists(dir / "heat.svg"));
  CHECK(run("--name three render --mode mesh --dimension 3 --field '" + field + "'", dir).code == 3);
  CHECK(run("--name nofield render --mode mesh", dir).code == 2);

  REQUIRE(run("--quiet --samples 500 integrate --stages 2 --rounds 6 --cells 500 --particle-cap 3000", dir).code == 0);
  CHECK(run("--name decay render --mode decay --metrics '" + (dir / "integrate.metrics.tsv").string() + "'", dir).code ==
        0);
  CHECK(slurp(dir / "decay.svg").find("class=\"p95\"") != std::string::npos);
}

TEST_CASE("energy and inapprox subcommands") {
  const auto dir = scratch("misc");
  const auto e = run("energy --density V --matrix -0.5 0 0 0 -0.5 0 0 0 1", dir);
  CHECK(e.code == 0);
  CHECK(e.out == "V = 0\n");
  CHECK(run("energy --density V --matrix 1 0 0 0 1 0 0 0 1", dir).code == 3);  // not trace-free
  const auto i = run("--samples 300 inapprox --family lin2d --bound 0.5 --depth 5", dir);
  CHECK(i.code == 0);
  CHECK(i.out.find("clause a pass=1") != std::string::npos);
}

TEST_CASE("2D integrate scenario decays monotonically") {
  const auto dir = scratch("integrate2d");
  const auto r = run("--quiet --config '" + kScenarios + "/integrate2d.toml'", dir);
  REQUIRE(r.code == 0);
  const auto rows = parse_metrics(slurp(dir / "integrate2d.metrics.tsv"));
  REQUIRE(!rows.empty());
  std::vector<double> stage_end;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (k + 1 == rows.size() || rows[k + 1].stage != rows[k].stage) stage_end.push_back(rows[k].p95);
  REQUIRE(stage_end.size() == 4);
  for (std::size_t k = 1; k < stage_end.size(); ++k) CHECK(stage_end[k] < stage_end[k - 1]);
  CHECK(stage_end.back() < 0.05);
  CHECK(fs::exists(dir / "integrate2d.svg"));
}
