// ncvx_cli: runs constructions, audits and renderings from flags or a
// scenario file. Exit codes: 0 success, 1 internal error, 2 configuration
// error, 3 violated precondition, 4 failed audit.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ncvx/construct.hpp"
#include "ncvx/errors.hpp"
#include "ncvx/inapprox.hpp"
#include "ncvx/io.hpp"
#include "ncvx/laminate.hpp"
#include "ncvx/parallel.hpp"
#include "ncvx/verify.hpp"
#include "ncvx/wells.hpp"

using namespace ncvx;
namespace fs = std::filesystem;

namespace {

constexpr const char* kScenarioSchema = "ncvx-scenario/1";

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kPrecondition = 3, kAuditFailed = 4 };

struct ConfigProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string schema;
  std::string out_dir;
  std::string name;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
  std::size_t boundary_samples = 1000;
  bool quiet = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigProblem("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string write_artifact(const Common& c, const std::string& suffix, const std::string& content) {
  fs::create_directories(c.out_dir);
  const fs::path p = fs::path(c.out_dir) / (c.name + suffix);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigProblem("cannot write '" + p.string() + "'");
  out << content;
  return p.string();
}

Domain2 domain_from(const std::string& kind) {
  if (kind == "square") return Domain2::unit_square();
  if (kind == "lshape") return Domain2::l_shape();
  if (kind == "disk") return Domain2::disk(Vec2d::Zero(), 1.0);
  throw ConfigProblem("unknown domain '" + kind + "' (square, lshape, disk)");
}

std::vector<double> need(const std::vector<double>& v, std::initializer_list<std::size_t> sizes, const char* what) {
  for (auto s : sizes)
    if (v.size() == s) return v;
  std::string allowed;
  for (auto s : sizes) allowed += (allowed.empty() ? "" : " or ") + std::to_string(s);
  throw ConfigProblem(std::string(what) + " needs " + allowed + " numbers, got " + std::to_string(v.size()));
}

TracelessMat2<double> coords2(const std::vector<double>& v, const char* what) {
  const auto x = need(v, {3}, what);
  return {x[0], x[1], x[2]};
}

// 3 numbers are a diagonal, 9 a row-major matrix.
Mat3d matrix3(const std::vector<double>& v, const char* what) {
  const auto x = need(v, {3, 9}, what);
  if (x.size() == 3) return Vec3d(x[0], x[1], x[2]).asDiagonal();
  Mat3d m;
  m << x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8];
  return m;
}

WellSet wells_from(const std::string& name, double m, const std::vector<double>& e, double alpha) {
  std::array<double, 3> ev{1, 1, 1};
  if (!e.empty()) {
    const auto x = need(e, {3}, "--e");
    ev = {x[0], x[1], x[2]};
  }
  if (name == "LINEAR3D_K0") return WellSet::linear3d_k0();
  if (name == "LINEAR2D_K0") return WellSet::linear2d_k0(m);
  if (name == "BALL2D_QCE") return WellSet::ball2d_qce();
  if (name == "KALPHA") return WellSet::kalpha(alpha, m);
  if (name == "NONLINEAR_K") return WellSet::nonlinear_k(ev);
  if (name == "HULL_NONLINEAR") return WellSet::hull_nonlinear(ev);
  throw ConfigProblem("unknown well set '" + name + "'");
}

int report_audit(const Common& c, const AuditReport& rep) {
  const std::string text = rep.to_text();
  write_artifact(c, ".audit.txt", text);
  if (!c.quiet) std::cout << text;
  return rep.ok() ? kOk : kAuditFailed;
}

// Audits run on the field as read back from its dump, so a later `audit` of
// the written file reproduces the report byte for byte.
PiecewiseField dump_and_reload(const Common& c, const PiecewiseField& f) {
  const std::string text = dump_field(f);
  write_artifact(c, ".json", text);
  return load_field(text);
}

// |e(v)| of a trace-free 2x2 datum: sqrt(2) |a|.
void require_2d_datum(const TracelessMat2<double>& d) {
  const double e = std::sqrt(2.0) * d.a_norm();
  if (!(e < 3.0 / (2.0 * std::sqrt(2.0)))) {
    std::ostringstream os;
    os << "ess sup |e(v)| < 3/(2√2) violated: |e(v)| = " << e << " >= " << 3.0 / (2.0 * std::sqrt(2.0));
    throw Error(Errc::PreconditionViolation, os.str());
  }
}

int exit_for(Errc c) {
  switch (c) {
    case Errc::ConfigError:
    case Errc::InvalidParams:
    case Errc::DimensionMismatch:
    case Errc::IndexOutOfRange: return kConfig;
    case Errc::ValidationFailure:
    case Errc::StageRegression:
    case Errc::BudgetExhausted: return kAuditFailed;
    default: return kPrecondition;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise-affine constructions for non-convex energy wells"};
  app.set_config("--config", "", "Scenario file (TOML subset, schema " + std::string(kScenarioSchema) + ")");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);

  Common c;
  const char* env_out = std::getenv("NCVX_OUT_DIR");
  c.out_dir = env_out && *env_out ? env_out : ".";
  app.add_option("--schema", c.schema, "Scenario schema tag");
  app.add_option("--out-dir", c.out_dir, "Directory for artifacts (default $NCVX_OUT_DIR or .)");
  app.add_option("--name", c.name, "Artifact base name (default: the subcommand)");
  app.add_option("--threads", c.threads, "Worker cap; results do not depend on it");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--samples", c.samples, "Audit interior samples");
  app.add_option("--boundary-samples", c.boundary_samples, "Audit boundary samples");
  app.add_flag("--quiet", c.quiet, "Only write artifacts");

  // energy
  auto* energy = app.add_subcommand("energy", "Evaluate an energy density on a matrix")->configurable();
  std::string density = "V";
  std::vector<double> e_matrix, e_director{0, 0, 1}, e_c{1}, e_gamma{2}, e_wells;
  double e_nematic = 0;
  energy->add_option("--density", density, "V, Vqce, Vnc, W or Wn")->check(CLI::IsMember({"V", "Vqce", "Vnc", "W", "Wn"}));
  energy->add_option("--matrix", e_matrix, "Row-major entries (4 or 9)")->required();
  energy->add_option("--director", e_director, "Unit director n");
  energy->add_option("--c", e_c, "Ogden moduli");
  energy->add_option("--gamma", e_gamma, "Ogden exponents");
  energy->add_option("--e", e_wells, "Well stretches e1 e2 e3");
  energy->add_option("--nematic", e_nematic, "Nematic parameter a (sets the stretches)");

  // explicit-disk
  auto* disk = app.add_subcommand("explicit-disk", "Closed-form disk solution")->configurable();
  double d_radius = 1;
  int d_sign = 1;
  disk->add_option("--radius", d_radius, "Disk radius");
  disk->add_option("--sign", d_sign, "Rotation sign (+1 or -1)");

  // general-domain
  auto* general = app.add_subcommand("general-domain", "Disk packing carrying rescaled disk solutions")->configurable();
  std::string g_domain = "square";
  double g_target = 0.99, g_min_scale = 1e-3;
  general->add_option("--domain", g_domain, "square, lshape or disk");
  general->add_option("--target", g_target, "Cover target");
  general->add_option("--min-scale", g_min_scale, "Smallest disk radius");

  // pompe
  auto* pompe = app.add_subcommand("pompe", "Oscillation between two rank-one connected matrices")->configurable();
  std::vector<double> p_a, p_b;
  double p_lambda = 0.5, p_eps = 0.25, p_target = 0.97, p_min_scale = 1e-5;
  std::string p_domain = "square";
  pompe->add_option("--a", p_a, "A as (a1 a2 a3)")->required();
  pompe->add_option("--b", p_b, "B as (a1 a2 a3)")->required();
  pompe->add_option("--lambda", p_lambda, "Weight of B in C");
  pompe->add_option("--eps", p_eps, "Closeness parameter");
  pompe->add_option("--domain", p_domain, "square, lshape or disk");
  pompe->add_option("--target", p_target, "Cover target");
  pompe->add_option("--min-scale", p_min_scale, "Smallest tile scale");

  // laminate
  auto* lam = app.add_subcommand("laminate", "Rank-one splits of a single matrix")->configurable();
  bool l_split2d = false, l_split3d = false;
  std::vector<double> l_matrix;
  double l_rtilde = 0.6, l_m = 2.0, l_alpha = 0.475, l_mnext = 10.0;
  lam->add_flag("--split2d", l_split2d, "First-order 2D split of (a1 a2 a3)");
  lam->add_flag("--split3d", l_split3d, "Two-level 3D split (diagonal or 9 entries)");
  lam->add_option("--matrix", l_matrix, "Matrix to split (defaults to the worked examples)");
  lam->add_option("--r-tilde", l_rtilde, "2D target radius");
  lam->add_option("--m", l_m, "2D cylinder height");
  lam->add_option("--alpha", l_alpha, "3D target parameter");
  lam->add_option("--m-next", l_mnext, "3D skew bound of the next level");

  // inapprox
  auto* inap = app.add_subcommand("inapprox", "Build and validate an in-approximation")->configurable();
  std::string i_family = "lin2d";
  double i_bound = 0.5, i_height = 0, i_mu1 = -0.45, i_mu3 = 0.9, i_grad = 2.0, i_lam1 = 0.72, i_lam3 = 1.9,
         i_nematic = 8.0;
  std::vector<double> i_e;
  int i_depth = 6;
  inap->add_option("--family", i_family, "lin2d, lin3d or nonlinear")->check(CLI::IsMember({"lin2d", "lin3d", "nonlinear"}));
  inap->add_option("--bound", i_bound, "2D datum bound |a|");
  inap->add_option("--height", i_height, "2D cylinder height (0: default)");
  inap->add_option("--mu1", i_mu1, "3D lower eigenvalue bound");
  inap->add_option("--mu3", i_mu3, "3D upper eigenvalue bound");
  inap->add_option("--grad-bound", i_grad, "3D skew bound of the datum");
  inap->add_option("--lam1", i_lam1, "Nonlinear lower singular value bound");
  inap->add_option("--lam3", i_lam3, "Nonlinear upper singular value bound");
  inap->add_option("--nematic", i_nematic, "Nematic parameter a (nonlinear)");
  inap->add_option("--e", i_e, "Explicit stretches e1 e2 e3 (nonlinear, instead of --nematic)");
  inap->add_option("--depth", i_depth, "Number of levels");

  // integrate and open-refine share the engine options
  auto* integ = app.add_subcommand("integrate", "Staged convex integration")->configurable();
  auto* open = app.add_subcommand("open-refine", "Refine towards one open set U_j")->configurable();
  int n_dim = 2, n_stages = 4, n_rounds = 14, n_target = 2;
  std::vector<double> n_datum{0.5, 0, 0};
  double n_eps = 0.05, n_height = 0, n_mu1 = -0.45, n_mu3 = 0.9, n_grad = 2.0;
  std::string n_domain = "square";
  EngineOptions eng;
  bool n_svg = false;
  for (auto* sc : {integ, open}) {
    sc->add_option("--datum", n_datum, "Datum: (a1 a2 a3) in 2D, diagonal or 9 entries in 3D");
    sc->add_option("--eps", n_eps, "Accuracy");
    sc->add_option("--rounds", n_rounds, "Rounds per stage");
    sc->add_option("--height", n_height, "2D cylinder height (0: default)");
    sc->add_option("--domain", n_domain, "square, lshape or disk");
    sc->add_option("--rho", eng.rho, "Tile anisotropy");
    sc->add_option("--cells", eng.materialize_cells, "Cell budget of the written field");
    sc->add_option("--particle-cap", eng.particle_cap, "Tracked gradient states");
    sc->add_flag("--svg", n_svg, "Also write the stage-decay chart");
  }
  integ->add_option("--dim", n_dim, "2 or 3")->check(CLI::IsMember({2, 3}));
  integ->add_option("--stages", n_stages, "Number of stages");
  integ->add_option("--mu1", n_mu1, "3D lower eigenvalue bound");
  integ->add_option("--mu3", n_mu3, "3D upper eigenvalue bound");
  integ->add_option("--grad-bound", n_grad, "3D skew bound");
  open->add_option("--target-index", n_target, "j of the target U_j (>= 2)");

  // audit
  auto* aud = app.add_subcommand("audit", "Audit a field dump")->configurable();
  std::string a_field, a_spec = "datum", a_wells = "LINEAR3D_K0";
  double a_tol = 1e-9, a_allow = 0, a_m = 0, a_alpha = 0.5, a_lambda = 0.5, a_eps = 0.1;
  std::vector<double> a_a, a_b, a_e;
  aud->add_option("--field", a_field, "Field dump")->required();
  aud->add_option("--spec", a_spec, "datum, wells or segment")->check(CLI::IsMember({"datum", "wells", "segment"}));
  aud->add_option("--wells", a_wells, "Well set name");
  aud->add_option("--well-m", a_m, "Height parameter of the well set");
  aud->add_option("--well-alpha", a_alpha, "alpha of KALPHA");
  aud->add_option("--e", a_e, "Stretches of nonlinear well sets");
  aud->add_option("--tol", a_tol, "Well distance tolerance");
  aud->add_option("--allow", a_allow, "Allowed bad fraction");
  aud->add_option("--a", a_a, "Segment end A (a1 a2 a3)");
  aud->add_option("--b", a_b, "Segment end B (a1 a2 a3)");
  aud->add_option("--lambda", a_lambda, "Weight of B");
  aud->add_option("--eps", a_eps, "Segment closeness");

  // render
  auto* ren = app.add_subcommand("render", "SVG rendering of a field or of metrics")->configurable();
  std::string r_field, r_metrics, r_mode = "mesh", r_wells = "LINEAR3D_K0", r_output;
  double r_mag = 0, r_m = 0;
  int r_dim = 2;
  ren->add_option("--field", r_field, "Field dump");
  ren->add_option("--metrics", r_metrics, "Metrics table (decay mode)");
  ren->add_option("--mode", r_mode, "mesh, heatmap or decay")->check(CLI::IsMember({"mesh", "heatmap", "decay"}));
  ren->add_option("--wells", r_wells, "Well set for the heatmap");
  ren->add_option("--well-m", r_m, "Height parameter of the well set");
  ren->add_option("--magnification", r_mag, "Displacement magnification (0: automatic)");
  ren->add_option("--dimension", r_dim, "Dimension of the data");
  ren->add_option("--output", r_output, "SVG path (default <out-dir>/<name>.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (c.name.empty()) c.name = sub->get_name();
  if (!app.get_option("--config")->empty() || !c.schema.empty()) {
    if (c.schema != kScenarioSchema) {
      std::cerr << "config error: scenario schema must be \"" << kScenarioSchema << "\", got \"" << c.schema << "\"\n";
      return kConfig;
    }
  }
  thread_cap().store(c.threads);

  try {
    if (sub == energy) {
      const auto x = need(e_matrix, {4, 9}, "--matrix");
      const auto params = [&] {
        if (e_nematic > 0) return OgdenParams::nematic(e_nematic, e_c, e_gamma);
        if (e_wells.empty()) throw ConfigProblem(density + " needs --nematic or --e");
        const auto w = need(e_wells, {3}, "--e");
        return OgdenParams::general({w[0], w[1], w[2]}, e_c, e_gamma);
      };
      const auto nv = need(e_director, {3}, "--director");
      const Vec3d n(nv[0], nv[1], nv[2]);
      double value = 0;
      if (density == "Vqce") {
        if (x.size() != 4) throw ConfigProblem("Vqce takes a 2x2 matrix");
        Mat2d m;
        m << x[0], x[1], x[2], x[3];
        value = energy_Vqce_2d<double>(m);
      } else {
        if (x.size() != 9) throw ConfigProblem(density + " takes a 3x3 matrix");
        const Mat3d m = matrix3(x, "--matrix");
        if (density == "V") value = energy_V<double>(m).value;
        if (density == "Vnc") value = energy_Vnc<double>(m, n, params());
        if (density == "W") value = energy_W<double>(m, params());
        if (density == "Wn") value = energy_Wn<double>(m, n, params(), false);
      }
      std::cout << density << " = " << format_double(value) << "\n";
      return kOk;
    }

    if (sub == disk) {
      const auto f = dump_and_reload(c, explicit_disk_solution(d_radius, d_sign));
      return report_audit(c, audit(f, AuditSpec::well_set(WellSet::linear3d_k0(), 1e-9), c.samples, c.seed,
                                   c.boundary_samples));
    }

    if (sub == general) {
      PackOptions po;
      po.target = g_target;
      po.min_scale = g_min_scale;
      po.seed = c.seed;
      const auto f = dump_and_reload(c, general_domain_solution(domain_from(g_domain), po));
      const double res = f.residual() / f.domain().area();
      if (!c.quiet) std::cout << "disks " << f.cells().size() << " residual " << format_double(res) << "\n";
      return report_audit(c, audit(f, AuditSpec::well_set(WellSet::linear3d_k0(), 1e-9, res), c.samples, c.seed,
                                   c.boundary_samples));
    }

    if (sub == pompe) {
      PackOptions po;
      po.target = p_target;
      po.min_scale = p_min_scale;
      po.seed = c.seed;
      const auto r = pompe_construct(coords2(p_a, "--a"), coords2(p_b, "--b"), p_lambda, domain_from(p_domain), p_eps, po);
      if (!c.quiet)
        std::cout << "covered " << format_double(r.covered_fraction) << " flagged " << format_double(r.flagged_fraction)
                  << " residual " << format_double(r.residual_fraction) << " cells " << r.field.cells().size() << "\n";
      const auto f = dump_and_reload(c, r.field);
      return report_audit(c, audit(f, AuditSpec::segment(r.a, r.b, r.lambda, r.eps), c.samples, c.seed,
                                   c.boundary_samples));
    }

    if (sub == lam) {
      if (l_split2d == l_split3d) throw ConfigProblem("choose exactly one of --split2d and --split3d");
      if (l_split2d) {
        const auto m = l_matrix.empty() ? TracelessMat2<double>{0.5, 0, 0} : coords2(l_matrix, "--matrix");
        const Split2d s = split_2d(m, l_rtilde, l_m);
        std::cout << "A = (" << format_double(s.a.a1) << ", " << format_double(s.a.a2) << ", " << format_double(s.a.a3)
                  << ")\nB = (" << format_double(s.b.a1) << ", " << format_double(s.b.a2) << ", "
                  << format_double(s.b.a3) << ")\nlambda = " << format_double(s.lambda) << "\n";
        LaminateNode root{m.matrix(), 1, s.lambda, 0, {}};
        root.children.push_back({s.a.matrix(), 1 - s.lambda, 0, 1, {}});
        root.children.push_back({s.b.matrix(), s.lambda, 0, 1, {}});
        write_artifact(c, ".laminate.json", dump_laminate(root));
        return kOk;
      }
      const Mat3d m = l_matrix.empty() ? Mat3d(Vec3d(-0.45, -0.45, 0.9).asDiagonal()) : matrix3(l_matrix, "--matrix");
      const auto t = TracelessMat3<double>::from_matrix(m);
      const Split3d first = split_3d_first(t, l_alpha);
      const Split3d second = split_3d_second(first.plus, l_alpha, l_mnext);
      std::cout << "delta = " << format_double(first.amplitude) << "\nepsilon = " << format_double(second.amplitude)
                << "\n";
      write_artifact(c, ".laminate.json", dump_laminate(split_3d_tree(t, l_alpha, l_mnext)));
      return kOk;
    }

    if (sub == inap) {
      InApproximation seq;
      if (i_family == "lin2d") {
        seq = build_inapprox_2d(i_bound, i_height > 0 ? i_height : default_height_2d(i_bound), i_depth);
      } else if (i_family == "lin3d") {
        seq = build_inapprox_3d(i_mu1, i_mu3, i_grad, i_depth);
      } else {
        const OgdenParams p = i_e.empty() ? OgdenParams::nematic(i_nematic, {1.0}, {2.0})
                                          : OgdenParams::general({need(i_e, {3}, "--e")[0], i_e[1], i_e[2]}, {1.0}, {2.0});
        seq = build_inapprox_nonlinear(p, i_lam1, i_lam3, i_depth);
      }
      ValidateOptions vo;
      vo.samples = static_cast<int>(std::min<std::size_t>(c.samples, 1000));
      vo.seed = c.seed;
      vo.throw_on_failure = false;
      const auto rep = validate_inapprox(seq, vo);
      std::ostringstream os;
      os << "family " << family_name(seq.family) << " depth " << seq.depth << "\n";
      for (const auto& cl : rep.clauses)
        os << "clause " << cl.clause << " pass=" << (cl.pass ? 1 : 0) << " worst=" << format_double(cl.worst) << " "
           << cl.detail << "\n";
      write_artifact(c, ".validation.txt", os.str());
      if (!c.quiet) std::cout << os.str();
      return rep.ok() ? kOk : kAuditFailed;
    }

    if (sub == integ && n_dim == 3) {
      const Mat3d d = matrix3(n_datum, "--datum");
      const auto seq = build_inapprox_3d(n_mu1, n_mu3, n_grad, n_stages + 2);
      const auto r = integrate_3d_measure(d, seq, n_stages);
      const std::string table = metrics_table(r.stage_end);
      write_artifact(c, ".metrics.tsv", table);
      if (n_svg) write_artifact(c, ".svg", render_stage_decay(r.stage_end));
      if (!c.quiet) std::cout << table;
      for (std::size_t i = 1; i < r.stage_end.size(); ++i)
        if (!(r.stage_end[i].p95 < r.stage_end[i - 1].p95)) return kAuditFailed;
      return kOk;
    }

    if (sub == integ || sub == open) {
      const auto d = coords2(n_datum, "--datum");
      require_2d_datum(d);
      const double bound = d.a_norm();
      const double m = n_height > 0 ? n_height : default_height_2d(std::max(bound, std::abs(d.a3)));
      const PiecewiseField v(domain_from(n_domain), Datum{d.matrix(), Vec2d::Zero()}, {});
      eng.seed = c.seed;
      std::vector<StageMetrics> rows;
      PiecewiseField out;
      std::string status;
      if (sub == integ) {
        const auto seq = build_inapprox_2d(bound, m, n_stages + 2);
        const auto r = convex_integrate(v, seq, n_eps, n_stages, n_rounds, eng);
        rows = r.metrics;
        out = r.field;
        std::ostringstream os;
        os << "final p95 " << format_double(r.final_p95) << " sup " << format_double(r.sup_total);
        status = os.str();
      } else {
        const auto seq = build_inapprox_2d(bound, m, n_target + 2);
        const Vec2d c_hat = d.a().norm() > 1e-12 ? Vec2d(d.a().normalized()) : Vec2d(1, 0);
        const Lin2dWindowOracle u(seq, n_target, c_hat);
        const auto r = construct_open(v, u, n_eps, n_rounds, eng);
        rows = r.metrics;
        out = r.field;
        status = r.status;
      }
      const std::string table = metrics_table(rows);
      write_artifact(c, ".metrics.tsv", table);
      if (n_svg) write_artifact(c, ".svg", render_stage_decay(rows));
      if (!c.quiet) std::cout << table << status << "\n";
      const auto f = dump_and_reload(c, out);
      return report_audit(c, audit(f, AuditSpec::datum(), c.samples, c.seed, c.boundary_samples));
    }

    if (sub == aud) {
      const auto f = load_field(read_file(a_field));
      AuditSpec spec;
      if (a_spec == "wells") spec = AuditSpec::well_set(wells_from(a_wells, a_m, a_e, a_alpha), a_tol, a_allow);
      if (a_spec == "segment") {
        const auto a = coords2(a_a, "--a"), b = coords2(a_b, "--b");
        spec = AuditSpec::segment(a.matrix(), b.matrix(), a_lambda, a_eps);
      }
      return report_audit(c, audit(f, spec, c.samples, c.seed, c.boundary_samples));
    }

    if (sub == ren) {
      std::string svg;
      RenderOptions ro;
      ro.dimension = r_dim;
      ro.magnification = r_mag;
      ro.title = c.name;
      if (r_mode == "decay") {
        if (r_metrics.empty()) throw ConfigProblem("decay mode needs --metrics");
        svg = render_stage_decay(parse_metrics(read_file(r_metrics)), ro);
      } else {
        if (r_field.empty()) throw ConfigProblem(r_mode + " mode needs --field");
        ro.mode = r_mode == "mesh" ? RenderMode::DeformedMesh : RenderMode::Heatmap;
        ro.wells = wells_from(r_wells, r_m, {}, 0.5);
        svg = render(load_field(read_file(r_field)), ro);
      }
      if (r_output.empty()) {
        r_output = write_artifact(c, ".svg", svg);
      } else {
        std::ofstream o(r_output, std::ios::binary);
        if (!o) throw ConfigProblem("cannot write '" + r_output + "'");
        o << svg;
      }
      if (!c.quiet) std::cout << "wrote " << r_output << "\n";
      return kOk;
    }
  } catch (const ConfigProblem& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    const int code = exit_for(e.code());
    std::cerr << (code == kPrecondition ? "precondition violated: " : code == kConfig ? "config error: " : "error: ")
              << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
