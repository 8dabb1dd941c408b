#include "ncvx/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "ncvx/parallel.hpp"

namespace ncvx {

AuditSpec AuditSpec::well_set(const WellSet& w, double tol, double allow) {
  AuditSpec s;
  s.kind = Kind::Wells;
  s.wells = w;
  s.well_tol = tol;
  s.allow_bad = allow;
  return s;
}

AuditSpec AuditSpec::segment(const Mat2d& a, const Mat2d& b, double lambda, double eps) {
  AuditSpec s;
  s.kind = Kind::Segment;
  s.a = a;
  s.b = b;
  s.lambda = lambda;
  s.eps = eps;
  return s;
}

bool AuditReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.pass; });
}

const AuditCheck* AuditReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string short_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

std::string AuditReport::to_text(bool with_runtime) const {
  std::ostringstream os;
  os << "audit ok=" << (ok() ? 1 : 0) << " samples=" << samples << "\n";
  for (const auto& c : checks)
    os << "check " << c.name << " pass=" << (c.pass ? 1 : 0) << " worst=" << num(c.worst) << " limit=" << num(c.limit)
       << " witness=" << (c.witness.empty() ? "-" : c.witness) << "\n";
  os << "measure good=" << num(good) << " flagged=" << num(flagged) << " residual=" << num(residual) << "\n";
  os << "well_distance p50=" << num(well_p50) << " p95=" << num(well_p95) << " max=" << num(well_max) << "\n";
  os << "energy p50=" << num(energy_p50) << " p95=" << num(energy_p95) << " max=" << num(energy_max) << "\n";
  if (with_runtime) os << "runtime " << num(runtime) << "\n";
  return os.str();
}

Mat2d rederived_gradient(const Cell& c, const Vec2d& x) {
  if (c.disk) return c.gradient + disk_field_gradient(*c.disk, x);
  return c.derived_gradient();
}

namespace {

// Traceless part of an in-plane gradient; trace-free 3D states are built on
// it plus (1/4) I so that the x3 stretch -1/2 balances the trace.
Mat2d traceless(const Mat2d& g) { return g - 0.5 * g.trace() * Mat2d::Identity(); }

double distance_to_wells(const Mat2d& g, const WellSet& w) {
  if (w.dimension() == 2) return well_distance(traceless(g), w);
  return well_distance(embed3d_gradient(traceless(g) + 0.25 * Mat2d::Identity()), w);
}

double energy_of(const Mat2d& g) {
  return energy_V<double>(embed3d_strain(traceless(g) + 0.25 * Mat2d::Identity())).value;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - (q > 0 ? 1 : 0);
  return v[std::min(k, v.size() - 1)];
}

// The piece of the field that owns y: a leaf, a refined cell's affine
// remainder, or the datum (nullptr).
const Cell* owner(const PiecewiseField& f, const Vec2d& y) {
  const EvalResult r = field_eval(f, y);
  return r.cell >= 0 ? f.find(r.cell) : nullptr;
}

Vec2d piece_value(const PiecewiseField& f, const Cell* c, const Vec2d& x) {
  return c ? c->value(x) : f.datum().value(x);
}

Mat2d piece_gradient(const PiecewiseField& f, const Cell* c, const Vec2d& x) {
  return c ? rederived_gradient(*c, x) : f.datum().gradient;
}

struct Sample {
  Mat2d g = Mat2d::Zero();
  std::int64_t cell = -1;
  bool residual = false;
  bool ok = true;
};

AuditCheck make_check(std::string name, double worst, double limit, std::string witness, bool pass) {
  AuditCheck c;
  c.name = std::move(name);
  c.worst = worst;
  c.limit = limit;
  c.witness = std::move(witness);
  c.pass = pass;
  return c;
}

std::string cell_witness(std::int64_t id) { return id >= 0 ? "cell:" + std::to_string(id) : "datum"; }

std::string point_witness(const Vec2d& x) { return "point:" + num(x(0)) + "," + num(x(1)); }

void run_audit(const PiecewiseField& f, const AuditSpec& spec, std::size_t n, std::uint64_t seed, std::size_t nb,
               AuditReport& rep) {
  const Domain2& dom = f.domain();
  const double area = dom.area();
  const double scale = std::max(1.0, dom.diameter());

  // Interior samples; every sample is independent, so the pass is parallel.
  std::vector<Sample> smp(n);
  parallel_for(n, [&](std::size_t i) {
    const Vec2d x = dom.uniform_sample(seed, i);
    try {
      const EvalResult r = field_eval(f, x);
      const Cell* c = r.cell >= 0 ? f.find(r.cell) : nullptr;
      smp[i].g = piece_gradient(f, c, x);
      smp[i].cell = r.cell;
      smp[i].residual = r.residual;
    } catch (const Error&) {
      smp[i].ok = false;
    }
  });
  rep.samples = n;

  // Divergence relative to the datum: the trace of every piece must match.
  {
    const double t0 = f.datum().gradient.trace();
    double worst = 0;
    std::string wit;
    for (const auto& c : f.cells()) {
      const Vec2d probe = c.disk ? Vec2d(c.disk->center + Vec2d(0.5 * c.disk->radius, 0)) : Vec2d::Zero();
      const double d = std::abs(rederived_gradient(c, probe).trace() - t0);
      if (d > worst) worst = d, wit = cell_witness(c.id);
    }
    for (const auto& s : smp) {
      if (!s.ok) continue;
      const double d = std::abs(s.g.trace() - t0);
      if (d > worst) worst = d, wit = cell_witness(s.cell);
    }
    const double lim = 1e-8;
    rep.checks.push_back(make_check("divergence", worst, lim, wit, worst <= lim));
  }

  // Boundary trace.
  {
    double worst = 0;
    std::string wit;
    bool fail = false;
    for (const auto& x : dom.boundary_samples(nb, seed)) {
      try {
        const Cell* c = owner(f, x);
        const double d = (piece_value(f, c, x) - f.datum().value(x)).norm();
        if (d > worst) worst = d, wit = point_witness(x);
      } catch (const Error&) {
        fail = true;
        wit = point_witness(x);
      }
    }
    const double lim = 1e-12 * scale;
    rep.checks.push_back(make_check("boundary", worst, lim, wit, !fail && worst <= lim));
  }

  // Continuity: points on cell edges, compared with the piece just outside.
  {
    std::vector<std::size_t> leaves;
    for (std::size_t i = 0; i < f.cells().size(); ++i)
      if (!f.cells()[i].refined) leaves.push_back(i);
    const std::size_t want = std::min(leaves.size(), std::max<std::size_t>(n / 10, 1));
    std::mt19937_64 pick(mix_seed(seed, 0xC0A7));
    std::vector<std::size_t> chosen = leaves;
    if (want < leaves.size()) {
      std::shuffle(chosen.begin(), chosen.end(), pick);
      chosen.resize(want);
      std::sort(chosen.begin(), chosen.end());
    }
    std::vector<double> jump(chosen.size(), 0);
    std::vector<std::string> wit(chosen.size());
    parallel_for(chosen.size(), [&](std::size_t k) {
      const Cell& c = f.cells()[chosen[k]];
      std::mt19937_64 rng(mix_seed(seed ^ 0x5EED, static_cast<std::uint64_t>(c.id)));
      std::uniform_real_distribution<double> u(0.05, 0.95);
      std::vector<std::pair<Vec2d, Vec2d>> probes;  // (edge point, outward normal)
      if (c.disk) {
        const double t = 2 * std::numbers::pi * u(rng);
        const Vec2d n(std::cos(t), std::sin(t));
        probes.emplace_back(c.disk->center + c.disk->radius * n, n);
      } else {
        const std::size_t m = c.vertices.size();
        const double orient = polygon_area(c.vertices) >= 0 ? 1 : -1;
        for (std::size_t e = 0; e < m; ++e) {
          const Vec2d a = c.vertices[e], b = c.vertices[(e + 1) % m];
          const Vec2d t = b - a;
          if (t.norm() == 0) continue;
          probes.emplace_back(a + u(rng) * t, orient * Vec2d(t(1), -t(0)).normalized());
        }
      }
      for (const auto& [x, nrm] : probes) {
        const double h = 1e-9 * scale;
        const Vec2d y = x + h * nrm;
        if (!dom.contains(y)) continue;
        try {
          const Cell* other = owner(f, y);
          const double d = (c.value(x) - piece_value(f, other, x)).norm();
          if (d > jump[k]) jump[k] = d, wit[k] = cell_witness(c.id);
        } catch (const Error&) {
        }
      }
    });
    double worst = 0;
    std::string w;
    for (std::size_t k = 0; k < chosen.size(); ++k)
      if (jump[k] > worst) worst = jump[k], w = wit[k];
    const double lim = 1e-10 * scale;
    rep.checks.push_back(make_check("continuity", worst, lim, w, worst <= lim));
  }

  // Payload consistency: the stored gradient against the one implied by the
  // vertex displacements. Geometric checks never read the payload.
  {
    double worst = 0;
    std::string wit;
    for (const auto& c : f.cells()) {
      if (c.disk || c.displacement.size() != c.vertices.size() || c.vertices.size() < 3) continue;
      const Mat2d g = c.derived_gradient();
      const double d = (g - c.gradient).norm() / (1 + g.norm());
      if (d > worst) worst = d, wit = cell_witness(c.id);
    }
    const double lim = 1e-8;
    rep.checks.push_back(make_check("payload_consistency", worst, lim, wit, worst <= lim));
  }

  // Distances, measures and quantiles.
  std::size_t valid = 0, resid = 0, flag = 0;
  std::vector<double> dist, energy;
  dist.reserve(n);
  energy.reserve(n);
  double worst_sample = 0;
  std::string worst_wit;
  bool well_error = false;
  std::string well_error_msg;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = smp[i];
    if (!s.ok) continue;
    ++valid;
    if (s.residual) ++resid;
    double d = 0;
    switch (spec.kind) {
      case AuditSpec::Kind::Datum: d = (s.g - f.datum().gradient).norm(); break;
      case AuditSpec::Kind::Wells:
        try {
          d = distance_to_wells(s.g, spec.wells);
        } catch (const Error& e) {
          well_error = true;
          well_error_msg = e.what();
          d = std::numeric_limits<double>::infinity();
        }
        break;
      case AuditSpec::Kind::Segment: d = dist_segment_euclid(s.g, spec.a, spec.b); break;
    }
    dist.push_back(d);
    try {
      energy.push_back(energy_of(s.g));
    } catch (const Error&) {
      energy.push_back(std::numeric_limits<double>::infinity());
    }
    bool flagged = false;
    if (!s.residual) {
      if (spec.kind == AuditSpec::Kind::Wells) flagged = d > spec.well_tol;
      if (spec.kind == AuditSpec::Kind::Segment) flagged = dist_points_euclid(s.g, spec.a, spec.b) >= spec.eps;
    }
    if (flagged) ++flag;
    if (d > worst_sample) worst_sample = d, worst_wit = cell_witness(s.cell);
  }
  const double nv = std::max<double>(1, static_cast<double>(valid));
  rep.residual = static_cast<double>(resid) / nv;
  rep.flagged = static_cast<double>(flag) / nv;
  rep.good = static_cast<double>(valid - resid - flag) / nv;
  rep.well_p50 = quantile(dist, 0.5);
  rep.well_p95 = quantile(dist, 0.95);
  rep.well_max = dist.empty() ? 0 : *std::max_element(dist.begin(), dist.end());
  rep.energy_p50 = quantile(energy, 0.5);
  rep.energy_p95 = quantile(energy, 0.95);
  rep.energy_max = energy.empty() ? 0 : *std::max_element(energy.begin(), energy.end());

  rep.checks.push_back(make_check("sampling", static_cast<double>(n - valid), 0, "", valid == n));

  if (spec.kind == AuditSpec::Kind::Wells) {
    const double bad = rep.flagged + rep.residual;
    const double se = std::sqrt(std::max(spec.allow_bad * (1 - spec.allow_bad), 0.0) / nv);
    const double lim = spec.allow_bad + 3 * se;
    auto c = make_check("well_distance", bad, lim, well_error ? well_error_msg : worst_wit, !well_error && bad <= lim);
    rep.checks.push_back(c);
  }

  if (spec.kind == AuditSpec::Kind::Segment) {
    // every leaf cell (not only the sampled ones) must be eps-close to [A, B]
    double worst = 0;
    std::string wit;
    for (const auto& c : f.cells()) {
      if (c.refined) continue;
      const double d = dist_segment_euclid(rederived_gradient(c, c.disk ? c.disk->center : c.vertices[0]), spec.a,
                                           spec.b);
      if (d > worst) worst = d, wit = cell_witness(c.id);
    }
    worst = std::max(worst, worst_sample);
    if (worst_sample >= worst && worst_sample > 0) wit = worst_wit;
    rep.checks.push_back(make_check("segment_distance", worst, spec.eps, wit, worst < spec.eps));

    const double covered = 1 - rep.residual;
    const double lim = 5.0 / 6.0 * covered + rep.residual + spec.flag_slack;
    rep.checks.push_back(make_check("flagged_fraction", rep.flagged, lim, "", rep.flagged <= lim));

    // sup |u - datum| over all vertices and samples
    double sup = 0;
    std::string sw;
    for (const auto& c : f.cells())
      for (std::size_t k = 0; k < c.vertices.size(); ++k) {
        const double d = (c.value(c.vertices[k]) - f.datum().value(c.vertices[k])).norm();
        if (d > sup) sup = d, sw = cell_witness(c.id);
      }
    rep.checks.push_back(make_check("sup_deviation", sup, spec.eps, sw, sup < spec.eps));
  }

  // Measure ledger: leaves fit in the domain and the sampled residual agrees
  // with the geometric one.
  {
    const double leaf = f.leaf_area();
    const double geo_res = std::max(0.0, 1 - leaf / area);
    const double se = std::sqrt(std::max(geo_res * (1 - geo_res), 1.0 / nv) / nv);
    const double gap = std::abs(geo_res - rep.residual);
    const double sum = rep.good + rep.flagged + rep.residual;
    const bool pass = leaf <= area * (1 + 1e-9) && gap <= 5 * se && std::abs(sum - 1) <= 1e-9;
    rep.checks.push_back(make_check("measure_ledger", gap, 5 * se, "", pass));
  }
}

}  // namespace

AuditReport audit(const PiecewiseField& f, const AuditSpec& spec, std::size_t samples, std::uint64_t seed,
                  std::size_t boundary_samples) {
  const auto t0 = std::chrono::steady_clock::now();
  AuditReport rep;
  try {
    run_audit(f, spec, samples, seed, boundary_samples, rep);
  } catch (const std::exception& e) {
    rep.checks.push_back(make_check("internal", 1, 0, e.what(), false));
  }
  rep.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct Canvas {
  Vec2d lo, hi;
  double w, h, pad = 20;
  Vec2d map(const Vec2d& x) const {
    const double s = (w - 2 * pad) / std::max(hi(0) - lo(0), hi(1) - lo(1));
    return {pad + (x(0) - lo(0)) * s, h - pad - (x(1) - lo(1)) * s};
  }
};

Canvas canvas_for(const std::pair<Vec2d, Vec2d>& box, double width) {
  Canvas c;
  const Vec2d ext = box.second - box.first;
  const double m = 0.05 * std::max(ext(0), ext(1));
  c.lo = box.first - Vec2d(m, m);
  c.hi = box.second + Vec2d(m, m);
  c.w = width;
  const double e = std::max(c.hi(0) - c.lo(0), c.hi(1) - c.lo(1));
  c.h = c.pad * 2 + (width - 2 * c.pad) * (c.hi(1) - c.lo(1)) / e + 40;
  return c;
}

std::string points_attr(const Canvas& cv, const std::vector<Vec2d>& pts) {
  std::string s;
  for (const auto& p : pts) {
    const Vec2d q = cv.map(p);
    if (!s.empty()) s += ' ';
    s += short_num(q(0)) + "," + short_num(q(1));
  }
  return s;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + short_num(w) + "\" height=\"" + short_num(h) +
         "\" viewBox=\"0 0 " + short_num(w) + " " + short_num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string outline(const Canvas& cv, const Domain2& d) {
  return "<polygon class=\"domain\" points=\"" + points_attr(cv, d.boundary()) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
}

std::string text(double x, double y, const std::string& s, int size = 12) {
  return "<text x=\"" + short_num(x) + "\" y=\"" + short_num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\">" + s + "</text>\n";
}

std::vector<Vec2d> cell_outline(const Cell& c) {
  if (!c.disk) return c.vertices;
  std::vector<Vec2d> p;
  for (int k = 0; k < 48; ++k) {
    const double t = 2 * std::numbers::pi * k / 48;
    p.push_back(c.disk->center + c.disk->radius * Vec2d(std::cos(t), std::sin(t)));
  }
  return p;
}

constexpr std::size_t kMaxDrawnCells = 20000;

std::string deformed_mesh(const PiecewiseField& f, const RenderOptions& opt) {
  const Domain2& dom = f.domain();
  double umax = 0;
  for (const auto& x : dom.boundary()) umax = std::max(umax, f.datum().value(x).norm());
  for (const auto& c : f.cells())
    for (const auto& x : cell_outline(c)) umax = std::max(umax, c.value(x).norm());
  const double s = opt.magnification > 0 ? opt.magnification : (umax > 0 ? 0.1 * dom.diameter() / umax : 1);

  auto [lo, hi] = dom.bbox();
  const Vec2d grow = Vec2d::Constant(s * umax);
  const Canvas cv = canvas_for({lo - grow, hi + grow}, opt.width);
  std::string out = header(cv.w, cv.h);
  if (!opt.title.empty()) out += text(cv.pad, 14, opt.title);
  out += outline(cv, dom);
  if (f.cells().empty()) return out + "</svg>\n";

  // deformed outline of the domain follows the datum
  std::vector<Vec2d> def;
  for (const auto& x : dom.boundary()) def.push_back(x + s * f.datum().value(x));
  out += "<polygon class=\"deformed-domain\" points=\"" + points_attr(cv, def) +
         "\" fill=\"none\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n<g fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"0.4\">\n";
  std::size_t drawn = 0;
  for (const auto& c : f.cells()) {
    if (c.refined) continue;
    if (++drawn > kMaxDrawnCells) break;
    std::vector<Vec2d> p;
    for (const auto& x : cell_outline(c)) p.push_back(x + s * c.value(x));
    out += "<polygon points=\"" + points_attr(cv, p) + "\"/>\n";
  }
  out += "</g>\n";
  out += text(cv.pad, cv.h - 8, "x + s u(x), magnification s = " + short_num(s));
  return out + "</svg>\n";
}

std::string heatmap(const PiecewiseField& f, const RenderOptions& opt) {
  const Domain2& dom = f.domain();
  const Canvas cv = canvas_for(dom.bbox(), opt.width);
  std::string out = header(cv.w, cv.h);
  if (!opt.title.empty()) out += text(cv.pad, 14, opt.title);
  if (f.cells().empty()) return out + outline(cv, dom) + "</svg>\n";

  // log bins over [1e-12, 1]: bin k holds 10^(k-12) <= d < 10^(k-11)
  static const char* colors[13] = {"#0d0887", "#2a0593", "#41049d", "#5c01a6", "#7e03a8", "#9c179e", "#b52f8c",
                                   "#cc4778", "#de5f65", "#ed7953", "#f89540", "#fdb42f", "#f0f921"};
  const int grid = 96;
  const auto [lo, hi] = dom.bbox();
  const double step = std::max(hi(0) - lo(0), hi(1) - lo(1)) / grid;
  std::vector<std::string> rows(static_cast<std::size_t>(grid) * grid);
  parallel_for(rows.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx % grid), j = static_cast<int>(idx / grid);
    const Vec2d x = lo + step * Vec2d(i + 0.5, j + 0.5);
    if (!dom.contains(x)) return;
    double d;
    try {
      const Cell* c = owner(f, x);
      d = distance_to_wells(piece_gradient(f, c, x), opt.wells);
    } catch (const Error&) {
      return;
    }
    int bin = d < 1e-12 ? 0 : (d >= 1 ? 12 : 1 + static_cast<int>(std::floor(std::log10(d) + 12)));
    bin = std::clamp(bin, 0, 12);
    const Vec2d a = cv.map(lo + step * Vec2d(i, j + 1));
    const Vec2d b = cv.map(lo + step * Vec2d(i + 1, j));
    rows[idx] = "<rect x=\"" + short_num(a(0)) + "\" y=\"" + short_num(a(1)) + "\" width=\"" + short_num(b(0) - a(0)) +
                "\" height=\"" + short_num(b(1) - a(1)) + "\" fill=\"" + colors[bin] + "\"/>\n";
  });
  out += "<g class=\"heatmap\" shape-rendering=\"crispEdges\">\n";
  for (const auto& r : rows) out += r;
  out += "</g>\n" + outline(cv, dom);
  // legend
  for (int k = 0; k < 13; ++k) {
    const double x = cv.pad + k * 30;
    out += "<rect x=\"" + short_num(x) + "\" y=\"" + short_num(cv.h - 34) + "\" width=\"30\" height=\"10\" fill=\"" +
           colors[k] + "\"/>\n";
  }
  out += text(cv.pad, cv.h - 8, "well distance, log bins 1e-12 .. 1 (" + std::string(well_kind_name(opt.wells.kind)) + ")");
  return out + "</svg>\n";
}

}  // namespace

std::string render(const PiecewiseField& f, const RenderOptions& opt) {
  if (opt.dimension != 2)
    throw Error(Errc::UnrenderableDimension, "only two-dimensional fields can be drawn, got dimension " +
                                                 std::to_string(opt.dimension));
  switch (opt.mode) {
    case RenderMode::DeformedMesh: return deformed_mesh(f, opt);
    case RenderMode::Heatmap: return heatmap(f, opt);
    case RenderMode::StageDecay: break;
  }
  throw Error(Errc::InvalidParams, "stage-decay charts are drawn from metrics (render_stage_decay)");
}

std::string render_stage_decay(const std::vector<StageMetrics>& metrics, const RenderOptions& opt) {
  const double w = opt.width, h = 0.6 * opt.width, pad = 50;
  std::string out = header(w, h);
  out += text(pad, 18, opt.title.empty() ? "stage decay" : opt.title);
  out += "<rect x=\"" + short_num(pad) + "\" y=\"30\" width=\"" + short_num(w - 2 * pad) + "\" height=\"" +
         short_num(h - 80) + "\" fill=\"none\" stroke=\"black\"/>\n";
  if (metrics.empty()) return out + "</svg>\n";
  // log10 axis from 1e-6 to 1
  const auto ymap = [&](double v) {
    const double l = std::clamp(std::log10(std::max(v, 1e-6)), -6.0, 0.0);
    return 30 + (h - 80) * (-l / 6);
  };
  const auto xmap = [&](std::size_t i) {
    return pad + (w - 2 * pad) * (metrics.size() == 1 ? 0.5 : static_cast<double>(i) / (metrics.size() - 1));
  };
  auto series = [&](auto get, const char* color, const char* name) {
    std::string pts;
    for (std::size_t i = 0; i < metrics.size(); ++i)
      pts += (i ? " " : "") + short_num(xmap(i)) + "," + short_num(ymap(get(metrics[i])));
    return "<polyline class=\"" + std::string(name) + "\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
  };
  out += series([](const StageMetrics& m) { return m.bad_fraction; }, "#c0392b", "bad_fraction");
  out += series([](const StageMetrics& m) { return m.p95; }, "#1f5fa8", "p95");
  for (std::size_t i = 1; i < metrics.size(); ++i)
    if (metrics[i].stage != metrics[i - 1].stage) {
      const double x = (xmap(i) + xmap(i - 1)) / 2;
      out += "<line x1=\"" + short_num(x) + "\" y1=\"30\" x2=\"" + short_num(x) + "\" y2=\"" + short_num(h - 50) +
             "\" stroke=\"#aaa\" stroke-dasharray=\"3 3\"/>\n";
    }
  for (int e = 0; e >= -6; e -= 2) out += text(8, ymap(std::pow(10.0, e)) + 4, "1e" + std::to_string(e), 10);
  out += text(pad, h - 20, "round (stages separated by dashed lines); red: bad fraction, blue: p95 well distance");
  return out + "</svg>\n";
}

}  // namespace ncvx
