#include <doctest.h>

#include <string>

#include "ncvx/construct.hpp"
#include "ncvx/errors.hpp"
#include "ncvx/inapprox.hpp"
#include "ncvx/verify.hpp"

using namespace ncvx;

namespace {

PompeResult small_pompe() {
  const TracelessMat2<double> a{0.1, -0.2, 0.05};
  const TracelessMat2<double> b = a - TracelessMat2<double>{0.3, 0.4, 0.5};
  PackOptions po;
  po.target = 0.97;
  po.min_scale = 1e-5;
  return pompe_construct(a, b, 0.4, Domain2::unit_square(), 0.25, po);
}

bool same_geometry(const AuditReport& x, const AuditReport& y) {
  for (const char* name : {"divergence", "boundary", "continuity", "measure_ledger", "segment_distance",
                           "sup_deviation", "flagged_fraction"}) {
    const auto* a = x.find(name);
    const auto* b = y.find(name);
    if (!a || !b) return false;
    if (a->pass != b->pass || a->worst != b->worst || a->witness != b->witness) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("explicit disk passes a LINEAR3D_K0 audit") {
  const auto f = explicit_disk_solution(1.0);
  const auto rep = audit(f, AuditSpec::well_set(WellSet::linear3d_k0(), 1e-9), 10000, 7);
  CHECK_MESSAGE(rep.ok(), rep.to_text());
  CHECK(rep.energy_max < 1e-10);
  CHECK(rep.well_max < 1e-9);
  CHECK(rep.residual == 0);
  CHECK(rep.good == 1);
  CHECK(rep.find("boundary")->worst < 1e-12);
  CHECK(rep.samples == 10000);
}

TEST_CASE("general-domain disks pass the same audit up to their residual") {
  PackOptions po;
  po.target = 0.95;
  po.min_scale = 1e-3;
  const auto f = general_domain_solution(Domain2::unit_square(), po);
  const double res = f.residual() / f.domain().area();
  const auto rep = audit(f, AuditSpec::well_set(WellSet::linear3d_k0(), 1e-9, res), 4000, 3);
  CHECK_MESSAGE(rep.ok(), rep.to_text());
  CHECK(rep.find("measure_ledger")->pass);
}

TEST_CASE("Pompe output passes the segment audit including the flagged clause") {
  const auto p = small_pompe();
  const auto rep = audit(p.field, AuditSpec::segment(p.a, p.b, p.lambda, p.eps), 5000, 1);
  CHECK_MESSAGE(rep.ok(), rep.to_text());
  const auto* fl = rep.find("flagged_fraction");
  REQUIRE(fl);
  CHECK(fl->worst <= fl->limit);
  CHECK(rep.good + rep.flagged + rep.residual == doctest::Approx(1).epsilon(1e-12));
  // sampled flagged fraction agrees with the exact one
  CHECK(std::abs(rep.flagged - p.flagged_fraction) < 0.03);
}

TEST_CASE("payload corruption is caught without moving geometric checks") {
  const auto p = small_pompe();
  const AuditSpec spec = AuditSpec::segment(p.a, p.b, p.lambda, p.eps);
  const auto clean = audit(p.field, spec, 3000, 5);
  REQUIRE(clean.ok());

  PiecewiseField bad = p.field;
  const std::size_t victim = bad.cells().size() / 2;
  bad.mutable_cells()[victim].gradient(0, 1) += 1e-3;
  const std::int64_t id = bad.cells()[victim].id;
  const auto rep = audit(bad, spec, 3000, 5);
  CHECK(!rep.ok());
  const auto* pc = rep.find("payload_consistency");
  REQUIRE(pc);
  CHECK(!pc->pass);
  CHECK(pc->witness == "cell:" + std::to_string(id));
  CHECK(same_geometry(clean, rep));
}

TEST_CASE("geometric corruption breaks continuity") {
  const auto p = small_pompe();
  PiecewiseField bad = p.field;
  auto& c = bad.mutable_cells()[3];
  c.translation += Vec2d(1e-6, 0);
  for (auto& d : c.displacement) d += Vec2d(1e-6, 0);
  bad.rebuild_index();
  AuditSpec spec = AuditSpec::segment(p.a, p.b, p.lambda, p.eps);
  const auto rep = audit(bad, spec, 40000, 5);
  const auto* ct = rep.find("continuity");
  REQUIRE(ct);
  CHECK(!ct->pass);
  CHECK(ct->worst == doctest::Approx(1e-6).epsilon(1e-3));
}

TEST_CASE("reports are deterministic given the seed") {
  const auto p = small_pompe();
  const AuditSpec spec = AuditSpec::segment(p.a, p.b, p.lambda, p.eps);
  const auto a = audit(p.field, spec, 2000, 11);
  const auto b = audit(p.field, spec, 2000, 11);
  const auto c = audit(p.field, spec, 2000, 12);
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_text() != c.to_text());
  CHECK(a.to_text().find("runtime") == std::string::npos);
  CHECK(a.to_text(true).find("runtime") != std::string::npos);
}

TEST_CASE("audit reports failures instead of throwing") {
  const auto f = explicit_disk_solution(1.0);
  AuditReport rep;
  CHECK_NOTHROW(rep = audit(f, AuditSpec::well_set(WellSet::nonlinear_k({0.9, 1.0, 1.1})), 200, 1, 50));
  CHECK(!rep.ok());
  CHECK(!rep.find("well_distance")->pass);
}

TEST_CASE("datum audit of an affine field") {
  const PiecewiseField f(Domain2::l_shape(), Datum{Mat2d{{0.1, 0.2}, {0.3, -0.1}}, Vec2d(1, 2)}, {});
  const auto rep = audit(f, AuditSpec::datum(), 1000, 1);
  CHECK(rep.ok());
  CHECK(rep.residual == 1);
  CHECK(rep.well_max == 0);
}

TEST_CASE("render modes") {
  const auto p = small_pompe();
  RenderOptions opt;
  opt.mode = RenderMode::DeformedMesh;
  const std::string mesh = render(p.field, opt);
  CHECK(mesh.rfind("<svg", 0) == 0);
  CHECK(mesh.find("magnification s = ") != std::string::npos);
  CHECK(mesh.find("</svg>") != std::string::npos);
  opt.magnification = 2;
  CHECK(render(p.field, opt).find("magnification s = 2<") != std::string::npos);

  opt.mode = RenderMode::Heatmap;
  opt.wells = WellSet::linear3d_k0();
  const std::string heat = render(explicit_disk_solution(1.0), opt);
  CHECK(heat.find("class=\"heatmap\"") != std::string::npos);
  CHECK(heat.find("log bins 1e-12 .. 1") != std::string::npos);
  // the closed-form disk is exactly on the wells: only the lowest bin occurs
  CHECK(heat.find("#f0f921\"/>\n<rect x") == std::string::npos);

  const PiecewiseField empty(Domain2::unit_square(), Datum{}, {});
  for (auto mode : {RenderMode::DeformedMesh, RenderMode::Heatmap}) {
    opt.mode = mode;
    const std::string s = render(empty, opt);
    CHECK(s.find("class=\"domain\"") != std::string::npos);
    CHECK(s.find("<g") == std::string::npos);
  }

  opt.dimension = 3;
  try {
    render(p.field, opt);
    FAIL("expected UnrenderableDimension");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnrenderableDimension);
  }
}

TEST_CASE("stage-decay chart") {
  std::vector<StageMetrics> m;
  for (int s = 1; s <= 2; ++s)
    for (int r = 1; r <= 3; ++r) {
      StageMetrics x;
      x.stage = s;
      x.round = r;
      x.bad_fraction = std::pow(0.8, 3 * (s - 1) + r);
      x.p95 = 0.3 / (s * r);
      m.push_back(x);
    }
  const std::string svg = render_stage_decay(m);
  CHECK(svg.find("class=\"bad_fraction\"") != std::string::npos);
  CHECK(svg.find("class=\"p95\"") != std::string::npos);
  CHECK(svg.find("stroke-dasharray=\"3 3\"") != std::string::npos);
  CHECK(render_stage_decay(m) == svg);
}

TEST_CASE("engine output passes the geometric checks") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const Lin2dWindowOracle u(seq, 2, {1, 0});
  const PiecewiseField v(Domain2::unit_square(), Datum{TracelessMat2<double>{0.5, 0, 0}.matrix(), Vec2d::Zero()}, {});
  EngineOptions opt;
  opt.materialize_cells = 4000;
  const auto r = construct_open(v, u, 0.05, 3, opt);
  const auto rep = audit(r.field, AuditSpec::datum(), 4000, 2);
  for (const char* name : {"divergence", "boundary", "continuity", "payload_consistency", "measure_ledger"}) {
    CAPTURE(name);
    CHECK(rep.find(name)->pass);
  }
  CHECK(rep.residual > 0);
  CHECK(rep.residual < 1);
}
