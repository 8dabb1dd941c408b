#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "ncvx/construct.hpp"
#include "ncvx/errors.hpp"
#include "ncvx/wells.hpp"

using namespace ncvx;

namespace {

Mat2d coords2(double a1, double a2, double a3) { return TracelessMat2<double>{a1, a2, a3}.matrix(); }

// Independent rendering of the closed-form displacement (no library code).
Vec2d disk_oracle(const Vec2d& x, double r, int sign) {
  const double rr = x.squaredNorm();
  return sign * 0.75 * std::log(rr / (r * r)) * Vec2d(-x(1), x(0));
}

PiecewiseField affine_datum(double a1, double a2, double a3) {
  return PiecewiseField(Domain2::unit_square(), Datum{coords2(a1, a2, a3), Vec2d::Zero()}, {});
}

}  // namespace

TEST_CASE("explicit disk solution: value, gradient and three-dimensional energy") {
  const auto f = explicit_disk_solution(1.0);
  // (3/4) ln(1/4) * 0.5, frozen from the oracle above
  const Vec2d u = field_eval(f, {0.5, 0}).value - Vec2d(0.125, 0);
  CHECK(u(0) == doctest::Approx(0).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(-0.51986038541995894).epsilon(1e-14));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0, 1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst_v = 0, worst_eig = 0, worst_fd = 0;
  for (int i = 0; i < 10000; ++i) {
    const double rho = 1e-3 + (1 - 2e-3) * uni(rng), th = 2 * M_PI * uni(rng);
    const Vec2d x(rho * std::cos(th), rho * std::sin(th));
    const auto e = field_eval(f, x);
    const Mat3d strain = embed3d_strain(e.gradient);
    worst_v = std::max(worst_v, energy_V<double>(strain).value);
    const Vec3d mu = eig_sym<double>(strain).values;
    worst_eig = std::max({worst_eig, std::abs(mu(0) + 0.5), std::abs(mu(1) + 0.5), std::abs(mu(2) - 1)});
    if (i % 50 == 0) {
      const double h = 1e-6;
      Mat2d fd;
      for (int k = 0; k < 2; ++k) {
        const Vec2d d = Vec2d::Unit(k) * h;
        fd.col(k) = (disk_oracle(x + d, 1, 1) - disk_oracle(x - d, 1, 1)) / (2 * h);
      }
      worst_fd = std::max(worst_fd, (fd + 0.25 * Mat2d::Identity() - e.gradient).norm() / (1 + fd.norm()));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(worst_v < 1e-10);
  CHECK(worst_eig < 1e-9);
  CHECK(worst_fd < 1e-6);
  CHECK(secs < 1.0);

  double worst_b = 0;
  for (const auto& x : f.domain().boundary_samples(1000, 3))
    worst_b = std::max(worst_b, (field_eval(f, x).value - f.datum().value(x)).norm());
  CHECK(worst_b < 1e-12);

  const auto neg = explicit_disk_solution(0.5, -1, {1, 2});
  const Vec2d x(1.2, 2.1);
  CHECK((field_eval(neg, x).value - 0.25 * x - disk_oracle(x - Vec2d(1, 2), 0.5, -1)).norm() < 1e-14);
  CHECK(embed3d_value({1, 2}, 4)(2) == -2);
  CHECK(embed3d_gradient(Mat2d::Zero())(2, 2) == -0.5);

  CHECK_THROWS_AS(explicit_disk_solution(0.0), Error);
  try {
    explicit_disk_solution(-1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonPositiveRadius);
  }
  CHECK_THROWS_AS(explicit_disk_solution(1, 2), Error);
}

TEST_CASE("general domain solution keeps |a| = 3/4 on every disk") {
  PackOptions po;
  po.target = 0.99;
  po.min_scale = 1e-4;
  const auto f = general_domain_solution(Domain2::unit_square(), po);
  MESSAGE("disks: " << f.cells().size() << " residual " << f.residual());
  CHECK(f.residual() <= 0.01 + 1e-12);
  std::mt19937_64 rng(3);
  double worst = 0, hits = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec2d x = f.domain().uniform_sample(5, i);
    const auto e = field_eval(f, x);
    if (e.residual) continue;
    ++hits;
    const auto t = TracelessMat2<double>::from_matrix((e.gradient - 0.25 * Mat2d::Identity()).eval());
    worst = std::max(worst, std::abs(t.a1 * t.a1 + t.a2 * t.a2 - 9.0 / 16));
  }
  CHECK(hits > 19000);
  CHECK(worst < 1e-12);
  double worst_b = 0;
  for (const auto& x : f.domain().boundary_samples(400, 1))
    worst_b = std::max(worst_b, (field_eval(f, x).value - f.datum().value(x)).norm());
  CHECK(worst_b < 1e-12);
}

TEST_CASE("rank-one frame conjugates the direction to E") {
  Mat2d e;
  e << 0, 1, 0, 0;
  for (const Mat2d& d : {coords2(1, 0, 1), coords2(0.6, -0.8, -1), coords2(-0.3, 0.4, 0.5)}) {
    const auto f = RankOneFrame::from_direction(d);
    CHECK((f.l * d * f.l_inv - e).norm() < 1e-14);
    CHECK(f.l.row(0).norm() == doctest::Approx(1));
  }
  CHECK_THROWS_AS(RankOneFrame::from_direction(coords2(1, 0, 0)), Error);
  CHECK_THROWS_AS(RankOneFrame::from_direction(Mat2d::Zero()), Error);

  const auto tf = TileFrame::build(coords2(0.6, 0.8, 1), 0.03);
  CHECK((tf.delta_for(0.4) * tf.per_delta[0] - 0.4 * coords2(0.6, 0.8, 1)).norm() < 1e-13);
  for (const auto& p : tf.per_delta) CHECK(std::abs(p.trace()) < 1e-12);
}

TEST_CASE("segment distances") {
  const Mat2d a = coords2(0.2, 0, 0.2), b = coords2(-0.2, 0, -0.2);
  CHECK(dist_segment_euclid(Mat2d::Zero(), a, b) < 1e-16);
  CHECK(dist_points_euclid(Mat2d::Zero(), a, b) == doctest::Approx(a.norm()));
  Mat2d h = Mat2d::Zero();
  h(0, 1) = 0.9;
  CHECK(dist_segment_maxform(h, 0.7) == doctest::Approx(0.2));
  h(1, 0) = 0.5;
  CHECK(dist_segment_maxform(h, 0.7) == doctest::Approx(0.5));
}

TEST_CASE("Pompe construction on random rank-one pairs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(-0.5, 0.5), mag(0.2, 0.6), ang(0, 2 * M_PI);
  const double eps = 0.25;
  PackOptions po;
  po.target = 0.97;
  po.min_scale = 1e-5;
  double worst_time = 0;
  for (int pair = 0; pair < 20; ++pair) {
    const TracelessMat2<double> a{uni(rng), uni(rng), uni(rng)};
    const double c = mag(rng), th = ang(rng), sgn = (pair % 2) ? 1 : -1;
    const TracelessMat2<double> d{c * std::cos(th), c * std::sin(th), sgn * c};
    const TracelessMat2<double> b = a - d;
    for (double lambda : {0.3, 0.5, 0.7}) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = pompe_construct(a, b, lambda, Domain2::unit_square(), eps, po);
      worst_time = std::max(worst_time, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      CHECK(r.flagged_fraction <= 5.0 / 6 * r.covered_fraction + r.residual_fraction + 0.01);
      CHECK(r.good_fraction + r.flagged_fraction + r.residual_fraction == doctest::Approx(1).epsilon(1e-9));
      CHECK(r.max_dist_euclid < eps);
      CHECK(r.max_dist_maxform < eps);
      // u - Cx is piecewise affine, so its sup is attained at cell vertices.
      double sup = 0;
      for (const auto& cell : r.field.cells())
        for (std::size_t k = 0; k < 3; ++k)
          sup = std::max(sup, (cell.displacement[k] - r.c * cell.vertices[k]).norm());
      CHECK(sup < eps);
      CHECK(sup <= r.sup_bound * (1 + 1e-9));
      bool inside = true;
      for (const auto& cell : r.field.cells())
        for (const auto& v : cell.vertices) inside = inside && r.field.domain().contains(v, 1e-12);
      CHECK(inside);
    }
  }
  MESSAGE("slowest Pompe case " << worst_time << " s");
  CHECK(worst_time < 10);
}

TEST_CASE("Pompe input validation") {
  const TracelessMat2<double> a{0.1, 0.2, 0.3};
  const TracelessMat2<double> b = a - TracelessMat2<double>{0.3, 0.4, 0.5};
  auto code = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::ConfigError;
  };
  const auto sq = Domain2::unit_square();
  CHECK(code([&] { pompe_construct(a, a + TracelessMat2<double>{0.3, 0, 0}, 0.5, sq, 0.2, {}); }) == Errc::NotRankOne);
  CHECK(code([&] { pompe_construct(a, b, 0.0, sq, 0.2, {}); }) == Errc::DegenerateLambda);
  CHECK(code([&] { pompe_construct(a, b, 1.0, sq, 0.2, {}); }) == Errc::DegenerateLambda);
  CHECK(code([&] { pompe_construct(a, b, 0.005, sq, 0.2, {}); }) == Errc::EpsilonTooLarge);
}

TEST_CASE("window oracle splits land on the split circle") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const Lin2dWindowOracle u(seq, 2, {1, 0});
  CHECK(u.radius() == doctest::Approx(0.703125));
  const Mat2d g = coords2(0.2, -0.1, 0.3);
  const auto s = u.split(g);
  REQUIRE(s);
  const Mat2d a = g + s->t_plus * u.direction(), b = g + s->t_minus * u.direction();
  CHECK(TracelessMat2<double>::from_matrix(a).a_norm() == doctest::Approx(0.703125).epsilon(1e-14));
  CHECK(TracelessMat2<double>::from_matrix(b).a_norm() == doctest::Approx(0.703125).epsilon(1e-14));
  CHECK(((1 - s->lambda()) * a + s->lambda() * b - g).norm() < 1e-14);
  CHECK(std::abs((a - b).determinant()) < 1e-14);
  CHECK(u.in_target(a));
  CHECK(!u.split(coords2(0.74, 0, 0)));
  CHECK_THROWS_AS(Lin2dWindowOracle(seq, 1, {1, 0}), Error);
}

TEST_CASE("construct_open: bad set decays geometrically, boundary untouched") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const Lin2dWindowOracle u(seq, 2, {1, 0});
  const auto v = affine_datum(0.5, 0, 0);
  const double eps = 0.05;
  const auto r = construct_open(v, u, eps, 6, {});
  REQUIRE(r.metrics.size() == 6);
  for (int m = 1; m <= 6; ++m) {
    CAPTURE(m);
    CHECK(r.metrics[m - 1].bad_fraction <= std::pow(5.0 / 6 + 0.02, m));
  }
  CHECK(r.budget_exhausted);
  CHECK(r.sup_total < eps);
  CHECK(r.status.rfind("BudgetExhausted", 0) == 0);

  const auto& f = r.field;
  CHECK(!f.cells().empty());
  int refined = 0;
  double worst_payload = 0;
  for (const auto& c : f.cells()) {
    refined += c.refined;
    worst_payload = std::max(worst_payload, (c.derived_gradient() - c.gradient).norm());
    CHECK(std::abs(c.gradient.trace()) < 1e-12);
  }
  CHECK(refined > 0);
  CHECK(worst_payload < 1e-9);
  double worst_b = 0;
  for (const auto& x : f.domain().boundary_samples(500, 2))
    worst_b = std::max(worst_b, (field_eval(f, x).value - v.datum().value(x)).norm());
  CHECK(worst_b < 1e-12);
}

TEST_CASE("construct_open errors") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const Lin2dWindowOracle u(seq, 2, {1, 0});
  try {
    construct_open(affine_datum(0.74, 0, 0), u, 0.05, 2, {});
    FAIL("expected SplitUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SplitUnavailable);
  }
  CHECK_THROWS_AS(construct_open(affine_datum(0.5, 0, 0), u, 0.0, 2, {}), Error);
  CHECK_THROWS_AS(construct_open(affine_datum(0.5, 0, 0), u, 0.05, 0, {}), Error);
}

TEST_CASE("construct_open leaves a datum already in the target untouched") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const Lin2dWindowOracle u(seq, 2, {1, 0});
  const auto v = affine_datum(0.7, 0, 0);
  REQUIRE(u.in_target(v.datum().gradient));
  const auto r = construct_open(v, u, 0.05, 4, {});
  CHECK(r.metrics.empty());
  CHECK(r.bad_fraction == 0);
  CHECK(!r.budget_exhausted);
  CHECK(r.field.cells().size() == v.cells().size());
  CHECK(r.field.datum().gradient == v.datum().gradient);
}

TEST_CASE("convex_integrate requires the datum in U_1") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  try {
    convex_integrate(affine_datum(0.66, 0, 0), seq, 0.05, 2, 2, {});
    FAIL("expected PreconditionViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PreconditionViolation);
  }
}

TEST_CASE("convex_integrate is deterministic and improves every stage") {
  const auto seq = build_inapprox_2d(0.5, default_height_2d(0.5), 6);
  const auto v = affine_datum(0.5, 0, 0);
  EngineOptions opt;
  opt.particle_cap = 20'000;
  opt.materialize_cells = 3000;
  const auto r1 = convex_integrate(v, seq, 0.05, 2, 8, opt);
  const auto r2 = convex_integrate(v, seq, 0.05, 2, 8, opt);
  REQUIRE(r1.stage_end.size() == 2);
  CHECK(r1.stage_end[1].p95 < r1.stage_end[0].p95);
  REQUIRE(r1.metrics.size() == r2.metrics.size());
  for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
    CHECK(r1.metrics[i].bad_fraction == r2.metrics[i].bad_fraction);
    CHECK(r1.metrics[i].p95 == r2.metrics[i].p95);
  }
  CHECK(r1.field.cells().size() == r2.field.cells().size());
  CHECK(r1.sup_total < 0.05);
  CHECK_THROWS_AS(convex_integrate(v, seq, 0.05, 6, 2, opt), Error);
}

TEST_CASE("three-dimensional laminate-measure pipeline") {
  const auto seq = build_inapprox_3d(-0.45, 0.9, 2.0, 7);
  std::mt19937_64 rng(11);
  const auto x = seq.sample(1, rng);
  REQUIRE(x);
  const auto r = integrate_3d_measure(Mat3d(*x), seq, 4);
  REQUIRE(r.stage_end.size() == 4);
  double total = 0;
  for (const auto& [m, w] : r.atoms) total += w;
  CHECK(total == doctest::Approx(1).epsilon(1e-12));
  for (std::size_t i = 0; i < r.stage_end.size(); ++i) {
    CHECK(r.stage_end[i].bad_fraction < 1e-12);
    if (i) CHECK(r.stage_end[i].p95 < r.stage_end[i - 1].p95);
  }
}
