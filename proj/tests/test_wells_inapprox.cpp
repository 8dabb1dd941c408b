#include <doctest.h>

#include <random>

#include "ncvx/inapprox.hpp"
#include "ncvx/laminate.hpp"
#include "ncvx/parallel.hpp"

using namespace ncvx;

namespace {

Mat3d rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("well_distance examples") {
  std::mt19937_64 rng(1);
  const Mat3d q = rotation(rng);
  Mat3d a = q * Vec3d(-0.5, -0.5, 1).asDiagonal() * q.transpose();
  a(0, 1) += 0.3;
  a(1, 0) -= 0.3;  // skew part is irrelevant for K_0
  CHECK(well_distance(a, WellSet::linear3d_k0()) < 1e-12);

  const Mat2d b = TracelessMat2<double>{0.6, 0, 0}.matrix();
  CHECK(well_distance(b, WellSet::linear2d_k0(2)) == doctest::Approx(0.15).epsilon(1e-14));
  const Mat2d tall = TracelessMat2<double>{0.75, 0, 2.5}.matrix();
  CHECK(well_distance(tall, WellSet::linear2d_k0(2)) == doctest::Approx(0.5));

  const std::array<double, 3> e{std::pow(8.0, -1.0 / 6), std::pow(8.0, -1.0 / 6), 2.0};
  CHECK(well_distance(Mat3d(Vec3d(e[0], e[1], e[2]).asDiagonal()), WellSet::nonlinear_k(e)) < 1e-12);
  CHECK_THROWS_AS(well_distance(b, WellSet::linear3d_k0()), Error);
  CHECK_THROWS_AS(well_distance(Mat3d(-Mat3d::Identity()), WellSet::nonlinear_k(e)), Error);

  const Mat3d kal = Vec3d(-0.4, -0.4, 0.8).asDiagonal();
  CHECK(well_distance(kal, WellSet::kalpha(0.4, 1)) < 1e-12);
  Mat2d ball = Mat2d::Zero();
  CHECK(well_distance(ball, WellSet::ball2d_qce()) == 0.0);
}

TEST_CASE("hull membership is the singular value box with det one") {
  const std::array<double, 3> e{0.5, 1.0, 2.0};
  CHECK(hull_nonlinear_member(Mat3d(Vec3d(0.8, 1.0, 1.25).asDiagonal()), e));
  CHECK_FALSE(hull_nonlinear_member(Mat3d(Vec3d(0.4, 1.0, 2.5).asDiagonal()), e));
  CHECK_FALSE(hull_nonlinear_member(Mat3d(Vec3d(0.8, 1.0, 1.3).asDiagonal()), e));
  CHECK(well_distance(Mat3d(Vec3d(0.8, 1.0, 1.25).asDiagonal()), WellSet::hull_nonlinear(e)) < 1e-12);
}

TEST_CASE("2D in-approximation: construction and membership") {
  auto s = build_inapprox_2d(0.5, 2.0, 6);
  CHECK(s.r[0] == doctest::Approx(0.625));
  for (int i = 1; i <= 6; ++i) {
    CHECK(s.r[i] > s.r[i - 1]);
    CHECK(s.r[i] < 0.75);
    CHECK(s.r[i] == doctest::Approx(0.75 - 0.125 / std::ldexp(1.0, i)));
  }
  auto close = build_inapprox_2d(0.74999, 2.0, 5);
  CHECK(close.r[0] > 0.74999);
  CHECK_THROWS_AS(build_inapprox_2d(0.76, 2.0, 5), Error);
  try {
    build_inapprox_2d(0.76, 2.0, 5);
  } catch (const Error& err) {
    CHECK(err.code() == Errc::DatumTooLarge);
  }

  InApproximation hand = s;
  hand.r[0] = 0.55;
  const Mat2d x = TracelessMat2<double>{0.5, 0, 0}.matrix();
  auto mb = hand.member(x, 1);
  CHECK(mb.inside);
  CHECK(mb.margin == doctest::Approx(0.05));
  CHECK_THROWS_AS(hand.member(x, 0), Error);
  CHECK_THROWS_AS(hand.member(x, 7), Error);

  // inside the cone: |a3| close to m with small |a|
  const Mat2d cone = TracelessMat2<double>{0.1, 0, 1.9}.matrix();
  CHECK_FALSE(s.member(cone, 1).inside);
}

TEST_CASE("2D membership is invariant under a3 -> -a3 and samples are strict") {
  auto s = build_inapprox_2d(0.5, 2.0, 6);
  std::mt19937_64 rng(3);
  for (int i = 1; i <= 6; ++i)
    for (int k = 0; k < 200; ++k) {
      auto x = s.sample(i, rng);
      REQUIRE(x);
      auto t = TracelessMat2<double>::from_matrix(Mat2d(*x));
      CHECK(s.member(*x, i).margin > 0);
      CHECK(t.a_norm() < s.r[i]);
      t.a3 = -t.a3;
      CHECK(s.member(t.matrix(), i).inside);
    }
}

TEST_CASE("3D in-approximation construction") {
  auto s = build_inapprox_3d(-0.45, 0.9, 2.0, 8);
  CHECK(s.r[1] > 0.45);
  CHECK(s.r[1] < 0.5);
  CHECK(2 * s.r[1] > 0.9);
  CHECK(2 * s.r[1] < 1.0);
  CHECK(s.r[1] == doctest::Approx(0.475));
  double series = 0;
  for (int i = 2; i <= 8; ++i) {
    CHECK(s.r[i] > s.r[i - 1]);
    CHECK(s.m_seq[i + 1] > s.m_seq[i] + 4 * std::sqrt(s.r[i + 1] - s.r[i - 1]));
    series += std::sqrt(s.r[i + 1] - s.r[i - 1]);
  }
  // independent estimate of the full series: sqrt terms decay like 1/i^2
  CHECK(series < 1.0);
  CHECK(s.m_seq[1] > 2.0);
  CHECK(s.m_sup >= s.m_seq[9]);
  CHECK(s.m_sup < 1e3);
  CHECK_THROWS_AS(build_inapprox_3d(-0.6, 0.9, 2.0, 4), Error);
  CHECK_THROWS_AS(build_inapprox_3d(-0.4, 1.0, 2.0, 4), Error);

  auto t = build_inapprox_3d(-0.3, 0.6, 1.0, 8);
  int idx = -1;
  for (int i = 2; i <= 8; ++i)
    if (t.r[i - 1] < 0.45 && 0.45 < t.r[i]) idx = i;
  REQUIRE(idx > 0);
  std::mt19937_64 rng(5);
  const Mat3d q = rotation(rng);
  CHECK(t.member(Mat3d(q * Vec3d(-0.45, -0.45, 0.9).asDiagonal() * q.transpose()), idx).inside);
}

TEST_CASE("3D depth two: U_1 decomposes into K_{alpha_1, m_2}") {
  auto s = build_inapprox_3d(-0.45, 0.9, 2.0, 2);
  std::mt19937_64 rng(7);
  for (int k = 0; k < 300; ++k) {
    auto x = s.sample(1, rng);
    REQUIRE(x);
    auto tree = inapprox_split(s, *x, 1);
    for (const auto* leaf : tree.leaves()) {
      CHECK(well_distance(leaf->matrix, WellSet::kalpha(s.alpha(1), s.m_seq[2])) < 1e-9);
      CHECK(s.member(leaf->matrix, 2).inside);
    }
  }
}

TEST_CASE("nonlinear in-approximations") {
  auto p = OgdenParams::nematic(8.0, {1.0}, {2.0});
  auto s = build_inapprox_nonlinear(p, 0.72, 1.9, 6);
  CHECK(s.family == Family::NonlinCase1);
  CHECK(s.eta[1] > std::pow(2.0, -0.5));
  CHECK(s.eta[1] < 0.72);
  CHECK(1 / (s.eta[1] * s.eta[1]) > 1.9);
  CHECK(1 / (s.eta[1] * s.eta[1]) < 2.0);
  for (int i = 1; i <= 5; ++i) {
    const double a = 0.5 * (s.eta[i] + s.eta[i + 1]);
    CHECK(s.member(Mat3d(Vec3d(a, a, 1 / (a * a)).asDiagonal()), i + 1).inside);
  }

  auto p2 = OgdenParams::general({0.5, 1.0, 2.0}, {1.0}, {2.0});
  auto s2 = build_inapprox_nonlinear(p2, 0.9, 1.1, 5);
  CHECK(s2.family == Family::NonlinCase2);
  for (int i = 2; i <= 5; ++i) {
    // a point on the lower edge of the lambda2 window is outside, just inside is inside
    const double l1 = 0.5 * (s2.eta[i] + s2.eta[i - 1]), l3 = 0.5 * (s2.theta[i] + s2.theta[i - 1]);
    CHECK(s2.member(Mat3d(Vec3d(l1, 1 / (l1 * l3), l3).asDiagonal()), i).inside);
    const double lo = 1 / (s2.eta[i - 1] * s2.theta[i]);
    CHECK(1 / (l1 * l3) > lo);
  }

  auto p3 = OgdenParams::general({0.25, 2.0, 2.0}, {1.0}, {2.0});
  auto s3 = build_inapprox_nonlinear(p3, 0.5, 1.5, 5);
  CHECK(s3.family == Family::NonlinCase3);
  CHECK(1 / std::sqrt(s3.eta[1]) > 1.5);

  CHECK_THROWS_AS(build_inapprox_nonlinear(p, p.e[0], 1.9, 4), Error);
  CHECK_THROWS_AS(build_inapprox_nonlinear(p, 0.72, 2.0, 4), Error);
}

TEST_CASE("nonlinear membership is invariant under rotations on both sides") {
  auto p2 = OgdenParams::general({0.5, 1.0, 2.0}, {1.0}, {2.0});
  auto s = build_inapprox_nonlinear(p2, 0.9, 1.1, 5);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 1000; ++k) {
    const int i = 1 + int(rng() % 5);
    auto x = s.sample(i, rng);
    REQUIRE(x);
    const Mat3d y = rotation(rng) * Mat3d(*x) * rotation(rng);
    CHECK(s.member(y, i).inside == s.member(*x, i).inside);
    CHECK(s.member(y, i).margin == doctest::Approx(s.member(*x, i).margin).epsilon(1e-8));
  }
}

TEST_CASE("validate_inapprox: 2D, 3D and nonlinear pass") {
  ValidateOptions opt;
  opt.samples = 1000;
  auto r2 = validate_inapprox(build_inapprox_2d(0.5, 2.0, 6), opt);
  CHECK(r2.ok());
  CHECK(r2.counterexample_distance > 1e-3);
  CHECK(r2.full_chains_converge);
  auto r3 = validate_inapprox(build_inapprox_3d(-0.45, 0.9, 2.0, 6), opt);
  CHECK(r3.ok());
  auto p = OgdenParams::nematic(8.0, {1.0}, {2.0});
  CHECK(validate_inapprox(build_inapprox_nonlinear(p, 0.72, 1.9, 6), opt).ok());
  auto p2 = OgdenParams::general({0.5, 1.0, 2.0}, {1.0}, {2.0});
  CHECK(validate_inapprox(build_inapprox_nonlinear(p2, 0.9, 1.1, 6), opt).ok());
  auto p3 = OgdenParams::general({0.25, 2.0, 2.0}, {1.0}, {2.0});
  CHECK(validate_inapprox(build_inapprox_nonlinear(p3, 0.5, 1.5, 6), opt).ok());
}

TEST_CASE("validate_inapprox rejects a decreasing radius sequence in clause (c)") {
  auto s = build_inapprox_2d(0.5, 2.0, 6);
  std::reverse(s.r.begin() + 1, s.r.end());
  ValidateOptions opt;
  opt.samples = 100;
  try {
    validate_inapprox(s, opt);
    FAIL("expected ValidationFailure");
  } catch (const ValidationFailure& f) {
    CHECK(f.clause().clause == 'c');
  }
}

TEST_CASE("validate_inapprox is independent of the worker count") {
  auto s = build_inapprox_3d(-0.3, 0.7, 1.0, 4);
  ValidateOptions opt;
  opt.samples = 300;
  thread_cap() = 1;
  auto one = validate_inapprox(s, opt);
  thread_cap() = 0;
  auto many = validate_inapprox(s, opt);
  REQUIRE(one.clauses.size() == many.clauses.size());
  for (std::size_t i = 0; i < one.clauses.size(); ++i) CHECK(one.clauses[i].worst == many.clauses[i].worst);
}
