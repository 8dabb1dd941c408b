#include <doctest.h>

#include <random>

#include "ncvx/matrix_kernel.hpp"

using namespace ncvx;

namespace {

Mat3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

Mat3d random_sym_traceless(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = u(rng);
  m = ((m + m.transpose()) / 2).eval();
  m -= m.trace() / 3 * Mat3d::Identity();
  return m;
}

// Oracle: brute force minimisation over a quasi-uniform director lattice.
double sampled_min_V(const Mat3d& e, const std::vector<Vec3d>& dirs, Vec3d* best = nullptr) {
  double m = 1e300;
  for (const auto& n : dirs) {
    const double v = (e - U_n<double>(n)).squaredNorm();
    if (v < m) {
      m = v;
      if (best) *best = n;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("sym_skw splits and reconstructs") {
  auto a = TracelessMat2<double>::from_matrix((Mat2d() << 0, 1, 0, 0).finished());
  auto [s, w] = sym_skw(a);
  CHECK(s(0, 1) == doctest::Approx(0.5));
  CHECK(s(1, 0) == doctest::Approx(0.5));
  CHECK(w(0, 1) == doctest::Approx(0.5));
  CHECK(w(1, 0) == doctest::Approx(-0.5));
  CHECK(a.matrix().trace() == 0.0);

  auto sym_only = TracelessMat2<double>::from_coords(0.3, -0.2, 0.0);
  CHECK(sym_only.skw().norm() == 0.0);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    Mat3d m;
    for (int i = 0; i < 9; ++i) m(i) = u(rng);
    m -= m.trace() / 3 * Mat3d::Identity();
    auto tm = TracelessMat3<double>::from_matrix(m);
    auto [s3, w3] = sym_skw(tm);
    CHECK((s3 - (m + m.transpose()) / 2).norm() < 1e-14);
    CHECK((w3 - (m - m.transpose()) / 2).norm() < 1e-14);
    CHECK(std::abs(tm.matrix().trace()) < 1e-15);
    CHECK(tm.frobenius() == doctest::Approx(m.norm()).epsilon(1e-13));
  }
}

TEST_CASE("eig_sym examples") {
  auto d = eig_sym<double>(U_n<double>(Vec3d(0, 0, 1)));
  CHECK(d.values(0) == doctest::Approx(-0.5));
  CHECK(d.values(1) == doctest::Approx(-0.5));
  CHECK(d.values(2) == doctest::Approx(1.0));

  auto z = eig_sym<double>(Mat3d(Mat3d::Zero()));
  CHECK(z.values.norm() == 0.0);

  Mat3d diag = Vec3d(0.25, 0.25, -0.5).asDiagonal();
  auto dd = eig_sym<double>(diag);
  CHECK(dd.values(0) == doctest::Approx(-0.5));
  CHECK(dd.values(1) == doctest::Approx(0.25));
  CHECK(dd.values(2) == doctest::Approx(0.25));

  Mat3d bad = Mat3d::Zero();
  bad(0, 1) = 1e-3;
  CHECK_THROWS_AS(eig_sym<double>(bad), Error);
}

TEST_CASE("eig_sym agrees with a dense solver oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 2000; ++t) {
    Mat3d m;
    for (int i = 0; i < 9; ++i) m(i) = u(rng);
    m = ((m + m.transpose()) / 2).eval();
    if (t % 4 == 1) {  // nearly repeated eigenvalues
      Mat3d q = random_rotation(rng);
      m = q * Vec3d(0.3, 0.3 + 1e-9 * u(rng), -1.1).asDiagonal() * q.transpose();
    }
    auto d = eig_sym<double>(m);
    Eigen::SelfAdjointEigenSolver<Mat3d> oracle(m);
    const double scale = std::max(1.0, m.norm());
    for (int i = 0; i < 3; ++i) CHECK(std::abs(d.values(i) - oracle.eigenvalues()(i)) < 1e-10 * scale);
    CHECK((d.frame * d.values.asDiagonal() * d.frame.transpose() - m).norm() < 1e-9 * scale);
    CHECK((d.frame.transpose() * d.frame - Mat3d::Identity()).norm() < 1e-9);
  }
  for (int t = 0; t < 500; ++t) {
    Mat2d m;
    for (int i = 0; i < 4; ++i) m(i) = u(rng);
    m = ((m + m.transpose()) / 2).eval();
    auto d = eig_sym<double>(m);
    Eigen::SelfAdjointEigenSolver<Mat2d> oracle(m);
    CHECK((d.values - oracle.eigenvalues()).norm() < 1e-12);
    CHECK((d.frame * d.values.asDiagonal() * d.frame.transpose() - m).norm() < 1e-12);
  }
}

TEST_CASE("eig_sym on trace-free input sums to zero") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    auto d = eig_sym<double>(random_sym_traceless(rng));
    CHECK(std::abs(d.values.sum()) < 1e-9);
  }
}

TEST_CASE("singular values") {
  Vec3d e(0.5, 1.0, 2.0);
  auto d = singular_values<double>(Mat3d(e.asDiagonal()));
  CHECK((d.values - e).norm() < 1e-14);

  std::mt19937_64 rng(5);
  auto r = singular_values<double>(random_rotation(rng));
  CHECK((r.values - Vec3d::Ones()).norm() < 1e-12);

  Mat3d f = Mat3d::Identity();
  f(0, 1) = 1;
  auto s = singular_values<double>(f);
  Eigen::SelfAdjointEigenSolver<Mat3d> oracle(f * f.transpose());
  for (int i = 0; i < 3; ++i) CHECK(s.values(i) == doctest::Approx(std::sqrt(oracle.eigenvalues()(i))).epsilon(1e-12));
  CHECK(s.values.prod() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(singular_values<double>(Mat3d(Vec3d(1, 1, -1).asDiagonal())), Error);

  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 500; ++t) {
    Mat3d m;
    for (int i = 0; i < 9; ++i) m(i) = u(rng);
    Eigen::JacobiSVD<Mat3d> svd(m);
    Vec3d ref = svd.singularValues().reverse();
    Vec3d got = singular_values_any<double>(m);
    CHECK((got - ref).norm() < 1e-10 * std::max(1.0, ref(2)));
  }
}

TEST_CASE("singular_values_any resolves near rank one") {
  Vec3d a(1, 2, -0.5), b(0.3, -0.1, 0.7);
  Mat3d m = a * b.transpose();
  Vec3d sv = singular_values_any<double>(m);
  CHECK(sv(2) == doctest::Approx(a.norm() * b.norm()));
  CHECK(sv(1) < 1e-12);
}

TEST_CASE("OgdenParams validation") {
  CHECK_NOTHROW(OgdenParams::nematic(8.0, {2.0}, {2.0}));
  CHECK_THROWS_AS(OgdenParams::nematic(8.0, {-1.0}, {2.0}), Error);
  CHECK_THROWS_AS(OgdenParams::nematic(8.0, {1.0}, {1.5}), Error);
  CHECK_THROWS_AS(OgdenParams::general({0.5, 1.0, 1.5}, {1.0}, {2.0}), Error);
  CHECK_THROWS_AS(OgdenParams::general({1.0, 1.0, 1.0}, {1.0}, {2.0}), Error);
  CHECK_THROWS_AS(OgdenParams::nematic(0.5, {1.0}, {2.0}), Error);
}

TEST_CASE("energy_W") {
  auto p = OgdenParams::nematic(8.0, {2.0}, {2.0});
  Mat3d we = Vec3d(p.e[0], p.e[1], p.e[2]).asDiagonal();
  CHECK(std::abs(energy_W<double>(we, p)) < 1e-12);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) CHECK(std::abs(energy_W<double>(Mat3d(we * random_rotation(rng)), p)) < 1e-10);
  // direct formula 1/e1^2 + 1/e2^2 + 1/e3^2 - 3 with c/gamma = 1
  CHECK(energy_W<double>(Mat3d::Identity(), p) == doctest::Approx(1.25).epsilon(1e-12));
  Mat3d bad = 1.1 * Mat3d::Identity();
  CHECK_THROWS_AS(energy_W<double>(bad, p), Error);
}

TEST_CASE("energy_W is nonnegative on unimodular matrices") {
  auto p = OgdenParams::nematic(4.0, {1.0, 0.5}, {2.0, 3.5});
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 10000; ++t) {
    Mat3d f;
    for (int i = 0; i < 9; ++i) f(i) = u(rng);
    double d = f.determinant();
    if (std::abs(d) < 1e-2) continue;
    if (d < 0) f.col(0) = -f.col(0), d = -d;
    f /= std::cbrt(d);
    CHECK(energy_W<double>(f, p) >= -1e-10);
  }
}

TEST_CASE("energy_Wn wells and right invariance") {
  auto p = OgdenParams::nematic(8.0, {2.0}, {2.0});
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    Vec3d n = random_rotation(rng).col(0);
    Mat3d f = L_half<double>(n, 8.0);
    CHECK(std::abs(energy_Wn<double>(f, n, p, false)) < 1e-10);
    CHECK(std::abs(energy_Wn<double>(f, n, p, true)) < 1e-10);
    Mat3d g = random_rotation(rng) * Mat3d(Vec3d(1.2, 0.9, 1 / 1.08).asDiagonal()) * random_rotation(rng);
    Mat3d r = random_rotation(rng);
    CHECK(energy_Wn<double>(Mat3d(g * r), n, p, false) == doctest::Approx(energy_Wn<double>(g, n, p, false)).epsilon(1e-12));
    CHECK(energy_Wn<double>(g, n, p, false) >= -1e-10);
  }
  CHECK_THROWS_AS(energy_Wn<double>(Mat3d::Identity(), Vec3d(1, 1, 0), p, false), Error);
  CHECK_THROWS_AS(energy_Wn<double>(Mat3d(2 * Mat3d::Identity()), Vec3d(1, 0, 0), p, false), Error);
  CHECK_NOTHROW(energy_Wn<double>(Mat3d(2 * Mat3d::Identity()), Vec3d(1, 0, 0), p, true));
}

TEST_CASE("energy_W equals min over directors of energy_Wn") {
  auto p = OgdenParams::nematic(8.0, {2.0}, {2.0});
  const auto dirs = fibonacci_sphere(100000);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int t = 0; t < 100; ++t) {
    Vec3d s(p.e[0] * (1 + u(rng)), p.e[1] * (1 + u(rng)), 0);
    s(2) = 1 / (s(0) * s(1));
    Mat3d f = random_rotation(rng) * Mat3d(s.asDiagonal()) * random_rotation(rng);
    const double w = energy_W<double>(f, p);
    double best = 1e300;
    for (const auto& n : dirs) best = std::min(best, energy_Wn<double>(f, n, p, false));
    CHECK(best >= w - 1e-10);
    CHECK(best - w < 1e-3);
  }
}

TEST_CASE("energy_V closed form") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    Vec3d n = random_rotation(rng).col(2);
    auto r = energy_V<double>(U_n<double>(n));
    CHECK(std::abs(r.value) < 1e-10);
    CHECK(std::abs(std::abs(r.director.dot(n)) - 1) < 1e-9);
  }
  auto r = energy_V<double>(Mat3d(Vec3d(0.25, 0.25, -0.5).asDiagonal()));
  CHECK(r.value == doctest::Approx(9.0 / 8.0).epsilon(1e-14));
  CHECK_THROWS_AS(energy_V<double>(Mat3d(Vec3d(1, 0, 0).asDiagonal())), Error);
  Mat3d ns = Mat3d::Zero();
  ns(0, 1) = 1;
  CHECK_THROWS_AS(energy_V<double>(ns), Error);
}

TEST_CASE("energy_V against director sampling") {
  const auto dirs = fibonacci_sphere(100000);
  std::mt19937_64 rng(29);
  for (int t = 0; t < 100; ++t) {
    Mat3d e = random_sym_traceless(rng);
    auto r = energy_V<double>(e);
    Vec3d best;
    const double s = sampled_min_V(e, dirs, &best);
    CHECK(std::abs(s - r.value) < 1e-3);
    auto d = eig_sym<double>(e);
    if (d.values(2) - d.values(1) > 0.1) CHECK(std::abs(best.dot(r.director)) > std::cos(1e-2));
  }
}

TEST_CASE("energy_Vqce_2d") {
  CHECK(energy_Vqce_2d<double>(Mat2d::Zero()) == 0.0);
  const double r = 3 / (2 * std::sqrt(2.0));
  Mat2d e;
  e << r / std::sqrt(2.0), 0, 0, -r / std::sqrt(2.0);
  CHECK(energy_Vqce_2d<double>(e) < 1e-30);
  Mat2d big = 2 * e;
  // oracle: minimise |big - q|^2 over a sampled disc of admissible q
  double best = 1e300;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) {
      const double x = -r + 2 * r * i / 200, y = -r + 2 * r * j / 200;
      Mat2d q;
      q << x / std::sqrt(2.0), y / std::sqrt(2.0), y / std::sqrt(2.0), -x / std::sqrt(2.0);
      if (q.norm() > r) continue;
      best = std::min(best, (big - q).squaredNorm());
    }
  CHECK(energy_Vqce_2d<double>(big) == doctest::Approx(9.0 / 8.0).epsilon(1e-12));
  CHECK(best == doctest::Approx(9.0 / 8.0).epsilon(1e-3));
  CHECK_THROWS_AS(energy_Vqce_2d<double>(Mat2d::Identity()), Error);
}

TEST_CASE("energy_Vnc") {
  auto p = OgdenParams::nematic(8.0, {1.0, 0.5}, {2.0, 4.0}, 3.0);
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    Vec3d n = random_rotation(rng).col(1);
    CHECK(std::abs(energy_Vnc<double>(U_n<double>(n), n, p)) < 1e-14);
    Mat3d e = random_sym_traceless(rng);
    CHECK(energy_Vnc<double>(e, n, p) == doctest::Approx(p.sum_c_gamma() / 2 * (e - U_n<double>(n)).squaredNorm()));
  }
  CHECK_THROWS_AS(energy_Vnc<double>(Mat3d::Zero(), Vec3d(0, 0, 2), p), Error);
}

TEST_CASE("energy_Vnc is the second-order expansion of the compressible energy") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    Mat3d e;
    for (int i = 0; i < 9; ++i) e(i) = u(rng);
    e = ((e + e.transpose()) / 2).eval();
    Vec3d n = random_rotation(rng).col(0);
    const auto base = OgdenParams::nematic(8.0, {1.0, 0.5}, {2.0, 3.0}, 1.5);
    const double target = energy_Vnc<double>(e, n, base);
    double prev_err = 1e300;
    for (double eps : {1e-3, 1e-4}) {
      auto p = OgdenParams::nematic(std::pow(1 + eps, 3), base.c, base.gamma, base.c_vol);
      Mat3d f = Mat3d::Identity() + eps * e;
      const double fd = energy_Wn<double>(f, n, p, true) / (eps * eps);
      const double err = std::abs(fd - target) / std::abs(target);
      CHECK(err < 10 * eps);
      CHECK(err < prev_err);
      prev_err = err;
    }
  }
}

TEST_CASE("rank_one_connection") {
  auto a = TracelessMat2<double>::from_coords(0.75, 0, 0.75);
  auto b = TracelessMat2<double>::from_coords(-0.75, 0, -0.75);
  auto r = rank_one_connection(a, b);
  CHECK(r.rank == 1);
  CHECK(r.rank_one);
  Eigen::JacobiSVD<Mat2d> svd(Mat2d(a.matrix() - b.matrix()));
  CHECK(svd.singularValues()(1) < 1e-12);
  CHECK(rank_one_connection(a, a).rank == 0);
  CHECK(rank_one_connection(TracelessMat2<double>::from_coords(0.75, 0, 0), TracelessMat2<double>{}).rank == 2);

  TracelessMat3<double> x, y;
  x.s(2) = 0.4;
  y.k(2) = 0.4;  // x - y = 0.4(S3 - W3) is rank one
  auto r3 = rank_one_connection(x, y);
  CHECK(r3.rank_one);
  CHECK(rank_one_connection(x, x).rank == 0);
  TracelessMat3<double> z;
  z.s(0) = 1;
  CHECK(rank_one_connection(z, TracelessMat3<double>{}).rank == 2);
}

TEST_CASE("long double instantiation agrees") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 50; ++t) {
    Mat3d m = random_sym_traceless(rng);
    auto d = eig_sym<double>(m);
    auto dl = eig_sym<long double>(Mat3<long double>(m.cast<long double>()));
    for (int i = 0; i < 3; ++i) CHECK(std::abs(double(dl.values(i)) - d.values(i)) < 1e-12);
  }
}
