#pragma once
// Trace-free matrix algebra, spectral decompositions and the energy densities.
// Everything here is templated on the scalar so that tests can re-run the same
// code in long double as a cross-check.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ncvx/errors.hpp"

namespace ncvx {

template <typename S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;

using Mat2d = Mat2<double>;
using Mat3d = Mat3<double>;
using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;

struct Tolerances {
  double sym = 1e-9;
  double det = 1e-9;
  double spec = 1e-9;
  double energy = 1e-10;
  double rank = 1e-8;
  double unit = 1e-9;
};

// ---------------------------------------------------------------------------
// Trace-free storage

template <typename S = double>
struct TracelessMat2 {
  S a1{0};  // symmetric diagonal coefficient
  S a2{0};  // symmetric off-diagonal coefficient
  S a3{0};  // skew coefficient

  static TracelessMat2 from_coords(S x1, S x2, S x3) { return {x1, x2, x3}; }

  // Projects onto the trace-free subspace; the trace of m is discarded.
  static TracelessMat2 from_matrix(const Mat2<S>& m) {
    return {(m(0, 0) - m(1, 1)) / 2, (m(0, 1) + m(1, 0)) / 2, (m(0, 1) - m(1, 0)) / 2};
  }

  Mat2<S> matrix() const {
    Mat2<S> m;
    m << a1, a2 + a3, a2 - a3, -a1;
    return m;
  }
  Mat2<S> sym() const {
    Mat2<S> m;
    m << a1, a2, a2, -a1;
    return m;
  }
  Mat2<S> skw() const {
    Mat2<S> m;
    m << S(0), a3, -a3, S(0);
    return m;
  }
  Vec2<S> a() const { return {a1, a2}; }
  // |a| in (a1, a2, a3) coordinates; the Frobenius norm of sym() is sqrt(2)|a|.
  S a_norm() const {
    using std::hypot;
    return hypot(a1, a2);
  }
  S frobenius() const {
    using std::sqrt;
    return sqrt(2 * (a1 * a1 + a2 * a2 + a3 * a3));
  }

  TracelessMat2 operator+(const TracelessMat2& o) const { return {a1 + o.a1, a2 + o.a2, a3 + o.a3}; }
  TracelessMat2 operator-(const TracelessMat2& o) const { return {a1 - o.a1, a2 - o.a2, a3 - o.a3}; }
  TracelessMat2 operator-() const { return {-a1, -a2, -a3}; }
  TracelessMat2 operator*(S t) const { return {a1 * t, a2 * t, a3 * t}; }
  friend TracelessMat2 operator*(S t, const TracelessMat2& m) { return m * t; }
  bool operator==(const TracelessMat2&) const = default;
};

// Orthonormal basis (Frobenius) of symmetric trace-free 3x3 matrices:
//   S1 = diag(1,-1,0)/sqrt2, S2 = diag(1,1,-2)/sqrt6,
//   S3,S4,S5 = symmetrised e1e2, e1e3, e2e3 over sqrt2.
// Skew part: k_i are coordinates in the orthonormal skew basis, so the axial
// vector is k/sqrt2 and |skw| = |k|.
template <typename S = double>
struct TracelessMat3 {
  Eigen::Matrix<S, 5, 1> s = Eigen::Matrix<S, 5, 1>::Zero();
  Eigen::Matrix<S, 3, 1> k = Eigen::Matrix<S, 3, 1>::Zero();

  static TracelessMat3 from_matrix(const Mat3<S>& m) {
    using std::sqrt;
    const S r2 = sqrt(S(2)), r6 = sqrt(S(6));
    TracelessMat3 t;
    const Mat3<S> e = (m + m.transpose()) / 2;
    const Mat3<S> w = (m - m.transpose()) / 2;
    t.s(0) = (e(0, 0) - e(1, 1)) / r2;
    t.s(1) = (e(0, 0) + e(1, 1) - 2 * e(2, 2)) / r6;
    t.s(2) = r2 * e(0, 1);
    t.s(3) = r2 * e(0, 2);
    t.s(4) = r2 * e(1, 2);
    // W = [[0,-w3,w2],[w3,0,-w1],[-w2,w1,0]]
    t.k(0) = r2 * w(2, 1);
    t.k(1) = r2 * w(0, 2);
    t.k(2) = r2 * w(1, 0);
    return t;
  }

  Mat3<S> sym() const {
    using std::sqrt;
    const S r2 = sqrt(S(2)), r6 = sqrt(S(6));
    Mat3<S> e = Mat3<S>::Zero();
    e(0, 0) = s(0) / r2 + s(1) / r6;
    e(1, 1) = -s(0) / r2 + s(1) / r6;
    e(2, 2) = -2 * s(1) / r6;
    e(0, 1) = e(1, 0) = s(2) / r2;
    e(0, 2) = e(2, 0) = s(3) / r2;
    e(1, 2) = e(2, 1) = s(4) / r2;
    return e;
  }
  Mat3<S> skw() const {
    using std::sqrt;
    const Vec3<S> w = k / sqrt(S(2));
    Mat3<S> m;
    m << S(0), -w(2), w(1), w(2), S(0), -w(0), -w(1), w(0), S(0);
    return m;
  }
  Mat3<S> matrix() const { return sym() + skw(); }
  S skw_norm() const { return k.norm(); }
  S frobenius() const {
    using std::sqrt;
    return sqrt(s.squaredNorm() + k.squaredNorm());
  }

  TracelessMat3 operator+(const TracelessMat3& o) const { return {s + o.s, k + o.k}; }
  TracelessMat3 operator-(const TracelessMat3& o) const { return {s - o.s, k - o.k}; }
  TracelessMat3 operator*(S t) const { return {s * t, k * t}; }
  friend TracelessMat3 operator*(S t, const TracelessMat3& m) { return m * t; }
};

template <typename S>
std::pair<Mat2<S>, Mat2<S>> sym_skw(const TracelessMat2<S>& a) {
  return {a.sym(), a.skw()};
}
template <typename S>
std::pair<Mat3<S>, Mat3<S>> sym_skw(const TracelessMat3<S>& a) {
  return {a.sym(), a.skw()};
}

// ---------------------------------------------------------------------------
// Spectral data

template <typename S, int N>
struct SpectralData {
  Eigen::Matrix<S, N, 1> values;  // ascending
  Eigen::Matrix<S, N, N> frame;   // columns are the matching unit vectors
};

namespace detail {

template <typename S, int N>
S max_abs(const Eigen::Matrix<S, N, N>& m) {
  return m.cwiseAbs().maxCoeff();
}

template <typename S, int N>
void require_symmetric(const Eigen::Matrix<S, N, N>& e, double tol) {
  const S asym = max_abs<S, N>(Eigen::Matrix<S, N, N>(e - e.transpose()));
  const S scale = std::max<S>(S(1), max_abs<S, N>(e));
  if (asym > S(tol) * scale)
    throw Error(Errc::NonSymmetricInput, "asymmetry " + std::to_string(double(asym)));
}

// First component whose magnitude is above a small threshold is made positive.
template <typename S, int N>
void canonical_sign(Eigen::Matrix<S, N, 1>& v) {
  using std::abs;
  for (int i = 0; i < N; ++i) {
    if (abs(v(i)) > S(1e-12)) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

template <typename S, int N>
void sort_ascending(SpectralData<S, N>& d) {
  std::array<int, N> idx;
  for (int i = 0; i < N; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return d.values(a) < d.values(b); });
  SpectralData<S, N> out;
  for (int i = 0; i < N; ++i) {
    out.values(i) = d.values(idx[i]);
    out.frame.col(i) = d.frame.col(idx[i]);
  }
  d = out;
}

// Unit vector spanning the kernel of a rank-2 symmetric 3x3 matrix.
template <typename S>
Vec3<S> kernel_vector(const Mat3<S>& m) {
  const Vec3<S> r0 = m.row(0).transpose(), r1 = m.row(1).transpose(), r2 = m.row(2).transpose();
  const std::array<Vec3<S>, 3> c = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (c[i].squaredNorm() > c[best].squaredNorm()) best = i;
  if (c[best].squaredNorm() == S(0)) return Vec3<S>::UnitX();
  return c[best].normalized();
}

}  // namespace detail

template <typename S>
SpectralData<S, 2> eig_sym(const Mat2<S>& e, const Tolerances& tol = {}) {
  using std::atan2, std::cos, std::sin, std::hypot;
  detail::require_symmetric<S, 2>(e, tol.sym);
  const S p = e(0, 0), r = e(1, 1), q = (e(0, 1) + e(1, 0)) / 2;
  const S mean = (p + r) / 2, h = hypot((p - r) / 2, q);
  const S theta = atan2(2 * q, p - r) / 2;
  SpectralData<S, 2> d;
  d.values << mean - h, mean + h;
  Vec2<S> vmax(cos(theta), sin(theta)), vmin(-sin(theta), cos(theta));
  detail::canonical_sign<S, 2>(vmin);
  detail::canonical_sign<S, 2>(vmax);
  d.frame.col(0) = vmin;
  d.frame.col(1) = vmax;
  return d;
}

// Trigonometric (Cardano) eigenvalues; the eigenvector of the best separated
// extreme eigenvalue is taken from a cross product and the remaining pair is
// resolved by a 2x2 problem on its orthogonal complement. The deflation step
// keeps clustered eigenvalues accurate.
template <typename S>
SpectralData<S, 3> eig_sym(const Mat3<S>& ein, const Tolerances& tol = {}) {
  using std::acos, std::cos, std::sqrt;
  detail::require_symmetric<S, 3>(ein, tol.sym);
  const Mat3<S> e = (ein + ein.transpose()) / 2;
  SpectralData<S, 3> d;
  const S scale = detail::max_abs<S, 3>(e);
  if (scale == S(0)) {
    d.values.setZero();
    d.frame.setIdentity();
    return d;
  }
  const Mat3<S> b = e / scale;
  const S q = b.trace() / 3;
  const Mat3<S> c = b - q * Mat3<S>::Identity();
  const S p = sqrt(c.squaredNorm() / 6);
  if (p <= S(64) * std::numeric_limits<S>::epsilon()) {
    d.values.setConstant(e.trace() / 3);
    d.frame.setIdentity();
    return d;
  }
  S r = (c / p).determinant() / 2;
  r = std::clamp(r, S(-1), S(1));
  const S phi = acos(r) / 3;
  const S two_pi_3 = S(2) * std::numbers::pi_v<S> / 3;
  const S lmax = q + 2 * p * cos(phi);
  const S lmin = q + 2 * p * cos(phi + two_pi_3);
  const S lmid = 3 * q - lmax - lmin;
  const S isolated = (lmax - lmid >= lmid - lmin) ? lmax : lmin;

  Vec3<S> v = detail::kernel_vector<S>(Mat3<S>(b - isolated * Mat3<S>::Identity()));
  // orthonormal complement
  Vec3<S> u = (std::abs(v(0)) > std::abs(v(1))) ? Vec3<S>(-v(2), 0, v(0)) : Vec3<S>(0, v(2), -v(1));
  u.normalize();
  Vec3<S> w = v.cross(u);
  Mat2<S> m2;
  m2 << u.dot(b * u), u.dot(b * w), w.dot(b * u), w.dot(b * w);
  m2 = ((m2 + m2.transpose()) / 2).eval();
  const SpectralData<S, 2> d2 = eig_sym<S>(m2, tol);

  d.values << v.dot(b * v), d2.values(0), d2.values(1);
  d.frame.col(0) = v;
  d.frame.col(1) = d2.frame(0, 0) * u + d2.frame(1, 0) * w;
  d.frame.col(2) = d2.frame(0, 1) * u + d2.frame(1, 1) * w;
  for (int i = 0; i < 3; ++i) {
    Vec3<S> col = d.frame.col(i).normalized();
    detail::canonical_sign<S, 3>(col);
    d.frame.col(i) = col;
  }
  d.values *= scale;
  detail::sort_ascending<S, 3>(d);
  return d;
}

// Singular values of an arbitrary 3x3 matrix computed from the invariants
// tr(M^T M), |cof M|^2 and det^2 so that tiny singular values keep relative
// accuracy (important for rank decisions near rank one).
template <typename S>
Eigen::Matrix<S, 3, 1> singular_values_any(const Mat3<S>& m) {
  using std::sqrt, std::abs;
  const Mat3<S> mtm = m.transpose() * m;
  const SpectralData<S, 3> d = eig_sym<S>(mtm);
  const S v3 = std::max(d.values(2), S(0));
  Eigen::Matrix<S, 3, 1> out = Eigen::Matrix<S, 3, 1>::Zero();
  if (v3 == S(0)) return out;
  Mat3<S> cof;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, j1 = (j + 1) % 3, j2 = (j + 2) % 3;
      cof(i, j) = m(i1, j1) * m(i2, j2) - m(i1, j2) * m(i2, j1);
    }
  const S c2 = cof.squaredNorm();
  const S det = m.determinant();
  const S prod12 = det * det / v3;  // v1 v2
  const S sum12 = std::max(S(0), (c2 - prod12) / v3);
  const S disc = std::max(S(0), sum12 * sum12 - 4 * prod12);
  const S v2 = (sum12 + sqrt(disc)) / 2;
  const S v1 = v2 > S(0) ? prod12 / v2 : S(0);
  out << sqrt(std::max(v1, S(0))), sqrt(v2), sqrt(v3);
  return out;
}

template <typename S>
SpectralData<S, 3> singular_values(const Mat3<S>& f, const Tolerances& tol = {}) {
  using std::sqrt;
  const S det = f.determinant();
  if (!(det > S(0))) throw Error(Errc::SingularInput, "det F = " + std::to_string(double(det)));
  SpectralData<S, 3> d = eig_sym<S>(Mat3<S>(f.transpose() * f), tol);
  for (int i = 0; i < 3; ++i) d.values(i) = sqrt(std::max(d.values(i), S(0)));
  // refine the smallest value through the determinant, which is exact
  if (d.values(1) * d.values(2) > S(0)) d.values(0) = det / (d.values(1) * d.values(2));
  return d;
}

// ---------------------------------------------------------------------------
// Material parameters

struct OgdenParams {
  std::vector<double> c;      // c_i > 0
  std::vector<double> gamma;  // gamma_i >= 2
  std::array<double, 3> e{1.0, 1.0, 1.0};
  std::optional<double> a;    // nematic parameter
  double c_vol = 1.0;

  std::size_t n_terms() const { return c.size(); }

  static OgdenParams nematic(double a, std::vector<double> c, std::vector<double> gamma, double c_vol = 1.0) {
    OgdenParams p;
    p.c = std::move(c);
    p.gamma = std::move(gamma);
    p.a = a;
    p.e = {std::pow(a, -1.0 / 6.0), std::pow(a, -1.0 / 6.0), std::cbrt(a)};
    p.c_vol = c_vol;
    p.validate();
    return p;
  }
  static OgdenParams general(std::array<double, 3> e, std::vector<double> c, std::vector<double> gamma,
                             double c_vol = 1.0) {
    OgdenParams p;
    p.c = std::move(c);
    p.gamma = std::move(gamma);
    p.e = e;
    p.c_vol = c_vol;
    p.validate();
    return p;
  }

  void validate(double tol = 1e-9) const {
    if (c.empty() || c.size() != gamma.size())
      throw Error(Errc::InvalidParams, "c and gamma must be non-empty and of equal length");
    for (double ci : c)
      if (!(ci > 0)) throw Error(Errc::InvalidParams, "c_i must be positive");
    for (double g : gamma)
      if (!(g >= 2)) throw Error(Errc::InvalidParams, "gamma_i must be >= 2");
    if (!(e[0] > 0 && e[0] <= e[1] && e[1] <= e[2]))
      throw Error(Errc::InvalidParams, "e must be positive and ordered");
    if (std::abs(e[0] * e[1] * e[2] - 1.0) > tol) throw Error(Errc::InvalidParams, "e1 e2 e3 must equal 1");
    if (!(e[0] < e[2])) throw Error(Errc::InvalidParams, "e1 < e3 required");
    if (a && !(*a > 1)) throw Error(Errc::InvalidParams, "a must exceed 1");
    if (!(c_vol > 0)) throw Error(Errc::InvalidParams, "c_vol must be positive");
  }

  double sum_c_gamma() const {
    double s = 0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * gamma[i];
    return s;
  }
  double nematic_a() const {
    if (a) return *a;
    if (std::abs(e[0] - e[1]) > 1e-12) throw Error(Errc::InvalidParams, "W_n requires e1 = e2 (nematic parameters)");
    return e[2] * e[2] * e[2];
  }
};

// ---------------------------------------------------------------------------
// Energies

template <typename S>
Mat3<S> U_n(const Vec3<S>& n) {
  return (3 * n * n.transpose() - Mat3<S>::Identity()) / 2;
}

// L_n^{1/2} = a^{1/3} n n + a^{-1/6} (I - n n)
template <typename S>
Mat3<S> L_half(const Vec3<S>& n, S a) {
  using std::pow;
  const Mat3<S> nn = n * n.transpose();
  return pow(a, S(1) / 3) * nn + pow(a, S(-1) / 6) * (Mat3<S>::Identity() - nn);
}

namespace detail {
template <typename S>
void require_unit(const Vec3<S>& n, double tol) {
  using std::abs;
  if (abs(n.norm() - S(1)) > S(tol)) throw Error(Errc::NonUnitDirector, "|n| != 1");
}
}  // namespace detail

template <typename S>
S energy_W(const Mat3<S>& f, const OgdenParams& p, const Tolerances& tol = {}) {
  using std::abs, std::pow;
  const S det = f.determinant();
  if (abs(det - S(1)) > S(tol.det)) throw Error(Errc::DeterminantViolation, "|det F - 1| too large");
  const auto sv = singular_values<S>(f, tol);
  S w = 0;
  for (std::size_t i = 0; i < p.n_terms(); ++i) {
    S sum = 0;
    for (int j = 0; j < 3; ++j) sum += pow(sv.values(j) / S(p.e[j]), S(p.gamma[i]));
    w += S(p.c[i] / p.gamma[i]) * (sum - 3);
  }
  return w;
}

template <typename S>
S energy_Wn(const Mat3<S>& f, const Vec3<S>& n, const OgdenParams& p, bool compressible,
            const Tolerances& tol = {}) {
  using std::abs, std::pow, std::log;
  detail::require_unit(n, tol.unit);
  const S det = f.determinant();
  if (compressible) {
    if (!(det > S(0))) throw Error(Errc::DeterminantViolation, "det F must be positive");
  } else if (abs(det - S(1)) > S(tol.det)) {
    throw Error(Errc::DeterminantViolation, "|det F - 1| too large");
  }
  const S a = S(p.nematic_a());
  const Mat3<S> nn = n * n.transpose();
  const Mat3<S> l_inv_half = pow(a, S(-1) / 3) * nn + pow(a, S(1) / 6) * (Mat3<S>::Identity() - nn);
  const Mat3<S> m = l_inv_half * f * f.transpose() * l_inv_half;
  const auto d = eig_sym<S>(Mat3<S>((m + m.transpose()) / 2), tol);
  S w = 0;
  for (std::size_t i = 0; i < p.n_terms(); ++i) {
    const S g = S(p.gamma[i]);
    S tr = 0;
    for (int j = 0; j < 3; ++j) tr += pow(std::max(d.values(j), S(0)), g / 2);
    if (compressible) tr *= pow(det, -g / 3);
    w += S(p.c[i]) / g * (tr - 3);
  }
  if (compressible) w += S(p.c_vol) * (det * det - 1 - 2 * log(det));
  return w;
}

template <typename S>
struct EnergyVResult {
  S value;
  Vec3<S> director;
};

template <typename S>
EnergyVResult<S> energy_V(const Mat3<S>& e, const Tolerances& tol = {}) {
  using std::abs;
  detail::require_symmetric<S, 3>(e, tol.sym);
  if (abs(e.trace()) > S(tol.sym)) throw Error(Errc::NonTracelessInput, "tr E != 0");
  const auto d = eig_sym<S>(e, tol);
  const S v = (d.values(0) + S(0.5)) * (d.values(0) + S(0.5)) + (d.values(1) + S(0.5)) * (d.values(1) + S(0.5)) +
              (d.values(2) - 1) * (d.values(2) - 1);
  return {v, d.frame.col(2)};
}

// Squared Frobenius distance to the ball |E| <= 3/(2 sqrt 2).
template <typename S>
S energy_Vqce_2d(const Mat2<S>& e, const Tolerances& tol = {}) {
  using std::abs, std::sqrt;
  if (abs(e.trace()) > S(tol.sym)) throw Error(Errc::NonTracelessInput, "tr E != 0");
  detail::require_symmetric<S, 2>(e, tol.sym);
  const S radius = S(3) / (2 * sqrt(S(2)));
  const S excess = std::max(e.norm() - radius, S(0));
  return excess * excess;
}

template <typename S>
S energy_Vnc(const Mat3<S>& e, const Vec3<S>& n, const OgdenParams& p, const Tolerances& tol = {}) {
  detail::require_unit(n, tol.unit);
  const S scg = S(p.sum_c_gamma());
  const S tr = e.trace();
  return scg / 2 * (e - U_n<S>(n)).squaredNorm() + (-scg / 6 + 2 * S(p.c_vol)) * tr * tr;
}

// ---------------------------------------------------------------------------
// Rank-one connections

struct RankOneReport {
  int rank = 0;
  bool rank_one = false;
  double coordinate_residual = 0;  // 2D only: (a3-b3)^2 - |a-b|^2
};

template <typename S>
RankOneReport rank_one_connection(const TracelessMat2<S>& a, const TracelessMat2<S>& b, const Tolerances& tol = {}) {
  using std::abs;
  const TracelessMat2<S> d = a - b;
  RankOneReport r;
  const S sa = d.a1 * d.a1 + d.a2 * d.a2;
  r.coordinate_residual = double(d.a3 * d.a3 - sa);
  const S scale = std::max(sa, d.a3 * d.a3);
  if (scale <= S(tol.rank) * S(tol.rank)) {
    r.rank = 0;
    return r;
  }
  r.rank_one = abs(r.coordinate_residual) <= tol.rank * double(std::max(S(1), scale));
  r.rank = r.rank_one ? 1 : 2;
  return r;
}

template <typename S>
RankOneReport rank_one_connection(const TracelessMat3<S>& a, const TracelessMat3<S>& b, const Tolerances& tol = {}) {
  const auto sv = singular_values_any<S>(Mat3<S>(a.matrix() - b.matrix()));
  RankOneReport r;
  if (!(sv(2) > S(tol.rank))) {
    r.rank = 0;
    return r;
  }
  r.rank_one = sv(1) <= S(tol.rank) * sv(2);
  r.rank = r.rank_one ? 1 : (sv(0) <= S(tol.rank) * sv(2) ? 2 : 3);
  return r;
}

// Quasi-uniform directors on the unit sphere (Fibonacci lattice). Used by the
// sampling oracles for the minimum over n.
inline std::vector<Vec3d> fibonacci_sphere(std::size_t count) {
  std::vector<Vec3d> pts;
  pts.reserve(count);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * double(i) + 1.0) / double(count);
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden * double(i);
    pts.emplace_back(rad * std::cos(th), rad * std::sin(th), z);
  }
  return pts;
}

}  // namespace ncvx
