#include "ncvx/wells.hpp"

namespace ncvx {

const char* well_kind_name(WellKind k) {
  switch (k) {
    case WellKind::NonlinearK: return "NONLINEAR_K";
    case WellKind::Linear2dK0: return "LINEAR2D_K0";
    case WellKind::Linear3dK0: return "LINEAR3D_K0";
    case WellKind::KAlpha: return "KALPHA";
    case WellKind::HullNonlinear: return "HULL_NONLINEAR";
    case WellKind::Ball2dQce: return "BALL2D_QCE";
  }
  return "UNKNOWN";
}

int WellSet::dimension() const {
  return (kind == WellKind::Linear2dK0 || kind == WellKind::Ball2dQce) ? 2 : 3;
}

namespace {

void require_dim(const Eigen::MatrixXd& a, int d, const WellSet& w) {
  if (a.rows() != d || a.cols() != d)
    throw Error(Errc::DimensionMismatch, std::string(well_kind_name(w.kind)) + " expects a " + std::to_string(d) +
                                             "x" + std::to_string(d) + " matrix");
}

Vec3d positive_singular_values(const Mat3d& f, const Tolerances& tol) {
  if (!(f.determinant() > 0)) throw Error(Errc::SingularInput, "nonlinear wells require det F > 0");
  return singular_values<double>(f, tol).values;
}

}  // namespace

bool hull_nonlinear_member(const Eigen::MatrixXd& f, const std::array<double, 3>& e, double tol) {
  if (f.rows() != 3 || f.cols() != 3) return false;
  const Mat3d g = f;
  if (std::abs(g.determinant() - 1.0) > tol) return false;
  const Vec3d s = singular_values<double>(g).values;
  return s(0) >= e[0] - tol && s(2) <= e[2] + tol;
}

double well_distance(const Eigen::MatrixXd& a, const WellSet& w, const Tolerances& tol) {
  require_dim(a, w.dimension(), w);
  switch (w.kind) {
    case WellKind::NonlinearK: {
      const Vec3d s = positive_singular_values(Mat3d(a), tol);
      return (s - Vec3d(w.e[0], w.e[1], w.e[2])).norm();
    }
    case WellKind::HullNonlinear: {
      const Mat3d f = a;
      const Vec3d s = positive_singular_values(f, tol);
      double d2 = 0;
      for (int i = 0; i < 3; ++i) {
        const double lo = std::max(w.e[0] - s(i), 0.0), hi = std::max(s(i) - w.e[2], 0.0);
        d2 += lo * lo + hi * hi;
      }
      return std::sqrt(d2) + std::abs(f.determinant() - 1.0);
    }
    case WellKind::Linear2dK0: {
      const Mat2d m2 = a;
      if (std::abs(m2.trace()) > tol.sym) throw Error(Errc::NonTracelessInput, "tr A != 0");
      const auto t = TracelessMat2<double>::from_matrix(m2);
      return radial_distance_2d(t) + std::max(std::abs(t.a3) - w.m, 0.0);
    }
    case WellKind::Ball2dQce: {
      const Mat2d m2 = a;
      const Mat2d e = (m2 + m2.transpose()) / 2;
      return std::max(e.norm() - 3.0 / (2.0 * std::sqrt(2.0)), 0.0);
    }
    case WellKind::Linear3dK0: {
      const Mat3d s = (Mat3d(a) + Mat3d(a).transpose()) / 2;
      const auto d = eig_sym<double>(s, tol);
      return (d.values - Vec3d(-0.5, -0.5, 1.0)).norm();
    }
    case WellKind::KAlpha: {
      const Mat3d m3 = a;
      const Mat3d s = (m3 + m3.transpose()) / 2;
      const Mat3d k = (m3 - m3.transpose()) / 2;
      const auto d = eig_sym<double>(s, tol);
      return (d.values - Vec3d(-w.alpha, -w.alpha, 2 * w.alpha)).norm() + std::max(k.norm() - w.m, 0.0);
    }
  }
  return 0;
}

}  // namespace ncvx
