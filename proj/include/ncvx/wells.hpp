#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>

#include "ncvx/matrix_kernel.hpp"

namespace ncvx {

enum class WellKind { NonlinearK, Linear2dK0, Linear3dK0, KAlpha, HullNonlinear, Ball2dQce };

const char* well_kind_name(WellKind k);

struct WellSet {
  WellKind kind = WellKind::Linear3dK0;
  std::array<double, 3> e{1, 1, 1};  // NonlinearK, HullNonlinear
  double m = 0;                      // Linear2dK0, KAlpha
  double alpha = 0;                  // KAlpha

  static WellSet nonlinear_k(std::array<double, 3> e) { return {WellKind::NonlinearK, e, 0, 0}; }
  static WellSet hull_nonlinear(std::array<double, 3> e) { return {WellKind::HullNonlinear, e, 0, 0}; }
  static WellSet linear2d_k0(double m) { return {WellKind::Linear2dK0, {1, 1, 1}, m, 0}; }
  static WellSet linear3d_k0() { return {WellKind::Linear3dK0, {1, 1, 1}, 0, 0}; }
  static WellSet kalpha(double alpha, double m) { return {WellKind::KAlpha, {1, 1, 1}, m, alpha}; }
  static WellSet ball2d_qce() { return {WellKind::Ball2dQce, {1, 1, 1}, 0, 0}; }

  int dimension() const;
};

// Nonnegative margin, zero exactly on the closure of the well set.
double well_distance(const Eigen::MatrixXd& a, const WellSet& w, const Tolerances& tol = {});

// Convenience predicates used across modules.
inline double radial_distance_2d(const TracelessMat2<double>& a) { return std::abs(a.a_norm() - 0.75); }
bool hull_nonlinear_member(const Eigen::MatrixXd& f, const std::array<double, 3>& e, double tol = 1e-9);

}  // namespace ncvx
