#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ncvx/laminate.hpp"
#include "ncvx/matrix_kernel.hpp"
#include "ncvx/wells.hpp"

namespace ncvx {

enum class Family { Lin2d, Lin3d, NonlinCase1, NonlinCase2, NonlinCase3 };
const char* family_name(Family f);

struct Membership {
  bool inside = false;
  double margin = 0;  // signed distance-like slack to the boundary of U_i (positive inside)
};

// A finite prefix U_1..U_depth of an in-approximation. Sequences are stored by
// their mathematical index, so r[i] is r_i; entries that a family does not use
// are still present to keep the indexing uniform.
struct InApproximation {
  Family family = Family::Lin2d;
  int depth = 0;
  WellSet target;

  std::vector<double> r;      // Lin2d: r_0..r_depth ; Lin3d: r_0..r_{depth+1}
  double m = 0;               // Lin2d cylinder height
  std::vector<double> m_seq;  // Lin3d: m_0..m_{depth+1} (m_0 unused)
  double m_sup = 0;           // Lin3d: bound on the whole (infinite) sequence m_i
  std::vector<double> eta;    // nonlinear: eta_0..eta_{depth+1} (eta_0 unused)
  std::vector<double> theta;  // case 2 only
  std::array<double, 3> e{1, 1, 1};

  int dimension() const { return family == Family::Lin2d ? 2 : 3; }
  bool nonlinear() const { return family != Family::Lin2d && family != Family::Lin3d; }

  Membership member(const Eigen::MatrixXd& x, int i) const;
  // Uniform-ish random element of U_i; nothing when the set is empty.
  std::optional<Eigen::MatrixXd> sample(int i, std::mt19937_64& rng) const;
  // Declared bound on the Frobenius norm of every element of every U_i.
  double norm_bound() const;

  // Split radius and 3D parameters used to move from U_i into U_{i+1}.
  double r_tilde(int i) const { return 0.5 * (r.at(i) + r.at(i + 1)); }
  double alpha(int i) const { return 0.5 * (r.at(i) + r.at(i + 1)); }
};

InApproximation build_inapprox_2d(double bound_M, double m, int depth);
// Default height for a datum whose skew coordinate is bounded by grad_bound.
double default_height_2d(double grad_bound);

InApproximation build_inapprox_3d(double mu1_inf, double mu3_sup, double grad_bound, int depth);
InApproximation build_inapprox_nonlinear(const OgdenParams& p, double lam1_inf, double lam3_sup, int depth);

// Laminate tree taking x in U_i into U_{i+1} (first order in 2D, second order in 3D).
LaminateNode inapprox_split(const InApproximation& seq, const Eigen::MatrixXd& x, int i);

struct ClauseResult {
  char clause = 'a';
  bool pass = true;
  std::string detail;
  Eigen::MatrixXd witness;
  double worst = 0;
};

struct ValidationReport {
  std::vector<ClauseResult> clauses;
  // clause (d) details
  double counterexample_distance = 0;  // distance of the constant chain's limit to K
  bool full_chains_converge = false;
  bool ok() const;
};

class ValidationFailure : public Error {
 public:
  ValidationFailure(const ClauseResult& c)
      : Error(Errc::ValidationFailure, std::string("clause (") + c.clause + "): " + c.detail), clause_(c) {}
  const ClauseResult& clause() const { return clause_; }

 private:
  ClauseResult clause_;
};

struct ValidateOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double slack = 1e-3;
  bool throw_on_failure = true;
};

ValidationReport validate_inapprox(const InApproximation& seq, const ValidateOptions& opt);

}  // namespace ncvx
