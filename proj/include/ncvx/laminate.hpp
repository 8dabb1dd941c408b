#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "ncvx/matrix_kernel.hpp"
#include "ncvx/wells.hpp"

namespace ncvx {

// Rank-one laminate tree. A parent with children (A, B) satisfies
// parent = (1 - lambda) A + lambda B and rank(A - B) = 1.
struct LaminateNode {
  Eigen::MatrixXd matrix;
  double weight = 1.0;  // product of the barycentric weights on the path from the root
  double lambda = 0.0;  // weight of the second child
  int level = 0;
  std::vector<LaminateNode> children;

  bool is_leaf() const { return children.empty(); }
  std::vector<const LaminateNode*> leaves() const;
  // Largest |parent - (1-lambda)A - lambda B| over the tree.
  double recombination_error() const;
};

struct Split2d {
  TracelessMat2<double> a;
  TracelessMat2<double> b;
  double lambda;  // c = (1 - lambda) a + lambda b
};

// First-order split of c towards the circle |a| = r_tilde (rank-one by construction).
Split2d split_2d(const TracelessMat2<double>& c, double r_tilde, double m);

struct Split3d {
  TracelessMat3<double> plus;
  TracelessMat3<double> minus;
  double amplitude;  // delta for the first split, epsilon for the second
};

Split3d split_3d_first(const TracelessMat3<double>& a, double alpha, const Tolerances& tol = {});
Split3d split_3d_second(const TracelessMat3<double>& b, double alpha, double m_next, const Tolerances& tol = {});

// Both levels at once: four leaves in K_{alpha, m_next}, weights 1/4.
LaminateNode split_3d_tree(const TracelessMat3<double>& a, double alpha, double m_next, const Tolerances& tol = {});

struct HullSample {
  Eigen::MatrixXd matrix;
  int order = 0;
};

struct HullOptions {
  int order = 2;
  int samples = 1000;
  std::uint64_t seed = 1;
  // When set, first-order connections are solved for onto this well set
  // (NonlinearK or Linear2dK0); otherwise only rank-one pairs already present
  // in the seed list are interpolated.
  std::optional<WellSet> family;
};

std::vector<HullSample> hull_expand(const std::vector<Eigen::MatrixXd>& seeds, const HullOptions& opt);

// Finds a with (a (x) n) so that A + a (x) n lies in the nonlinear well set K(e)
// and det is preserved; returns nothing when Newton fails from all starts.
std::optional<Vec3d> solve_nonlinear_connection(const Mat3d& a, const Vec3d& n, const std::array<double, 3>& e,
                                                std::mt19937_64& rng);

}  // namespace ncvx
