#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ncvx/geometry.hpp"
#include "ncvx/inapprox.hpp"
#include "ncvx/matrix_kernel.hpp"

namespace ncvx {

// ---------------------------------------------------------------------------
// Closed-form disk solution and its three-dimensional embedding

// Single disk cell carrying +-(3/4) log(|x|^2/r^2) (-x2, x1) on top of the
// in-plane part of w = (x1/4, x2/4, -x3/2).
PiecewiseField explicit_disk_solution(double r, int sign = 1, const Vec2d& center = Vec2d::Zero());

// In-plane gradient g of (u~ + w) -> full 3D gradient (w3 = -x3/2).
Mat3d embed3d_gradient(const Mat2d& g);
Mat3d embed3d_strain(const Mat2d& g);
Vec3d embed3d_value(const Vec2d& in_plane, double x3);

// Disks from vitali_pack, each carrying the rescaled closed-form field.
PiecewiseField general_domain_solution(const Domain2& omega, const PackOptions& pack, int sign = 1);

// ---------------------------------------------------------------------------
// Rank-one conjugation frame

// For a trace-free rank-one D = a (x) b (|a| = 1), L = [a^T; b^T] satisfies
// L D L^{-1} = E with E = e1 (x) e2.
struct RankOneFrame {
  Mat2d d = Mat2d::Zero();
  Mat2d l = Mat2d::Identity();
  Mat2d l_inv = Mat2d::Identity();
  static RankOneFrame from_direction(const Mat2d& d, const Tolerances& tol = {});
};

// Tile geometry: tiles are M(c + s o T) with M = L^{-1} diag(1/sqrt(rho), sqrt(rho)).
struct TileFrame {
  RankOneFrame frame;
  double rho = 1;
  Mat2d m = Mat2d::Identity();
  Mat2d m_inv = Mat2d::Identity();
  double m_norm = 1;              // spectral norm of M
  std::array<Mat2d, 7> per_delta;  // gradient of cell k per unit amplitude: M Q_k M^{-1}

  static TileFrame build(const Mat2d& direction, double rho);
  // Amplitude putting cell T1 exactly at g + t D.
  double delta_for(double t) const { return rho * t / (2 * std::sqrt(3.0)); }
};

// Segment distances. The max-coordinate form works in the frame where
// A - C = lambda E and B - C = (lambda - 1) E.
double dist_segment_euclid(const Mat2d& m, const Mat2d& a, const Mat2d& b);
double dist_points_euclid(const Mat2d& m, const Mat2d& a, const Mat2d& b);
double dist_segment_maxform(const Mat2d& m_hat, double lambda);

// ---------------------------------------------------------------------------
// Pompe construction

struct PompeResult {
  PiecewiseField field;
  std::vector<std::int64_t> flagged;  // cells with dist(grad u, {A, B}) >= eps
  double covered_fraction = 0;
  double flagged_fraction = 0;
  double good_fraction = 0;
  double residual_fraction = 0;
  double m_eps = 0;
  double lambda = 0;
  double eps = 0;
  Mat2d a = Mat2d::Zero(), b = Mat2d::Zero(), c = Mat2d::Zero();
  Mat2d l = Mat2d::Identity();
  double sup_bound = 0;        // bound on sup |u - Cx| from tile sizes
  double max_dist_euclid = 0;  // max over cells of dist(grad u, [A, B])
  double max_dist_maxform = 0;
  std::string pack_note;
};

PompeResult pompe_construct(const TracelessMat2<double>& a, const TracelessMat2<double>& b, double lambda,
                            const Domain2& domain, double eps, const PackOptions& pack);

// ---------------------------------------------------------------------------
// Open-set refinement and staged convex integration

struct LineSplit {
  double t_plus = 0;   // A = g + t_plus D
  double t_minus = 0;  // B = g + t_minus D
  double lambda() const { return t_plus / (t_plus - t_minus); }  // weight of B
};

// Target set with a rank-one split oracle along a fixed direction D.
class RankOneOracle {
 public:
  virtual ~RankOneOracle() = default;
  virtual Mat2d direction() const = 0;
  virtual bool in_target(const Mat2d& g) const = 0;
  virtual std::optional<LineSplit> split(const Mat2d& g) const = 0;
  // Distance used for quantiles (to the final well set).
  virtual double distance(const Mat2d& g) const = 0;
  virtual std::string describe() const = 0;
};

// U_j of a 2D in-approximation; splits land on |a| = (r_{j-1} + r_j)/2 along
// the line through g with direction (c_hat, 1) in (a, a3) coordinates.
class Lin2dWindowOracle final : public RankOneOracle {
 public:
  Lin2dWindowOracle(InApproximation seq, int target_index, const Vec2d& c_hat);
  Mat2d direction() const override { return d_; }
  bool in_target(const Mat2d& g) const override;
  std::optional<LineSplit> split(const Mat2d& g) const override;
  double distance(const Mat2d& g) const override;
  std::string describe() const override;
  double radius() const { return r_tilde_; }

 private:
  InApproximation seq_;
  int j_;
  Vec2d c_hat_;
  Mat2d d_;
  double r_tilde_;
};

struct StageMetrics {
  int stage = 0;
  int round = 0;
  double bad_fraction = 1;
  double p50 = 0, p95 = 0, max = 0;  // well distance quantiles
  double energy_p95 = 0;             // energy_V of the embedded strain
  double sup_dev = 0;                // bound on sup |u_round - u_{round-1}|
  double residual = 0;               // measure frozen below the template depth
  std::size_t cells = 0;             // gradient states tracked
  bool sampled = false;              // true once the state set was resampled
};

struct EngineOptions {
  double rho = 0.02;               // tile anisotropy (margin-based default)
  double template_coverage = 0.99;  // first-pass coverage of every cell by its template
  double template_min_scale = 2e-5;
  double top_coverage = 0.995;
  double top_min_scale_rel = 1e-4;  // relative to the first tile scale
  std::size_t particle_cap = 200'000;
  std::size_t materialize_cells = 20'000;
  std::uint64_t seed = 1;
  bool strict_stages = true;  // convex_integrate throws StageRegression when p95 regresses
};

struct OpenResult {
  PiecewiseField field;  // materialised to the cell budget
  std::vector<StageMetrics> metrics;
  double sup_total = 0;  // sum of per-round bounds
  double bad_fraction = 1;
  bool budget_exhausted = false;
  std::string status;
};

// Refines v until the measure of {grad u not in U} drops below eps or
// max_rounds is reached (the result then carries budget_exhausted). A datum
// already in U comes back unchanged after zero rounds.
OpenResult construct_open(const PiecewiseField& v, const RankOneOracle& u, double eps, int max_rounds,
                          const EngineOptions& opt = {});

struct IntegrateResult {
  PiecewiseField field;
  std::vector<StageMetrics> metrics;  // every round of every stage
  std::vector<StageMetrics> stage_end;
  double sup_total = 0;
  double final_p95 = 0;
};

// Stage i targets U_{i+1}. Stage budgets: eps_1 = eps/2, eps_i = delta_i eps_{i-1}
// with delta_i = min(delta_{i-1}, 2^-i). A stage whose final p95 exceeds the
// previous one by more than 1e-3 raises StageRegression.
IntegrateResult convex_integrate(const PiecewiseField& v, const InApproximation& seq, double eps, int stages,
                                 int rounds, const EngineOptions& opt = {});

// Three-dimensional pipeline at the level of laminate measures: every stage
// replaces each atom by the four leaves of the two-level split.
struct Laminate3dResult {
  std::vector<StageMetrics> stage_end;
  std::vector<std::pair<Mat3d, double>> atoms;
};
Laminate3dResult integrate_3d_measure(const Mat3d& datum, const InApproximation& seq, int stages);

}  // namespace ncvx
