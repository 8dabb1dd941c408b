#pragma once
// Independent audits of piecewise fields and SVG rendering.

#include <optional>
#include <string>
#include <vector>

#include "ncvx/construct.hpp"
#include "ncvx/geometry.hpp"
#include "ncvx/wells.hpp"

namespace ncvx {

// What the field is audited against. Boundary, divergence, continuity and
// ledger checks always run; the distance checks depend on the kind.
struct AuditSpec {
  enum class Kind { Datum, Wells, Segment };
  Kind kind = Kind::Datum;

  // Wells: samples whose well distance exceeds well_tol may occupy at most
  // allow_bad of the domain (sampled estimate, plus 3 standard errors).
  WellSet wells = WellSet::linear3d_k0();
  double well_tol = 1e-9;
  double allow_bad = 0;

  // Segment [A, B] with weight lambda of B and closeness eps.
  Mat2d a = Mat2d::Zero(), b = Mat2d::Zero();
  double lambda = 0.5;
  double eps = 0.1;
  double flag_slack = 0.01;

  static AuditSpec datum() { return {}; }
  static AuditSpec well_set(const WellSet& w, double tol = 1e-9, double allow = 0);
  static AuditSpec segment(const Mat2d& a, const Mat2d& b, double lambda, double eps);
};

struct AuditCheck {
  std::string name;
  bool pass = true;
  std::string witness;  // cell id or point of the worst violation
  double worst = 0;     // worst measured value
  double limit = 0;     // threshold it is compared to
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  double good = 0, flagged = 0, residual = 0;  // fractions of the domain
  double well_p50 = 0, well_p95 = 0, well_max = 0;
  double energy_p50 = 0, energy_p95 = 0, energy_max = 0;
  std::size_t samples = 0;
  double runtime = 0;

  bool ok() const;
  const AuditCheck* find(const std::string& name) const;
  // key=value lines; runtime is left out unless asked for so that equal
  // inputs give equal bytes.
  std::string to_text(bool with_runtime = false) const;
};

// Gradient of the cell from its vertex positions and displacements (disk
// cells use their closed form at x).
Mat2d rederived_gradient(const Cell& c, const Vec2d& x);

AuditReport audit(const PiecewiseField& f, const AuditSpec& spec, std::size_t samples = 10000,
                  std::uint64_t seed = 1, std::size_t boundary_samples = 1000);

// ---------------------------------------------------------------------------

enum class RenderMode { DeformedMesh, Heatmap, StageDecay };

struct RenderOptions {
  RenderMode mode = RenderMode::DeformedMesh;
  double magnification = 0;  // 0: chosen so the largest displacement is 10% of the diameter
  WellSet wells = WellSet::linear3d_k0();
  int dimension = 2;  // dimension of the data being drawn
  double width = 640;
  std::string title;
};

std::string render(const PiecewiseField& f, const RenderOptions& opt);
std::string render_stage_decay(const std::vector<StageMetrics>& metrics, const RenderOptions& opt = {});

}  // namespace ncvx
