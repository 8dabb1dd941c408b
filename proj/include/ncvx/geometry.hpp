#pragma once
// Planar domains, cells, piecewise fields and greedy packings.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ncvx/matrix_kernel.hpp"

namespace ncvx {

// ---------------------------------------------------------------------------
// Polygon predicates (vertex lists are counterclockwise unless noted)

double polygon_area(const std::vector<Vec2d>& p);  // signed, positive for counterclockwise
double polygon_perimeter(const std::vector<Vec2d>& p);
Vec2d polygon_centroid(const std::vector<Vec2d>& p);
// Winding-number test. Points within tol of an edge count as inside.
bool point_in_polygon(const Vec2d& x, const std::vector<Vec2d>& p, double tol = 0);
double distance_to_segment(const Vec2d& x, const Vec2d& a, const Vec2d& b);
double distance_to_boundary(const Vec2d& x, const std::vector<Vec2d>& p);
// Proper crossing of two closed segments (shared endpoints and touching count).
bool segments_intersect(const Vec2d& a, const Vec2d& b, const Vec2d& c, const Vec2d& d);
bool polygon_is_simple(const std::vector<Vec2d>& p);
// Triangle-local barycentric coordinates.
Vec3d barycentric(const Vec2d& x, const Vec2d& a, const Vec2d& b, const Vec2d& c);

// ---------------------------------------------------------------------------

struct Disk {
  Vec2d center = Vec2d::Zero();
  double radius = 1;
};

class Domain2 {
 public:
  static Domain2 polygon(std::vector<Vec2d> boundary);
  static Domain2 disk(const Vec2d& center, double radius, int facets = 720);
  static Domain2 unit_square();
  static Domain2 l_shape();

  const std::vector<Vec2d>& boundary() const { return boundary_; }
  const std::optional<Disk>& round() const { return disk_; }
  bool is_disk() const { return disk_.has_value(); }

  double area() const;
  double diameter() const;
  std::pair<Vec2d, Vec2d> bbox() const;
  bool contains(const Vec2d& x, double tol = 0) const;
  // Unsigned distance to the boundary (exact for disks).
  double boundary_distance(const Vec2d& x) const;
  // n points spread over the boundary by arc length (exact circle for disks).
  std::vector<Vec2d> boundary_samples(std::size_t n, std::uint64_t seed) const;
  Vec2d uniform_sample(std::uint64_t seed, std::uint64_t index) const;
  // Image under x -> m x (disks are polygonised unless m is a scaled rotation).
  Domain2 transformed(const Mat2d& m) const;

 private:
  std::vector<Vec2d> boundary_;
  std::optional<Disk> disk_;
};

// ---------------------------------------------------------------------------
// Cells and fields

enum class CellShape { Triangle, Polygon, Disk };

struct DiskPayload {
  Vec2d center = Vec2d::Zero();
  double radius = 1;
  int sign = 1;
};

// Closed-form displacement on a disk vanishing on its boundary circle.
Vec2d disk_field_value(const DiskPayload& d, const Vec2d& x);
Mat2d disk_field_gradient(const DiskPayload& d, const Vec2d& x);

struct Cell {
  std::int64_t id = 0;
  std::int64_t parent = -1;  // refined cell this one sits in, -1 at top level
  CellShape shape = CellShape::Triangle;
  std::vector<Vec2d> vertices;      // counterclockwise
  std::vector<Vec2d> displacement;  // displacement at each vertex
  Mat2d gradient = Mat2d::Zero();   // payload
  Vec2d translation = Vec2d::Zero();
  std::optional<DiskPayload> disk;  // set for CellShape::Disk
  int generation = 0;
  int label = 0;         // reference-partition index 1..7 when the cell comes from a tile, 0 otherwise
  bool refined = false;  // carries child tiles; its own payload only holds off the children

  double area() const;
  bool contains(const Vec2d& x, double tol = 0) const;
  Vec2d value(const Vec2d& x) const;
  Mat2d grad_at(const Vec2d& x) const;
  // Gradient recomputed from vertex positions and vertex displacements.
  Mat2d derived_gradient() const;
};

// Affine (or affine-plus-closed-form) description of the boundary datum.
struct Datum {
  Mat2d gradient = Mat2d::Zero();
  Vec2d translation = Vec2d::Zero();
  Vec2d value(const Vec2d& x) const { return gradient * x + translation; }
};

struct EvalResult {
  Vec2d value = Vec2d::Zero();
  Mat2d gradient = Mat2d::Zero();
  std::int64_t cell = -1;
  bool residual = false;
};

class PiecewiseField {
 public:
  PiecewiseField() = default;
  PiecewiseField(Domain2 domain, Datum datum, std::vector<Cell> cells);

  const Domain2& domain() const { return domain_; }
  const Datum& datum() const { return datum_; }
  const std::vector<Cell>& cells() const { return cells_; }
  std::vector<Cell>& mutable_cells() { return cells_; }
  // Measure of the domain where no leaf cell is present.
  double residual() const;
  double leaf_area() const;
  const Cell* find(std::int64_t id) const;
  void rebuild_index();

  // Candidate cells whose bounding box contains x (index order).
  std::vector<std::size_t> candidates(const Vec2d& x) const;

 private:
  Domain2 domain_;
  Datum datum_;
  std::vector<Cell> cells_;

  struct Index;
  std::shared_ptr<const Index> index_;
};

// Locates x. Leaf cells win over refined ones, deeper refined cells over
// shallower ones, and equal candidates resolve to the lowest id.
EvalResult field_eval(const PiecewiseField& f, const Vec2d& x);

// ---------------------------------------------------------------------------
// Reference triangle T and its seven-cell oscillation field

struct ReferenceTriangle {
  static std::array<Vec2d, 6> vertices();  // V1..V6 (index 0..5)
  // Cells T1..T7 as vertex index triples (0-based), counterclockwise.
  static std::array<std::array<int, 3>, 7> cells();
  static std::array<Vec2d, 6> displacements(double delta);
  static double area() { return std::sqrt(3.0); }
  // Constant gradient of the field on cell k (1..7) for amplitude delta.
  static Mat2d cell_gradient(int k, double delta);
};

PiecewiseField reference_triangle_field(double delta);

// ---------------------------------------------------------------------------
// Packing

struct Generator {
  enum class Kind { Disk, Polygon };
  Kind kind = Kind::Disk;
  std::vector<Vec2d> shape;             // convex, counterclockwise, centred at the origin
  Mat2d transform = Mat2d::Identity();  // copies are c + s * o * transform * shape
  bool reflections = false;             // allow o = -1
  bool equilateral_lattice = false;     // shape is the reference triangle: scan its lattice

  static Generator disk();
  static Generator polygon(std::vector<Vec2d> shape, const Mat2d& transform = Mat2d::Identity());
  static Generator reference_triangle(const Mat2d& transform = Mat2d::Identity(), bool reflections = true);
  double base_area() const;  // area of the shape at scale 1 (including the transform)
};

struct Placement {
  Vec2d center = Vec2d::Zero();
  double scale = 1;
  int orientation = 1;
};

struct PackOptions {
  double target = 0.999;
  double min_scale = 1e-3;
  double max_scale = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  std::size_t max_placements = 4'000'000;
  double tau = 1e-9;  // relative clearance from the domain boundary
  // Lattice packings only: once a whole level brings the covered fraction to
  // store_target, deeper copies are counted in level_fraction but not stored.
  double store_target = 2;
};

struct CellCover {
  Generator generator;
  std::vector<Placement> placements;
  double covered_fraction = 0;
  bool target_reached = false;
  std::string note;  // explanation when the target was not reached
  // Lattice packings: covered fraction contributed by each level (root first),
  // the end index into placements of every stored level, and the root scale.
  std::vector<double> level_fraction;
  std::vector<std::size_t> level_end;
  double root_scale = 0;

  std::vector<Vec2d> outline(const Placement& p) const;  // polygon copies only
  double placement_area(const Placement& p) const;
};

// Greedy multiscale packing; never throws for an unreachable target, the
// achieved fraction is reported in the cover instead.
CellCover vitali_pack(const Domain2& domain, const Generator& generator, const PackOptions& opt);

// Geometric audits used by tests and the verifier.
bool placements_disjoint(const CellCover& cover, double tol = 1e-12);
bool placements_inside(const CellCover& cover, const Domain2& domain, double tol = 1e-12);

}  // namespace ncvx
