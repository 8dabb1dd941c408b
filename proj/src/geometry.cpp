#include "ncvx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "ncvx/parallel.hpp"

namespace ncvx {

namespace {

double cross(const Vec2d& a, const Vec2d& b) { return a(0) * b(1) - a(1) * b(0); }

int orient(const Vec2d& a, const Vec2d& b, const Vec2d& c) {
  const double v = cross(b - a, c - a);
  const double scale = (b - a).norm() * (c - a).norm();
  if (std::abs(v) <= 1e-14 * scale) return 0;
  return v > 0 ? 1 : -1;
}

bool on_segment(const Vec2d& a, const Vec2d& b, const Vec2d& p) {
  return std::min(a(0), b(0)) - 1e-15 <= p(0) && p(0) <= std::max(a(0), b(0)) + 1e-15 &&
         std::min(a(1), b(1)) - 1e-15 <= p(1) && p(1) <= std::max(a(1), b(1)) + 1e-15;
}

// Strict crossing: the open segments meet at a single interior point.
bool segments_cross(const Vec2d& a, const Vec2d& b, const Vec2d& c, const Vec2d& d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

std::pair<Vec2d, Vec2d> bbox_of(const std::vector<Vec2d>& p) {
  Vec2d lo = p.front(), hi = p.front();
  for (const auto& v : p) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

bool is_convex(const std::vector<Vec2d>& p) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i)
    if (cross(p[(i + 1) % n] - p[i], p[(i + 2) % n] - p[(i + 1) % n]) < -1e-14) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

double polygon_area(const std::vector<Vec2d>& p) {
  double s = 0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i) s += cross(p[i], p[(i + 1) % n]);
  return s / 2;
}

double polygon_perimeter(const std::vector<Vec2d>& p) {
  double s = 0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i) s += (p[(i + 1) % n] - p[i]).norm();
  return s;
}

Vec2d polygon_centroid(const std::vector<Vec2d>& p) {
  Vec2d c = Vec2d::Zero();
  double a = 0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i) {
    const double w = cross(p[i], p[(i + 1) % n]);
    a += w;
    c += w * (p[i] + p[(i + 1) % n]);
  }
  return c / (3 * a);
}

double distance_to_segment(const Vec2d& x, const Vec2d& a, const Vec2d& b) {
  const Vec2d d = b - a;
  const double l2 = d.squaredNorm();
  const double t = l2 > 0 ? std::clamp((x - a).dot(d) / l2, 0.0, 1.0) : 0.0;
  return (a + t * d - x).norm();
}

double distance_to_boundary(const Vec2d& x, const std::vector<Vec2d>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = p.size(); i < n; ++i) best = std::min(best, distance_to_segment(x, p[i], p[(i + 1) % n]));
  return best;
}

bool point_in_polygon(const Vec2d& x, const std::vector<Vec2d>& p, double tol) {
  if (tol > 0 && distance_to_boundary(x, p) <= tol) return true;
  int winding = 0;
  for (std::size_t i = 0, n = p.size(); i < n; ++i) {
    const Vec2d& a = p[i];
    const Vec2d& b = p[(i + 1) % n];
    if (a(1) <= x(1)) {
      if (b(1) > x(1) && cross(b - a, x - a) > 0) ++winding;
    } else if (b(1) <= x(1) && cross(b - a, x - a) < 0) {
      --winding;
    }
  }
  return winding != 0;
}

bool segments_intersect(const Vec2d& a, const Vec2d& b, const Vec2d& c, const Vec2d& d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

bool polygon_is_simple(const std::vector<Vec2d>& p) {
  const std::size_t n = p.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n])) return false;
    }
  return true;
}

Vec3d barycentric(const Vec2d& x, const Vec2d& a, const Vec2d& b, const Vec2d& c) {
  const double det = cross(b - a, c - a);
  const double l1 = cross(b - x, c - x) / det;
  const double l2 = cross(c - x, a - x) / det;
  return {l1, l2, 1 - l1 - l2};
}

// ---------------------------------------------------------------------------
// Domain2

Domain2 Domain2::polygon(std::vector<Vec2d> boundary) {
  if (boundary.size() < 3) throw Error(Errc::InvalidParams, "polygon needs at least three vertices");
  if (polygon_area(boundary) < 0) std::reverse(boundary.begin(), boundary.end());
  if (!(polygon_area(boundary) > 0)) throw Error(Errc::InvalidParams, "polygon has zero area");
  if (!polygon_is_simple(boundary)) throw Error(Errc::InvalidParams, "polygon is self-intersecting");
  Domain2 d;
  d.boundary_ = std::move(boundary);
  return d;
}

Domain2 Domain2::disk(const Vec2d& center, double radius, int facets) {
  if (!(radius > 0)) throw Error(Errc::NonPositiveRadius, "disk radius must be positive");
  Domain2 d;
  d.disk_ = Disk{center, radius};
  d.boundary_.reserve(facets);
  for (int k = 0; k < facets; ++k) {
    const double t = 2 * std::numbers::pi * k / facets;
    d.boundary_.push_back(center + radius * Vec2d(std::cos(t), std::sin(t)));
  }
  return d;
}

Domain2 Domain2::unit_square() { return polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

Domain2 Domain2::l_shape() { return polygon({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}); }

double Domain2::area() const {
  if (disk_) return std::numbers::pi * disk_->radius * disk_->radius;
  return polygon_area(boundary_);
}

double Domain2::diameter() const {
  if (disk_) return 2 * disk_->radius;
  double d = 0;
  for (const auto& a : boundary_)
    for (const auto& b : boundary_) d = std::max(d, (a - b).norm());
  return d;
}

std::pair<Vec2d, Vec2d> Domain2::bbox() const {
  if (disk_) return {disk_->center.array() - disk_->radius, disk_->center.array() + disk_->radius};
  return bbox_of(boundary_);
}

bool Domain2::contains(const Vec2d& x, double tol) const {
  if (disk_) return (x - disk_->center).norm() <= disk_->radius + tol;
  return point_in_polygon(x, boundary_, tol);
}

double Domain2::boundary_distance(const Vec2d& x) const {
  if (disk_) return std::abs(disk_->radius - (x - disk_->center).norm());
  return distance_to_boundary(x, boundary_);
}

std::vector<Vec2d> Domain2::boundary_samples(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2d> out;
  out.reserve(n);
  if (disk_) {
    for (std::size_t k = 0; k < n; ++k) {
      const double t = 2 * std::numbers::pi * (k + u(rng)) / n;
      out.push_back(disk_->center + disk_->radius * Vec2d(std::cos(t), std::sin(t)));
    }
    return out;
  }
  const double per = polygon_perimeter(boundary_);
  std::size_t edge = 0;
  double start = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = per * (k + u(rng)) / n;
    while (edge + 1 < boundary_.size() && start + (boundary_[(edge + 1) % boundary_.size()] - boundary_[edge]).norm() < s) {
      start += (boundary_[(edge + 1) % boundary_.size()] - boundary_[edge]).norm();
      ++edge;
    }
    const Vec2d& a = boundary_[edge];
    const Vec2d& b = boundary_[(edge + 1) % boundary_.size()];
    const double len = (b - a).norm();
    out.push_back(a + std::clamp((s - start) / len, 0.0, 1.0) * (b - a));
  }
  return out;
}

Vec2d Domain2::uniform_sample(std::uint64_t seed, std::uint64_t index) const {
  std::mt19937_64 rng(mix_seed(seed, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto [lo, hi] = bbox();
  for (;;) {
    const Vec2d x(lo(0) + (hi(0) - lo(0)) * u(rng), lo(1) + (hi(1) - lo(1)) * u(rng));
    if (contains(x)) return x;
  }
}

Domain2 Domain2::transformed(const Mat2d& m) const {
  const double det = m.determinant();
  if (!(std::abs(det) > 0)) throw Error(Errc::SingularInput, "domain transform is singular");
  if (disk_) {
    const Mat2d g = m.transpose() * m;
    const double c2 = std::abs(det);
    if (std::abs(g(0, 1)) <= 1e-12 * c2 && std::abs(g(0, 0) - c2) <= 1e-12 * c2 && std::abs(g(1, 1) - c2) <= 1e-12 * c2)
      return disk(m * disk_->center, disk_->radius * std::sqrt(c2), static_cast<int>(boundary_.size()));
  }
  std::vector<Vec2d> pts;
  pts.reserve(boundary_.size());
  for (const auto& v : boundary_) pts.push_back(m * v);
  if (det < 0) std::reverse(pts.begin(), pts.end());
  Domain2 d;
  d.boundary_ = std::move(pts);
  return d;
}

// ---------------------------------------------------------------------------
// Cells

Vec2d disk_field_value(const DiskPayload& d, const Vec2d& x) {
  const Vec2d y = x - d.center;
  const double r2 = y.squaredNorm();
  if (r2 == 0) return Vec2d::Zero();
  return d.sign * 0.75 * std::log(r2 / (d.radius * d.radius)) * Vec2d(-y(1), y(0));
}

Mat2d disk_field_gradient(const DiskPayload& d, const Vec2d& x) {
  const Vec2d y = x - d.center;
  const double r2 = y.squaredNorm();
  const double lg = std::log(r2 / (d.radius * d.radius));
  Mat2d g;
  g << -2 * y(0) * y(1) / r2, -2 * y(1) * y(1) / r2 - lg, 2 * y(0) * y(0) / r2 + lg, 2 * y(0) * y(1) / r2;
  return d.sign * 0.75 * g;
}

double Cell::area() const {
  if (shape == CellShape::Disk) return std::numbers::pi * disk->radius * disk->radius;
  return std::abs(polygon_area(vertices));
}

bool Cell::contains(const Vec2d& x, double tol) const {
  if (shape == CellShape::Disk) return (x - disk->center).norm() <= disk->radius + tol;
  if (shape == CellShape::Triangle) {
    const Vec3d b = barycentric(x, vertices[0], vertices[1], vertices[2]);
    if (b.minCoeff() >= 0) return true;
    if (tol <= 0) return false;
  }
  return point_in_polygon(x, vertices, tol);
}

Vec2d Cell::value(const Vec2d& x) const {
  Vec2d v = gradient * x + translation;
  if (disk) v += disk_field_value(*disk, x);
  return v;
}

Mat2d Cell::grad_at(const Vec2d& x) const {
  if (disk) return gradient + disk_field_gradient(*disk, x);
  return gradient;
}

Mat2d Cell::derived_gradient() const {
  if (shape == CellShape::Disk || vertices.size() < 3 || displacement.size() != vertices.size()) return gradient;
  if (vertices.size() == 3) {
    Mat2d dx, du;
    dx << vertices[1] - vertices[0], vertices[2] - vertices[0];
    du << displacement[1] - displacement[0], displacement[2] - displacement[0];
    return du * dx.inverse();
  }
  // least squares over all vertices for general polygons
  const std::size_t n = vertices.size();
  Eigen::MatrixXd a(n, 3), b(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    a.row(i) << vertices[i](0), vertices[i](1), 1;
    b.row(i) = displacement[i].transpose();
  }
  const Eigen::MatrixXd sol = a.colPivHouseholderQr().solve(b);
  return sol.topRows(2).transpose();
}

// ---------------------------------------------------------------------------
// PiecewiseField with a multilevel bucket index

struct PiecewiseField::Index {
  Vec2d origin;
  double base = 1;
  static constexpr int kLevels = 31;
  std::array<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>, kLevels> levels;

  static std::uint64_t key(std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) | static_cast<std::uint32_t>(iy);
  }
  int level_for(double extent) const {
    if (!(extent > 0)) return kLevels - 1;
    const int l = static_cast<int>(std::floor(std::log2(base / extent)));
    return std::clamp(l, 0, kLevels - 1);
  }
  double bucket(int l) const { return std::ldexp(base, -l); }
};

PiecewiseField::PiecewiseField(Domain2 domain, Datum datum, std::vector<Cell> cells)
    : domain_(std::move(domain)), datum_(datum), cells_(std::move(cells)) {
  rebuild_index();
}

void PiecewiseField::rebuild_index() {
  auto idx = std::make_shared<Index>();
  auto [lo, hi] = domain_.bbox();
  for (const auto& c : cells_) {
    if (c.shape == CellShape::Disk) {
      lo = lo.cwiseMin(Vec2d(c.disk->center.array() - c.disk->radius));
      hi = hi.cwiseMax(Vec2d(c.disk->center.array() + c.disk->radius));
    } else {
      const auto [a, b] = bbox_of(c.vertices);
      lo = lo.cwiseMin(a);
      hi = hi.cwiseMax(b);
    }
  }
  idx->origin = lo.array() - 1e-9 * (1 + (hi - lo).norm());
  idx->base = 2 * std::max(hi(0) - lo(0), hi(1) - lo(1)) + 1e-9;
  for (std::uint32_t i = 0; i < cells_.size(); ++i) {
    const auto& c = cells_[i];
    Vec2d a, b;
    if (c.shape == CellShape::Disk) {
      a = c.disk->center.array() - c.disk->radius;
      b = c.disk->center.array() + c.disk->radius;
    } else {
      std::tie(a, b) = bbox_of(c.vertices);
    }
    const double pad = 1e-9 * (b - a).norm() + 1e-15;
    a.array() -= pad;
    b.array() += pad;
    const int l = idx->level_for(std::max(b(0) - a(0), b(1) - a(1)));
    const double h = idx->bucket(l);
    const auto x0 = static_cast<std::int64_t>(std::floor((a(0) - idx->origin(0)) / h));
    const auto x1 = static_cast<std::int64_t>(std::floor((b(0) - idx->origin(0)) / h));
    const auto y0 = static_cast<std::int64_t>(std::floor((a(1) - idx->origin(1)) / h));
    const auto y1 = static_cast<std::int64_t>(std::floor((b(1) - idx->origin(1)) / h));
    for (auto ix = x0; ix <= x1; ++ix)
      for (auto iy = y0; iy <= y1; ++iy) idx->levels[l][Index::key(ix, iy)].push_back(i);
  }
  index_ = std::move(idx);
}

std::vector<std::size_t> PiecewiseField::candidates(const Vec2d& x) const {
  std::vector<std::size_t> out;
  if (!index_) return out;
  for (int l = 0; l < Index::kLevels; ++l) {
    const auto& lev = index_->levels[l];
    if (lev.empty()) continue;
    const double h = index_->bucket(l);
    const auto ix = static_cast<std::int64_t>(std::floor((x(0) - index_->origin(0)) / h));
    const auto iy = static_cast<std::int64_t>(std::floor((x(1) - index_->origin(1)) / h));
    auto it = lev.find(Index::key(ix, iy));
    if (it != lev.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double PiecewiseField::leaf_area() const {
  double s = 0;
  for (const auto& c : cells_)
    if (!c.refined) s += c.area();
  // children of refined cells are leaves or refined themselves; refined
  // cells contribute only what their children leave uncovered, which is
  // residual by definition
  return s;
}

double PiecewiseField::residual() const { return std::max(0.0, domain_.area() - leaf_area()); }

const Cell* PiecewiseField::find(std::int64_t id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < cells_.size() && cells_[id].id == id) return &cells_[id];
  for (const auto& c : cells_)
    if (c.id == id) return &c;
  return nullptr;
}

EvalResult field_eval(const PiecewiseField& f, const Vec2d& x) {
  const double tol = 1e-12 * (1 + f.domain().diameter());
  if (!f.domain().contains(x, tol)) throw Error(Errc::OutOfDomain, "point outside the domain");
  const Cell* leaf = nullptr;
  const Cell* refined = nullptr;
  for (std::size_t i : f.candidates(x)) {
    const Cell& c = f.cells()[i];
    if (!c.contains(x, tol)) continue;
    if (!c.refined) {
      if (!leaf || c.id < leaf->id) leaf = &c;
    } else if (!refined || c.generation > refined->generation ||
               (c.generation == refined->generation && c.id < refined->id)) {
      refined = &c;
    }
  }
  EvalResult r;
  if (leaf) {
    r.value = leaf->value(x);
    r.gradient = leaf->grad_at(x);
    r.cell = leaf->id;
    return r;
  }
  r.residual = true;
  if (refined) {
    r.value = refined->value(x);
    r.gradient = refined->grad_at(x);
    r.cell = refined->id;
    return r;
  }
  r.value = f.datum().value(x);
  r.gradient = f.datum().gradient;
  return r;
}

// ---------------------------------------------------------------------------
// Reference triangle

std::array<Vec2d, 6> ReferenceTriangle::vertices() {
  const double s3 = std::sqrt(3.0);
  return {Vec2d(-1, -1 / s3), Vec2d(1, -1 / s3), Vec2d(0, 2 / s3),
          Vec2d(0.25, 1 / (4 * s3)), Vec2d(-0.25, 1 / (4 * s3)), Vec2d(0, -1 / (2 * s3))};
}

std::array<std::array<int, 3>, 7> ReferenceTriangle::cells() {
  // T1 (V1 V2 V6), T2 (V1 V6 V5), T3 (V4 V5 V6), T4 (V2 V3 V4),
  // T5 (V2 V4 V6), T6 (V3 V1 V5), T7 (V3 V5 V4)
  return {{{0, 1, 5}, {0, 5, 4}, {3, 4, 5}, {1, 2, 3}, {1, 3, 5}, {2, 0, 4}, {2, 4, 3}}};
}

std::array<Vec2d, 6> ReferenceTriangle::displacements(double delta) {
  const double s3 = std::sqrt(3.0);
  return {Vec2d::Zero(), Vec2d::Zero(), Vec2d::Zero(), delta / 2 * Vec2d(-1, s3), -delta / 2 * Vec2d(1, s3),
          delta * Vec2d(1, 0)};
}

Mat2d ReferenceTriangle::cell_gradient(int k, double delta) {
  if (k < 1 || k > 7) throw Error(Errc::IndexOutOfRange, "reference cell index must be 1..7");
  const auto v = vertices();
  const auto u = displacements(delta);
  const auto t = cells()[k - 1];
  Mat2d dx, du;
  dx << v[t[1]] - v[t[0]], v[t[2]] - v[t[0]];
  du << u[t[1]] - u[t[0]], u[t[2]] - u[t[0]];
  return du * dx.inverse();
}

PiecewiseField reference_triangle_field(double delta) {
  if (!(delta > 0)) throw Error(Errc::NonPositiveDelta, "delta must be positive");
  const auto v = ReferenceTriangle::vertices();
  const auto u = ReferenceTriangle::displacements(delta);
  std::vector<Cell> cells;
  for (int k = 1; k <= 7; ++k) {
    const auto t = ReferenceTriangle::cells()[k - 1];
    Cell c;
    c.id = k - 1;
    c.label = k;
    c.vertices = {v[t[0]], v[t[1]], v[t[2]]};
    c.displacement = {u[t[0]], u[t[1]], u[t[2]]};
    c.gradient = ReferenceTriangle::cell_gradient(k, delta);
    c.translation = u[t[0]] - c.gradient * v[t[0]];
    cells.push_back(std::move(c));
  }
  return PiecewiseField(Domain2::polygon({v[0], v[1], v[2]}), Datum{}, std::move(cells));
}

// ---------------------------------------------------------------------------
// Packing

Generator Generator::disk() { return Generator{}; }

Generator Generator::polygon(std::vector<Vec2d> shape, const Mat2d& transform) {
  if (polygon_area(shape) < 0) std::reverse(shape.begin(), shape.end());
  if (!is_convex(shape)) throw Error(Errc::InvalidParams, "generator polygon must be convex");
  Generator g;
  g.kind = Kind::Polygon;
  const Vec2d c = polygon_centroid(shape);
  for (auto& v : shape) v -= c;
  g.shape = std::move(shape);
  g.transform = transform;
  return g;
}

Generator Generator::reference_triangle(const Mat2d& transform, bool reflections) {
  const auto v = ReferenceTriangle::vertices();
  Generator g;
  g.kind = Kind::Polygon;
  g.shape = {v[0], v[1], v[2]};
  g.transform = transform;
  g.reflections = reflections;
  g.equilateral_lattice = true;
  return g;
}

double Generator::base_area() const {
  const double a = kind == Kind::Disk ? std::numbers::pi : polygon_area(shape);
  return a * std::abs(transform.determinant());
}

std::vector<Vec2d> CellCover::outline(const Placement& p) const {
  std::vector<Vec2d> out;
  out.reserve(generator.shape.size());
  for (const auto& v : generator.shape) out.push_back(p.center + p.scale * p.orientation * (generator.transform * v));
  if (generator.transform.determinant() < 0) std::reverse(out.begin(), out.end());
  return out;
}

double CellCover::placement_area(const Placement& p) const { return p.scale * p.scale * generator.base_area(); }

namespace {

// Work happens in the generator frame, where copies are c + s * o * shape.
struct Packer {
  const Domain2& dom;  // generator frame
  const Generator& gen;
  const PackOptions& opt;
  double clearance;
  bool convex_domain;

  std::vector<Vec2d> copy(const Vec2d& c, double s, int o) const {
    std::vector<Vec2d> out;
    out.reserve(gen.shape.size());
    for (const auto& v : gen.shape) out.push_back(c + s * o * v);
    return out;
  }

  // Polygon copy fully inside (with clearance), strictly outside, or neither.
  enum class Where { Inside, Outside, Partial };
  Where classify(const std::vector<Vec2d>& q) const {
    if (dom.is_disk()) {
      const auto& d = *dom.round();
      int in = 0;
      for (const auto& v : q) in += (v - d.center).norm() <= d.radius - clearance;
      if (in == static_cast<int>(q.size())) return Where::Inside;
      // distance from centre to the polygon
      double dist = point_in_polygon(d.center, q) ? 0 : distance_to_boundary(d.center, q);
      return dist >= d.radius ? Where::Outside : Where::Partial;
    }
    const auto& b = dom.boundary();
    int in = 0;
    for (const auto& v : q)
      if (point_in_polygon(v, b) && distance_to_boundary(v, b) >= clearance) ++in;
    bool crossing = false;
    for (std::size_t i = 0; i < q.size() && !crossing; ++i)
      for (std::size_t j = 0, n = b.size(); j < n; ++j)
        if (segments_intersect(q[i], q[(i + 1) % q.size()], b[j], b[(j + 1) % n])) {
          crossing = true;
          break;
        }
    if (in == static_cast<int>(q.size()) && !crossing) {
      if (convex_domain) return Where::Inside;
      for (const auto& v : b)
        if (point_in_polygon(v, q)) return Where::Partial;
      return Where::Inside;
    }
    if (in == 0 && !crossing) {
      bool any_point_in = false;
      for (const auto& v : q) any_point_in |= point_in_polygon(v, b);
      for (const auto& v : b) any_point_in |= point_in_polygon(v, q);
      if (!any_point_in) return Where::Outside;
    }
    return Where::Partial;
  }

  bool disk_fits(const Vec2d& c, double r) const {
    if (dom.is_disk()) return (c - dom.round()->center).norm() + r <= dom.round()->radius - clearance;
    return point_in_polygon(c, dom.boundary()) && distance_to_boundary(c, dom.boundary()) >= r + clearance;
  }

  bool fits(const Vec2d& c, double s, int o) const {
    if (gen.kind == Generator::Kind::Disk) return disk_fits(c, s);
    return classify(copy(c, s, o)) == Where::Inside;
  }

  // Largest scale (bisection) of a copy centred at c with orientation o.
  double largest_at(const Vec2d& c, int o, double cap) const {
    double lo = 0, hi = cap;
    if (fits(c, hi, o)) return hi;
    if (!fits(c, opt.min_scale, o)) return 0;
    lo = opt.min_scale;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (fits(c, mid, o) ? lo : hi) = mid;
    }
    return lo;
  }
};

struct LevelHash {
  // bucket side per level; objects live at the level whose bucket exceeds them
  Vec2d origin;
  double base;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> levels;

  static std::uint64_t key(std::int64_t ix, std::int64_t iy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) | static_cast<std::uint32_t>(iy);
  }
  int level_for(double extent) const {
    const int l = static_cast<int>(std::floor(std::log2(base / std::max(extent, 1e-300))));
    return std::clamp(l, 0, 40);
  }
  void insert(const Vec2d& lo, const Vec2d& hi, std::uint32_t id) {
    const int l = level_for(std::max(hi(0) - lo(0), hi(1) - lo(1)));
    if (static_cast<int>(levels.size()) <= l) levels.resize(l + 1);
    const double h = std::ldexp(base, -l);
    for (auto ix = cell(lo(0) - origin(0), h); ix <= cell(hi(0) - origin(0), h); ++ix)
      for (auto iy = cell(lo(1) - origin(1), h); iy <= cell(hi(1) - origin(1), h); ++iy)
        levels[l][key(ix, iy)].push_back(id);
  }
  template <typename F>
  void query(const Vec2d& lo, const Vec2d& hi, F&& visit) const {
    for (std::size_t l = 0; l < levels.size(); ++l) {
      if (levels[l].empty()) continue;
      const double h = std::ldexp(base, -static_cast<int>(l));
      for (auto ix = cell(lo(0) - origin(0), h); ix <= cell(hi(0) - origin(0), h); ++ix)
        for (auto iy = cell(lo(1) - origin(1), h); iy <= cell(hi(1) - origin(1), h); ++iy) {
          auto it = levels[l].find(key(ix, iy));
          if (it == levels[l].end()) continue;
          for (auto id : it->second)
            if (!visit(id)) return;
        }
    }
  }
  static std::int64_t cell(double v, double h) { return static_cast<std::int64_t>(std::floor(v / h)); }
};

// Separating-axis overlap test for convex polygons; touching is allowed.
bool convex_overlap(const std::vector<Vec2d>& p, const std::vector<Vec2d>& q, double tol) {
  auto separated = [&](const std::vector<Vec2d>& a, const std::vector<Vec2d>& b) {
    for (std::size_t i = 0, n = a.size(); i < n; ++i) {
      const Vec2d e = a[(i + 1) % n] - a[i];
      const Vec2d nrm(e(1), -e(0));
      const double len = nrm.norm();
      double amax = -1e300, bmin = 1e300;
      for (const auto& v : a) amax = std::max(amax, nrm.dot(v) / len);
      for (const auto& v : b) bmin = std::min(bmin, nrm.dot(v) / len);
      if (bmin >= amax - tol) return true;
    }
    return false;
  };
  return !(separated(p, q) || separated(q, p));
}

const std::array<Vec2d, 3>& unit_triangle() {
  static const std::array<Vec2d, 3> t = [] {
    const auto v = ReferenceTriangle::vertices();
    return std::array<Vec2d, 3>{v[0], v[1], v[2]};
  }();
  return t;
}

struct LatticeTri {
  Vec2d c;
  double s;
  int o;
};

void pack_lattice(const Packer& pk, const Domain2& dom, double domain_area, CellCover& out, std::vector<Placement>& gen_frame) {
  const auto& opt = pk.opt;
  const double unit_area = std::sqrt(3.0);
  const double goal = opt.target * domain_area;
  double covered = 0;

  // Lattice origin: the largest copy that fits around the centroid.
  const Vec2d c0 = dom.is_disk() ? dom.round()->center : polygon_centroid(dom.boundary());
  const auto [blo, bhi] = dom.bbox();
  const double cap = (bhi - blo).norm();
  int o0 = 1;
  double s1 = pk.largest_at(c0, 1, cap);
  if (pk.gen.reflections) {
    const double sm = pk.largest_at(c0, -1, cap);
    if (sm > s1) {
      s1 = sm;
      o0 = -1;
    }
  }
  if (!(s1 > 0)) s1 = std::min(opt.max_scale, cap);
  double s_root = s1;
  while (s_root > opt.max_scale) s_root *= 0.5;

  // Root lattice triangles at s_root covering the bounding box.
  std::vector<LatticeTri> level;
  {
    const double sq3 = std::sqrt(3.0);
    auto to_lattice = [&](const Vec2d& p) {
      const Vec2d d = o0 * (p - c0) / s_root;
      const double j = d(1) / sq3;
      const double i = (d(0) - j) / 2;
      return Vec2d(i, j);
    };
    Vec2d lmin(1e300, 1e300), lmax(-1e300, -1e300);
    for (const Vec2d& p : {blo, bhi, Vec2d(blo(0), bhi(1)), Vec2d(bhi(0), blo(1))}) {
      const Vec2d l = to_lattice(p);
      lmin = lmin.cwiseMin(l);
      lmax = lmax.cwiseMax(l);
    }
    const auto i0 = static_cast<long>(std::floor(lmin(0))) - 2, i1 = static_cast<long>(std::ceil(lmax(0))) + 2;
    const auto j0 = static_cast<long>(std::floor(lmin(1))) - 2, j1 = static_cast<long>(std::ceil(lmax(1))) + 2;
    const double count = double(i1 - i0 + 1) * double(j1 - j0 + 1);
    if (count > 2.0 * opt.max_placements + 1e6)
      throw Error(Errc::InvalidParams, "packing lattice too fine for the domain (max_scale too small)");
    for (long j = j0; j <= j1; ++j)
      for (long i = i0; i <= i1; ++i) {
        const Vec2d up = c0 + o0 * s_root * Vec2d(2.0 * i + j, sq3 * j);
        level.push_back({up, s_root, o0});
        level.push_back({up + o0 * s_root * Vec2d(1, 1 / sq3), s_root, -o0});
      }
  }

  out.root_scale = s_root;
  bool stop = false;
  bool storing = true;
  while (!level.empty() && !stop) {
    std::vector<LatticeTri> next;
    const double s = level.front().s;
    const bool can_split = s / 2 >= opt.min_scale;
    double level_area = 0;
    // classification is independent per triangle
    std::vector<std::uint8_t> where(level.size());
    parallel_for(level.size(), [&](std::size_t k) {
      const auto& t = level[k];
      where[k] = static_cast<std::uint8_t>(pk.classify(pk.copy(t.c, t.s, t.o)));
    });
    for (std::size_t k = 0; k < level.size(); ++k) {
      const auto& t = level[k];
      const auto w = static_cast<Packer::Where>(where[k]);
      if (w == Packer::Where::Inside && (t.o == 1 || pk.gen.reflections)) {
        if (storing) gen_frame.push_back({t.c, t.s, t.o});
        covered += t.s * t.s * unit_area;
        level_area += t.s * t.s * unit_area;
        if (covered >= goal) {
          stop = true;
          break;
        }
        if (gen_frame.size() >= opt.max_placements) {
          stop = true;
          out.note = "placement budget exhausted";
          break;
        }
      } else if ((w == Packer::Where::Partial || (w == Packer::Where::Inside && t.o == -1)) && can_split) {
        const auto& v = unit_triangle();
        for (int m = 0; m < 3; ++m) next.push_back({t.c + t.o * t.s * v[m] / 2, t.s / 2, t.o});
        next.push_back({t.c, t.s / 2, -t.o});
      }
    }
    out.level_fraction.push_back(level_area / domain_area);
    if (storing) out.level_end.push_back(gen_frame.size());
    if (covered >= opt.store_target * domain_area) storing = false;
    level.swap(next);
  }
}

void pack_scan(const Packer& pk, const Domain2& dom, double domain_area, CellCover& out, std::vector<Placement>& gen_frame) {
  const auto& opt = pk.opt;
  const bool disks = pk.gen.kind == Generator::Kind::Disk;
  const double unit_area = disks ? std::numbers::pi : polygon_area(pk.gen.shape);
  double radius0 = 1;  // circumradius of the shape at scale 1
  if (!disks) {
    radius0 = 0;
    for (const auto& v : pk.gen.shape) radius0 = std::max(radius0, v.norm());
  }
  const double goal = opt.target * domain_area;
  double covered = 0;

  const auto [blo, bhi] = dom.bbox();
  LevelHash hash{blo.array() - 1.0, 4 * (bhi - blo).maxCoeff() + 4, {}};
  std::vector<std::vector<Vec2d>> polys;
  auto place = [&](const Vec2d& c, double s, int o) {
    const auto id = static_cast<std::uint32_t>(gen_frame.size());
    gen_frame.push_back({c, s, o});
    covered += s * s * unit_area;
    const double r = s * radius0;
    hash.insert(c.array() - r, c.array() + r, id);
    if (!disks) polys.push_back(pk.copy(c, s, o));
  };
  auto free_of_overlap = [&](const Vec2d& c, double s, int o) {
    const double r = s * radius0;
    bool ok = true;
    std::vector<Vec2d> q;
    if (!disks) q = pk.copy(c, s, o);
    hash.query(c.array() - r, c.array() + r, [&](std::uint32_t id) {
      const auto& p = gen_frame[id];
      if (disks) {
        if ((p.center - c).norm() < p.scale + s - 1e-12 * (p.scale + s)) ok = false;
      } else if (convex_overlap(polys[id], q, 1e-12 * s)) {
        ok = false;
      }
      return ok;
    });
    return ok;
  };

  // first the largest copy around the centroid
  const Vec2d c0 = dom.is_disk() ? dom.round()->center : polygon_centroid(dom.boundary());
  const double cap = std::min(opt.max_scale, (bhi - blo).norm());
  double s1 = 0;
  int o1 = 1;
  for (int o : {1, -1}) {
    if (o == -1 && !pk.gen.reflections) break;
    const double s = pk.largest_at(c0, o, cap);
    if (s > s1) {
      s1 = s;
      o1 = o;
    }
  }
  if (s1 >= opt.min_scale) place(c0, s1, o1);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s = s1 > 0 ? s1 / 2 : cap / 4;
  while (covered < goal && s >= opt.min_scale && gen_frame.size() < opt.max_placements) {
    const double h = s * (disks ? 1.0 : radius0);
    const Vec2d phase(u(rng) * h, u(rng) * h);
    const auto nx = static_cast<long>(std::ceil((bhi(0) - blo(0)) / h)) + 1;
    const auto ny = static_cast<long>(std::ceil((bhi(1) - blo(1)) / h)) + 1;
    for (long iy = 0; iy < ny && covered < goal; ++iy)
      for (long ix = 0; ix < nx && covered < goal; ++ix) {
        const Vec2d p = blo + phase + Vec2d(ix * h, iy * h);
        if (!dom.contains(p)) continue;
        if (disks) {
          // largest admissible radius at p, capped at twice the level scale
          double r = std::min(2 * s, dom.boundary_distance(p) - pk.clearance);
          if (r < s) continue;
          hash.query(p.array() - r - 2 * s, p.array() + r + 2 * s, [&](std::uint32_t id) {
            const auto& q = gen_frame[id];
            r = std::min(r, (q.center - p).norm() - q.scale);
            return r >= s;
          });
          if (r >= s && pk.disk_fits(p, r)) place(p, r * (1 - 1e-12), 1);
        } else {
          for (int o : {1, -1}) {
            if (o == -1 && !pk.gen.reflections) break;
            if (pk.fits(p, s, o) && free_of_overlap(p, s, o)) {
              place(p, s, o);
              break;
            }
          }
        }
        if (gen_frame.size() >= opt.max_placements) {
          out.note = "placement budget exhausted";
          break;
        }
      }
    s /= 2;
  }
}

}  // namespace

CellCover vitali_pack(const Domain2& domain, const Generator& generator, const PackOptions& opt) {
  if (!(opt.target > 0 && opt.target < 1)) throw Error(Errc::InvalidParams, "packing target must lie in (0,1)");
  if (!(opt.min_scale > 0)) throw Error(Errc::InvalidParams, "min_scale must be positive");
  const double det = generator.transform.determinant();
  if (!(std::abs(det) > 0)) throw Error(Errc::SingularInput, "generator transform is singular");

  CellCover out;
  out.generator = generator;
  const Mat2d inv = generator.transform.inverse();
  const Domain2 local = domain.transformed(inv);
  const double local_area = local.area();
  Packer pk{local, generator, opt, opt.tau * local.diameter(), local.is_disk() || [&] {
              // convexity of the local boundary polygon
              const auto& b = local.boundary();
              for (std::size_t i = 0, n = b.size(); i < n; ++i)
                if (cross(b[(i + 1) % n] - b[i], b[(i + 2) % n] - b[(i + 1) % n]) < -1e-14) return false;
              return true;
            }()};

  std::vector<Placement> gen_frame;
  if (generator.equilateral_lattice)
    pack_lattice(pk, local, local_area, out, gen_frame);
  else
    pack_scan(pk, local, local_area, out, gen_frame);

  double covered = 0;
  out.placements.reserve(gen_frame.size());
  for (const auto& p : gen_frame) {
    out.placements.push_back({generator.transform * p.center, p.scale, p.orientation});
    covered += p.scale * p.scale;
  }
  const double unit_area = generator.kind == Generator::Kind::Disk ? std::numbers::pi : polygon_area(generator.shape);
  out.covered_fraction = covered * unit_area / local_area;
  if (!out.level_fraction.empty()) {
    out.covered_fraction = 0;
    for (double f : out.level_fraction) out.covered_fraction += f;
  }
  out.target_reached = out.covered_fraction >= opt.target;
  if (!out.target_reached) {
    std::ostringstream os;
    os << "TargetUnreachable: achieved covered fraction " << out.covered_fraction << " < target " << opt.target;
    if (!out.note.empty()) os << " (" << out.note << ")";
    out.note = os.str();
  }
  return out;
}

bool placements_disjoint(const CellCover& cover, double tol) {
  const bool disks = cover.generator.kind == Generator::Kind::Disk;
  if (cover.placements.empty()) return true;
  Vec2d lo = cover.placements[0].center, hi = lo;
  std::vector<std::pair<Vec2d, Vec2d>> boxes;
  std::vector<std::vector<Vec2d>> polys;
  for (const auto& p : cover.placements) {
    Vec2d a, b;
    if (disks) {
      const double r = p.scale * std::sqrt(std::abs(cover.generator.transform.determinant()));
      a = p.center.array() - r;
      b = p.center.array() + r;
    } else {
      polys.push_back(cover.outline(p));
      std::tie(a, b) = bbox_of(polys.back());
    }
    boxes.emplace_back(a, b);
    lo = lo.cwiseMin(a);
    hi = hi.cwiseMax(b);
  }
  LevelHash hash{lo.array() - 1.0, 4 * (hi - lo).maxCoeff() + 4, {}};
  for (std::uint32_t i = 0; i < boxes.size(); ++i) hash.insert(boxes[i].first, boxes[i].second, i);
  for (std::uint32_t i = 0; i < boxes.size(); ++i) {
    bool ok = true;
    hash.query(boxes[i].first, boxes[i].second, [&](std::uint32_t j) {
      if (j <= i) return true;
      if (disks) {
        const double ri = (boxes[i].second - boxes[i].first)(0) / 2, rj = (boxes[j].second - boxes[j].first)(0) / 2;
        ok = (cover.placements[i].center - cover.placements[j].center).norm() >= ri + rj - tol * (ri + rj);
      } else {
        const double scale = (boxes[i].second - boxes[i].first).norm();
        ok = !convex_overlap(polys[i], polys[j], tol * scale + 1e-15);
      }
      return ok;
    });
    if (!ok) return false;
  }
  return true;
}

bool placements_inside(const CellCover& cover, const Domain2& domain, double tol) {
  const double t = tol * (1 + domain.diameter());
  for (const auto& p : cover.placements) {
    if (cover.generator.kind == Generator::Kind::Disk) {
      const double r = p.scale * std::sqrt(std::abs(cover.generator.transform.determinant()));
      if (!domain.contains(p.center) || domain.boundary_distance(p.center) < r - t) return false;
      continue;
    }
    const auto q = cover.outline(p);
    for (const auto& v : q)
      if (!domain.contains(v, t)) return false;
    if (domain.is_disk()) continue;
    const auto& b = domain.boundary();
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0, n = b.size(); j < n; ++j)
        if (segments_cross(q[i], q[(i + 1) % q.size()], b[j], b[(j + 1) % n])) return false;
    for (const auto& v : b)
      if (point_in_polygon(v, q) && distance_to_boundary(v, q) > t) return false;
  }
  return true;
}

}  // namespace ncvx
