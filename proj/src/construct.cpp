#include "ncvx/construct.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ncvx/errors.hpp"
#include "ncvx/parallel.hpp"
#include "ncvx/wells.hpp"

namespace ncvx {

namespace {


Mat2d w2d_gradient() { return 0.25 * Mat2d::Identity(); }

std::string coords(const Mat2d& g) {
  const auto t = TracelessMat2<double>::from_matrix(g);
  std::ostringstream os;
  os.precision(17);
  os << "(" << t.a1 << ", " << t.a2 << ", " << t.a3 << ")";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Closed-form solutions

PiecewiseField explicit_disk_solution(double r, int sign, const Vec2d& center) {
  if (!(r > 0)) throw Error(Errc::NonPositiveRadius, "disk radius must be positive");
  if (sign != 1 && sign != -1) throw Error(Errc::InvalidParams, "sign must be +1 or -1");
  Cell c;
  c.id = 0;
  c.shape = CellShape::Disk;
  c.disk = DiskPayload{center, r, sign};
  c.gradient = w2d_gradient();
  return PiecewiseField(Domain2::disk(center, r), Datum{w2d_gradient(), Vec2d::Zero()}, {c});
}

Mat3d embed3d_gradient(const Mat2d& g) {
  Mat3d m = Mat3d::Zero();
  m.topLeftCorner<2, 2>() = g;
  m(2, 2) = -0.5;
  return m;
}

Mat3d embed3d_strain(const Mat2d& g) {
  const Mat3d m = embed3d_gradient(g);
  return ((m + m.transpose()) / 2).eval();
}

Vec3d embed3d_value(const Vec2d& in_plane, double x3) { return {in_plane(0), in_plane(1), -x3 / 2}; }

PiecewiseField general_domain_solution(const Domain2& omega, const PackOptions& pack, int sign) {
  if (sign != 1 && sign != -1) throw Error(Errc::InvalidParams, "sign must be +1 or -1");
  const CellCover cover = vitali_pack(omega, Generator::disk(), pack);
  std::vector<Cell> cells;
  cells.reserve(cover.placements.size());
  for (const auto& p : cover.placements) {
    Cell c;
    c.id = static_cast<std::int64_t>(cells.size());
    c.shape = CellShape::Disk;
    c.disk = DiskPayload{p.center, p.scale, sign};
    c.gradient = w2d_gradient();
    cells.push_back(std::move(c));
  }
  return PiecewiseField(omega, Datum{w2d_gradient(), Vec2d::Zero()}, std::move(cells));
}

// ---------------------------------------------------------------------------
// Frames

RankOneFrame RankOneFrame::from_direction(const Mat2d& d, const Tolerances& tol) {
  const double n = d.norm();
  if (!(n > 0)) throw Error(Errc::NotRankOne, "zero direction");
  if (std::abs(d.trace()) > tol.sym * std::max(1.0, n)) throw Error(Errc::NonTracelessInput, "direction has trace");
  if (std::abs(d.determinant()) > tol.rank * std::max(1.0, n * n))
    throw Error(Errc::NotRankOne, "det of the direction is " + std::to_string(d.determinant()));
  Eigen::Index col = d.col(0).norm() >= d.col(1).norm() ? 0 : 1;
  const Vec2d a = d.col(col).normalized();
  const Vec2d b = d.transpose() * a;
  RankOneFrame f;
  f.d = d;
  f.l.row(0) = a.transpose();
  f.l.row(1) = b.transpose();
  f.l_inv = f.l.inverse();
  return f;
}

TileFrame TileFrame::build(const Mat2d& direction, double rho) {
  if (!(rho > 0)) throw Error(Errc::InvalidParams, "rho must be positive");
  TileFrame t;
  t.frame = RankOneFrame::from_direction(direction);
  t.rho = rho;
  const Mat2d s_inv = Eigen::Vector2d(1 / std::sqrt(rho), std::sqrt(rho)).asDiagonal();
  t.m = t.frame.l_inv * s_inv;
  t.m_inv = t.m.inverse();
  t.m_norm = Eigen::JacobiSVD<Mat2d>(t.m).singularValues()(0);
  for (int k = 0; k < 7; ++k) t.per_delta[k] = t.m * ReferenceTriangle::cell_gradient(k + 1, 1.0) * t.m_inv;
  return t;
}

double dist_points_euclid(const Mat2d& m, const Mat2d& a, const Mat2d& b) {
  return std::min((m - a).norm(), (m - b).norm());
}

double dist_segment_euclid(const Mat2d& m, const Mat2d& a, const Mat2d& b) {
  const Mat2d d = b - a;
  const double dd = d.squaredNorm();
  double t = dd > 0 ? (m - a).cwiseProduct(d).sum() / dd : 0;
  t = std::clamp(t, 0.0, 1.0);
  return (m - a - t * d).norm();
}

double dist_segment_maxform(const Mat2d& h, double lambda) {
  const double off = std::max({0.0, (lambda - 1) - h(0, 1), h(0, 1) - lambda});
  return std::max({std::abs(h(0, 0)), std::abs(h(1, 0)), std::abs(h(1, 1)), off});
}

// ---------------------------------------------------------------------------
// Tiles

namespace {

struct TileGeom {
  Vec2d c;  // y-frame centre
  double s;
  int o;
};

const std::array<double, 7>& cell_area_fraction() {
  static const std::array<double, 7> f = [] {
    std::array<double, 7> out{};
    const auto v = ReferenceTriangle::vertices();
    const auto cells = ReferenceTriangle::cells();
    for (int k = 0; k < 7; ++k)
      out[k] = std::abs(polygon_area({v[cells[k][0]], v[cells[k][1]], v[cells[k][2]]})) / ReferenceTriangle::area();
    return out;
  }();
  return f;
}

// Emits the seven cells of a tile sitting in a region whose affine map is (gp, tp).
void emit_tile(std::vector<Cell>& out, const TileFrame& tf, const TileGeom& t, double delta, const Mat2d& gp,
               const Vec2d& tp, std::int64_t parent, int generation) {
  const auto v = ReferenceTriangle::vertices();
  const auto u = ReferenceTriangle::displacements(delta);
  const auto cells = ReferenceTriangle::cells();
  std::array<Vec2d, 6> x, disp;
  for (int k = 0; k < 6; ++k) {
    x[k] = tf.m * (t.c + t.s * t.o * v[k]);
    disp[k] = gp * x[k] + tp + t.s * t.o * (tf.m * u[k]);
  }
  const bool flip = tf.m.determinant() < 0;
  for (int k = 0; k < 7; ++k) {
    Cell c;
    c.id = static_cast<std::int64_t>(out.size());
    c.parent = parent;
    c.shape = CellShape::Triangle;
    std::array<int, 3> idx = cells[k];
    if (flip) std::swap(idx[1], idx[2]);
    for (int j : idx) {
      c.vertices.push_back(x[j]);
      c.displacement.push_back(disp[j]);
    }
    c.gradient = gp + delta * tf.per_delta[k];
    c.translation = c.displacement[0] - c.gradient * c.vertices[0];
    c.generation = generation;
    c.label = k + 1;
    out.push_back(std::move(c));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Pompe construction

PompeResult pompe_construct(const TracelessMat2<double>& a, const TracelessMat2<double>& b, double lambda,
                            const Domain2& domain, double eps, const PackOptions& pack) {
  if (!(lambda > 0 && lambda < 1)) throw Error(Errc::DegenerateLambda, "lambda must lie in (0, 1)");
  if (!(eps > 0)) throw Error(Errc::InvalidParams, "eps must be positive");
  const auto rep = rank_one_connection(a, b);
  if (!rep.rank_one || a == b) throw Error(Errc::NotRankOne, "A - B is not rank one");
  const double e3 = eps * eps * eps;
  if (std::min(lambda, 1 - lambda) <= e3)
    throw Error(Errc::EpsilonTooLarge, "min(lambda, 1 - lambda) <= eps^3; lower eps");

  PompeResult r;
  r.lambda = lambda;
  r.eps = eps;
  r.a = a.matrix();
  r.b = b.matrix();
  r.c = ((1 - lambda) * r.a + lambda * r.b).eval();
  r.m_eps = e3 * std::max(1 / lambda, 1 / (1 - lambda));

  const TileFrame tf = TileFrame::build(r.a - r.b, r.m_eps);
  r.l = tf.frame.l;
  // A = C + lambda D and B = C + (lambda - 1) D; T1 goes to the nearer one.
  const double t_star = lambda <= 0.5 ? lambda : lambda - 1;
  const double delta = tf.delta_for(t_star);

  PackOptions opt = pack;
  const double s_budget = 0.5 * eps / (tf.m_norm * std::abs(delta));
  opt.max_scale = std::min(opt.max_scale, s_budget);
  const CellCover cover = vitali_pack(domain, Generator::reference_triangle(tf.m), opt);
  r.pack_note = cover.note;

  std::vector<Cell> cells;
  cells.reserve(cover.placements.size() * 7);
  double s_max = 0;
  for (const auto& p : cover.placements) {
    emit_tile(cells, tf, {tf.m_inv * p.center, p.scale, p.orientation}, delta, r.c, Vec2d::Zero(), -1, 1);
    s_max = std::max(s_max, p.scale);
  }
  r.sup_bound = s_max * tf.m_norm * std::abs(delta);

  const double area = domain.area();
  double flagged = 0, good = 0;
  for (const auto& c : cells) {
    const double ar = c.area();
    if (dist_points_euclid(c.gradient, r.a, r.b) >= eps) {
      r.flagged.push_back(c.id);
      flagged += ar;
    } else {
      good += ar;
    }
    r.max_dist_euclid = std::max(r.max_dist_euclid, dist_segment_euclid(c.gradient, r.a, r.b));
    const Mat2d h = tf.frame.l * (c.gradient - r.c) * tf.frame.l_inv;
    r.max_dist_maxform = std::max(r.max_dist_maxform, dist_segment_maxform(h, lambda));
  }
  r.covered_fraction = (flagged + good) / area;
  r.flagged_fraction = flagged / area;
  r.good_fraction = good / area;
  r.residual_fraction = std::max(0.0, 1 - r.covered_fraction);
  r.field = PiecewiseField(domain, Datum{r.c, Vec2d::Zero()}, std::move(cells));
  return r;
}

// ---------------------------------------------------------------------------
// Oracle

Lin2dWindowOracle::Lin2dWindowOracle(InApproximation seq, int target_index, const Vec2d& c_hat)
    : seq_(std::move(seq)), j_(target_index) {
  if (seq_.family != Family::Lin2d) throw Error(Errc::InvalidParams, "window oracle needs a 2D in-approximation");
  if (j_ < 2 || j_ > seq_.depth) throw Error(Errc::IndexOutOfRange, "target index outside 2..depth");
  if (!(c_hat.norm() > 0)) throw Error(Errc::InvalidParams, "zero line direction");
  c_hat_ = c_hat.normalized();
  d_ = TracelessMat2<double>{c_hat_(0), c_hat_(1), 1.0}.matrix();
  r_tilde_ = 0.5 * (seq_.r.at(j_ - 1) + seq_.r.at(j_));
}

bool Lin2dWindowOracle::in_target(const Mat2d& g) const { return seq_.member(g, j_).inside; }

std::optional<LineSplit> Lin2dWindowOracle::split(const Mat2d& g) const {
  const auto t = TracelessMat2<double>::from_matrix(g);
  const Vec2d a = t.a();
  const double beta = a.dot(c_hat_);
  const double disc = beta * beta - a.squaredNorm() + r_tilde_ * r_tilde_;
  if (!(a.norm() < r_tilde_) || !(disc > 0)) return std::nullopt;
  const double root = std::sqrt(disc);
  LineSplit s{-beta + root, -beta - root};
  if (!seq_.member((g + s.t_plus * d_).eval(), j_).inside) return std::nullopt;
  if (!seq_.member((g + s.t_minus * d_).eval(), j_).inside) return std::nullopt;
  return s;
}

double Lin2dWindowOracle::distance(const Mat2d& g) const { return well_distance(g, seq_.target); }

std::string Lin2dWindowOracle::describe() const {
  std::ostringstream os;
  os << "U_" << j_ << " window (" << seq_.r.at(j_ - 1) << ", " << seq_.r.at(j_) << ") split radius " << r_tilde_;
  return os.str();
}

// ---------------------------------------------------------------------------
// Measure model and materialisation

namespace {

// Packing of one region split into passes: pass 0 gathers the lattice levels
// up to the first-pass coverage, every later pass is one further level.
struct Template {
  std::vector<Placement> placements;  // stored passes only (reference or y-frame coordinates)
  std::vector<std::size_t> pass_end;  // stored passes
  std::vector<double> pass_fraction;  // share of the still uncovered area that the pass covers
  std::vector<double> pass_scale;     // largest copy in the pass
  int passes() const { return static_cast<int>(pass_fraction.size()); }
  bool stored(int p) const { return p < static_cast<int>(pass_end.size()); }
  std::pair<std::size_t, std::size_t> range(int p) const { return {p == 0 ? 0 : pass_end[p - 1], pass_end[p]}; }
};

Template make_template(const CellCover& cover, double first_pass, const Mat2d& to_frame) {
  Template t;
  const auto& lf = cover.level_fraction;
  const auto& le = cover.level_end;
  std::size_t l0 = 0;
  for (double cum = 0; l0 < lf.size();) {
    cum += lf[l0++];
    if (cum >= first_pass) break;
  }
  double cum = 0;
  bool storing = true;
  for (std::size_t lb = 0, lend = l0; lb < lf.size(); lb = lend, lend = lb + 1) {
    const double remaining = 1 - cum;
    if (remaining <= 1e-15) break;
    double covered = 0;
    for (std::size_t l = lb; l < lend; ++l) covered += lf[l];
    t.pass_fraction.push_back(std::min(1.0, covered / remaining));
    t.pass_scale.push_back(cover.root_scale * std::ldexp(1.0, -static_cast<int>(lb)));
    storing = storing && lend <= le.size();
    if (storing) t.pass_end.push_back(le[lend - 1]);
    cum += covered;
  }
  const std::size_t n = t.pass_end.empty() ? 0 : t.pass_end.back();
  t.placements.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cover.placements[i];
    t.placements.push_back({to_frame * p.center, p.scale, p.orientation});
  }
  return t;
}

struct Region {
  Mat2d g;
  Vec2d t;
  double weight;
  std::vector<Vec2d> polygon;  // empty: the whole domain
  std::int64_t cell_id = -1;   // cell of the input field, if any
};

struct Particle {
  Mat2d g;
  double w;
  double tile_scale;  // scale of the tile this cell belongs to (label > 0)
  int label;          // 0: top-level region
  int pass;
  int gen;
  int region;
  bool frozen;
};

double weighted_quantile(std::vector<std::pair<double, double>>& vw, double q) {
  if (vw.empty()) return 0;
  std::sort(vw.begin(), vw.end());
  double total = 0;
  for (const auto& p : vw) total += p.second;
  double acc = 0;
  for (const auto& p : vw) {
    acc += p.second;
    if (acc >= q * total) return p.first;
  }
  return vw.back().first;
}

class Engine {
 public:
  Engine(const PiecewiseField& v, const Mat2d& direction, double r_max, double eps_first, const EngineOptions& opt)
      : v_(v), opt_(opt), tf_(TileFrame::build(direction, opt.rho)) {
    delta_max_ = tf_.delta_for(r_max);
    s_top_ = 0.5 * eps_first / (tf_.m_norm * delta_max_);
    build_regions();
    build_templates();
    for (std::size_t i = 0; i < regions_.size(); ++i)
      particles_.push_back({regions_[i].g, regions_[i].weight, 0, 0, 0, 0, static_cast<int>(i), false});
  }

  const TileFrame& frame() const { return tf_; }

  // One refinement round against the given target.
  StageMetrics round(const RankOneOracle& u, int stage, int round_no) {
    schedule_.push_back(&u);
    StageMetrics m;
    m.stage = stage;
    m.round = round_no;
    const std::size_t n = particles_.size();
    std::vector<std::array<Particle, 8>> out(n);
    std::vector<std::uint8_t> count(n, 0);
    std::vector<double> sup(n, 0);
    std::vector<std::string> failure(n);
    parallel_for(n, [&](std::size_t i) {
      Particle p = particles_[i];
      if (p.frozen || u.in_target(p.g)) {
        out[i][0] = p;
        count[i] = 1;
        return;
      }
      const Template& tm = p.label == 0 ? top_[p.region] : (*templates_)[p.label - 1];
      if (p.pass >= tm.passes()) {
        p.frozen = true;
        out[i][0] = p;
        count[i] = 1;
        return;
      }
      const auto sp = u.split(p.g);
      if (!sp) {
        failure[i] = coords(p.g);
        return;
      }
      const double delta = delta_for(*sp);
      const double f = tm.pass_fraction[p.pass];
      const double smax = (p.label == 0 ? 1.0 : p.tile_scale) * tm.pass_scale[p.pass];
      sup[i] = smax * tf_.m_norm * std::abs(delta);
      std::uint8_t c = 0;
      const auto& af = cell_area_fraction();
      for (int k = 0; k < 7; ++k)
        out[i][c++] = {(p.g + delta * tf_.per_delta[k]).eval(), p.w * f * af[k], smax, k + 1, 0, p.gen + 1, p.region,
                       false};
      if (f < 1) {
        Particle rest = p;
        rest.w = p.w * (1 - f);
        rest.pass = p.pass + 1;
        out[i][c++] = rest;
      }
      count[i] = c;
    });
    for (std::size_t i = 0; i < n; ++i)
      if (!failure[i].empty())
        throw Error(Errc::SplitUnavailable, "no split into " + u.describe() + " for gradient " + failure[i]);

    std::vector<Particle> next;
    next.reserve(std::accumulate(count.begin(), count.end(), std::size_t{0}));
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < count[i]; ++k) next.push_back(out[i][k]);
    m.sup_dev = n ? *std::max_element(sup.begin(), sup.end()) : 0;
    m.cells = next.size();

    // Exact measures before any resampling.
    std::vector<std::uint8_t> bad(next.size());
    parallel_for(next.size(), [&](std::size_t i) { bad[i] = next[i].frozen || !u.in_target(next[i].g); });
    double bad_w = 0, frozen_w = 0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (bad[i]) bad_w += next[i].w;
      if (next[i].frozen) frozen_w += next[i].w;
    }
    m.bad_fraction = bad_w;
    m.residual = frozen_w;

    particles_ = std::move(next);
    if (particles_.size() > opt_.particle_cap) resample(round_index_);
    m.sampled = sampled_;
    ++round_index_;

    std::vector<std::pair<double, double>> dist(particles_.size()), energy(particles_.size());
    parallel_for(particles_.size(), [&](std::size_t i) {
      const auto& p = particles_[i];
      dist[i] = {u.distance(p.g), p.w};
      energy[i] = {energy_V<double>(embed3d_strain((p.g + w2d_gradient()).eval())).value, p.w};
    });
    for (const auto& d : dist) m.max = std::max(m.max, d.first);
    m.p50 = weighted_quantile(dist, 0.5);
    m.p95 = weighted_quantile(dist, 0.95);
    m.energy_p95 = weighted_quantile(energy, 0.95);
    return m;
  }

  // Replays the schedule on explicit cells until the cell budget is used up.
  PiecewiseField materialize() const {
    struct State {
      TileGeom tile;  // for label > 0
      int pass = 0;
      int region = 0;
      bool frozen = false;
      bool truncated = false;
    };
    std::vector<Cell> cells;
    std::vector<State> state;
    // Top-level regions that come from input cells stay as refined parents.
    std::vector<std::int64_t> region_cell(regions_.size(), -1);
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      if (regions_[i].polygon.empty()) continue;
      Cell c;
      c.id = static_cast<std::int64_t>(cells.size());
      c.shape = regions_[i].polygon.size() == 3 ? CellShape::Triangle : CellShape::Polygon;
      c.vertices = regions_[i].polygon;
      for (const auto& x : c.vertices) c.displacement.push_back(regions_[i].g * x + regions_[i].t);
      c.gradient = regions_[i].g;
      c.translation = regions_[i].t;
      region_cell[i] = c.id;
      cells.push_back(std::move(c));
      state.push_back({{}, 0, static_cast<int>(i), false, false});
    }
    // Pseudo-cells for whole-domain regions are tracked outside the cell list.
    std::vector<State> top_state(regions_.size());
    for (std::size_t i = 0; i < regions_.size(); ++i) top_state[i].region = static_cast<int>(i);

    const std::size_t budget = opt_.materialize_cells;
    for (const RankOneOracle* u : schedule_) {
      const std::size_t n = cells.size();
      auto refine = [&](const Mat2d& g, const Vec2d& t, State& st, int label, std::int64_t parent, int gen) {
        if (st.frozen || st.truncated || u->in_target(g)) return;
        const Template& tm = label == 0 ? top_[st.region] : (*templates_)[label - 1];
        if (st.pass >= tm.passes()) {
          st.frozen = true;
          return;
        }
        const auto sp = u->split(g);
        if (!sp || !tm.stored(st.pass)) {
          st.truncated = true;
          return;
        }
        auto [b, e] = tm.range(st.pass);
        // Largest copies come first; capping each refinement spreads the
        // budget over several generations instead of one huge first pass.
        const std::size_t per_cell = std::max<std::size_t>(1, budget / (7 * 64));
        if (e - b > per_cell) {
          st.truncated = true;
          e = b + per_cell;
        }
        if (cells.size() + 7 * (e - b) > budget) {
          // partial pass: the field stays exact, the cell simply keeps more residual
          st.truncated = true;
          e = b + (budget - std::min(budget, cells.size())) / 7;
          if (e == b) return;
        }
        const double delta = delta_for(*sp);
        for (std::size_t k = b; k < e; ++k) {
          const auto& pl = tm.placements[k];
          TileGeom child = label == 0 ? TileGeom{pl.center, pl.scale, pl.orientation}
                                      : TileGeom{st.tile.c + st.tile.s * st.tile.o * pl.center, st.tile.s * pl.scale,
                                                 st.tile.o * pl.orientation};
          emit_tile(cells, tf_, child, delta, g, t, parent, gen + 1);
          for (int q = 0; q < 7; ++q) state.push_back({child, 0, st.region, false, false});
        }
        if (parent >= 0) cells[parent].refined = true;
        if (!st.truncated) ++st.pass;
      };
      for (std::size_t i = 0; i < regions_.size(); ++i)
        if (regions_[i].polygon.empty()) {
          State& st = top_state[i];
          refine(regions_[i].g, regions_[i].t, st, 0, -1, 0);
        }
      for (std::size_t i = 0; i < n; ++i) {
        const Mat2d g = cells[i].gradient;
        const Vec2d t = cells[i].translation;
        const int label = cells[i].label;
        const int gen = cells[i].generation;
        State st = state[i];
        refine(g, t, st, label, static_cast<std::int64_t>(i), gen);
        state[i] = st;
      }
    }
    return PiecewiseField(v_.domain(), v_.datum(), std::move(cells));
  }

 private:
  double delta_for(const LineSplit& s) const {
    const double t = std::abs(s.t_plus) <= std::abs(s.t_minus) ? s.t_plus : s.t_minus;
    return tf_.delta_for(t);
  }

  void build_regions() {
    const double area = v_.domain().area();
    if (v_.cells().empty()) {
      regions_.push_back({v_.datum().gradient, v_.datum().translation, 1.0, {}, -1});
      return;
    }
    double covered = 0;
    for (const auto& c : v_.cells()) {
      if (c.refined) throw Error(Errc::PreconditionViolation, "datum must be a flat piecewise affine field");
      if (c.shape == CellShape::Disk || c.disk)
        throw Error(Errc::PreconditionViolation, "datum cells must be affine polygons");
      regions_.push_back({c.gradient, c.translation, c.area() / area, c.vertices, c.id});
      covered += c.area();
    }
    if (std::abs(covered - area) > 1e-9 * area)
      throw Error(Errc::PreconditionViolation, "datum cells must tile the domain");
  }

  // Reference-cell templates do not depend on the frame; they are shared.
  static std::shared_ptr<const std::vector<Template>> reference_templates(double coverage, double min_scale) {
    static std::mutex mu;
    static std::map<std::pair<double, double>, std::shared_ptr<const std::vector<Template>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{coverage, min_scale}];
    if (slot) return slot;
    const auto v = ReferenceTriangle::vertices();
    const auto tri = ReferenceTriangle::cells();
    auto out = std::make_shared<std::vector<Template>>(7);
    for (int k = 0; k < 7; ++k) {
      const Domain2 cell = Domain2::polygon({v[tri[k][0]], v[tri[k][1]], v[tri[k][2]]});
      PackOptions po;
      po.target = 1 - 1e-12;
      po.min_scale = min_scale;
      po.store_target = 1 - (1 - coverage) / 8;
      (*out)[k] = make_template(vitali_pack(cell, Generator::reference_triangle(), po), coverage, Mat2d::Identity());
    }
    slot = out;
    return slot;
  }

  void build_templates() {
    templates_ = reference_templates(opt_.template_coverage, opt_.template_min_scale);
    const double top_store = 1 - (1 - opt_.top_coverage) / 4;
    for (const auto& r : regions_) {
      const Domain2 dom = r.polygon.empty() ? v_.domain() : Domain2::polygon(r.polygon);
      PackOptions po;
      po.target = 1 - 1e-12;
      po.max_scale = s_top_;
      // the first copy is bounded by the region width in the tile frame
      const auto [lo, hi] = dom.transformed(tf_.m_inv).bbox();
      const double s_first = std::min(s_top_, (hi - lo).minCoeff());
      po.min_scale = s_first * opt_.top_min_scale_rel;
      po.store_target = top_store;
      po.seed = opt_.seed;
      const CellCover cover = vitali_pack(dom, Generator::reference_triangle(tf_.m), po);
      top_.push_back(make_template(cover, opt_.top_coverage, tf_.m_inv));
    }
  }

  void resample(int salt) {
    double total = 0;
    for (const auto& p : particles_) total += p.w;
    const std::size_t cap = opt_.particle_cap;
    const double step = total / static_cast<double>(cap);
    // Stratified: one independent draw per stratum. Children of one parent sit
    // next to each other and often fill exactly one stratum, so a shared
    // offset (systematic resampling) would pick the same child everywhere.
    std::mt19937_64 rng(mix_seed(opt_.seed, static_cast<std::uint64_t>(salt)));
    std::uniform_real_distribution<double> unif(0, 1);
    std::vector<Particle> out;
    out.reserve(cap);
    std::size_t stratum = 0;
    double pos = unif(rng) * step;
    double acc = 0;
    for (const auto& p : particles_) {
      acc += p.w;
      int hits = 0;
      while (pos < acc && stratum < cap) {
        ++hits;
        ++stratum;
        pos = (static_cast<double>(stratum) + unif(rng)) * step;
      }
      if (hits) {
        Particle q = p;
        q.w = step * hits;
        out.push_back(q);
      }
    }
    particles_ = std::move(out);
    sampled_ = true;
  }

  const PiecewiseField& v_;
  EngineOptions opt_;
  TileFrame tf_;
  double delta_max_ = 0;
  double s_top_ = 0;
  std::vector<Region> regions_;
  std::shared_ptr<const std::vector<Template>> templates_;
  std::vector<Template> top_;
  std::vector<Particle> particles_;
  std::vector<const RankOneOracle*> schedule_;
  int round_index_ = 0;
  bool sampled_ = false;
};

// Fails fast, before any packing work, when a datum piece cannot be refined.
void require_splittable(const PiecewiseField& v, const RankOneOracle& u) {
  std::vector<Mat2d> grads;
  if (v.cells().empty()) grads.push_back(v.datum().gradient);
  for (const auto& c : v.cells()) grads.push_back(c.gradient);
  for (const auto& g : grads)
    if (!u.in_target(g) && !u.split(g))
      throw Error(Errc::SplitUnavailable, "no split into " + u.describe() + " for datum gradient " + coords(g));
}

Vec2d line_direction(const PiecewiseField& v) {
  Mat2d g = v.datum().gradient;
  if (!v.cells().empty()) g = v.cells().front().gradient;
  const Vec2d a = TracelessMat2<double>::from_matrix(g).a();
  return a.norm() > 1e-12 ? Vec2d(a.normalized()) : Vec2d(1, 0);
}

}  // namespace

OpenResult construct_open(const PiecewiseField& v, const RankOneOracle& u, double eps, int max_rounds,
                          const EngineOptions& opt) {
  if (!(eps > 0)) throw Error(Errc::InvalidParams, "eps must be positive");
  if (max_rounds < 1) throw Error(Errc::InvalidParams, "max_rounds must be at least 1");
  bool all_in = v.cells().empty() ? u.in_target(v.datum().gradient) : true;
  for (const auto& c : v.cells()) all_in = all_in && !c.refined && u.in_target(c.gradient);
  if (all_in) {
    OpenResult res;
    res.field = v;
    res.bad_fraction = 0;
    res.status = "ok: datum already in the target";
    return res;
  }
  require_splittable(v, u);
  const double r_max = 0.75;
  Engine engine(v, u.direction(), r_max, eps / 2, opt);
  OpenResult res;
  for (int r = 1; r <= max_rounds; ++r) {
    const auto m = engine.round(u, 1, r);
    res.metrics.push_back(m);
    res.sup_total += m.sup_dev;
    res.bad_fraction = m.bad_fraction;
    if (m.bad_fraction < eps) break;
  }
  res.budget_exhausted = !(res.bad_fraction < eps);
  if (res.budget_exhausted) {
    std::ostringstream os;
    os << "BudgetExhausted: bad fraction " << res.bad_fraction << " after " << max_rounds << " rounds";
    res.status = os.str();
  } else {
    res.status = "ok";
  }
  res.field = engine.materialize();
  return res;
}

constexpr double kStageSlack = 1e-3;

IntegrateResult convex_integrate(const PiecewiseField& v, const InApproximation& seq, double eps, int stages,
                                 int rounds, const EngineOptions& opt) {
  if (seq.family != Family::Lin2d) throw Error(Errc::InvalidParams, "staged integration runs on 2D sequences");
  if (stages < 1 || rounds < 1) throw Error(Errc::InvalidParams, "stages and rounds must be positive");
  if (stages + 1 > seq.depth) throw Error(Errc::IndexOutOfRange, "in-approximation too shallow for the stages");
  if (!(eps > 0)) throw Error(Errc::InvalidParams, "eps must be positive");
  const Vec2d c_hat = line_direction(v);
  std::vector<std::unique_ptr<Lin2dWindowOracle>> oracles;
  for (int i = 1; i <= stages; ++i) oracles.push_back(std::make_unique<Lin2dWindowOracle>(seq, i + 1, c_hat));

  {
    std::vector<Mat2d> grads;
    if (v.cells().empty()) grads.push_back(v.datum().gradient);
    for (const auto& c : v.cells()) grads.push_back(c.gradient);
    for (const auto& g : grads)
      if (!seq.member(g, 1).inside)
        throw Error(Errc::PreconditionViolation, "datum gradient " + coords(g) + " outside U_1");
  }
  require_splittable(v, *oracles.front());
  Engine engine(v, oracles.front()->direction(), 0.75, eps / 2, opt);
  IntegrateResult res;
  double eps_i = eps / 2, delta_i = 1;
  for (int i = 1; i <= stages; ++i) {
    if (i > 1) {
      delta_i = std::min(delta_i, 1 / std::ldexp(1.0, i));
      eps_i *= delta_i;
    }
    StageMetrics last;
    for (int r = 1; r <= rounds; ++r) {
      last = engine.round(*oracles[i - 1], i, r);
      res.metrics.push_back(last);
      res.sup_total += last.sup_dev;
      if (last.bad_fraction < eps_i) break;
    }
    if (opt.strict_stages && !res.stage_end.empty() && last.p95 > res.stage_end.back().p95 + kStageSlack) {
      std::ostringstream os;
      os << "stage " << i << " p95 " << last.p95 << " does not improve on " << res.stage_end.back().p95;
      throw Error(Errc::StageRegression, os.str());
    }
    res.stage_end.push_back(last);
  }
  res.final_p95 = res.stage_end.back().p95;
  res.field = engine.materialize();
  return res;
}

Laminate3dResult integrate_3d_measure(const Mat3d& datum, const InApproximation& seq, int stages) {
  if (seq.family != Family::Lin3d) throw Error(Errc::InvalidParams, "needs a 3D linear in-approximation");
  if (stages < 1 || stages + 1 > seq.depth) throw Error(Errc::IndexOutOfRange, "stage count outside the sequence");
  if (!seq.member(datum, 1).inside) throw Error(Errc::PreconditionViolation, "datum outside U_1");
  Laminate3dResult res;
  res.atoms = {{datum, 1.0}};
  for (int i = 1; i <= stages; ++i) {
    std::vector<std::pair<Mat3d, double>> next;
    for (const auto& [m, w] : res.atoms) {
      const LaminateNode tree = inapprox_split(seq, m, i);
      for (const LaminateNode* leaf : tree.leaves()) next.emplace_back(Mat3d(leaf->matrix), w * leaf->weight);
    }
    res.atoms = std::move(next);
    StageMetrics m;
    m.stage = i;
    m.round = 1;
    std::vector<std::pair<double, double>> dist;
    double bad = 0;
    for (const auto& [a, w] : res.atoms) {
      if (!seq.member(a, i + 1).inside) bad += w;
      dist.emplace_back(well_distance(a, seq.target), w);
      m.max = std::max(m.max, dist.back().first);
    }
    m.bad_fraction = bad;
    m.cells = res.atoms.size();
    m.p50 = weighted_quantile(dist, 0.5);
    m.p95 = weighted_quantile(dist, 0.95);
    res.stage_end.push_back(m);
  }
  return res;
}

}  // namespace ncvx
