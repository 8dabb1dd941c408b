#include "ncvx/laminate.hpp"

#include <cmath>
#include <sstream>

namespace ncvx {

std::vector<const LaminateNode*> LaminateNode::leaves() const {
  std::vector<const LaminateNode*> out;
  std::vector<const LaminateNode*> stack{this};
  while (!stack.empty()) {
    const LaminateNode* n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) {
      out.push_back(n);
    } else {
      for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(&*it);
    }
  }
  return out;
}

double LaminateNode::recombination_error() const {
  if (is_leaf()) return 0;
  const Eigen::MatrixXd mix = (1 - lambda) * children[0].matrix + lambda * children[1].matrix;
  return std::max({(mix - matrix).norm(), children[0].recombination_error(), children[1].recombination_error()});
}

Split2d split_2d(const TracelessMat2<double>& c, double r_tilde, double m) {
  if (c.a3 < 0) {
    Split2d s = split_2d(TracelessMat2<double>{c.a1, c.a2, -c.a3}, r_tilde, m);
    s.a.a3 = -s.a.a3;
    s.b.a3 = -s.b.a3;
    return s;
  }
  const double cn = c.a_norm();
  auto fail = [](const std::string& what) { throw Error(Errc::PreconditionViolation, what); };
  if (!(r_tilde > 0)) fail("r_tilde > 0 violated");
  if (!(cn > 0)) fail("|c| > 0 violated");
  if (!(cn < r_tilde)) fail("|c| < r_tilde violated");
  if (!(c.a3 < m)) fail("|c3| < m violated");
  if (c.a3 > m - 0.75 && !(cn >= c.a3 - m + 0.75)) fail("|c| >= |c3| - m + 3/4 violated (c lies in the cone)");

  const Vec2d dir = c.a() / cn;
  Split2d s;
  s.lambda = (r_tilde - cn) / (2 * r_tilde);
  s.a = {r_tilde * dir(0), r_tilde * dir(1), c.a3 - cn + r_tilde};
  s.b = {-r_tilde * dir(0), -r_tilde * dir(1), c.a3 - cn - r_tilde};
  return s;
}

namespace {

Mat3d sym_of(const TracelessMat3<double>& a) { return a.sym(); }

}  // namespace

Split3d split_3d_first(const TracelessMat3<double>& a, double alpha, const Tolerances& tol) {
  const auto d = eig_sym<double>(sym_of(a), tol);
  const double mu1 = d.values(0), mu3 = d.values(2);
  if (mu1 < -alpha - tol.spec) {
    std::ostringstream os;
    os << "mu1(sym A) > -alpha violated (mu1 = " << mu1 << ", alpha = " << alpha << ")";
    throw Error(Errc::PreconditionViolation, os.str());
  }
  const double delta = std::sqrt(std::max(0.0, (alpha + mu1) * (alpha + mu3)));
  // In the frame (v2, v1, v3) the perturbation sits in row mu1, column mu3.
  const Mat3d p = 2 * delta * d.frame.col(0) * d.frame.col(2).transpose();
  const Mat3d base = a.matrix();
  return {TracelessMat3<double>::from_matrix(base + p), TracelessMat3<double>::from_matrix(base - p), delta};
}

Split3d split_3d_second(const TracelessMat3<double>& b, double alpha, double m_next, const Tolerances& tol) {
  const auto d = eig_sym<double>(sym_of(b), tol);
  const double mu1 = d.values(0), mu2 = d.values(1), mu3 = d.values(2);
  std::ostringstream os;
  if (std::abs(mu1 + alpha) > tol.spec) {
    os << "mu1(sym B) = -alpha violated (mu1 = " << mu1 << ", alpha = " << alpha << ")";
    throw Error(Errc::PreconditionViolation, os.str());
  }
  if (mu3 > 2 * alpha + tol.spec) {
    os << "mu3(sym B) < 2 alpha violated (mu3 = " << mu3 << ")";
    throw Error(Errc::PreconditionViolation, os.str());
  }
  const double eps = std::sqrt(std::max(0.0, (mu2 - 2 * alpha) * (mu3 - 2 * alpha)));
  const Mat3d p = 2 * eps * d.frame.col(1) * d.frame.col(2).transpose();
  const Mat3d base = b.matrix();
  Split3d s{TracelessMat3<double>::from_matrix(base + p), TracelessMat3<double>::from_matrix(base - p), eps};
  const double skw = std::max(s.plus.skw_norm(), s.minus.skw_norm());
  if (!(skw < m_next)) {
    os << "skew bound |skw C| < m_next violated (|skw C| = " << skw << ", m_next = " << m_next << ")";
    throw Error(Errc::PreconditionViolation, os.str());
  }
  return s;
}

LaminateNode split_3d_tree(const TracelessMat3<double>& a, double alpha, double m_next, const Tolerances& tol) {
  LaminateNode root;
  root.matrix = a.matrix();
  root.lambda = 0.5;
  const Split3d first = split_3d_first(a, alpha, tol);
  for (const auto* b : {&first.plus, &first.minus}) {
    LaminateNode mid;
    mid.matrix = b->matrix();
    mid.weight = 0.5;
    mid.lambda = 0.5;
    mid.level = 1;
    const Split3d second = split_3d_second(*b, alpha, m_next, tol);
    for (const auto* c : {&second.plus, &second.minus}) {
      LaminateNode leaf;
      leaf.matrix = c->matrix();
      leaf.weight = 0.25;
      leaf.level = 2;
      mid.children.push_back(std::move(leaf));
    }
    root.children.push_back(std::move(mid));
  }
  return root;
}

// ---------------------------------------------------------------------------

std::optional<Vec3d> solve_nonlinear_connection(const Mat3d& a, const Vec3d& n, const std::array<double, 3>& e,
                                                std::mt19937_64& rng) {
  // a must lie in the plane orthogonal to A^{-T} n so that det is preserved.
  const Vec3d g = a.inverse().transpose() * n;
  Vec3d t1 = g.unitOrthogonal();
  Vec3d t2 = g.normalized().cross(t1);
  auto residual = [&](const Eigen::Vector2d& s) {
    const Vec3d v = s(0) * t1 + s(1) * t2;
    const Mat3d b = a + v * n.transpose();
    const Vec3d sv = singular_values_any<double>(b);
    return Eigen::Vector2d(sv(0) - e[0], sv(2) - e[2]);
  };
  std::normal_distribution<double> gauss(0.0, e[2]);
  for (int start = 0; start < 12; ++start) {
    Eigen::Vector2d s(gauss(rng), gauss(rng));
    for (int it = 0; it < 60; ++it) {
      const Eigen::Vector2d f = residual(s);
      if (f.norm() < 1e-13) break;
      Eigen::Matrix2d jac;
      const double h = 1e-7;
      for (int k = 0; k < 2; ++k) {
        Eigen::Vector2d sp = s;
        sp(k) += h;
        jac.col(k) = (residual(sp) - f) / h;
      }
      if (std::abs(jac.determinant()) < 1e-14) break;
      Eigen::Vector2d step = jac.fullPivLu().solve(-f);
      double damp = 1.0;
      while (damp > 1e-4 && residual(Eigen::Vector2d(s + damp * step)).norm() >= f.norm()) damp /= 2;
      s += damp * step;
    }
    const Vec3d v = s(0) * t1 + s(1) * t2;
    if (residual(s).norm() < 1e-11 && v.norm() > 1e-6) return v;
  }
  return std::nullopt;
}

namespace {

bool rank_one_pair(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) return false;
  if (x.rows() == 2) {
    return rank_one_connection(TracelessMat2<double>::from_matrix(Mat2d(x)),
                               TracelessMat2<double>::from_matrix(Mat2d(y)))
        .rank_one;
  }
  const Vec3d sv = singular_values_any<double>(Mat3d(x - y));
  return sv(2) > 1e-8 && sv(1) <= 1e-8 * sv(2);
}

// Points of order <= k generated from explicit seed pairs only.
std::vector<HullSample> expand_seeds(const std::vector<Eigen::MatrixXd>& seeds, const HullOptions& opt,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<Eigen::MatrixXd>> levels{seeds};
  for (int k = 1; k <= opt.order; ++k) {
    const auto& prev = levels.back();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < prev.size(); ++i)
      for (std::size_t j = i + 1; j < prev.size() && pairs.size() < 4096; ++j)
        if (rank_one_pair(prev[i], prev[j])) pairs.emplace_back(i, j);
    if (pairs.empty()) break;
    std::vector<Eigen::MatrixXd> next;
    const int count = std::max(opt.samples, 2);
    for (int s = 0; s < count; ++s) {
      const auto [i, j] = pairs[rng() % pairs.size()];
      const double lam = unit(rng);
      next.push_back((1 - lam) * prev[i] + lam * prev[j]);
    }
    // keep the endpoints so that later levels can still pair with them
    next.insert(next.end(), prev.begin(), prev.end());
    levels.push_back(std::move(next));
  }
  std::vector<HullSample> out;
  const int top = int(levels.size()) - 1;
  for (int s = 0; s < opt.samples && top > 0; ++s) out.push_back({levels[top][s], top});
  return out;
}

std::vector<HullSample> expand_nonlinear(const std::vector<Eigen::MatrixXd>& seeds, const HullOptions& opt,
                                         std::mt19937_64& rng) {
  const auto& e = opt.family->e;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss;
  std::vector<HullSample> out;
  int guard = 0;
  while (int(out.size()) < opt.samples && guard++ < 50 * opt.samples) {
    const Mat3d a = seeds[rng() % seeds.size()];
    Vec3d n(gauss(rng), gauss(rng), gauss(rng));
    n.normalize();
    // a fan of connections sharing the normal n; every pair of points
    // A + s_j v_j (x) n is rank-one connected
    std::vector<Vec3d> fan;
    for (int j = 0; j < std::max(1, opt.order) && int(fan.size()) < std::max(1, opt.order); ++j)
      if (auto v = solve_nonlinear_connection(a, n, e, rng)) fan.push_back(*v);
    if (int(fan.size()) < std::max(1, opt.order)) continue;
    Vec3d mix = Vec3d::Zero();
    double remaining = 1.0;
    for (std::size_t j = 0; j < fan.size(); ++j) {
      const double w = remaining * unit(rng);
      mix += w * fan[j];
      remaining -= w;
    }
    out.push_back({Mat3d(a + mix * n.transpose()), std::max(1, opt.order)});
  }
  return out;
}

std::vector<HullSample> expand_linear2d(const std::vector<Eigen::MatrixXd>& seeds, const HullOptions& opt,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  std::vector<HullSample> out;
  int guard = 0;
  while (int(out.size()) < opt.samples && guard++ < 50 * opt.samples) {
    TracelessMat2<double> p = TracelessMat2<double>::from_matrix(Mat2d(seeds[rng() % seeds.size()]));
    int order = 0;
    for (int k = 0; k < opt.order; ++k) {
      // rank-one trace-free direction: (n_perp (x) n), in coordinates
      const double th = angle(rng);
      const Vec2d n(std::cos(th), std::sin(th)), np(-n(1), n(0));
      const auto d = TracelessMat2<double>::from_matrix(Mat2d(np * n.transpose()));
      // |a(p) + t a(d)|^2 = 9/16
      const double qa = d.a().squaredNorm(), qb = 2 * p.a().dot(d.a()), qc = p.a().squaredNorm() - 0.5625;
      const double disc = qb * qb - 4 * qa * qc;
      if (disc <= 0 || qa < 1e-14) break;
      const double t1 = (-qb - std::sqrt(disc)) / (2 * qa), t2 = (-qb + std::sqrt(disc)) / (2 * qa);
      const auto x = p + d * t1, y = p + d * t2;
      if (std::abs(x.a3) > opt.family->m || std::abs(y.a3) > opt.family->m) break;
      const double lam = unit(rng);
      p = x * (1 - lam) + y * lam;
      order = k + 1;
    }
    if (order == 0) continue;
    out.push_back({p.matrix(), order});
  }
  return out;
}

}  // namespace

std::vector<HullSample> hull_expand(const std::vector<Eigen::MatrixXd>& seeds, const HullOptions& opt) {
  if (opt.order > 3) throw Error(Errc::InvalidParams, "hull_expand supports order <= 3");
  if (seeds.empty()) return {};
  std::mt19937_64 rng(opt.seed);
  if (opt.family) {
    if (opt.family->kind == WellKind::NonlinearK) return expand_nonlinear(seeds, opt, rng);
    if (opt.family->kind == WellKind::Linear2dK0) return expand_linear2d(seeds, opt, rng);
    throw Error(Errc::InvalidParams, "hull_expand family must be NONLINEAR_K or LINEAR2D_K0");
  }
  return expand_seeds(seeds, opt, rng);
}

}  // namespace ncvx
