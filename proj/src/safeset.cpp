#include "ocorg/safeset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "ocorg/errors.hpp"

namespace ocorg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_in_window(const ReferenceWindow& w, double v) {
  if (!w.contains(v)) {
    std::ostringstream msg;
    msg << "reference " << v << " outside the window [" << w.lo << ", " << w.hi << "]";
    throw DomainError(msg.str());
  }
}

// Unit directions for the level-set scan. Circles in 2-D, both signs in 1-D,
// axes plus seeded random directions otherwise.
std::vector<Vec> scan_directions(int n, int count) {
  std::vector<Vec> dirs;
  if (n == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
    return dirs;
  }
  if (n == 2) {
    for (int j = 0; j < count; ++j) {
      const double a = 2.0 * std::numbers::pi * j / count;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
    return dirs;
  }
  for (int i = 0; i < n; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(-Vec::Unit(n, i));
  }
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  for (int j = 0; j < count; ++j) {
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = gauss(rng);
    dirs.push_back(d / d.norm());
  }
  return dirs;
}

double interpolate_levels(const std::vector<double>& grid, const std::vector<double>& levels,
                          double v) {
  if (grid.size() == 1 || v <= grid.front()) return levels.front();
  if (v >= grid.back()) return levels.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double w = (v - grid[i]) / (grid[i + 1] - grid[i]);
  if (w == 0.0) return levels[i];
  if (std::isinf(levels[i]) || std::isinf(levels[i + 1])) {
    return std::min(levels[i], levels[i + 1]);
  }
  return (1.0 - w) * levels[i] + w * levels[i + 1];
}

}  // namespace

ConstraintPolytope closed_loop_polytope(const BoxConstraints& box,
                                        const TrackingController& ctrl, double v) {
  const Eigen::MatrixXd Ex = box.Ex();
  const Eigen::MatrixXd Eu = box.Eu();
  const Eigen::MatrixXd K = ctrl.gain(v);
  const Eigen::VectorXd h = ctrl.h(v);
  const Eigen::VectorXd us = ctrl.steady_state().input(v);
  ConstraintPolytope poly;
  poly.Zx = Ex + Eu * K;
  poly.Zv = Eigen::VectorXd::Zero(Ex.rows());
  poly.z = box.e() - Eu * (us - K * h);
  return poly;
}

PolytopeFamily closed_loop_family(BoxConstraints box,
                                  std::shared_ptr<const TrackingController> ctrl) {
  return [box = std::move(box), ctrl = std::move(ctrl)](double v) {
    return closed_loop_polytope(box, *ctrl, v);
  };
}

PolytopeFamily constant_family(ConstraintPolytope poly) {
  return [poly = std::move(poly)](double) { return poly; };
}

double gamma_from_rows(const Eigen::MatrixXd& Zx, const Eigen::VectorXd& zxv, const Mat& P) {
  for (Eigen::Index i = 0; i < zxv.size(); ++i) {
    // A zero row holds for every x as long as its slack is not negative.
    const bool zero_row = Zx.row(i).isZero(0.0);
    if (zero_row ? !(zxv(i) >= 0.0) : !(zxv(i) > 0.0)) {
      std::ostringstream msg;
      msg << "steady state violates constraint row " << i << " (margin " << zxv(i) << ")";
      throw InfeasibleError(msg.str());
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt{Eigen::MatrixXd(P)};
  double gamma = kInf;
  for (Eigen::Index i = 0; i < Zx.rows(); ++i) {
    const Eigen::VectorXd a = Zx.row(i).transpose();
    if (a.isZero(0.0)) continue;
    const double weight = a.dot(ldlt.solve(a));
    gamma = std::min(gamma, zxv(i) * zxv(i) / weight);
  }
  return gamma;
}

double compute_gamma(double v, const ConstraintPolytope& poly, const TrackingController& ctrl) {
  const Eigen::VectorXd h = ctrl.h(v);
  const Eigen::VectorXd zxv = poly.z - poly.Zx * h - poly.Zv * v;
  return gamma_from_rows(poly.Zx, zxv, ctrl.lyapunov_weight(v));
}

std::vector<NodeLevel> decrease_verified_levels(const PolytopeFamily& poly,
                                                const TrackingController& ctrl,
                                                std::span<const double> grid,
                                                const DecreaseScan& scan) {
  const int n = ctrl.plant().state_dim();
  const std::vector<Vec> dirs = scan_directions(n, scan.directions);
  std::vector<NodeLevel> nodes;
  nodes.reserve(grid.size());
  std::vector<double> v_now;
  std::vector<double> ratio;
  for (double v : grid) {
    NodeLevel node;
    node.v = v;
    node.gamma = compute_gamma(v, poly(v), ctrl);
    node.cap = kInf;

    const Vec h = ctrl.h(v);
    const Mat P = ctrl.lyapunov_weight(v);
    const Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(P)};
    const Eigen::MatrixXd LtInv =
        llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));  // d = LtInv z gives V = |z|^2
    const double scan_level = std::isinf(node.gamma) ? 1.0 : node.gamma;

    v_now.clear();
    ratio.clear();
    for (int k = 1; k <= scan.rings; ++k) {
      const double radius = std::sqrt(scan_level) * k / scan.rings;
      for (const Vec& z : dirs) {
        const Vec x = h + Vec(LtInv * Eigen::VectorXd(z)) * radius;
        const double vx = ctrl.lyapunov(x, v);
        double vn = kInf;
        try {
          vn = ctrl.lyapunov(ctrl.closed_loop(x, v), v);
        } catch (const DomainError&) {
        }
        if (!(vn <= vx)) node.cap = std::min(node.cap, vx);
        v_now.push_back(vx);
        ratio.push_back(vx > 0.0 ? vn / vx : 0.0);
      }
    }
    node.level = scan.enabled ? std::min(node.gamma, scan.shrink * node.cap) : node.gamma;
    node.contraction = 0.0;
    for (std::size_t i = 0; i < v_now.size(); ++i) {
      if (v_now[i] <= node.level) node.contraction = std::max(node.contraction, ratio[i]);
    }
    nodes.push_back(node);
  }
  return nodes;
}

std::pair<double, LevelCertificate> fixed_level_from_nodes(std::span<const NodeLevel> nodes,
                                                           const TrackingController& ctrl) {
  if (nodes.empty()) throw DomainError("level calibration needs a non-empty grid");
  double V_max = kInf;
  double largest = 0.0;
  double contraction = 0.0;
  for (const auto& node : nodes) {
    if (!(node.level > 0.0)) {
      std::ostringstream msg;
      msg << "non-positive level " << node.level << " at v = " << node.v;
      throw InfeasibleError(msg.str());
    }
    V_max = std::min(V_max, node.level);
    if (std::isfinite(node.level)) largest = std::max(largest, node.level);
    contraction = std::max(contraction, node.contraction);
  }
  LevelCertificate cert;
  cert.V_min = V_max;
  cert.delta = kInf;
  for (const auto& node : nodes) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Eigen::MatrixXd(ctrl.lyapunov_weight(node.v)), Eigen::EigenvaluesOnly);
    cert.delta = std::min(cert.delta, std::sqrt(V_max / es.eigenvalues().maxCoeff()));
  }
  if (contraction < 1.0 && std::isfinite(V_max)) {
    int k = 0;
    double bound = largest;
    while (bound > cert.V_min && k < 1000000) {
      bound *= contraction;
      ++k;
    }
    cert.k_star = k;
  }
  return {V_max, cert};
}

std::pair<double, LevelCertificate> calibrate_fixed_level(const PolytopeFamily& poly,
                                                          const TrackingController& ctrl,
                                                          std::span<const double> grid,
                                                          const DecreaseScan& scan) {
  if (grid.empty()) throw DomainError("level calibration needs a non-empty grid");
  const auto nodes = decrease_verified_levels(poly, ctrl, grid, scan);
  return fixed_level_from_nodes(nodes, ctrl);
}

SafeSet::SafeSet(SafeSetKind kind, std::shared_ptr<const TrackingController> ctrl)
    : kind_(kind), ctrl_(std::move(ctrl)) {}

SafeSet SafeSet::fixed(std::shared_ptr<const TrackingController> ctrl, double V_max) {
  if (!(V_max > 0.0)) throw DomainError("fixed level must be positive");
  SafeSet set(SafeSetKind::kFixed, std::move(ctrl));
  set.fixed_level_ = V_max;
  return set;
}

SafeSet SafeSet::variable(std::shared_ptr<const TrackingController> ctrl,
                          std::vector<double> grid, std::vector<double> levels) {
  if (grid.empty() || grid.size() != levels.size() ||
      !std::is_sorted(grid.begin(), grid.end())) {
    throw DomainError("variable level needs one level per sorted grid node");
  }
  for (double l : levels) {
    if (!(l > 0.0)) throw DomainError("variable level must be positive");
  }
  SafeSet set(SafeSetKind::kVariable, std::move(ctrl));
  set.grid_ = std::move(grid);
  set.levels_ = std::move(levels);
  return set;
}

SafeSet SafeSet::variable(std::shared_ptr<const TrackingController> ctrl,
                          std::span<const NodeLevel> nodes) {
  std::vector<double> grid;
  std::vector<double> levels;
  for (const auto& node : nodes) {
    grid.push_back(node.v);
    levels.push_back(node.level);
  }
  return variable(std::move(ctrl), std::move(grid), std::move(levels));
}

SafeSet SafeSet::variable(std::shared_ptr<const TrackingController> ctrl,
                          std::span<const NodeLevel> nodes, PolytopeFamily poly) {
  if (!poly) throw DomainError("variable level needs a polytope family");
  std::vector<double> grid;
  std::vector<double> caps;
  for (const auto& node : nodes) {
    grid.push_back(node.v);
    caps.push_back(node.level < node.gamma ? node.level : kInf);
  }
  SafeSet set = variable(std::move(ctrl), std::move(grid), std::move(caps));
  set.family_ = std::move(poly);
  return set;
}

SafeSet SafeSet::explicit_horizon(std::shared_ptr<const TrackingController> ctrl,
                                  BoxConstraints box, int k_star, double V_min) {
  if (k_star < 0 || !(V_min > 0.0)) {
    throw DomainError("explicit-horizon set needs k_star >= 0 and V_min > 0");
  }
  SafeSet set(SafeSetKind::kExplicitHorizon, std::move(ctrl));
  set.box_ = std::move(box);
  set.k_star_ = k_star;
  set.fixed_level_ = V_min;
  return set;
}

double SafeSet::level(double v) const {
  switch (kind_) {
    case SafeSetKind::kFixed:
    case SafeSetKind::kExplicitHorizon:
      return scale_ * fixed_level_;
    case SafeSetKind::kVariable: {
      double level = interpolate_levels(grid_, levels_, v);
      if (family_) level = std::min(level, compute_gamma(v, family_(v), *ctrl_));
      return scale_ * level;
    }
  }
  return 0.0;
}

double SafeSet::margin(const Vec& x, double v) const {
  require_in_window(window(), v);
  if (kind_ != SafeSetKind::kExplicitHorizon) {
    return level(v) - ctrl_->lyapunov(x, v);
  }
  Vec xi = x;
  for (int k = 0;; ++k) {
    double box_margin = -kInf;
    try {
      box_margin = box_.worst_margin(xi, ctrl_->input(xi, v));
    } catch (const DomainError&) {
    }
    if (box_margin < 0.0) return box_margin;
    if (k == k_star_) break;
    try {
      xi = ctrl_->closed_loop(xi, v);
    } catch (const DomainError&) {
      return -kInf;
    }
  }
  return level(v) - ctrl_->lyapunov(xi, v);
}

bool SafeSet::contains(const Vec& x, double v) const { return margin(x, v) >= 0.0; }

std::vector<Interval> SafeSet::cross_section_v(const Vec& x, std::optional<double> hint,
                                               int scan_points, double tol) const {
  const ReferenceWindow& w = window();
  const std::vector<double> grid = w.grid(std::max(scan_points, 2));
  std::vector<char> in(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) in[j] = contains(x, grid[j]) ? 1 : 0;

  // Shrinks [inside, outside] to the boundary and returns the inside end.
  auto boundary = [&](double inside, double outside) {
    while (std::abs(outside - inside) > tol) {
      const double mid = 0.5 * (inside + outside);
      if (contains(x, mid)) {
        inside = mid;
      } else {
        outside = mid;
      }
    }
    return inside;
  };

  std::vector<Interval> out;
  std::size_t j = 0;
  while (j < grid.size()) {
    if (!in[j]) {
      ++j;
      continue;
    }
    const std::size_t a = j;
    while (j + 1 < grid.size() && in[j + 1]) ++j;
    const std::size_t b = j;
    Interval iv{grid[a], grid[b]};
    if (a > 0) iv.lo = boundary(grid[a], grid[a - 1]);
    if (b + 1 < grid.size()) iv.hi = boundary(grid[b], grid[b + 1]);
    out.push_back(iv);
    ++j;
  }

  if (hint && w.contains(*hint) && contains(x, *hint)) {
    const double v = *hint;
    const bool covered = std::any_of(out.begin(), out.end(), [v](const Interval& iv) {
      return v >= iv.lo && v <= iv.hi;
    });
    if (!covered) {
      const auto it = std::upper_bound(grid.begin(), grid.end(), v);
      const std::size_t r = static_cast<std::size_t>(it - grid.begin());
      Interval iv{v, v};
      if (r > 0) iv.lo = boundary(v, grid[r - 1]);
      if (r < grid.size()) iv.hi = boundary(v, grid[r]);
      out.insert(std::upper_bound(out.begin(), out.end(), iv,
                                  [](const Interval& a, const Interval& b) {
                                    return a.lo < b.lo;
                                  }),
                 iv);
    }
  }
  return out;
}

std::function<bool(const Vec&)> SafeSet::cross_section_x(double v) const {
  require_in_window(window(), v);
  return [this, v](const Vec& x) { return contains(x, v); };
}

SafeSet SafeSet::scaled(double factor) const {
  if (!(factor > 0.0)) throw DomainError("level scale must be positive");
  SafeSet copy = *this;
  copy.scale_ *= factor;
  return copy;
}

}  // namespace ocorg
