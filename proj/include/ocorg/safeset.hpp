#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ocorg/plant.hpp"
#include "ocorg/tracking.hpp"
#include "ocorg/types.hpp"

namespace ocorg {

/// Closed-loop constraint polytope at a given reference. For the reactor the
/// rows depend on v through K(v), so the family is evaluated per reference.
using PolytopeFamily = std::function<ConstraintPolytope(double v)>;

/// Rows of {(x, v) : Ex x + Eu g(x, v) <= e} at reference v, written as
/// Zx x + Zv v <= z with Zx = Ex + Eu K(v), Zv = 0 and
/// z = e - Eu (u_ss(v) - K(v) h(v)).
ConstraintPolytope closed_loop_polytope(const BoxConstraints& box,
                                        const TrackingController& ctrl, double v);

PolytopeFamily closed_loop_family(BoxConstraints box,
                                  std::shared_ptr<const TrackingController> ctrl);
PolytopeFamily constant_family(ConstraintPolytope poly);

/// min_i (zxv_i)^2 / (Zx_i P^{-1} Zx_i^T), skipping zero rows. Returns +inf if
/// every row is zero. Throws InfeasibleError naming the first nonzero row with
/// zxv_i <= 0 or zero row with zxv_i < 0.
double gamma_from_rows(const Eigen::MatrixXd& Zx, const Eigen::VectorXd& zxv, const Mat& P);

/// Largest level of V(., v) whose sublevel set satisfies the polytope rows.
double compute_gamma(double v, const ConstraintPolytope& poly, const TrackingController& ctrl);

/// Sampling plan for the one-step decrease check on each level set.
struct DecreaseScan {
  int rings = 100;
  int directions = 128;
  /// Fraction of the first failing level kept as the node level.
  double shrink = 0.9;
  bool enabled = true;
};

/// Level data at one reference grid node.
struct NodeLevel {
  double v = 0.0;
  double gamma = 0.0;
  /// Smallest sampled V with V(f_g(x, v), v) > V(x, v); +inf if none found.
  double cap = 0.0;
  /// min(gamma, shrink * cap).
  double level = 0.0;
  /// Largest sampled V(f_g(x, v), v) / V(x, v) within the level.
  double contraction = 0.0;
};

std::vector<NodeLevel> decrease_verified_levels(const PolytopeFamily& poly,
                                                const TrackingController& ctrl,
                                                std::span<const double> grid,
                                                const DecreaseScan& scan = {});

struct LevelCertificate {
  double V_min = 0.0;
  /// Smallest t with contraction^t * (largest node level) <= V_min; -1 if the
  /// sampled contraction is not below 1.
  int k_star = -1;
  double delta = 0.0;
};

/// V_max = min over the grid of the node levels, with V_min = V_max and the
/// largest Euclidean ball radius delta that fits in every V_max sublevel set.
std::pair<double, LevelCertificate> calibrate_fixed_level(const PolytopeFamily& poly,
                                                          const TrackingController& ctrl,
                                                          std::span<const double> grid,
                                                          const DecreaseScan& scan = {});

/// Same, from precomputed node levels.
std::pair<double, LevelCertificate> fixed_level_from_nodes(std::span<const NodeLevel> nodes,
                                                           const TrackingController& ctrl);

enum class SafeSetKind { kFixed, kVariable, kExplicitHorizon };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Forward-invariant set O of (x, v) pairs.
class SafeSet {
 public:
  /// {V(x, v) <= V_max}.
  static SafeSet fixed(std::shared_ptr<const TrackingController> ctrl, double V_max);
  /// {V(x, v) <= level(v)} with level linear between grid nodes.
  static SafeSet variable(std::shared_ptr<const TrackingController> ctrl,
                          std::vector<double> grid, std::vector<double> levels);
  static SafeSet variable(std::shared_ptr<const TrackingController> ctrl,
                          std::span<const NodeLevel> nodes);
  /// {V(x, v) <= min(Gamma(v), cap(v))}: Gamma evaluated exactly at v from the
  /// polytope family, cap linear between the nodes whose level was capped by
  /// the decrease scan (+inf at uncapped nodes).
  static SafeSet variable(std::shared_ptr<const TrackingController> ctrl,
                          std::span<const NodeLevel> nodes, PolytopeFamily poly);
  /// {(x, v) : Phi(x, v, k) in Z_g for k <= k_star and V(Phi(x, v, k_star), v) <= V_min}.
  static SafeSet explicit_horizon(std::shared_ptr<const TrackingController> ctrl,
                                  BoxConstraints box, int k_star, double V_min);

  SafeSetKind kind() const { return kind_; }
  const TrackingController& controller() const { return *ctrl_; }
  const ReferenceWindow& window() const { return ctrl_->window(); }

  /// Threshold on V at v (V_min for the explicit-horizon kind).
  double level(double v) const;
  /// level(v) - V(x, v). Throws DomainError if v is outside the window.
  double margin(const Vec& x, double v) const;
  bool contains(const Vec& x, double v) const;

  /// Maximal intervals of {v : contains(x, v)} from a uniform scan with
  /// `scan_points` nodes and bisection of every boundary to `tol`. A known
  /// member `hint` is always covered even if the scan steps over it.
  std::vector<Interval> cross_section_v(const Vec& x, std::optional<double> hint = {},
                                        int scan_points = 2001, double tol = 1e-10) const;
  std::function<bool(const Vec&)> cross_section_x(double v) const;

  /// Copy with every level multiplied by `factor`. Used for fault injection.
  SafeSet scaled(double factor) const;

 private:
  SafeSet(SafeSetKind kind, std::shared_ptr<const TrackingController> ctrl);

  SafeSetKind kind_;
  std::shared_ptr<const TrackingController> ctrl_;
  double fixed_level_ = 0.0;
  std::vector<double> grid_;
  std::vector<double> levels_;
  PolytopeFamily family_;
  BoxConstraints box_;
  int k_star_ = 0;
  double scale_ = 1.0;
};

}  // namespace ocorg
