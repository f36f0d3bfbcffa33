#include "ocorg/governor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ocorg/errors.hpp"

namespace ocorg {

namespace {

constexpr int kBisectionSteps = 50;
// Uniform cells of [0, 1] scanned downward for the last admissible beta.
constexpr int kScanCells = 1000;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

GovernorState initialize_governor(const Vec& x0, double r0, const SafeSet& set) {
  if (!set.window().contains(r0)) {
    std::ostringstream msg;
    msg << "initial reference " << r0 << " outside the reference window";
    throw InfeasibleError(msg.str());
  }
  const double margin = set.margin(x0, r0);
  if (!(margin >= 0.0)) {
    std::ostringstream msg;
    msg << "initial pair is outside the safe set (level margin " << margin << ")";
    throw InfeasibleError(msg.str());
  }
  GovernorState st;
  st.v_prev = r0;
  return st;
}

double scalar_rg(const Vec& x, double r, GovernorState& st, const SafeSet& set) {
  const double v_prev = st.v_prev;
  const double margin = set.margin(x, v_prev);
  if (!(margin >= 0.0)) {
    std::ostringstream msg;
    msg << "state left the safe set at the previous reference " << v_prev
        << " (level margin " << margin << ")";
    throw InvarianceViolation(msg.str());
  }
  const ReferenceWindow& w = set.window();
  const double target = w.clamp(r);
  double beta = 1.0;
  double v = target;
  if (!set.contains(x, target)) {
    // Admissible betas need not form an interval, so locate the topmost
    // admissible cell before bisecting its upper crossing.
    const auto at = [&](double b) { return w.clamp(v_prev + b * (target - v_prev)); };
    int k = kScanCells - 1;
    while (k > 0 && !set.contains(x, at(static_cast<double>(k) / kScanCells))) --k;
    double lo = static_cast<double>(k) / kScanCells;
    double hi = static_cast<double>(k + 1) / kScanCells;
    for (int i = 0; i < kBisectionSteps; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (set.contains(x, at(mid))) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    beta = lo;
    v = w.clamp(v_prev + lo * (target - v_prev));
  }
  st.beta.push_back(beta);
  st.alpha.push_back(v == r ? kNaN : std::abs(v - v_prev));
  st.v_prev = v;
  return v;
}

double command_governor(const Vec& x, double r, const SafeSet& set, std::optional<double> hint) {
  const auto intervals = set.cross_section_v(x, hint);
  if (intervals.empty()) throw InfeasibleError("admissible reference set is empty");
  const double target = set.window().clamp(r);
  double best = 0.0;
  double best_dist = std::numeric_limits<double>::infinity();
  const Interval* best_iv = nullptr;
  for (const auto& iv : intervals) {
    const double cand = std::min(std::max(target, iv.lo), iv.hi);
    const double dist = std::abs(cand - target);
    if (dist < best_dist) {
      best = cand;
      best_dist = dist;
      best_iv = &iv;
    }
  }
  // The scan can step over a thin gap inside an interval. Fall back to the
  // bisected endpoint, which is verified admissible.
  if (!set.contains(x, best)) {
    best = std::abs(best_iv->lo - target) <= std::abs(best_iv->hi - target) ? best_iv->lo
                                                                            : best_iv->hi;
  }
  return best;
}

double apply_governor(GovernorKind kind, const Vec& x, double r, GovernorState& st,
                      const SafeSet& set) {
  if (kind == GovernorKind::kScalar) return scalar_rg(x, r, st, set);
  const double v_prev = st.v_prev;
  const double margin = set.margin(x, v_prev);
  if (!(margin >= 0.0)) {
    std::ostringstream msg;
    msg << "state left the safe set at the previous reference " << v_prev
        << " (level margin " << margin << ")";
    throw InvarianceViolation(msg.str());
  }
  const double v = command_governor(x, r, set, v_prev);
  const double step = r - v_prev;
  st.beta.push_back(step == 0.0 ? 1.0 : (v - v_prev) / step);
  st.alpha.push_back(v == r ? kNaN : std::abs(v - v_prev));
  st.v_prev = v;
  return v;
}

void ContractionEnvelope::add(double alpha, double beta) {
  if (std::isnan(alpha)) return;
  samples_.emplace_back(alpha, beta);
}

double ContractionEnvelope::operator()(double a) const {
  double rho = 1.0;
  for (const auto& [alpha, beta] : samples_) {
    if (alpha >= a) rho = std::min(rho, beta);
  }
  return rho;
}

}  // namespace ocorg
