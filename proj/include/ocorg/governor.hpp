#pragma once

#include <optional>
#include <vector>

#include "ocorg/safeset.hpp"
#include "ocorg/types.hpp"

namespace ocorg {

enum class GovernorKind { kScalar, kCommand };

/// Previous applied reference and per-step bookkeeping. alpha is NaN when the
/// desired reference passed through unchanged, |v_t - v_{t-1}| otherwise.
struct GovernorState {
  double v_prev = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
};

/// Accepts r0 as the first applied reference. Throws InfeasibleError with the
/// level margin if (x0, r0) is not in the set.
GovernorState initialize_governor(const Vec& x0, double r0, const SafeSet& set);

/// v = v_prev + beta (r - v_prev) with beta the largest admissible value in
/// [0, 1]: 1 if r is admissible, else the topmost admissible cell of a
/// 1000-cell downward scan refined by 50 bisection steps. Admissible islands
/// narrower than a cell can be missed. r is clamped into the reference window
/// first. Throws InvarianceViolation if (x, v_prev) is outside the set.
double scalar_rg(const Vec& x, double r, GovernorState& st, const SafeSet& set);

/// Projection of r onto the admissible cross section O_v(x), ties broken
/// toward the smaller reference. `hint` is a reference known to be admissible.
/// Throws InfeasibleError if the cross section is empty.
double command_governor(const Vec& x, double r, const SafeSet& set,
                        std::optional<double> hint = {});

/// Runs the chosen governor and updates the bookkeeping in `st`.
double apply_governor(GovernorKind kind, const Vec& x, double r, GovernorState& st,
                      const SafeSet& set);

/// Lower envelope rho(a) = min{beta_i : alpha_i >= a} of the realized
/// contraction factors of restricted steps. Returns 1 when no restricted step
/// reaches `a`.
class ContractionEnvelope {
 public:
  void add(double alpha, double beta);
  double operator()(double a) const;
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }

 private:
  std::vector<std::pair<double, double>> samples_;
};

}  // namespace ocorg
