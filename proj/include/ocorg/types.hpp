#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ocorg {

/// Largest state or input dimension supported. Vectors and matrices carry a
/// compile-time capacity so the closed-loop hot path never allocates.
inline constexpr int kMaxDim = 16;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim,
                          kMaxDim>;

/// Compact interval of admissible scalar references.
struct ReferenceWindow {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
  double diameter() const { return hi - lo; }

  /// `n` equally spaced points including both ends (n >= 2).
  std::vector<double> grid(int n) const {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] =
          i == n - 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    }
    return out;
  }
};

/// Neumaier-compensated running sum. Fixed summation order gives
/// reproducible totals.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace ocorg
