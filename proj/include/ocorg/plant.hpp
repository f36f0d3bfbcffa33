#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "ocorg/types.hpp"

namespace ocorg {

/// Discrete-time system x+ = f(x, u) with a designated initial state.
/// Implementations are immutable after construction.
class Plant {
 public:
  virtual ~Plant() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual Vec step(const Vec& x, const Vec& u) const = 0;
  virtual double sampling_time() const = 0;
  virtual const Vec& initial_state() const = 0;

  virtual std::vector<std::string> state_names() const;
  virtual std::vector<std::string> input_names() const;

  /// Jacobians (df/dx, df/du) at (x, u). The default uses central
  /// differences with step 1e-7.
  virtual std::pair<Mat, Mat> jacobian(const Vec& x, const Vec& u) const;
};

/// Parameters of the normalized continuous stirred tank reactor.
struct CstrParams {
  double theta_f = 20.0;
  double k_rate = 300.0;
  double M_act = 5.0;
  double x_f = 0.3947;
  double x_c = 0.3816;
  double alpha_f = 0.117;
  double tau = 0.1;

  /// Throws DomainError unless every parameter is strictly positive.
  void validate() const;
};

/// Smallest admissible reactor temperature; the Arrhenius factor exp(-M/theta)
/// is evaluated only above it.
inline constexpr double kMinTemperature = 1e-6;

/// (dc/dt, dtheta/dt) of the reactor for state (c, theta) and coolant rate u.
Eigen::Vector2d cstr_continuous_rhs(const Eigen::Vector2d& state, double u,
                                    const CstrParams& params);

/// x + tau * rhs(x, u).
template <typename Rhs>
Vec euler_step(const Vec& x, const Vec& u, double tau, const Rhs& rhs) {
  return x + tau * rhs(x, u);
}

class CstrPlant final : public Plant {
 public:
  explicit CstrPlant(CstrParams params = {},
                     Eigen::Vector2d x0 = Eigen::Vector2d(0.2632, 0.6519));

  int state_dim() const override { return 2; }
  int input_dim() const override { return 1; }
  Vec step(const Vec& x, const Vec& u) const override;
  double sampling_time() const override { return params_.tau; }
  const Vec& initial_state() const override { return x0_; }
  std::vector<std::string> state_names() const override;
  std::pair<Mat, Mat> jacobian(const Vec& x, const Vec& u) const override;

  const CstrParams& params() const { return params_; }

 private:
  CstrParams params_;
  Vec x0_;
};

/// x+ = A x + B u.
class LinearPlant : public Plant {
 public:
  LinearPlant(Mat A, Mat B, Vec x0, double tau = 1.0);

  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int input_dim() const override { return static_cast<int>(B_.cols()); }
  Vec step(const Vec& x, const Vec& u) const override;
  double sampling_time() const override { return tau_; }
  const Vec& initial_state() const override { return x0_; }
  std::pair<Mat, Mat> jacobian(const Vec&, const Vec&) const override {
    return {A_, B_};
  }

  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }

 private:
  Mat A_;
  Mat B_;
  Vec x0_;
  double tau_;
};

/// Shift register whose state stacks the last p inputs (u_{t-p}, ..., u_{t-1}).
/// Its steady state for a constant input v is H v with H = [I; ...; I].
class ShiftRegisterPlant final : public LinearPlant {
 public:
  ShiftRegisterPlant(int m, int p, Vec x0);

  int memory() const { return p_; }
  /// p-fold vertical stack of m x m identities.
  Mat stack_matrix() const;
  std::vector<std::string> state_names() const override;

 private:
  int m_;
  int p_;
};

/// Builds the register plant with zero initial state.
ShiftRegisterPlant shift_register_plant(int m, int p);

/// Box constraints x in [x_lo, x_hi], u in [u_lo, u_hi], stored both as boxes
/// and as stacked rows Ex x + Eu u <= e (upper rows first, then lower rows).
struct BoxConstraints {
  Vec x_lo, x_hi, u_lo, u_hi;

  Eigen::MatrixXd Ex() const;
  Eigen::MatrixXd Eu() const;
  Eigen::VectorXd e() const;

  int rows() const {
    return 2 * static_cast<int>(x_lo.size() + u_lo.size());
  }
  /// Smallest slack over all rows; negative means violated.
  double worst_margin(const Vec& x, const Vec& u) const;
  bool contains(const Vec& x, const Vec& u) const {
    return worst_margin(x, u) >= 0.0;
  }

  /// [0,1]^2 x [0,2].
  static BoxConstraints cstr();
};

/// Constraint set {(x, v) : Zx x + Zv v <= z} for scalar references v.
struct ConstraintPolytope {
  Eigen::MatrixXd Zx;
  Eigen::VectorXd Zv;
  Eigen::VectorXd z;

  int rows() const { return static_cast<int>(z.size()); }
  Eigen::VectorXd margins(const Vec& x, double v) const;
  /// Worst-row margin and the index of that row.
  std::pair<double, int> worst(const Vec& x, double v) const;
  bool contains(const Vec& x, double v) const { return worst(x, v).first >= 0.0; }
};

}  // namespace ocorg
