#include "ocorg/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ocorg/errors.hpp"

namespace ocorg {

std::vector<std::string> Plant::state_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < state_dim(); ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> Plant::input_names() const {
  if (input_dim() == 1) return {"u"};
  std::vector<std::string> names;
  for (int i = 0; i < input_dim(); ++i) names.push_back("u" + std::to_string(i));
  return names;
}

std::pair<Mat, Mat> Plant::jacobian(const Vec& x, const Vec& u) const {
  constexpr double h = 1e-7;
  const int n = state_dim();
  const int m = input_dim();
  Mat A(n, n);
  Mat B(n, m);
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    A.col(j) = (step(xp, u) - step(xm, u)) / (2.0 * h);
  }
  for (int j = 0; j < m; ++j) {
    Vec up = u, um = u;
    up(j) += h;
    um(j) -= h;
    B.col(j) = (step(x, up) - step(x, um)) / (2.0 * h);
  }
  return {A, B};
}

void CstrParams::validate() const {
  const double values[] = {theta_f, k_rate, M_act, x_f, x_c, alpha_f, tau};
  const char* names[] = {"theta_f", "k_rate", "M_act", "x_f", "x_c", "alpha_f", "tau"};
  for (int i = 0; i < 7; ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw DomainError(std::string("reactor parameter ") + names[i] +
                        " must be strictly positive");
    }
  }
}

Eigen::Vector2d cstr_continuous_rhs(const Eigen::Vector2d& state, double u,
                                    const CstrParams& p) {
  const double c = state(0);
  const double theta = state(1);
  if (!(theta >= kMinTemperature) || !std::isfinite(c) || !std::isfinite(u)) {
    std::ostringstream msg;
    msg << "reactor temperature " << theta << " outside the model domain";
    throw DomainError(msg.str());
  }
  const double reaction = p.k_rate * c * std::exp(-p.M_act / theta);
  return {(1.0 - c) / p.theta_f - reaction,
          (p.x_f - theta) / p.theta_f + reaction - p.alpha_f * u * (theta - p.x_c)};
}

CstrPlant::CstrPlant(CstrParams params, Eigen::Vector2d x0)
    : params_(params), x0_(x0) {
  params_.validate();
}

Vec CstrPlant::step(const Vec& x, const Vec& u) const {
  return euler_step(x, u, params_.tau, [this](const Vec& xs, const Vec& us) {
    return Vec(cstr_continuous_rhs(Eigen::Vector2d(xs(0), xs(1)), us(0), params_));
  });
}

std::vector<std::string> CstrPlant::state_names() const { return {"c", "theta"}; }

std::pair<Mat, Mat> CstrPlant::jacobian(const Vec& x, const Vec& u) const {
  const auto& p = params_;
  const double c = x(0);
  const double theta = x(1);
  if (!(theta >= kMinTemperature)) {
    throw DomainError("reactor temperature outside the model domain");
  }
  const double E = std::exp(-p.M_act / theta);
  const double dE = E * p.M_act / (theta * theta);
  Mat A(2, 2);
  A(0, 0) = 1.0 + p.tau * (-1.0 / p.theta_f - p.k_rate * E);
  A(0, 1) = p.tau * (-p.k_rate * c * dE);
  A(1, 0) = p.tau * (p.k_rate * E);
  A(1, 1) = 1.0 + p.tau * (-1.0 / p.theta_f + p.k_rate * c * dE - p.alpha_f * u(0));
  Mat B(2, 1);
  B(0, 0) = 0.0;
  B(1, 0) = -p.tau * p.alpha_f * (theta - p.x_c);
  return {A, B};
}

LinearPlant::LinearPlant(Mat A, Mat B, Vec x0, double tau)
    : A_(std::move(A)), B_(std::move(B)), x0_(std::move(x0)), tau_(tau) {
  if (A_.rows() != A_.cols() || B_.rows() != A_.rows() || x0_.size() != A_.rows()) {
    throw DomainError("inconsistent linear plant dimensions");
  }
}

Vec LinearPlant::step(const Vec& x, const Vec& u) const { return A_ * x + B_ * u; }

namespace {

Mat register_A(int m, int p) {
  Mat A = Mat::Zero(m * p, m * p);
  for (int i = 0; i + 1 < p; ++i) A.block(i * m, (i + 1) * m, m, m).setIdentity();
  return A;
}

Mat register_B(int m, int p) {
  Mat B = Mat::Zero(m * p, m);
  B.block((p - 1) * m, 0, m, m).setIdentity();
  return B;
}

}  // namespace

ShiftRegisterPlant::ShiftRegisterPlant(int m, int p, Vec x0)
    : LinearPlant((m >= 1 && p >= 1 && m * p <= kMaxDim)
                      ? register_A(m, p)
                      : throw DomainError("register needs m >= 1, p >= 1, m*p <= 16"),
                  register_B(m, p), std::move(x0), 1.0),
      m_(m),
      p_(p) {}

Mat ShiftRegisterPlant::stack_matrix() const {
  Mat H(m_ * p_, m_);
  for (int i = 0; i < p_; ++i) H.block(i * m_, 0, m_, m_).setIdentity();
  return H;
}

std::vector<std::string> ShiftRegisterPlant::state_names() const {
  std::vector<std::string> names;
  for (int lag = p_; lag >= 1; --lag) {
    for (int j = 0; j < m_; ++j) {
      std::string name = "u_lag" + std::to_string(lag);
      if (m_ > 1) name += "_" + std::to_string(j);
      names.push_back(name);
    }
  }
  return names;
}

ShiftRegisterPlant shift_register_plant(int m, int p) {
  return ShiftRegisterPlant(m, p, Vec::Zero(std::max(1, m * p)));
}

Eigen::MatrixXd BoxConstraints::Ex() const {
  const int n = static_cast<int>(x_lo.size());
  const int m = static_cast<int>(u_lo.size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * (n + m), n);
  for (int i = 0; i < n; ++i) {
    E(i, i) = 1.0;
    E(n + m + i, i) = -1.0;
  }
  return E;
}

Eigen::MatrixXd BoxConstraints::Eu() const {
  const int n = static_cast<int>(x_lo.size());
  const int m = static_cast<int>(u_lo.size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * (n + m), m);
  for (int j = 0; j < m; ++j) {
    E(n + j, j) = 1.0;
    E(2 * n + m + j, j) = -1.0;
  }
  return E;
}

Eigen::VectorXd BoxConstraints::e() const {
  const int n = static_cast<int>(x_lo.size());
  const int m = static_cast<int>(u_lo.size());
  Eigen::VectorXd out(2 * (n + m));
  out << x_hi, u_hi, -x_lo, -u_lo;
  return out;
}

double BoxConstraints::worst_margin(const Vec& x, const Vec& u) const {
  if (!x.allFinite() || !u.allFinite()) return -std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.size(); ++i) {
    worst = std::min({worst, x_hi(i) - x(i), x(i) - x_lo(i)});
  }
  for (int j = 0; j < u.size(); ++j) {
    worst = std::min({worst, u_hi(j) - u(j), u(j) - u_lo(j)});
  }
  return worst;
}

BoxConstraints BoxConstraints::cstr() {
  BoxConstraints box;
  box.x_lo = Vec::Zero(2);
  box.x_hi = Vec::Ones(2);
  box.u_lo = Vec::Zero(1);
  box.u_hi = Vec::Constant(1, 2.0);
  return box;
}

Eigen::VectorXd ConstraintPolytope::margins(const Vec& x, double v) const {
  return z - Zx * Eigen::VectorXd(x) - Zv * v;
}

std::pair<double, int> ConstraintPolytope::worst(const Vec& x, double v) const {
  const Eigen::VectorXd m = margins(x, v);
  int idx = 0;
  double w = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m.size(); ++i) {
    if (!(m(i) >= w)) {
      w = m(i);
      idx = i;
    }
  }
  return {w, idx};
}

}  // namespace ocorg
