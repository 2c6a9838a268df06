#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "laptime/errors.hpp"

namespace laptime {

// One loss-map sample. omega is absent for battery discharge data.
struct LossSample {
  std::optional<double> omega;  // rad/s
  double power = 0.0;           // W (mechanical for the EM, terminal for the battery)
  double loss = 0.0;            // W measured loss
};

struct FitReport {
  double rmse_relative = 0.0;  // RMSE of predicted electrical power / max |measured electrical power|
  double residual_max = 0.0;   // W
};

namespace detail {

inline FitReport make_report(const std::vector<LossSample>& samples,
                             const std::vector<double>& predicted_loss) {
  double sq = 0.0, res_max = 0.0, elec_max = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = predicted_loss[i] - samples[i].loss;
    sq += r * r;
    res_max = std::max(res_max, std::abs(r));
    elec_max = std::max(elec_max, std::abs(samples[i].power + samples[i].loss));
  }
  FitReport rep;
  rep.residual_max = res_max;
  rep.rmse_relative = std::sqrt(sq / static_cast<double>(samples.size())) / std::max(elec_max, 1e-300);
  return rep;
}

}  // namespace detail

// Least-squares fit of loss = alpha * P^2 through the origin, clamped to
// alpha >= 0 so sqrt(alpha) stays real in the conic encoding.
inline std::pair<double, FitReport> fit_alpha(const std::vector<LossSample>& samples) {
  std::set<double> distinct;
  for (const LossSample& s : samples)
    if (s.power != 0.0) distinct.insert(s.power);
  if (distinct.size() < 2)
    throw ValidationError("fit_alpha: need >= 2 samples with distinct nonzero power");

  double num = 0.0, den = 0.0;
  for (const LossSample& s : samples) {
    const double p2 = s.power * s.power;
    num += s.loss * p2;
    den += p2 * p2;
  }
  if (den == 0.0) throw ValidationError("fit_alpha: all powers are zero");
  const double alpha = std::max(0.0, num / den);

  std::vector<double> pred(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    pred[i] = alpha * samples[i].power * samples[i].power;
  return {alpha, detail::make_report(samples, pred)};
}

namespace detail {

inline Eigen::Matrix3d clip_psd(const Eigen::Matrix3d& q) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (q + q.transpose()));
  const Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::Matrix3d theta_to_q(const Eigen::Matrix<double, 6, 1>& th) {
  Eigen::Matrix3d q;
  q << th(0), th(3), th(4),
       th(3), th(1), th(5),
       th(4), th(5), th(2);
  return q;
}

inline Eigen::Matrix<double, 6, 1> q_to_theta(const Eigen::Matrix3d& q) {
  Eigen::Matrix<double, 6, 1> th;
  th << q(0, 0), q(1, 1), q(2, 2), q(0, 1), q(0, 2), q(1, 2);
  return th;
}

}  // namespace detail

// Fit the symmetric PSD matrix Q of the speed-dependent quadratic loss model
// min sum_i (x_i^T Q x_i - loss_i)^2 over Q >= 0, x_i = [1, omega_i, P_i].
// Solved as a fixed-point iteration alternating a step toward the
// unconstrained least-squares set with a projection onto the PSD cone
// (eigenvalue clipping), stopped at 1e-10 relative Frobenius change.
inline std::pair<Eigen::Matrix3d, FitReport> fit_psd_quadratic(
    const std::vector<LossSample>& samples) {
  std::set<double> speeds, powers;
  for (const LossSample& s : samples) {
    if (!s.omega.has_value())
      throw ValidationError("fit_psd_quadratic: every sample needs a speed");
    speeds.insert(*s.omega);
    powers.insert(s.power);
  }
  if (samples.size() < 6 || speeds.size() < 3 || powers.size() < 3) {
    std::string msg = "fit_psd_quadratic: underdetermined fit;";
    if (samples.size() < 6) msg += " need >= 6 samples;";
    if (speeds.size() < 3) msg += " need >= 3 distinct speeds;";
    if (powers.size() < 3) msg += " need >= 3 distinct powers;";
    throw ValidationError(msg);
  }

  // Scale omega and power to O(1) so the 6-dim normal equations are well
  // conditioned; PSD-ness is invariant under the congruence unscaling.
  double w_s = 0.0, p_s = 0.0;
  for (const LossSample& s : samples) {
    w_s = std::max(w_s, std::abs(*s.omega));
    p_s = std::max(p_s, std::abs(s.power));
  }
  if (w_s == 0.0) w_s = 1.0;
  if (p_s == 0.0) p_s = 1.0;

  const int n = static_cast<int>(samples.size());
  Eigen::MatrixXd design(n, 6);
  Eigen::VectorXd loss(n);
  for (int i = 0; i < n; ++i) {
    const double w = *samples[i].omega / w_s;
    const double p = samples[i].power / p_s;
    design.row(i) << 1.0, w * w, p * p, 2.0 * w, 2.0 * p, 2.0 * w * p;
    loss(i) = samples[i].loss;
  }

  const Eigen::Matrix<double, 6, 6> gram = design.transpose() * design;
  const Eigen::Matrix<double, 6, 1> rhs = design.transpose() * loss;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> ges(gram);
  const double ev_max = ges.eigenvalues().maxCoeff();
  if (ges.eigenvalues().minCoeff() < 1e-12 * ev_max) {
    std::string msg = "fit_psd_quadratic: rank-deficient design matrix;";
    if (speeds.size() < 4) msg += " add more distinct speeds;";
    if (powers.size() < 4) msg += " add more distinct powers;";
    msg += " samples must vary speed and power jointly";
    throw ValidationError(msg);
  }

  const Eigen::Matrix<double, 6, 1> theta_ls = gram.ldlt().solve(rhs);
  Eigen::Matrix3d q = detail::clip_psd(detail::theta_to_q(theta_ls));
  const double step = 1.0 / ev_max;
  const double scale = std::max(1.0, detail::theta_to_q(theta_ls).norm());
  for (int it = 0; it < 200000; ++it) {
    const Eigen::Matrix<double, 6, 1> grad = gram * detail::q_to_theta(q) - rhs;
    const Eigen::Matrix3d next =
        detail::clip_psd(detail::theta_to_q(detail::q_to_theta(q) - step * grad));
    const double change = (next - q).norm();
    q = next;
    if (change <= 1e-10 * scale) break;
  }

  // unscale: x = diag(1, w_s, p_s) * x_hat
  const Eigen::Vector3d inv_s(1.0, 1.0 / w_s, 1.0 / p_s);
  Eigen::Matrix3d q_out = inv_s.asDiagonal() * q * inv_s.asDiagonal();
  q_out = 0.5 * (q_out + q_out.transpose());

  std::vector<double> pred(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::Vector3d x(1.0, *samples[i].omega, samples[i].power);
    pred[i] = x.dot(q_out * x);
  }
  return {q_out, detail::make_report(samples, pred)};
}

// RMSE of (predicted - measured) electrical power normalized by the largest
// |measured electrical power|, for the alpha-only quadratic loss model.
inline double evaluate_rmse_alpha(double alpha, const std::vector<LossSample>& samples) {
  if (samples.empty()) throw ValidationError("evaluate_rmse: no samples");
  std::vector<double> pred(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    pred[i] = alpha * samples[i].power * samples[i].power;
  return detail::make_report(samples, pred).rmse_relative;
}

// Same, for the PSD quadratic model over x = [1, omega, P].
inline double evaluate_rmse_psd(const Eigen::Matrix3d& q, const std::vector<LossSample>& samples) {
  if (samples.empty()) throw ValidationError("evaluate_rmse: no samples");
  std::vector<double> pred(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].omega.has_value())
      throw ValidationError("evaluate_rmse: psd model needs speeds");
    const Eigen::Vector3d x(1.0, *samples[i].omega, samples[i].power);
    pred[i] = x.dot(q * x);
  }
  return detail::make_report(samples, pred).rmse_relative;
}

}  // namespace laptime
