#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "laptime/errors.hpp"

namespace laptime {

// Chassis, aero and driveline constants. All SI. a_brk_max bounds the
// mechanical-brake deceleration; infinity leaves braking unbounded.
struct VehicleParams {
  double m_tot = 0.0;    // kg
  double c_d = 0.0;      // drag coefficient
  double A_f = 0.0;      // m^2 frontal area
  double rho_air = 0.0;  // kg/m^3
  double g = 9.81;       // m/s^2
  double c_r = 0.0;      // rolling friction coefficient
  double eta_fd = 1.0;   // final drive efficiency, (0,1]
  double r_w = 0.0;      // m wheel radius
  double gamma_fd = 0.0; // final drive ratio
  double P_aux = 0.0;    // W constant auxiliary power
  double a_brk_max = std::numeric_limits<double>::infinity();  // m/s^2
};

enum class TransmissionKind { SingleRatio, Cvt };

struct TransmissionSpec {
  TransmissionKind kind = TransmissionKind::SingleRatio;
  double gamma_1 = 0.0;    // SR fixed/initial ratio
  double gamma_min = 0.0;  // CVT ratio bounds
  double gamma_max = 0.0;
  double eta_gb = 1.0;     // gearbox efficiency, (0,1]
  bool optimize_sr_ratio = true;
};

// Electric machine: quadratic speed-independent loss alpha_m, PSD quadratic
// speed-dependent loss Q over x = [1, omega_m, P_m], and the torque/power/
// speed operating limits.
struct MotorModel {
  double alpha_m = 0.0;            // 1/W
  Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
  double T_max = 0.0;              // N*m
  double c_m1 = 0.0;               // W*s/rad, <= 0
  double c_m2 = 0.0;               // W, >= 0
  double omega_max = 0.0;          // rad/s
};

struct BatteryModel {
  double alpha_b = 0.0;   // 1/W
  double E_b0 = 0.0;      // J available energy over the stint
  int N_laps = 1;
  double delta_Eb_max = 0.0;  // J per lap, cached = E_b0/N_laps

  BatteryModel() = default;
  BatteryModel(double alpha, double e_b0, int n_laps)
      : alpha_b(alpha), E_b0(e_b0), N_laps(n_laps), delta_Eb_max(e_b0 / n_laps) {}
};

inline void validate(const VehicleParams& p) {
  if (!(p.m_tot > 0.0)) throw ValidationError("vehicle: m_tot must be > 0");
  if (!(p.c_d > 0.0)) throw ValidationError("vehicle: c_d must be > 0");
  if (!(p.A_f > 0.0)) throw ValidationError("vehicle: A_f must be > 0");
  if (!(p.rho_air > 0.0)) throw ValidationError("vehicle: rho_air must be > 0");
  if (!(p.g > 0.0)) throw ValidationError("vehicle: g must be > 0");
  if (!(p.c_r >= 0.0)) throw ValidationError("vehicle: c_r must be >= 0");
  if (!(p.eta_fd > 0.0 && p.eta_fd <= 1.0)) throw ValidationError("vehicle: eta_fd must be in (0,1]");
  if (!(p.r_w > 0.0)) throw ValidationError("vehicle: r_w must be > 0");
  if (!(p.gamma_fd > 0.0)) throw ValidationError("vehicle: gamma_fd must be > 0");
  if (!(p.P_aux >= 0.0)) throw ValidationError("vehicle: P_aux must be >= 0");
  if (!(p.a_brk_max > 0.0)) throw ValidationError("vehicle: a_brk_max must be > 0");
}

inline void validate(const TransmissionSpec& t) {
  if (!(t.eta_gb > 0.0 && t.eta_gb <= 1.0)) throw ValidationError("transmission: eta_gb must be in (0,1]");
  if (t.kind == TransmissionKind::SingleRatio) {
    if (!(t.gamma_1 > 0.0)) throw ValidationError("transmission: SR requires gamma_1 > 0");
  } else {
    if (!(t.gamma_min > 0.0 && t.gamma_min <= t.gamma_max))
      throw ValidationError("transmission: CVT requires 0 < gamma_min <= gamma_max");
  }
}

inline void validate(const MotorModel& m) {
  if (!(m.alpha_m >= 0.0)) throw ValidationError("motor: alpha_m must be >= 0");
  if (!(m.T_max > 0.0)) throw ValidationError("motor: T_max must be > 0");
  if (!(m.c_m1 <= 0.0)) throw ValidationError("motor: c_m1 must be <= 0");
  if (!(m.c_m2 >= 0.0)) throw ValidationError("motor: c_m2 must be >= 0");
  if (!(m.omega_max > 0.0)) throw ValidationError("motor: omega_max must be > 0");
  if ((m.Q - m.Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.Q.cwiseAbs().maxCoeff()))
    throw ValidationError("motor: Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m.Q);
  if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    throw ValidationError("motor: Q must be positive semi-definite");
}

inline void validate(const BatteryModel& b) {
  if (!(b.alpha_b >= 0.0)) throw ValidationError("battery: alpha_b must be >= 0");
  if (!(b.E_b0 > 0.0)) throw ValidationError("battery: E_b0 must be > 0");
  if (b.N_laps < 1) throw ValidationError("battery: N_laps must be >= 1");
  if (b.delta_Eb_max != b.E_b0 / b.N_laps)
    throw ValidationError("battery: delta_Eb_max cache is stale");
}

// F_d = c_d*A_f*rho*E_kin/m_tot + m_tot*g*(sin(theta) + c_r*cos(theta)).
inline double drag_force(double e_kin, double theta, const VehicleParams& p) {
  if (!(e_kin >= 0.0)) throw std::invalid_argument("drag_force: E_kin must be >= 0");
  return p.c_d * p.A_f * p.rho_air * e_kin / p.m_tot +
         p.m_tot * p.g * (std::sin(theta) + p.c_r * std::cos(theta));
}

// Exact two-branch propulsion force (the unrelaxed form behind the convex
// relaxation used in the transcription).
inline double propulsion_force_exact(double f_gb, double f_brk, const VehicleParams& p) {
  if (!(f_brk >= 0.0)) throw std::invalid_argument("propulsion_force_exact: F_brk must be >= 0");
  return (f_gb >= 0.0 ? p.eta_fd * f_gb : f_gb / p.eta_fd) - f_brk;
}

// Speed-independent electrical power: P_dc = alpha_m*P_m^2 + P_m.
inline double em_electrical_power_si(double p_m, const MotorModel& m) {
  return m.alpha_m * p_m * p_m + p_m;
}

// Speed-dependent electrical power: P_dc = P_m + x^T Q x, x = [1, omega_m, P_m].
inline double em_electrical_power_sd(double omega_m, double p_m, const MotorModel& m) {
  if (!(omega_m >= 0.0 && omega_m <= m.omega_max))
    throw std::invalid_argument("em_electrical_power_sd: omega_m out of [0, omega_max]");
  const Eigen::Vector3d x(1.0, omega_m, p_m);
  return p_m + x.dot(m.Q * x);
}

// Symmetric torque/power envelope: P_max = min(T_max*w, c_m1*w + c_m2), P_min = -P_max.
inline std::pair<double, double> em_power_limits(double omega_m, const MotorModel& m) {
  if (!(omega_m >= 0.0 && omega_m <= m.omega_max))
    throw std::invalid_argument("em_power_limits: omega_m out of [0, omega_max]");
  const double p_max = std::min(m.T_max * omega_m, m.c_m1 * omega_m + m.c_m2);
  return {-p_max, p_max};
}

// Internal battery power: P_i = alpha_b*P_b^2 + P_b.
inline double battery_internal_power(double p_b, const BatteryModel& b) {
  return b.alpha_b * p_b * p_b + p_b;
}

// omega_m = gamma * v * gamma_fd / r_w.
inline double motor_speed(double v, double gamma, const VehicleParams& p) {
  if (!(v >= 0.0)) throw std::invalid_argument("motor_speed: v must be >= 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("motor_speed: gamma must be > 0");
  return gamma * v * p.gamma_fd / p.r_w;
}

}  // namespace laptime
