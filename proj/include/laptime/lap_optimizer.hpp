#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "laptime/conic/solver.hpp"
#include "laptime/powertrain.hpp"
#include "laptime/track.hpp"
#include "laptime/transcription.hpp"

namespace laptime {

struct AlgorithmSettings {
  double epsilon_v = 0.01;      // m/s, RMS velocity fixed-point tolerance
  int max_outer_iters = 10;
  double tightness_tol = 1e-4;
  conic::SolverSettings solver;
  TranscriptionOptions transcription;
};

struct LapResult {
  LapTrajectories trajectories;
  int outer_iterations = 0;     // Problem-3 solves performed
  bool converged = false;
  TightnessReport tightness;
  double sr_ratio_optimal = std::numeric_limits<double>::quiet_NaN();
  double energy_used = 0.0;     // J, final Delta E_b
  std::string infeasible_reason;
  conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
};

namespace detail {

inline double rms_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(a.size()));
}

inline LapResult failed_result(const conic::ConicSolution& sol) {
  LapResult r;
  r.status = sol.status;
  r.converged = false;
  if (sol.status == conic::SolveStatus::PrimalInfeasible) {
    r.infeasible_reason =
        "energy budget insufficient or envelope unreachable (Farkas certificate: b'y + h'z = -1, "
        "|A'y + G'z| = " +
        std::to_string(sol.residuals.dual) + ")";
  } else {
    r.infeasible_reason = std::string("solver returned ") + conic::to_string(sol.status);
  }
  return r;
}

}  // namespace detail

// One Problem-3 solve at a fixed velocity profile. Used by the fixed-point
// loop and by the rerun-stability checks.
inline LapResult resolve_at_profile(const TrackProfile& track, const VehicleParams& vehicle,
                                    const TransmissionSpec& trans, const MotorModel& motor,
                                    const BatteryModel& battery, const std::vector<double>& v_bar,
                                    const AlgorithmSettings& settings = {}) {
  auto [prog, map] = build_problem3(track, vehicle, trans, motor, battery, v_bar,
                                    settings.transcription);
  const conic::ConicSolution sol = conic::solve(prog, settings.solver);
  if (sol.status != conic::SolveStatus::Optimal) return detail::failed_result(sol);
  LapResult r;
  r.status = sol.status;
  r.trajectories = extract_trajectories(sol, map, track, vehicle);
  r.tightness = compute_tightness(r.trajectories, vehicle, trans, motor, battery,
                                  /*speed_dependent=*/true, v_bar);
  r.sr_ratio_optimal = r.trajectories.sr_ratio;
  r.energy_used = r.trajectories.de_b.back();
  r.outer_iterations = 1;
  r.converged = true;
  return r;
}

// Iterative solving procedure: Problem 2 seeds the velocity profile, then
// Problem 3 is re-solved at the previous profile until the RMS velocity
// change drops below epsilon_v.
inline LapResult solve_lap(const TrackProfile& track, const VehicleParams& vehicle,
                           const TransmissionSpec& trans, const MotorModel& motor,
                           const BatteryModel& battery, const AlgorithmSettings& settings = {}) {
  auto [prog2, map2] = build_problem2(track, vehicle, trans, motor, battery,
                                      settings.transcription);
  const conic::ConicSolution sol2 = conic::solve(prog2, settings.solver);
  if (sol2.status != conic::SolveStatus::Optimal) return detail::failed_result(sol2);
  const LapTrajectories seed = extract_trajectories(sol2, map2, track, vehicle);
  std::vector<double> v_bar = seed.v;

  LapResult result;
  for (int outer = 1; outer <= settings.max_outer_iters; ++outer) {
    auto [prog3, map3] = build_problem3(track, vehicle, trans, motor, battery, v_bar,
                                        settings.transcription);
    const conic::ConicSolution sol3 = conic::solve(prog3, settings.solver);
    if (sol3.status != conic::SolveStatus::Optimal) {
      LapResult fail = detail::failed_result(sol3);
      fail.outer_iterations = outer;
      return fail;
    }
    result.trajectories = extract_trajectories(sol3, map3, track, vehicle);
    result.status = sol3.status;
    result.outer_iterations = outer;
    const double rms = detail::rms_diff(result.trajectories.v, v_bar);
    result.converged = rms < settings.epsilon_v;
    result.tightness = compute_tightness(result.trajectories, vehicle, trans, motor, battery,
                                         /*speed_dependent=*/true, v_bar);
    result.sr_ratio_optimal = result.trajectories.sr_ratio;
    result.energy_used = result.trajectories.de_b.back();
    if (result.converged) break;
    v_bar = result.trajectories.v;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Forward simulation of the unrelaxed nonlinear model under the optimal
// controls (F_m, gamma, recovered F_brk). Integrates dE/ds = F_p - F_d(E)
// exactly per interval (the drag is affine in E), so the check is
// independent of the transcription's Euler stepping.

struct ForwardCheck {
  double max_speed_deviation = 0.0;  // m/s vs the optimizer's profile
  double nonlinear_energy_used = 0.0;  // J through the exact loss chain
  bool energy_budget_exceeded = false;
  std::vector<double> v_sim;  // N+1
};

namespace detail {

inline double exact_drag_step(double e0, double f_p, double drag_e, double drag_c, double ds) {
  // dE/ds = f_p - drag_e E - drag_c, exact over one interval
  if (drag_e <= 0.0) return e0 + ds * (f_p - drag_c);
  const double equil = (f_p - drag_c) / drag_e;
  return (e0 - equil) * std::exp(-drag_e * ds) + equil;
}

}  // namespace detail

inline ForwardCheck verify_forward(const LapTrajectories& traj, const TrackProfile& track,
                                   const VehicleParams& vehicle, const TransmissionSpec& trans,
                                   const MotorModel& motor, const BatteryModel& battery,
                                   bool speed_dependent_losses = true) {
  const int n = static_cast<int>(traj.dtds.size());
  const double ds = track.step_length;
  const double drag_e = vehicle.c_d * vehicle.A_f * vehicle.rho_air / vehicle.m_tot;

  ForwardCheck out;
  out.v_sim.resize(n + 1);
  double e = traj.e_kin[0];
  out.v_sim[0] = std::sqrt(2.0 * e / vehicle.m_tot);
  for (int k = 0; k < n; ++k) {
    const double f_gb =
        traj.f_m[k] >= 0.0 ? trans.eta_gb * traj.f_m[k] : traj.f_m[k] / trans.eta_gb;
    const double f_p = propulsion_force_exact(f_gb, traj.f_brk[k], vehicle);
    const double th = track.nodes[k].inclination_theta;
    const double drag_c = vehicle.m_tot * vehicle.g * (std::sin(th) + vehicle.c_r * std::cos(th));

    const double v = out.v_sim[k];
    const double p_m = traj.f_m[k] * v;
    double p_dc;
    if (speed_dependent_losses) {
      const double omega = std::clamp(traj.gamma[k] * v * vehicle.gamma_fd / vehicle.r_w, 0.0,
                                      motor.omega_max);
      p_dc = em_electrical_power_sd(omega, p_m, motor);
    } else {
      p_dc = em_electrical_power_si(p_m, motor);
    }
    const double p_b = p_dc + vehicle.P_aux;
    const double p_i = battery_internal_power(p_b, battery);
    out.nonlinear_energy_used += ds * p_i / std::max(v, 1e-9);

    e = std::max(0.0, detail::exact_drag_step(e, f_p, drag_e, drag_c, ds));
    out.v_sim[k + 1] = std::sqrt(2.0 * e / vehicle.m_tot);
  }

  for (int k = 0; k < n; ++k)
    out.max_speed_deviation = std::max(out.max_speed_deviation, std::abs(out.v_sim[k] - traj.v[k]));
  const double v_end = std::sqrt(2.0 * traj.e_kin[n] / vehicle.m_tot);
  out.max_speed_deviation = std::max(out.max_speed_deviation, std::abs(out.v_sim[n] - v_end));

  out.energy_budget_exceeded =
      out.nonlinear_energy_used > battery.delta_Eb_max * (1.0 + 1e-3);
  return out;
}

// ---------------------------------------------------------------------------
// Independent oracle for the unlimited-energy case: classic two-pass speed
// profile. The forward pass is limited by the driveline force envelope and
// drag under the same Euler-forward stepping as the transcription; the
// backward pass by a configured braking deceleration; both clipped to v_max.

struct EnvelopeOptions {
  double a_brk_max = 30.0;  // m/s^2
  TranscriptionOptions transcription;  // shares the speed-limit convention
  int gamma_scan_points = 257;
};

namespace detail {

// max driveline force at speed v through the gamma choice
inline double max_driveline_force(double v, const VehicleParams& veh, const TransmissionSpec& tr,
                                  const MotorModel& motor, const EnvelopeOptions& opts) {
  const double fd_factor = opts.transcription.speed_limit_includes_final_drive ? veh.gamma_fd : 1.0;
  const double gamma_speed_cap = motor.omega_max * veh.r_w / (fd_factor * std::max(v, 1e-9));
  auto force_at = [&](double g) {
    const double f_m =
        std::min(g * motor.T_max / veh.r_w, motor.c_m1 * g / veh.r_w + motor.c_m2 / v);
    return veh.eta_fd * tr.eta_gb * f_m;
  };
  if (tr.kind == TransmissionKind::SingleRatio) {
    const double g = tr.gamma_1;
    if (g > gamma_speed_cap) return 0.0;  // gear cannot spin this fast
    return force_at(g);
  }
  const double g_hi = std::min(tr.gamma_max, gamma_speed_cap);
  if (g_hi < tr.gamma_min) return 0.0;
  double best = 0.0;
  for (int i = 0; i < opts.gamma_scan_points; ++i) {
    const double g = tr.gamma_min +
                     (g_hi - tr.gamma_min) * static_cast<double>(i) /
                         static_cast<double>(opts.gamma_scan_points - 1);
    best = std::max(best, force_at(g));
  }
  return best;
}

}  // namespace detail

inline std::vector<double> forward_backward_envelope(const TrackProfile& track,
                                                     const VehicleParams& vehicle,
                                                     const TransmissionSpec& trans,
                                                     const MotorModel& motor,
                                                     const EnvelopeOptions& opts = {}) {
  validate(track);
  validate(vehicle);
  validate(trans);
  validate(motor);
  const int n = static_cast<int>(track.num_intervals());
  const double ds = track.step_length;
  const double m = vehicle.m_tot;
  const double drag_e = vehicle.c_d * vehicle.A_f * vehicle.rho_air / m;

  auto envelope_energy = [&](int k) {
    double vc = track.nodes[k].v_max;
    if (trans.kind == TransmissionKind::SingleRatio) {
      // a fixed gear caps speed at the motor speed limit
      const double fd = opts.transcription.speed_limit_includes_final_drive ? vehicle.gamma_fd : 1.0;
      vc = std::min(vc, motor.omega_max * vehicle.r_w / (fd * trans.gamma_1));
    }
    return 0.5 * m * vc * vc;
  };
  auto drag_const = [&](int k) {
    const double th = track.nodes[k].inclination_theta;
    return m * vehicle.g * (std::sin(th) + vehicle.c_r * std::cos(th));
  };

  // forward: acceleration limited; two sweeps so the periodic start speed
  // settles (start at the envelope, feed the lap-end speed back once)
  std::vector<double> e_f(n + 1);
  e_f[0] = envelope_energy(0);
  for (int pass = 0; pass < 2; ++pass) {
    for (int k = 0; k < n; ++k) {
      const double v = std::sqrt(2.0 * e_f[k] / m);
      const double f = detail::max_driveline_force(std::max(v, 1e-6), vehicle, trans, motor, opts);
      const double next = e_f[k] + ds * (f - drag_e * e_f[k] - drag_const(k));
      e_f[k + 1] = std::min(envelope_energy(k + 1), next);
    }
    e_f[0] = std::min(e_f[0], e_f[n]);
  }

  // backward: braking limited, exact inversion of the Euler step
  std::vector<double> e_b(n + 1);
  e_b[n] = envelope_energy(n);
  for (int pass = 0; pass < 2; ++pass) {
    for (int k = n - 1; k >= 0; --k) {
      const double reachable =
          (e_b[k + 1] + ds * (m * opts.a_brk_max + drag_const(k))) / (1.0 - ds * drag_e);
      e_b[k] = std::min(envelope_energy(k), reachable);
    }
    e_b[n] = std::min(e_b[n], e_b[0]);
  }

  std::vector<double> v_out(n + 1);
  for (int k = 0; k <= n; ++k) v_out[k] = std::sqrt(2.0 * std::min(e_f[k], e_b[k]) / m);
  return v_out;
}

inline double envelope_lap_time(const std::vector<double>& v, double step_length) {
  double t = 0.0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) t += step_length / v[k];
  return t;
}

// ---------------------------------------------------------------------------
// (eta_gb, energy budget) sweep: the SR car is solved once per energy value,
// the CVT car per grid cell. Cells run concurrently; results are gathered by
// grid index so the output is deterministic.

struct SweepInputs {
  TrackProfile track;
  VehicleParams vehicle_sr, vehicle_cvt;
  TransmissionSpec trans_sr, trans_cvt;
  MotorModel motor;
  BatteryModel battery;
};

struct SweepResult {
  std::vector<double> eta_values;     // CVT eta_gb axis
  std::vector<double> energy_values;  // Delta E_b,max axis, J
  std::vector<double> t_sr;           // per energy value, NaN on failure
  std::vector<double> t_cvt;          // row-major [eta][energy]
  std::vector<double> delta_t;        // T_SR - T_CVT, row-major [eta][energy]

  double cvt_at(std::size_t i_eta, std::size_t i_energy) const {
    return t_cvt[i_eta * energy_values.size() + i_energy];
  }
  double delta_at(std::size_t i_eta, std::size_t i_energy) const {
    return delta_t[i_eta * energy_values.size() + i_energy];
  }
};

inline int sweep_worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LAPTIME_NUM_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline SweepResult sweep(const SweepInputs& in, const std::vector<double>& eta_values,
                         const std::vector<double>& energy_values,
                         const AlgorithmSettings& settings = {}, int num_workers = 0) {
  if (eta_values.empty() || energy_values.empty())
    throw std::invalid_argument("sweep: axes must be nonempty");
  SweepResult out;
  out.eta_values = eta_values;
  out.energy_values = energy_values;
  const std::size_t ne = eta_values.size(), nb = energy_values.size();
  out.t_sr.assign(nb, std::numeric_limits<double>::quiet_NaN());
  out.t_cvt.assign(ne * nb, std::numeric_limits<double>::quiet_NaN());
  out.delta_t.assign(ne * nb, std::numeric_limits<double>::quiet_NaN());

  auto budget = [&](double energy) { return BatteryModel(in.battery.alpha_b, energy, 1); };
  auto lap_time_of = [&](const VehicleParams& veh, const TransmissionSpec& tr,
                         const BatteryModel& bat) -> double {
    try {
      const LapResult r = solve_lap(in.track, veh, tr, in.motor, bat, settings);
      return r.converged ? r.trajectories.lap_time : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  // cell 0..nb-1: SR per energy; then CVT cells in row-major order
  const std::size_t total = nb + ne * nb;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t c = next.fetch_add(1); c < total; c = next.fetch_add(1)) {
      if (c < nb) {
        out.t_sr[c] = lap_time_of(in.vehicle_sr, in.trans_sr, budget(energy_values[c]));
      } else {
        const std::size_t cell = c - nb;
        const std::size_t i_eta = cell / nb, i_b = cell % nb;
        TransmissionSpec tr = in.trans_cvt;
        tr.eta_gb = eta_values[i_eta];
        out.t_cvt[cell] = lap_time_of(in.vehicle_cvt, tr, budget(energy_values[i_b]));
      }
    }
  };

  const int workers = std::min<int>(sweep_worker_count(num_workers), static_cast<int>(total));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t i = 0; i < ne; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      out.delta_t[i * nb + j] = out.t_sr[j] - out.t_cvt[i * nb + j];
  return out;
}

}  // namespace laptime
