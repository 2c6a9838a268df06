#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "laptime/conic/program.hpp"
#include "laptime/conic/solver.hpp"
#include "laptime/powertrain.hpp"
#include "laptime/track.hpp"

namespace laptime {

// Indices of the per-node decision variables inside the emitted program.
// States (e_kin, de_b) live on the N+1 grid points, controls and cones on
// the N left endpoints of the Euler-forward intervals.
struct VariableMap {
  int num_intervals = 0;  // N
  int num_vars = 0;
  bool speed_dependent = false;
  std::vector<int> dtds, v;                          // N
  std::vector<int> f_p, f_gb, f_m, f_dc, f_b, f_i;   // N
  std::vector<int> e_kin, de_b;                      // N+1
  std::vector<int> gamma;                            // N (CVT), 1 (shared SR), 0 (fixed SR)
  std::vector<int> omega;                            // N (speed-dependent only)
};

struct TranscriptionOptions {
  double v_floor = 1.0;  // m/s, keeps the lethargy cone away from its vertex
  bool speed_limit_includes_final_drive = true;  // gamma*gamma_fd <= w_max*r_w*dtds
};

namespace detail {

struct NodeData {
  double drag_e = 0.0;                // dF_d/dE_kin, 1/m
  std::vector<double> drag_c;         // constant drag term per node, N entries
  std::vector<double> v_max;          // N+1
  double v_cap = 0.0;                 // global envelope maximum
};

inline NodeData node_data(const TrackProfile& track, const VehicleParams& veh) {
  NodeData nd;
  nd.drag_e = veh.c_d * veh.A_f * veh.rho_air / veh.m_tot;
  const std::size_t n = track.num_intervals();
  nd.drag_c.resize(n);
  nd.v_max.resize(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    const double th = track.nodes[k].inclination_theta;
    nd.drag_c[k] = veh.m_tot * veh.g * (std::sin(th) + veh.c_r * std::cos(th));
  }
  for (std::size_t k = 0; k <= n; ++k) nd.v_max[k] = track.nodes[k].v_max;
  nd.v_cap = *std::max_element(nd.v_max.begin(), nd.v_max.end());
  return nd;
}

inline void check_inputs(const TrackProfile& track, const VehicleParams& veh,
                         const TransmissionSpec& trans, const MotorModel& motor,
                         const BatteryModel& batt) {
  validate(track);
  validate(veh);
  validate(trans);
  validate(motor);
  validate(batt);
}

// Shared constraint set of Problems 2 and 3; the EM loss coupling differs
// and is added by the caller.
class LapProgram {
 public:
  LapProgram(const TrackProfile& track, const VehicleParams& veh, const TransmissionSpec& trans,
             const MotorModel& motor, const BatteryModel& batt, const TranscriptionOptions& opts,
             bool speed_dependent)
      : track_(track), veh_(veh), trans_(trans), motor_(motor), batt_(batt), opts_(opts) {
    const int n = static_cast<int>(track.num_intervals());
    map_.num_intervals = n;
    map_.speed_dependent = speed_dependent;

    const bool cvt = trans.kind == TransmissionKind::Cvt;
    const bool shared_gamma = !cvt && trans.optimize_sr_ratio;
    const bool per_node_gamma = cvt;

    int next = 0;
    auto grab = [&next](std::vector<int>& dst, int count) {
      dst.resize(count);
      for (int i = 0; i < count; ++i) dst[i] = next++;
    };
    grab(map_.dtds, n);
    grab(map_.v, n);
    grab(map_.f_p, n);
    grab(map_.f_gb, n);
    grab(map_.f_m, n);
    grab(map_.f_dc, n);
    grab(map_.f_b, n);
    grab(map_.f_i, n);
    if (per_node_gamma) grab(map_.gamma, n);
    if (speed_dependent) grab(map_.omega, n);
    grab(map_.e_kin, n + 1);
    grab(map_.de_b, n + 1);
    if (shared_gamma) grab(map_.gamma, 1);
    map_.num_vars = next;

    builder_ = std::make_unique<conic::ProgramBuilder>(map_.num_vars);
    nd_ = node_data(track, veh);
  }

  // gamma coefficient for node k: either a variable term or a constant
  void gamma_term(conic::LinExpr& e, int k, double coeff) const {
    if (map_.gamma.empty()) {
      e.constant += coeff * trans_.gamma_1;
    } else {
      e.add(map_.gamma[map_.gamma.size() == 1 ? 0 : k], coeff);
    }
  }

  void emit_shared(bool include_p2_em_cone) {
    using conic::LinExpr;
    conic::ProgramBuilder& b = *builder_;
    const int n = map_.num_intervals;
    const double ds = track_.step_length;
    const double m = veh_.m_tot;
    const double dtds_min = 1.0 / nd_.v_cap;
    const double dtds_max = 1.0 / opts_.v_floor;

    for (int k = 0; k < n; ++k) {
      b.objective_coeff(map_.dtds[k], ds);

      // lethargy cone: dtds + v >= ||(2, dtds - v)||
      b.add_soc({LinExpr{}.add(map_.dtds[k], 1.0).add(map_.v[k], 1.0), LinExpr(2.0),
                 LinExpr{}.add(map_.dtds[k], 1.0).add(map_.v[k], -1.0)});

      // kinetic energy relaxation E >= m v^2/2 as v^2 <= (2E/m)*1
      b.add_soc({LinExpr(1.0).add(map_.e_kin[k], 2.0 / m), LinExpr{}.add(map_.v[k], 2.0),
                 LinExpr(-1.0).add(map_.e_kin[k], 2.0 / m)});

      // Euler-forward longitudinal dynamics
      {
        LinExpr e;
        e.add(map_.e_kin[k + 1], 1.0);
        e.add(map_.e_kin[k], -(1.0 - ds * nd_.drag_e));
        e.add(map_.f_p[k], -ds);
        e.constant = ds * nd_.drag_c[k];
        b.add_equality(e);
      }

      // propulsion relaxation F_p <= min(eta_fd F_gb, F_gb/eta_fd)
      b.add_nonneg(LinExpr{}.add(map_.f_gb[k], veh_.eta_fd).add(map_.f_p[k], -1.0));
      b.add_nonneg(LinExpr{}.add(map_.f_gb[k], 1.0 / veh_.eta_fd).add(map_.f_p[k], -1.0));

      // transmission relaxation F_gb <= min(eta_gb F_m, F_m/eta_gb)
      b.add_nonneg(LinExpr{}.add(map_.f_m[k], trans_.eta_gb).add(map_.f_gb[k], -1.0));
      b.add_nonneg(LinExpr{}.add(map_.f_m[k], 1.0 / trans_.eta_gb).add(map_.f_gb[k], -1.0));

      if (include_p2_em_cone) {
        // dtds + F_dc - F_m >= ||(2 sqrt(a_m) F_m, dtds - F_dc + F_m)||
        const double sa = std::sqrt(motor_.alpha_m);
        b.add_soc({LinExpr{}.add(map_.dtds[k], 1.0).add(map_.f_dc[k], 1.0).add(map_.f_m[k], -1.0),
                   LinExpr{}.add(map_.f_m[k], 2.0 * sa),
                   LinExpr{}.add(map_.dtds[k], 1.0).add(map_.f_dc[k], -1.0).add(map_.f_m[k], 1.0)});
      }

      // torque limit |F_m| <= gamma T_max / r_w
      {
        LinExpr hi;  // gamma T/r - F_m >= 0
        gamma_term(hi, k, motor_.T_max / veh_.r_w);
        hi.add(map_.f_m[k], -1.0);
        b.add_nonneg(hi);
        LinExpr lo;
        gamma_term(lo, k, motor_.T_max / veh_.r_w);
        lo.add(map_.f_m[k], 1.0);
        b.add_nonneg(lo);
      }

      // power limit |F_m| <= c_m1 gamma / r_w + c_m2 dtds
      {
        LinExpr hi;
        gamma_term(hi, k, motor_.c_m1 / veh_.r_w);
        hi.add(map_.dtds[k], motor_.c_m2).add(map_.f_m[k], -1.0);
        b.add_nonneg(hi);
        LinExpr lo;
        gamma_term(lo, k, motor_.c_m1 / veh_.r_w);
        lo.add(map_.dtds[k], motor_.c_m2).add(map_.f_m[k], 1.0);
        b.add_nonneg(lo);
      }

      // EM speed limit: gamma (* gamma_fd) <= w_max r_w dtds
      {
        LinExpr e;
        e.add(map_.dtds[k], motor_.omega_max * veh_.r_w);
        gamma_term(e, k, opts_.speed_limit_includes_final_drive ? -veh_.gamma_fd : -1.0);
        b.add_nonneg(e);
      }

      // battery terminal force: F_b = F_dc + P_aux dtds
      b.add_equality(LinExpr{}
                         .add(map_.f_b[k], 1.0)
                         .add(map_.f_dc[k], -1.0)
                         .add(map_.dtds[k], -veh_.P_aux));

      // battery internal-power cone
      {
        const double sb = std::sqrt(batt_.alpha_b);
        b.add_soc({LinExpr{}.add(map_.dtds[k], 1.0).add(map_.f_i[k], 1.0).add(map_.f_b[k], -1.0),
                   LinExpr{}.add(map_.f_b[k], 2.0 * sb),
                   LinExpr{}.add(map_.dtds[k], 1.0).add(map_.f_i[k], -1.0).add(map_.f_b[k], 1.0)});
      }

      // battery energy dynamics
      b.add_equality(LinExpr{}
                         .add(map_.de_b[k + 1], 1.0)
                         .add(map_.de_b[k], -1.0)
                         .add(map_.f_i[k], -ds));

      // variable bounds
      b.add_nonneg(LinExpr(-dtds_min).add(map_.dtds[k], 1.0));
      b.add_nonneg(LinExpr(dtds_max).add(map_.dtds[k], -1.0));
      b.add_nonneg(LinExpr(-opts_.v_floor).add(map_.v[k], 1.0));

      if (std::isfinite(veh_.a_brk_max))
        b.add_nonneg(LinExpr(veh_.m_tot * veh_.a_brk_max).add(map_.f_p[k], 1.0));

      if (trans_.kind == TransmissionKind::Cvt) {
        b.add_nonneg(LinExpr(-trans_.gamma_min).add(map_.gamma[k], 1.0));
        b.add_nonneg(LinExpr(trans_.gamma_max).add(map_.gamma[k], -1.0));
      }
    }

    // kinetic-energy envelope at every grid point
    for (int k = 0; k <= n; ++k)
      b.add_nonneg(conic::LinExpr(0.5 * m * nd_.v_max[k] * nd_.v_max[k]).add(map_.e_kin[k], -1.0));

    // periodicity, battery start, battery budget
    b.add_equality(conic::LinExpr{}.add(map_.e_kin[0], 1.0).add(map_.e_kin[n], -1.0));
    b.add_equality(conic::LinExpr{}.add(map_.de_b[0], 1.0));
    b.add_nonneg(conic::LinExpr(batt_.delta_Eb_max).add(map_.de_b[n], -1.0));

    if (map_.gamma.size() == 1)  // shared SR design ratio stays positive
      b.add_nonneg(conic::LinExpr(-1e-3).add(map_.gamma[0], 1.0));
  }

  conic::ProgramBuilder& builder() { return *builder_; }
  VariableMap& map() { return map_; }

 private:
  const TrackProfile& track_;
  const VehicleParams& veh_;
  const TransmissionSpec& trans_;
  const MotorModel& motor_;
  const BatteryModel& batt_;
  TranscriptionOptions opts_;
  VariableMap map_;
  std::unique_ptr<conic::ProgramBuilder> builder_;
  NodeData nd_;
};

}  // namespace detail

// Problem 2: speed-independent EM loss model (quadratic in motor force via
// the lethargy-scaled cone).
inline std::pair<conic::ConicProgram, VariableMap> build_problem2(
    const TrackProfile& track, const VehicleParams& vehicle, const TransmissionSpec& trans,
    const MotorModel& motor, const BatteryModel& battery, const TranscriptionOptions& opts = {}) {
  detail::check_inputs(track, vehicle, trans, motor, battery);
  detail::LapProgram lp(track, vehicle, trans, motor, battery, opts, /*speed_dependent=*/false);
  lp.emit_shared(/*include_p2_em_cone=*/true);
  VariableMap map = lp.map();
  return {lp.builder().finalize(), std::move(map)};
}

// Problem 3: speed-dependent EM loss at a fixed velocity profile v_bar. The
// PSD loss matrix is factored as Q = L L' and the loss appears as one
// rotated second-order cone per node.
inline std::pair<conic::ConicProgram, VariableMap> build_problem3(
    const TrackProfile& track, const VehicleParams& vehicle, const TransmissionSpec& trans,
    const MotorModel& motor, const BatteryModel& battery, const std::vector<double>& v_bar,
    const TranscriptionOptions& opts = {}) {
  detail::check_inputs(track, vehicle, trans, motor, battery);
  const int n = static_cast<int>(track.num_intervals());
  if (static_cast<int>(v_bar.size()) != n)
    throw std::invalid_argument("build_problem3: v_bar length must equal interval count");
  for (double v : v_bar)
    if (!(v > 0.0)) throw std::invalid_argument("build_problem3: v_bar must be strictly positive");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(motor.Q);
  if (es.info() != Eigen::Success)
    throw std::invalid_argument("build_problem3: eigendecomposition of Q failed");
  const double ev_scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * ev_scale)
    throw std::invalid_argument("build_problem3: Q is not positive semi-definite");

  // retained factor columns of L' (y = L' x has one row per positive eigenvalue)
  std::vector<Eigen::Vector3d> l_rows;
  for (int i = 0; i < 3; ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev > 1e-14 * ev_scale)
      l_rows.push_back(std::sqrt(ev) * es.eigenvectors().col(i));
  }

  detail::LapProgram lp(track, vehicle, trans, motor, battery, opts, /*speed_dependent=*/true);
  lp.emit_shared(/*include_p2_em_cone=*/false);
  conic::ProgramBuilder& b = lp.builder();
  const VariableMap& map = lp.map();

  for (int k = 0; k < n; ++k) {
    // motor speed at the fixed profile: omega = gamma vbar gamma_fd / r_w
    conic::LinExpr speed;
    speed.add(map.omega[k], 1.0);
    lp.gamma_term(speed, k, -v_bar[k] * vehicle.gamma_fd / vehicle.r_w);
    b.add_equality(speed);
    b.add_nonneg(conic::LinExpr(motor.omega_max).add(map.omega[k], -1.0));

    // F_dc - F_m >= x'Qx / vbar with x = [1, omega, F_m vbar]:
    // ||L'x||^2 <= vbar (F_dc - F_m) as a rotated cone
    std::vector<conic::LinExpr> rows;
    rows.push_back(conic::LinExpr(v_bar[k]).add(map.f_dc[k], 1.0).add(map.f_m[k], -1.0));
    for (const Eigen::Vector3d& l : l_rows) {
      conic::LinExpr y(2.0 * l(0));
      y.add(map.omega[k], 2.0 * l(1));
      y.add(map.f_m[k], 2.0 * l(2) * v_bar[k]);
      rows.push_back(y);
    }
    rows.push_back(conic::LinExpr(-v_bar[k]).add(map.f_dc[k], 1.0).add(map.f_m[k], -1.0));
    b.add_soc(rows);
  }

  VariableMap out_map = lp.map();
  return {b.finalize(), std::move(out_map)};
}

// Physical per-node trajectories recovered from a solver point.
struct LapTrajectories {
  double step_length = 0.0;
  double m_tot = 0.0;  // vehicle mass behind e_kin, for derived speeds
  std::vector<double> s;                                  // N+1
  std::vector<double> dtds, v;                            // N
  std::vector<double> e_kin, de_b;                        // N+1
  std::vector<double> f_p, f_gb, f_m, f_dc, f_b, f_i;     // N
  std::vector<double> gamma, omega_m;                     // N
  std::vector<double> p_m, p_dc, p_b, p_i;                // N, via P = F v
  std::vector<double> f_brk;                              // N, recovered
  double lap_time = 0.0;
  double sr_ratio = std::numeric_limits<double>::quiet_NaN();
};

inline LapTrajectories extract_trajectories(const conic::ConicSolution& sol,
                                            const VariableMap& map, const TrackProfile& track,
                                            const VehicleParams& vehicle) {
  if (sol.status != conic::SolveStatus::Optimal)
    throw std::runtime_error(std::string("extract_trajectories: solution status is ") +
                             conic::to_string(sol.status));
  const int n = map.num_intervals;
  LapTrajectories t;
  t.step_length = track.step_length;
  t.m_tot = vehicle.m_tot;
  auto pick = [&](const std::vector<int>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = sol.x(idx[i]);
    return out;
  };
  t.dtds = pick(map.dtds);
  t.v = pick(map.v);
  t.e_kin = pick(map.e_kin);
  t.de_b = pick(map.de_b);
  t.f_p = pick(map.f_p);
  t.f_gb = pick(map.f_gb);
  t.f_m = pick(map.f_m);
  t.f_dc = pick(map.f_dc);
  t.f_b = pick(map.f_b);
  t.f_i = pick(map.f_i);

  t.s.resize(n + 1);
  for (int k = 0; k <= n; ++k) t.s[k] = track.nodes[k].position;

  t.gamma.resize(n);
  if (map.gamma.size() == static_cast<std::size_t>(n)) {
    for (int k = 0; k < n; ++k) t.gamma[k] = sol.x(map.gamma[k]);
  } else if (map.gamma.size() == 1) {
    std::fill(t.gamma.begin(), t.gamma.end(), sol.x(map.gamma[0]));
    t.sr_ratio = sol.x(map.gamma[0]);
  }

  t.omega_m.resize(n);
  for (int k = 0; k < n; ++k)
    t.omega_m[k] = map.speed_dependent ? sol.x(map.omega[k])
                                       : t.gamma[k] * t.v[k] * vehicle.gamma_fd / vehicle.r_w;

  t.p_m.resize(n);
  t.p_dc.resize(n);
  t.p_b.resize(n);
  t.p_i.resize(n);
  t.f_brk.resize(n);
  t.lap_time = 0.0;
  for (int k = 0; k < n; ++k) {
    t.p_m[k] = t.f_m[k] * t.v[k];
    t.p_dc[k] = t.f_dc[k] * t.v[k];
    t.p_b[k] = t.f_b[k] * t.v[k];
    t.p_i[k] = t.f_i[k] * t.v[k];
    const double cap = std::min(vehicle.eta_fd * t.f_gb[k], t.f_gb[k] / vehicle.eta_fd);
    t.f_brk[k] = std::max(0.0, cap - t.f_p[k]);
    t.lap_time += track.step_length * t.dtds[k];
  }
  return t;
}

// Worst relative slack of every relaxed constraint over the lap. All entries
// are ~0 when the paper's equality-at-optimum property holds.
struct TightnessReport {
  double lethargy = 0.0;
  double kinetic = 0.0;
  double propulsion = 0.0;
  double gearbox = 0.0;
  double em_cone = 0.0;
  double battery_cone = 0.0;
  double worst() const {
    return std::max({lethargy, kinetic, propulsion, gearbox, em_cone, battery_cone});
  }
};

inline TightnessReport compute_tightness(const LapTrajectories& t, const VehicleParams& vehicle,
                                         const TransmissionSpec& trans, const MotorModel& motor,
                                         const BatteryModel& battery, bool speed_dependent,
                                         const std::vector<double>& v_bar = {}) {
  TightnessReport r;
  const int n = static_cast<int>(t.dtds.size());
  for (int k = 0; k < n; ++k) {
    r.lethargy = std::max(r.lethargy, std::abs(t.dtds[k] * t.v[k] - 1.0));
    const double ek_phys = 0.5 * vehicle.m_tot * t.v[k] * t.v[k];
    r.kinetic = std::max(r.kinetic, std::abs(t.e_kin[k] - ek_phys) / std::max(1.0, t.e_kin[k]));

    const double f_scale = std::max({1.0, std::abs(t.f_p[k]), std::abs(t.f_m[k])});
    const double cap_p = std::min(vehicle.eta_fd * t.f_gb[k], t.f_gb[k] / vehicle.eta_fd);
    r.propulsion = std::max(r.propulsion, std::abs(cap_p - t.f_p[k]) / f_scale);
    const double cap_gb = std::min(trans.eta_gb * t.f_m[k], t.f_m[k] / trans.eta_gb);
    r.gearbox = std::max(r.gearbox, std::abs(cap_gb - t.f_gb[k]) / f_scale);

    if (speed_dependent) {
      const double vb = v_bar.empty() ? t.v[k] : v_bar[k];
      const Eigen::Vector3d x(1.0, t.omega_m[k], t.f_m[k] * vb);
      const double loss = x.dot(motor.Q * x) / vb;
      r.em_cone = std::max(r.em_cone,
                           std::abs(t.f_dc[k] - t.f_m[k] - loss) / std::max(1.0, std::abs(t.f_dc[k])));
    } else {
      const double lhs = t.dtds[k] * (t.f_dc[k] - t.f_m[k]);
      const double rhs = motor.alpha_m * t.f_m[k] * t.f_m[k];
      r.em_cone = std::max(r.em_cone, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    const double bl = t.dtds[k] * (t.f_i[k] - t.f_b[k]);
    const double br = battery.alpha_b * t.f_b[k] * t.f_b[k];
    r.battery_cone = std::max(r.battery_cone, std::abs(bl - br) / std::max(1.0, std::abs(bl)));
  }
  return r;
}

}  // namespace laptime
