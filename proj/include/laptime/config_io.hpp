#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "laptime/errors.hpp"
#include "laptime/fitting.hpp"
#include "laptime/lap_optimizer.hpp"
#include "laptime/powertrain.hpp"
#include "laptime/transcription.hpp"

namespace laptime {

struct ModelSet {
  VehicleParams vehicle;
  TransmissionSpec transmission;
  MotorModel motor;
  BatteryModel battery;
};

inline ModelSet load_models_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelSet m;
  try {
    const auto& v = j.at("vehicle");
    m.vehicle.m_tot = v.at("m_tot_kg").get<double>();
    m.vehicle.c_d = v.at("c_d").get<double>();
    m.vehicle.A_f = v.at("A_f_m2").get<double>();
    m.vehicle.rho_air = v.at("rho_air_kgpm3").get<double>();
    m.vehicle.g = v.value("g_mps2", 9.81);
    m.vehicle.c_r = v.at("c_r").get<double>();
    m.vehicle.eta_fd = v.at("eta_fd").get<double>();
    m.vehicle.r_w = v.at("r_w_m").get<double>();
    m.vehicle.gamma_fd = v.at("gamma_fd").get<double>();
    m.vehicle.P_aux = v.at("P_aux_W").get<double>();
    if (v.contains("a_brk_max_mps2") && !v.at("a_brk_max_mps2").is_null())
      m.vehicle.a_brk_max = v.at("a_brk_max_mps2").get<double>();

    const auto& t = j.at("transmission");
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "sr") m.transmission.kind = TransmissionKind::SingleRatio;
    else if (kind == "cvt") m.transmission.kind = TransmissionKind::Cvt;
    else throw ParseError("model config: transmission kind must be 'sr' or 'cvt'");
    m.transmission.gamma_1 = t.value("gamma_1", 0.0);
    m.transmission.gamma_min = t.value("gamma_min", 0.0);
    m.transmission.gamma_max = t.value("gamma_max", 0.0);
    m.transmission.eta_gb = t.at("eta_gb").get<double>();
    m.transmission.optimize_sr_ratio = t.value("optimize_sr_ratio", true);

    const auto& mo = j.at("motor");
    m.motor.alpha_m = mo.at("alpha_m_per_watt").get<double>();
    if (mo.contains("Q")) {
      const auto& q = mo.at("Q");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m.motor.Q(r, c) = q.at(r).at(c).get<double>();
    }
    m.motor.T_max = mo.at("T_max_Nm").get<double>();
    m.motor.c_m1 = mo.at("c_m1_Ws_per_rad").get<double>();
    m.motor.c_m2 = mo.at("c_m2_W").get<double>();
    m.motor.omega_max = mo.at("omega_max_radps").get<double>();

    const auto& b = j.at("battery");
    m.battery = BatteryModel(b.at("alpha_b_per_watt").get<double>(), b.at("E_b0_J").get<double>(),
                             b.value("N_laps", 1));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  validate(m.vehicle);
  validate(m.transmission);
  validate(m.motor);
  validate(m.battery);
  return m;
}

inline ModelSet load_models_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model config: " + path);
  return load_models_json(in);
}

inline void save_models_json(const ModelSet& m, std::ostream& out) {
  nlohmann::json j;
  j["vehicle"] = {{"m_tot_kg", m.vehicle.m_tot},
                  {"c_d", m.vehicle.c_d},
                  {"A_f_m2", m.vehicle.A_f},
                  {"rho_air_kgpm3", m.vehicle.rho_air},
                  {"g_mps2", m.vehicle.g},
                  {"c_r", m.vehicle.c_r},
                  {"eta_fd", m.vehicle.eta_fd},
                  {"r_w_m", m.vehicle.r_w},
                  {"gamma_fd", m.vehicle.gamma_fd},
                  {"P_aux_W", m.vehicle.P_aux}};
  if (std::isfinite(m.vehicle.a_brk_max)) j["vehicle"]["a_brk_max_mps2"] = m.vehicle.a_brk_max;
  j["transmission"] = {
      {"kind", m.transmission.kind == TransmissionKind::Cvt ? "cvt" : "sr"},
      {"gamma_1", m.transmission.gamma_1},
      {"gamma_min", m.transmission.gamma_min},
      {"gamma_max", m.transmission.gamma_max},
      {"eta_gb", m.transmission.eta_gb},
      {"optimize_sr_ratio", m.transmission.optimize_sr_ratio}};
  j["motor"] = {{"alpha_m_per_watt", m.motor.alpha_m},
                {"T_max_Nm", m.motor.T_max},
                {"c_m1_Ws_per_rad", m.motor.c_m1},
                {"c_m2_W", m.motor.c_m2},
                {"omega_max_radps", m.motor.omega_max}};
  j["motor"]["Q"] = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    j["motor"]["Q"].push_back({m.motor.Q(r, 0), m.motor.Q(r, 1), m.motor.Q(r, 2)});
  j["battery"] = {{"alpha_b_per_watt", m.battery.alpha_b},
                  {"E_b0_J", m.battery.E_b0},
                  {"N_laps", m.battery.N_laps}};
  out << j.dump(2) << '\n';
}

// Loss-map samples: `omega_radps,power_w,loss_w` with the omega column
// optional (battery data has none).
inline std::vector<LossSample> load_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("samples csv: empty input");
  std::vector<std::string> header;
  {
    std::string cur;
    for (char c : line) {
      if (c == ',') { header.push_back(cur); cur.clear(); }
      else if (c != '\r') cur += c;
    }
    header.push_back(cur);
  }
  int col_w = -1, col_p = -1, col_l = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "omega_radps") col_w = i;
    else if (header[i] == "power_w") col_p = i;
    else if (header[i] == "loss_w") col_l = i;
    else throw ParseError("samples csv: unknown column '" + header[i] + "'");
  }
  if (col_p < 0 || col_l < 0) throw ParseError("samples csv: need power_w and loss_w columns");

  std::vector<LossSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') { f.push_back(cur); cur.clear(); }
      else if (c != '\r') cur += c;
    }
    f.push_back(cur);
    if (f.size() != header.size())
      throw ParseError("samples csv: wrong field count at line " + std::to_string(line_no));
    LossSample s;
    try {
      if (col_w >= 0) s.omega = std::stod(f[col_w]);
      s.power = std::stod(f[col_p]);
      s.loss = std::stod(f[col_l]);
    } catch (const std::exception&) {
      throw ParseError("samples csv: malformed value at line " + std::to_string(line_no));
    }
    samples.push_back(s);
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Result writers. Output is deterministic for identical inputs: full-precision
// numbers, no timestamps.

inline void write_trajectory_csv(const LapTrajectories& t, std::ostream& out) {
  out << "s_m,v_mps,dtds_spm,E_kin_J,dE_b_J,F_p_N,F_gb_N,F_m_N,F_dc_N,F_b_N,F_i_N,"
         "gamma,omega_m_radps,P_m_W,P_dc_W,P_b_W,P_i_W,F_brk_N,t_accum_s\n";
  out << std::setprecision(17);
  const std::size_t n = t.dtds.size();
  double t_acc = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const bool last = k == n;
    const double v = last ? std::sqrt(2.0 * t.e_kin[k] / t.m_tot) : t.v[k];
    out << t.s[k] << ',' << v << ',';
    auto ctrl = [&](const std::vector<double>& a) {
      if (last) out << "nan";
      else out << a[k];
      out << ',';
    };
    ctrl(t.dtds);
    out << t.e_kin[k] << ',' << t.de_b[k] << ',';
    ctrl(t.f_p);
    ctrl(t.f_gb);
    ctrl(t.f_m);
    ctrl(t.f_dc);
    ctrl(t.f_b);
    ctrl(t.f_i);
    ctrl(t.gamma);
    ctrl(t.omega_m);
    ctrl(t.p_m);
    ctrl(t.p_dc);
    ctrl(t.p_b);
    ctrl(t.p_i);
    ctrl(t.f_brk);
    out << t_acc << '\n';
    if (!last) t_acc += t.step_length * t.dtds[k];
  }
}

inline nlohmann::json tightness_json(const TightnessReport& r) {
  return {{"lethargy", r.lethargy},       {"kinetic", r.kinetic},
          {"propulsion", r.propulsion},   {"gearbox", r.gearbox},
          {"em_cone", r.em_cone},         {"battery_cone", r.battery_cone}};
}

inline void write_summary_json(const LapResult& r, const AlgorithmSettings& settings,
                               std::ostream& out) {
  nlohmann::json j;
  j["status"] = conic::to_string(r.status);
  j["converged"] = r.converged;
  j["outer_iterations"] = r.outer_iterations;
  if (r.status == conic::SolveStatus::Optimal) {
    j["lap_time_s"] = r.trajectories.lap_time;
    j["energy_used_J"] = r.energy_used;
    j["tightness"] = tightness_json(r.tightness);
    if (std::isfinite(r.sr_ratio_optimal)) j["sr_ratio_optimal"] = r.sr_ratio_optimal;
  } else {
    j["infeasible_reason"] = r.infeasible_reason;
  }
  j["settings"] = {{"epsilon_v_mps", settings.epsilon_v},
                   {"max_outer_iters", settings.max_outer_iters},
                   {"tightness_tol", settings.tightness_tol},
                   {"solver",
                    {{"tol_feas", settings.solver.tol_feas},
                     {"tol_gap_rel", settings.solver.tol_gap_rel},
                     {"max_iters", settings.solver.max_iters},
                     {"static_regularization", settings.solver.static_regularization}}}};
  out << j.dump(2) << '\n';
}

inline void write_sweep_csv(const SweepResult& r, std::ostream& out) {
  out << "eta_gb,energy_mj,t_sr_s,t_cvt_s,delta_t_s\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < r.eta_values.size(); ++i)
    for (std::size_t j = 0; j < r.energy_values.size(); ++j)
      out << r.eta_values[i] << ',' << r.energy_values[j] / 1e6 << ',' << r.t_sr[j] << ','
          << r.cvt_at(i, j) << ',' << r.delta_at(i, j) << '\n';
}

// Join two trajectory CSVs on s and emit the accumulated time difference.
inline void compare_trajectories_csv(std::istream& a, std::istream& b, std::ostream& out) {
  auto read = [](std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("compare: empty trajectory file");
    std::vector<std::array<double, 3>> rows;  // s, v, t_accum
    std::vector<std::string> cols;
    {
      std::string cur;
      for (char c : line) {
        if (c == ',') { cols.push_back(cur); cur.clear(); }
        else if (c != '\r') cur += c;
      }
      cols.push_back(cur);
    }
    int is = -1, iv = -1, it = -1;
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
      if (cols[i] == "s_m") is = i;
      else if (cols[i] == "v_mps") iv = i;
      else if (cols[i] == "t_accum_s") it = i;
    }
    if (is < 0 || iv < 0 || it < 0)
      throw ParseError("compare: trajectory file lacks s_m/v_mps/t_accum_s columns");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::string cur;
      for (char c : line) {
        if (c == ',') { f.push_back(cur); cur.clear(); }
        else if (c != '\r') cur += c;
      }
      f.push_back(cur);
      rows.push_back({std::stod(f[is]), std::stod(f[iv]), std::stod(f[it])});
    }
    return rows;
  };
  const auto ra = read(a), rb = read(b);
  if (ra.size() != rb.size()) throw ValidationError("compare: trajectories have different grids");
  out << "s_m,v_a_mps,v_b_mps,t_accum_a_s,t_accum_b_s,delta_t_s\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < ra.size(); ++k) {
    if (std::abs(ra[k][0] - rb[k][0]) > 1e-9)
      throw ValidationError("compare: trajectories have different grids");
    out << ra[k][0] << ',' << ra[k][1] << ',' << rb[k][1] << ',' << ra[k][2] << ',' << rb[k][2]
        << ',' << ra[k][2] - rb[k][2] << '\n';
  }
}

}  // namespace laptime
