#pragma once

// Shared synthetic fixtures. All constants here are made up for testing:
// masses and efficiency products follow the usual race-car ballpark, the
// rest is chosen so the solver sees realistic magnitudes.

#include <limits>
#include <vector>

#include "laptime/laptime.hpp"

namespace fixtures {

using namespace laptime;

inline VehicleParams vehicle_sr() {
  VehicleParams v;
  v.m_tot = 1341.0;
  v.c_d = 1.0;
  v.A_f = 1.5;
  v.rho_air = 1.2041;
  v.g = 9.81;
  v.c_r = 0.01;
  v.eta_fd = 0.99;
  v.r_w = 0.33;
  v.gamma_fd = 3.0;
  v.P_aux = 1500.0;
  return v;
}

inline VehicleParams vehicle_cvt() {
  VehicleParams v = vehicle_sr();
  v.m_tot = 1395.0;
  return v;
}

// eta_fd * eta_gb products ~ 0.98 (SR) and 0.96 (CVT)
inline TransmissionSpec transmission_sr(bool optimize_ratio = true) {
  TransmissionSpec t;
  t.kind = TransmissionKind::SingleRatio;
  t.gamma_1 = 1.3;
  t.eta_gb = 0.98 / 0.99;
  t.optimize_sr_ratio = optimize_ratio;
  return t;
}

inline TransmissionSpec transmission_cvt() {
  TransmissionSpec t;
  t.kind = TransmissionKind::Cvt;
  t.gamma_min = 0.8;
  t.gamma_max = 2.4;
  t.eta_gb = 0.96 / 0.99;
  return t;
}

inline MotorModel motor() {
  MotorModel m;
  m.alpha_m = 1.3e-7;
  m.Q << 1500.0, 1.0,    1e-5,
         1.0,    4e-3,   5e-6,
         1e-5,   5e-6,   0.9e-7;
  m.T_max = 1200.0;
  m.c_m1 = -40.0;
  m.c_m2 = 3.3e5;
  m.omega_max = 1300.0;
  return m;
}

inline BatteryModel battery(double budget_joules, int n_laps = 1) {
  return BatteryModel(1e-7, budget_joules * n_laps, n_laps);
}

// --- tracks ---------------------------------------------------------------

inline TrackProfile flat_1km(double step = 10.0) {
  return synthesize_track({{1000.0, 0.0, 0.0}}, step, 12.0, 50.0, "flat_1km");
}

inline TrackProfile corner_2km(double step = 10.0) {
  return synthesize_track(
      {
          {700.0, 0.0, 0.0},
          {160.0, 120.0, 0.0},
          {500.0, 0.0, 0.0},
          {140.0, 60.0, 0.0},
          {500.0, 0.0, 0.0},
      },
      step, 12.0, 65.0, "corner_2km");
}

inline TrackProfile corner_4km(double step = 10.0) {
  return synthesize_track(
      {
          {900.0, 0.0, 0.0},
          {180.0, 150.0, 0.0},
          {600.0, 0.0, 0.0},
          {140.0, 70.0, 0.0},
          {700.0, 0.0, 0.0},
          {200.0, 200.0, 0.0},
          {680.0, 0.0, 0.0},
          {120.0, 50.0, 0.0},
          {480.0, 0.0, 0.0},
      },
      step, 12.0, 70.0, "corner_4km");
}

inline TrackProfile hilly_3km(double step = 10.0) {
  return synthesize_track(
      {
          {800.0, 0.0, 0.03},
          {150.0, 100.0, 0.03},
          {650.0, 0.0, -0.02},
          {150.0, 80.0, -0.02},
          {750.0, 0.0, 0.01},
          {100.0, 60.0, 0.0},
          {400.0, 0.0, 0.0},
      },
      step, 12.0, 65.0, "hilly_3km");
}

// Le-Mans-length synthetic circuit: 1358 nodes at 10 m (13 570 m).
inline TrackProfile lemans_like(double step = 10.0) {
  return synthesize_track(
      {
          {1400.0, 0.0, 0.0},   {250.0, 180.0, 0.0}, {2100.0, 0.0, 0.0},
          {180.0, 70.0, 0.0},   {1500.0, 0.0, 0.01}, {300.0, 250.0, 0.01},
          {1800.0, 0.0, -0.01}, {150.0, 55.0, 0.0},  {1200.0, 0.0, 0.0},
          {220.0, 130.0, 0.0},  {1700.0, 0.0, 0.0},  {160.0, 60.0, 0.0},
          {980.0, 0.0, 0.0},    {230.0, 90.0, 0.0},  {1400.0, 0.0, 0.0},
      },
      step, 12.0, 80.0, "lemans_like");
}

inline AlgorithmSettings default_settings() {
  AlgorithmSettings s;
  return s;
}

}  // namespace fixtures
