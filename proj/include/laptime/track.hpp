#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
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

namespace laptime {

struct TrackNode {
  double position = 0.0;           // m from lap start
  double inclination_theta = 0.0;  // rad, |theta| < pi/2
  double v_max = 0.0;              // m/s, > 0
};

// Discretized racetrack on a uniform grid: inclination and maximum-speed
// envelope per node. Immutable by convention once validated; safe to share
// across concurrent solves.
struct TrackProfile {
  std::string name;
  double step_length = 0.0;  // m between consecutive nodes
  std::vector<TrackNode> nodes;

  double total_length() const {
    return nodes.empty() ? 0.0 : step_length * static_cast<double>(nodes.size() - 1);
  }
  std::size_t num_intervals() const { return nodes.empty() ? 0 : nodes.size() - 1; }
};

namespace detail {
inline constexpr double kGridRelTol = 1e-9;
}

inline void validate(const TrackProfile& t) {
  if (t.step_length <= 0.0 || !std::isfinite(t.step_length))
    throw ValidationError("track: step_length must be positive");
  if (t.nodes.size() < 2) throw ValidationError("track: need at least 2 nodes");
  const double half_pi = std::asin(1.0);
  for (std::size_t k = 0; k < t.nodes.size(); ++k) {
    const TrackNode& n = t.nodes[k];
    if (!(n.v_max > 0.0) || !std::isfinite(n.v_max))
      throw ValidationError("track: v_max must be positive and finite at node " + std::to_string(k));
    if (!(std::abs(n.inclination_theta) < half_pi))
      throw ValidationError("track: |theta| must be < pi/2 at node " + std::to_string(k));
    if (k > 0) {
      const double gap = n.position - t.nodes[k - 1].position;
      if (gap <= 0.0)
        throw ValidationError("track: positions must be strictly increasing at node " + std::to_string(k));
      if (std::abs(gap - t.step_length) > detail::kGridRelTol * std::max(1.0, t.step_length))
        throw ValidationError("track: non-uniform grid at node " + std::to_string(k));
    }
  }
}

inline double max_envelope_speed(const TrackProfile& t) {
  double v = 0.0;
  for (const TrackNode& n : t.nodes) v = std::max(v, n.v_max);
  return v;
}

// v_max from a curvature profile: v_max[k] = min(v_cap, sqrt(a_lat_max/|kappa|)),
// with straight-line nodes (kappa == 0) capped at v_cap.
inline std::vector<double> precompute_vmax(const std::vector<double>& curvature,
                                           double a_lat_max, double v_cap) {
  if (!(a_lat_max > 0.0)) throw ValidationError("precompute_vmax: a_lat_max must be > 0");
  if (!(v_cap > 0.0)) throw ValidationError("precompute_vmax: v_cap must be > 0");
  std::vector<double> v(curvature.size());
  for (std::size_t k = 0; k < curvature.size(); ++k) {
    const double kappa = curvature[k];
    if (!std::isfinite(kappa)) throw ValidationError("precompute_vmax: curvature must be finite");
    v[k] = kappa == 0.0 ? v_cap : std::min(v_cap, std::sqrt(a_lat_max / std::abs(kappa)));
  }
  return v;
}

enum class TrackFormat { Csv, Json };

// Optional rule for CSV inputs that carry curvature instead of v_max.
struct CurvatureRule {
  double a_lat_max = 0.0;  // m/s^2
  double v_cap = 0.0;      // m/s
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("track csv: malformed value '" + s + "' at line " + std::to_string(line_no));
  }
}

inline TrackProfile from_uniform_table(std::vector<TrackNode> nodes, const std::string& name) {
  TrackProfile t;
  t.name = name;
  t.nodes = std::move(nodes);
  if (t.nodes.size() < 2) throw ValidationError("track: need at least 2 nodes");
  t.step_length = t.nodes[1].position - t.nodes[0].position;
  validate(t);
  return t;
}

}  // namespace detail

// Parses `position_m,theta_rad,v_max_mps` or the curvature variants
// `position_m,curvature_per_m` / `position_m,theta_rad,curvature_per_m`.
inline TrackProfile load_track_csv(std::istream& in, const CurvatureRule* rule = nullptr,
                                   const std::string& name = "") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("track csv: empty input");
  const std::vector<std::string> header = detail::split_csv_line(line);

  int col_pos = -1, col_theta = -1, col_vmax = -1, col_kappa = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "position_m") col_pos = i;
    else if (header[i] == "theta_rad") col_theta = i;
    else if (header[i] == "v_max_mps") col_vmax = i;
    else if (header[i] == "curvature_per_m") col_kappa = i;
    else throw ParseError("track csv: unknown column '" + header[i] + "'");
  }
  if (col_pos < 0) throw ParseError("track csv: missing column position_m");
  if (col_vmax < 0 && col_kappa < 0)
    throw ParseError("track csv: need v_max_mps or curvature_per_m column");
  if (col_kappa >= 0 && rule == nullptr)
    throw ValidationError("track csv: curvature input requires a v_max rule (a_lat_max, v_cap)");

  std::vector<TrackNode> nodes;
  std::vector<double> curvature;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (static_cast<int>(f.size()) != static_cast<int>(header.size()))
      throw ParseError("track csv: wrong field count at line " + std::to_string(line_no));
    TrackNode n;
    n.position = detail::parse_double(f[col_pos], line_no);
    n.inclination_theta = col_theta >= 0 ? detail::parse_double(f[col_theta], line_no) : 0.0;
    if (col_vmax >= 0) {
      n.v_max = detail::parse_double(f[col_vmax], line_no);
    } else {
      curvature.push_back(detail::parse_double(f[col_kappa], line_no));
      n.v_max = 1.0;  // filled below
    }
    nodes.push_back(n);
  }
  if (col_kappa >= 0) {
    const std::vector<double> v = precompute_vmax(curvature, rule->a_lat_max, rule->v_cap);
    for (std::size_t k = 0; k < nodes.size(); ++k) nodes[k].v_max = v[k];
  }
  return detail::from_uniform_table(std::move(nodes), name);
}

inline TrackProfile load_track_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("track json: ") + e.what());
  }
  TrackProfile t;
  try {
    t.name = j.value("name", std::string{});
    t.step_length = j.at("step_length_m").get<double>();
    for (const auto& jn : j.at("nodes")) {
      TrackNode n;
      n.position = jn.at("s").get<double>();
      n.inclination_theta = jn.at("theta").get<double>();
      n.v_max = jn.at("v_max").get<double>();
      t.nodes.push_back(n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("track json: ") + e.what());
  }
  validate(t);
  return t;
}

inline TrackProfile load_track(std::istream& in, TrackFormat format,
                               const CurvatureRule* rule = nullptr,
                               const std::string& name = "") {
  return format == TrackFormat::Csv ? load_track_csv(in, rule, name) : load_track_json(in);
}

inline TrackProfile load_track_file(const std::string& path, const CurvatureRule* rule = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file: " + path);
  const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  std::string name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos)
    name = name.substr(slash + 1);
  if (const auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
  return load_track(in, json ? TrackFormat::Json : TrackFormat::Csv, rule, name);
}

inline void save_track_csv(const TrackProfile& t, std::ostream& out) {
  out << "position_m,theta_rad,v_max_mps\n";
  out << std::setprecision(17);
  for (const TrackNode& n : t.nodes)
    out << n.position << ',' << n.inclination_theta << ',' << n.v_max << '\n';
}

inline void save_track_json(const TrackProfile& t, std::ostream& out) {
  nlohmann::json j;
  j["name"] = t.name;
  j["step_length_m"] = t.step_length;
  j["nodes"] = nlohmann::json::array();
  for (const TrackNode& n : t.nodes)
    j["nodes"].push_back({{"s", n.position}, {"theta", n.inclination_theta}, {"v_max", n.v_max}});
  out << j.dump(2) << '\n';
}

// Resample to a coarser or finer uniform grid. theta is interpolated linearly;
// v_max takes the minimum over the original nodes covered by the forward
// window [pos_k, pos_k + new_step) so the resampled envelope never exceeds
// the original between sample points.
inline TrackProfile resample(const TrackProfile& t, double new_step) {
  validate(t);
  if (!(new_step > 0.0)) throw ValidationError("resample: step must be > 0");
  const double total = t.total_length();
  if (new_step > total + detail::kGridRelTol) throw ValidationError("resample: step exceeds track length");
  const double ratio = total / new_step;
  const double n_intervals = std::round(ratio);
  if (std::abs(ratio - n_intervals) > detail::kGridRelTol * std::max(1.0, ratio))
    throw ValidationError("resample: step must divide track length");

  const std::size_t num_new = static_cast<std::size_t>(n_intervals) + 1;
  TrackProfile out;
  out.name = t.name;
  out.step_length = new_step;
  out.nodes.resize(num_new);
  for (std::size_t k = 0; k < num_new; ++k) {
    const double pos = (k + 1 == num_new) ? total : static_cast<double>(k) * new_step;
    TrackNode& n = out.nodes[k];
    n.position = static_cast<double>(k) * new_step;

    // linear interpolation of theta
    const double u = pos / t.step_length;
    const std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(u)), t.nodes.size() - 2);
    const double frac = u - static_cast<double>(i0);
    n.inclination_theta = (1.0 - frac) * t.nodes[i0].inclination_theta +
                          frac * t.nodes[i0 + 1].inclination_theta;

    // conservative v_max over covered finer nodes
    if (k + 1 == num_new) {
      n.v_max = t.nodes.back().v_max;
    } else {
      const double lo = pos, hi = pos + new_step;
      double v = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < t.nodes.size(); ++j) {
        const double p = t.nodes[j].position;
        if (p >= lo - detail::kGridRelTol && p < hi - detail::kGridRelTol)
          v = std::min(v, t.nodes[j].v_max);
      }
      if (!std::isfinite(v)) {
        // window covered no original node (finer grid): fall back to neighbors
        const std::size_t j1 = std::min(i0 + 1, t.nodes.size() - 1);
        v = std::min(t.nodes[i0].v_max, t.nodes[j1].v_max);
      }
      n.v_max = v;
    }
  }
  validate(out);
  return out;
}

// Piecewise segment description used to synthesize test tracks and by the
// gen-track CLI command. radius == 0 means straight.
struct TrackSegment {
  double length = 0.0;     // m
  double radius = 0.0;     // m (0 = straight)
  double grade_rad = 0.0;  // constant inclination over the segment
};

inline TrackProfile synthesize_track(const std::vector<TrackSegment>& segments, double step,
                                     double a_lat_max, double v_cap,
                                     const std::string& name = "synthetic") {
  if (!(step > 0.0)) throw ValidationError("synthesize_track: step must be > 0");
  if (segments.empty()) throw ValidationError("synthesize_track: no segments");
  double total = 0.0;
  for (const TrackSegment& seg : segments) {
    if (!(seg.length > 0.0)) throw ValidationError("synthesize_track: segment length must be > 0");
    total += seg.length;
  }
  const double ratio = total / step;
  if (std::abs(ratio - std::round(ratio)) > detail::kGridRelTol * std::max(1.0, ratio))
    throw ValidationError("synthesize_track: step must divide total length");

  const std::size_t n_nodes = static_cast<std::size_t>(std::round(ratio)) + 1;
  std::vector<double> curvature(n_nodes, 0.0);
  std::vector<double> grade(n_nodes, 0.0);
  for (std::size_t k = 0; k < n_nodes; ++k) {
    const double pos = std::min(static_cast<double>(k) * step, total);
    double acc = 0.0;
    const TrackSegment* seg = &segments.back();
    for (const TrackSegment& s : segments) {
      if (pos < acc + s.length || &s == &segments.back()) {
        seg = &s;
        if (pos < acc + s.length) break;
      }
      acc += s.length;
    }
    curvature[k] = seg->radius > 0.0 ? 1.0 / seg->radius : 0.0;
    grade[k] = seg->grade_rad;
  }
  const std::vector<double> vmax = precompute_vmax(curvature, a_lat_max, v_cap);
  TrackProfile t;
  t.name = name;
  t.step_length = step;
  t.nodes.resize(n_nodes);
  for (std::size_t k = 0; k < n_nodes; ++k)
    t.nodes[k] = {static_cast<double>(k) * step, grade[k], vmax[k]};
  validate(t);
  return t;
}

}  // namespace laptime
