#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace laptime::conic {

enum class ConeKind { Zero, Nonnegative, SecondOrder };

struct ConeBlock {
  ConeKind kind = ConeKind::Zero;
  int dim = 0;
};

// Sparse cone program
//   min c'x  s.t.  A x = b,  h - G x in K,
// where K is the ordered product of the cone_constraints blocks. Immutable
// once finalized by the builder.
struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;  // equality rows
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> G;  // cone rows, block order = cones
  Eigen::VectorXd h;
  std::vector<ConeBlock> cones;

  void validate() const {
    if (num_vars < 1) throw std::invalid_argument("program: num_vars must be >= 1");
    if (c.size() != num_vars) throw std::invalid_argument("program: c length mismatch");
    if (A.cols() != num_vars || G.cols() != num_vars)
      throw std::invalid_argument("program: matrix column count mismatch");
    if (A.rows() != b.size()) throw std::invalid_argument("program: b length vs A rows mismatch");
    if (G.rows() != h.size()) throw std::invalid_argument("program: h length vs G rows mismatch");
    long cone_rows = 0;
    for (const ConeBlock& blk : cones) {
      if (blk.dim < 1) throw std::invalid_argument("program: cone dim must be >= 1");
      if (blk.kind == ConeKind::SecondOrder && blk.dim < 2)
        throw std::invalid_argument("program: second-order cone dim must be >= 2");
      cone_rows += blk.dim;
    }
    if (cone_rows != G.rows()) throw std::invalid_argument("program: cone dims vs G rows mismatch");
    auto check_finite = [](const Eigen::SparseMatrix<double>& m, const char* what) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
          if (!std::isfinite(it.value())) throw std::invalid_argument(std::string("program: non-finite entry in ") + what);
    };
    check_finite(A, "A");
    check_finite(G, "G");
    if (!c.allFinite() || !b.allFinite() || !h.allFinite())
      throw std::invalid_argument("program: non-finite entry in c/b/h");
  }
};

// Affine expression constant + sum(coeff * x[var]).
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  LinExpr() = default;
  explicit LinExpr(double k) : constant(k) {}
  LinExpr& add(int var, double coeff) {
    if (coeff != 0.0) terms.emplace_back(var, coeff);
    return *this;
  }
};

inline LinExpr var(int index, double coeff = 1.0) {
  LinExpr e;
  e.add(index, coeff);
  return e;
}

// Incremental builder. Equalities mean expr == 0; cones mean the stacked
// affine expressions form a vector inside the given cone.
class ProgramBuilder {
 public:
  explicit ProgramBuilder(int num_vars) : num_vars_(num_vars) {
    if (num_vars < 1) throw std::invalid_argument("builder: num_vars must be >= 1");
    c_.assign(static_cast<std::size_t>(num_vars), 0.0);
  }

  int num_vars() const { return num_vars_; }

  void objective_coeff(int v, double coeff) {
    check_var(v);
    c_[static_cast<std::size_t>(v)] += coeff;
  }

  // expr == 0
  void add_equality(const LinExpr& e) {
    check_open();
    for (const auto& [v, coeff] : e.terms) {
      check_var(v);
      a_trip_.emplace_back(eq_rows_, v, coeff);
    }
    b_.push_back(-e.constant);
    ++eq_rows_;
  }

  // expr >= 0
  void add_nonneg(const LinExpr& e) { add_cone({e}, ConeKind::Nonnegative); }

  // (rows[0], rows[1..]) in SOC: rows[0] >= ||rows[1..]||_2
  void add_soc(const std::vector<LinExpr>& rows) { add_cone(rows, ConeKind::SecondOrder); }

  void add_cone(const std::vector<LinExpr>& rows, ConeKind kind) {
    check_open();
    if (rows.empty()) throw std::invalid_argument("builder: empty cone block");
    if (kind == ConeKind::SecondOrder && rows.size() < 2)
      throw std::invalid_argument("builder: second-order cone needs dim >= 2");
    for (const LinExpr& e : rows) {
      for (const auto& [v, coeff] : e.terms) {
        check_var(v);
        g_trip_.emplace_back(cone_rows_, v, -coeff);  // h - Gx = expr
      }
      h_.push_back(e.constant);
      ++cone_rows_;
    }
    cones_.push_back({kind, static_cast<int>(rows.size())});
  }

  ConicProgram finalize() {
    check_open();
    finalized_ = true;
    ConicProgram p;
    p.num_vars = num_vars_;
    p.c = Eigen::Map<const Eigen::VectorXd>(c_.data(), static_cast<long>(c_.size()));
    p.A.resize(eq_rows_, num_vars_);
    p.A.setFromTriplets(a_trip_.begin(), a_trip_.end());
    p.A.makeCompressed();
    p.b = Eigen::Map<const Eigen::VectorXd>(b_.data(), static_cast<long>(b_.size()));
    p.G.resize(cone_rows_, num_vars_);
    p.G.setFromTriplets(g_trip_.begin(), g_trip_.end());
    p.G.makeCompressed();
    p.h = Eigen::Map<const Eigen::VectorXd>(h_.data(), static_cast<long>(h_.size()));
    p.cones = std::move(cones_);
    p.validate();
    return p;
  }

 private:
  void check_var(int v) const {
    if (v < 0 || v >= num_vars_)
      throw std::out_of_range("builder: variable index " + std::to_string(v) + " out of range");
  }
  void check_open() const {
    if (finalized_) throw std::logic_error("builder: finalize() already called");
  }

  int num_vars_ = 0;
  bool finalized_ = false;
  std::vector<double> c_;
  std::vector<Eigen::Triplet<double>> a_trip_;
  std::vector<double> b_;
  int eq_rows_ = 0;
  std::vector<Eigen::Triplet<double>> g_trip_;
  std::vector<double> h_;
  int cone_rows_ = 0;
  std::vector<ConeBlock> cones_;
};

struct PointResiduals {
  double eq_violation = 0.0;    // max-norm of Ax - b
  double cone_violation = 0.0;  // worst distance outside any cone block
};

// Feasibility residuals of a candidate point (no duals involved).
inline PointResiduals residuals(const ConicProgram& p, const Eigen::VectorXd& x) {
  if (x.size() != p.num_vars) throw std::invalid_argument("residuals: candidate length mismatch");
  PointResiduals r;
  if (p.A.rows() > 0) r.eq_violation = (p.A * x - p.b).cwiseAbs().maxCoeff();
  const Eigen::VectorXd slack = p.h - p.G * x;  // must lie in K
  long off = 0;
  for (const ConeBlock& blk : p.cones) {
    const auto seg = slack.segment(off, blk.dim);
    double viol = 0.0;
    switch (blk.kind) {
      case ConeKind::Zero:
        viol = seg.cwiseAbs().maxCoeff();
        break;
      case ConeKind::Nonnegative:
        viol = std::max(0.0, -seg.minCoeff());
        break;
      case ConeKind::SecondOrder:
        viol = std::max(0.0, seg.tail(blk.dim - 1).norm() - seg(0));
        break;
    }
    r.cone_violation = std::max(r.cone_violation, viol);
    off += blk.dim;
  }
  return r;
}

namespace detail {
inline const char* cone_name(ConeKind k) {
  switch (k) {
    case ConeKind::Zero: return "zero";
    case ConeKind::Nonnegative: return "nonneg";
    case ConeKind::SecondOrder: return "soc";
  }
  return "?";
}
}  // namespace detail

// Plain-text dump: triplet lists plus cone descriptor lines. Round-trips
// exactly (values written with 17 significant digits).
inline void dump_program(const ConicProgram& p, std::ostream& out) {
  out << "conicprogram v1\n" << std::setprecision(17);
  out << "vars " << p.num_vars << "\n";
  out << "obj";
  for (int i = 0; i < p.c.size(); ++i)
    if (p.c(i) != 0.0) out << ' ' << i << ' ' << p.c(i);
  out << "\n";
  out << "eq " << p.A.rows() << "\n";
  for (int k = 0; k < p.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, k); it; ++it)
      out << "a " << it.row() << ' ' << it.col() << ' ' << it.value() << "\n";
  for (int i = 0; i < p.b.size(); ++i)
    if (p.b(i) != 0.0) out << "b " << i << ' ' << p.b(i) << "\n";
  long off = 0;
  for (const ConeBlock& blk : p.cones) {
    out << "cone " << detail::cone_name(blk.kind) << ' ' << blk.dim << "\n";
    for (int k = 0; k < p.G.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(p.G, k); it; ++it)
        if (it.row() >= off && it.row() < off + blk.dim)
          out << "g " << it.row() - off << ' ' << it.col() << ' ' << it.value() << "\n";
    for (int i = 0; i < blk.dim; ++i)
      if (p.h(off + i) != 0.0) out << "h " << i << ' ' << p.h(off + i) << "\n";
    off += blk.dim;
  }
  out << "end\n";
}

inline ConicProgram load_program(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "conicprogram v1")
    throw std::invalid_argument("program dump: bad magic line");

  int num_vars = 0, eq_rows = 0;
  std::vector<Eigen::Triplet<double>> a_trip, g_trip;
  std::vector<std::pair<int, double>> b_ent, c_ent;
  std::vector<ConeBlock> cones;
  std::vector<std::pair<int, double>> h_ent;  // global row -> value
  long cone_off = 0;
  int cur_dim = 0;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") break;
    if (tag == "vars") {
      ls >> num_vars;
    } else if (tag == "obj") {
      int i; double v;
      while (ls >> i >> v) c_ent.emplace_back(i, v);
    } else if (tag == "eq") {
      ls >> eq_rows;
    } else if (tag == "a") {
      int r, c; double v;
      ls >> r >> c >> v;
      a_trip.emplace_back(r, c, v);
    } else if (tag == "b") {
      int i; double v;
      ls >> i >> v;
      b_ent.emplace_back(i, v);
    } else if (tag == "cone") {
      std::string kind;
      int dim;
      ls >> kind >> dim;
      cone_off += cur_dim;
      cur_dim = dim;
      ConeKind k;
      if (kind == "zero") k = ConeKind::Zero;
      else if (kind == "nonneg") k = ConeKind::Nonnegative;
      else if (kind == "soc") k = ConeKind::SecondOrder;
      else throw std::invalid_argument("program dump: unknown cone kind " + kind);
      cones.push_back({k, dim});
    } else if (tag == "g") {
      int r, c; double v;
      ls >> r >> c >> v;
      g_trip.emplace_back(static_cast<int>(cone_off) + r, c, v);
    } else if (tag == "h") {
      int i; double v;
      ls >> i >> v;
      h_ent.emplace_back(static_cast<int>(cone_off) + i, v);
    } else {
      throw std::invalid_argument("program dump: unknown tag " + tag);
    }
    if (ls.fail() && tag != "obj") throw std::invalid_argument("program dump: malformed line: " + line);
  }

  ConicProgram p;
  p.num_vars = num_vars;
  p.c = Eigen::VectorXd::Zero(num_vars);
  for (const auto& [i, v] : c_ent) p.c(i) = v;
  p.A.resize(eq_rows, num_vars);
  p.A.setFromTriplets(a_trip.begin(), a_trip.end());
  p.A.makeCompressed();
  p.b = Eigen::VectorXd::Zero(eq_rows);
  for (const auto& [i, v] : b_ent) p.b(i) = v;
  long rows = 0;
  for (const ConeBlock& blk : cones) rows += blk.dim;
  p.G.resize(rows, num_vars);
  p.G.setFromTriplets(g_trip.begin(), g_trip.end());
  p.G.makeCompressed();
  p.h = Eigen::VectorXd::Zero(rows);
  for (const auto& [i, v] : h_ent) p.h(i) = v;
  p.cones = std::move(cones);
  p.validate();
  return p;
}

}  // namespace laptime::conic
