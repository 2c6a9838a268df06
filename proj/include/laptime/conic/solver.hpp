#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "laptime/conic/program.hpp"

namespace laptime::conic {

struct SolverSettings {
  double tol_feas = 1e-8;
  double tol_gap_rel = 1e-8;
  int max_iters = 100;
  double static_regularization = 1e-9;
  int refine_steps = 3;             // iterative refinement per KKT solve
  double frac_to_boundary = 0.99;
  bool equilibrate = true;          // Ruiz scaling of the problem data
  int equilibrate_iters = 10;
};

enum class SolveStatus { Optimal, PrimalInfeasible, DualInfeasible, MaxIters, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::PrimalInfeasible: return "primal_infeasible";
    case SolveStatus::DualInfeasible: return "dual_infeasible";
    case SolveStatus::MaxIters: return "max_iters";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct SolveResiduals {
  double primal = std::numeric_limits<double>::infinity();
  double dual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
};

// Solver output. For Optimal, x/y/z/s are the primal-dual solution. For
// PrimalInfeasible, y/z hold the Farkas certificate normalized to
// b'y + h'z = -1; for DualInfeasible, x/s hold the unbounded ray normalized
// to c'x = -1.
struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x, y, z, s;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  SolveResiduals residuals;
  int iterations = 0;
};

namespace detail {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

// stable sqrt(u0^2 - ||u1||^2) for an interior SOC point
inline double soc_norm(const Eigen::Ref<const VectorXd>& u) {
  const double n1 = u.tail(u.size() - 1).norm();
  const double d = (u(0) - n1) * (u(0) + n1);
  return d > 0.0 ? std::sqrt(d) : 0.0;
}

struct BlockScaling {
  ConeKind kind = ConeKind::Nonnegative;
  int dim = 0;
  long offset = 0;
  VectorXd w;       // nonneg: sqrt(s_i/z_i)
  double eta = 0.0; // soc
  VectorXd wbar;    // soc scaling point, wbar0^2 - ||wbar1||^2 = 1
  VectorXd lambda;  // scaled point W z = W^{-T} s
};

// W u for one block (W symmetric).
inline VectorXd mul_w(const BlockScaling& b, const Eigen::Ref<const VectorXd>& u) {
  if (b.kind == ConeKind::Nonnegative) return b.w.cwiseProduct(u);
  VectorXd out(b.dim);
  const double w0 = b.wbar(0);
  const auto w1 = b.wbar.tail(b.dim - 1);
  const auto u1 = u.tail(b.dim - 1);
  const double w1u1 = w1.dot(u1);
  out(0) = b.eta * (w0 * u(0) + w1u1);
  out.tail(b.dim - 1) = b.eta * (u1 + (u(0) + w1u1 / (1.0 + w0)) * w1);
  return out;
}

// W^{-1} u (= W^{-T} u) for one block; uses H(wbar)^{-1} = H(J wbar).
inline VectorXd mul_w_inv(const BlockScaling& b, const Eigen::Ref<const VectorXd>& u) {
  if (b.kind == ConeKind::Nonnegative) return u.cwiseQuotient(b.w);
  VectorXd out(b.dim);
  const double w0 = b.wbar(0);
  const auto w1 = b.wbar.tail(b.dim - 1);
  const auto u1 = u.tail(b.dim - 1);
  const double w1u1 = w1.dot(u1);
  out(0) = (w0 * u(0) - w1u1) / b.eta;
  out.tail(b.dim - 1) = (u1 + (-u(0) + w1u1 / (1.0 + w0)) * w1) / b.eta;
  return out;
}

// W'W u without forming the matrix: eta^2 (2 wbar wbar' - J) u.
inline VectorXd mul_wtw(const BlockScaling& b, const Eigen::Ref<const VectorXd>& u) {
  if (b.kind == ConeKind::Nonnegative) return b.w.cwiseProduct(b.w).cwiseProduct(u);
  const double wu = b.wbar.dot(u);
  VectorXd out = 2.0 * wu * b.wbar;
  out(0) -= u(0);
  out.tail(b.dim - 1) += u.tail(b.dim - 1);
  return out * (b.eta * b.eta);
}

// Jordan product a o u.
inline VectorXd jordan_prod(const BlockScaling& b, const Eigen::Ref<const VectorXd>& a,
                            const Eigen::Ref<const VectorXd>& u) {
  if (b.kind == ConeKind::Nonnegative) return a.cwiseProduct(u);
  VectorXd out(b.dim);
  out(0) = a.dot(u);
  out.tail(b.dim - 1) = a(0) * u.tail(b.dim - 1) + u(0) * a.tail(b.dim - 1);
  return out;
}

// Solve lambda o u = d for u.
inline VectorXd jordan_solve(const BlockScaling& b, const Eigen::Ref<const VectorXd>& d) {
  const VectorXd& lam = b.lambda;
  if (b.kind == ConeKind::Nonnegative) return d.cwiseQuotient(lam);
  VectorXd out(b.dim);
  const double a = lam(0);
  const auto l1 = lam.tail(b.dim - 1);
  const double rho = (a - l1.norm()) * (a + l1.norm());
  const double u0 = (a * d(0) - l1.dot(d.tail(b.dim - 1))) / rho;
  out(0) = u0;
  out.tail(b.dim - 1) = (d.tail(b.dim - 1) - u0 * l1) / a;
  return out;
}

inline VectorXd cone_unit(const BlockScaling& b) {
  VectorXd e = VectorXd::Zero(b.dim);
  if (b.kind == ConeKind::Nonnegative) e.setOnes();
  else e(0) = 1.0;
  return e;
}

inline BlockScaling nt_scaling(ConeKind kind, long offset, const Eigen::Ref<const VectorXd>& s,
                               const Eigen::Ref<const VectorXd>& z) {
  BlockScaling b;
  b.kind = kind;
  b.dim = static_cast<int>(s.size());
  b.offset = offset;
  if (kind == ConeKind::Nonnegative) {
    b.w = (s.cwiseQuotient(z)).cwiseSqrt();
    b.lambda = (s.cwiseProduct(z)).cwiseSqrt();
    return b;
  }
  const double rho_s = soc_norm(s);
  const double rho_z = soc_norm(z);
  const VectorXd sbar = s / rho_s;
  const VectorXd zbar = z / rho_z;
  const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
  b.eta = std::sqrt(rho_s / rho_z);
  b.wbar.resize(b.dim);
  b.wbar(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
  b.wbar.tail(b.dim - 1) =
      (sbar.tail(b.dim - 1) - zbar.tail(b.dim - 1)) / (2.0 * gamma);
  b.lambda = mul_w(b, z);
  return b;
}

// Largest step alpha <= cap keeping q + alpha dq in the cone.
inline double step_to_boundary(ConeKind kind, const Eigen::Ref<const VectorXd>& q,
                               const Eigen::Ref<const VectorXd>& dq, double cap) {
  double alpha = cap;
  if (kind == ConeKind::Nonnegative) {
    for (long i = 0; i < q.size(); ++i)
      if (dq(i) < 0.0) alpha = std::min(alpha, -q(i) / dq(i));
    return alpha;
  }
  // smallest positive root of (q0+a d0)^2 - ||q1+a d1||^2 = 0
  const auto q1 = q.tail(q.size() - 1);
  const auto d1 = dq.tail(q.size() - 1);
  const double a = dq(0) * dq(0) - d1.squaredNorm();
  const double bq = 2.0 * (q(0) * dq(0) - q1.dot(d1));
  const double c = (q(0) - q1.norm()) * (q(0) + q1.norm());
  if (c <= 0.0) return 0.0;  // already on/outside the boundary
  double root = std::numeric_limits<double>::infinity();
  if (std::abs(a) < 1e-14 * std::max(1.0, std::abs(bq))) {
    if (bq < 0.0) root = -c / bq;
  } else {
    const double disc = bq * bq - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      // stable pair of roots
      const double qq = -0.5 * (bq + (bq >= 0.0 ? sq : -sq));
      const double r1 = qq / a;
      const double r2 = c / qq;
      const double lo = std::min(r1, r2), hi = std::max(r1, r2);
      if (lo > 0.0) root = lo;
      else if (hi > 0.0) root = hi;
    }
  }
  return std::min(alpha, root);
}

struct FoldedData {
  // zero cones folded into the equality block
  SpMat A, G;        // original (unscaled) data after folding
  VectorXd b, h, c;
  std::vector<ConeBlock> blocks;  // nonneg + soc only
  long p = 0, m = 0, n = 0;
  long p_orig = 0;
  // map from original cone-row index to folded location
  std::vector<std::pair<bool, long>> row_map;  // (in_equality, row index)
  double cone_degree = 0.0;
};

inline FoldedData fold_zero_cones(const ConicProgram& prog) {
  FoldedData f;
  f.n = prog.num_vars;
  f.c = prog.c;
  f.p_orig = prog.A.rows();

  long zero_rows = 0, ne_rows = 0;
  for (const ConeBlock& blk : prog.cones)
    (blk.kind == ConeKind::Zero ? zero_rows : ne_rows) += blk.dim;
  f.p = f.p_orig + zero_rows;
  f.m = ne_rows;

  std::vector<Eigen::Triplet<double>> at, gt;
  for (int k = 0; k < prog.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(prog.A, k); it; ++it)
      at.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

  f.b.resize(f.p);
  f.b.head(f.p_orig) = prog.b;
  f.h.resize(f.m);
  f.row_map.resize(prog.G.rows());

  long off = 0, eq_at = f.p_orig, ne_at = 0;
  std::vector<long> dest(prog.G.rows());
  std::vector<bool> to_eq(prog.G.rows());
  for (const ConeBlock& blk : prog.cones) {
    const bool zero = blk.kind == ConeKind::Zero;
    for (int i = 0; i < blk.dim; ++i) {
      const long r = off + i;
      to_eq[r] = zero;
      dest[r] = zero ? eq_at++ : ne_at++;
      f.row_map[r] = {zero, dest[r]};
      if (zero) f.b(dest[r]) = prog.h(r);
      else f.h(dest[r]) = prog.h(r);
    }
    if (!zero) f.blocks.push_back(blk);
    off += blk.dim;
  }
  for (int k = 0; k < prog.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(prog.G, k); it; ++it) {
      if (to_eq[it.row()]) at.emplace_back(static_cast<int>(dest[it.row()]), static_cast<int>(it.col()), it.value());
      else gt.emplace_back(static_cast<int>(dest[it.row()]), static_cast<int>(it.col()), it.value());
    }

  f.A.resize(f.p, f.n);
  f.A.setFromTriplets(at.begin(), at.end());
  f.A.makeCompressed();
  f.G.resize(f.m, f.n);
  f.G.setFromTriplets(gt.begin(), gt.end());
  f.G.makeCompressed();

  for (const ConeBlock& blk : f.blocks)
    f.cone_degree += blk.kind == ConeKind::Nonnegative ? blk.dim : 1;
  return f;
}

struct Equilibration {
  VectorXd d;    // column scaling (n)
  VectorXd e_a;  // equality row scaling (p)
  VectorXd e_g;  // cone row scaling (m), uniform per block
};

// Ruiz equilibration with block-uniform scaling on cone rows so cone
// membership is preserved.
inline Equilibration ruiz_equilibrate(SpMat& A, SpMat& G, VectorXd& b, VectorXd& h, VectorXd& c,
                                      const std::vector<ConeBlock>& blocks, int iters) {
  const long n = A.cols(), p = A.rows(), m = G.rows();
  Equilibration eq;
  eq.d = VectorXd::Ones(n);
  eq.e_a = VectorXd::Ones(p);
  eq.e_g = VectorXd::Ones(m);

  for (int it = 0; it < iters; ++it) {
    VectorXd col_max = VectorXd::Zero(n);
    VectorXd row_a = VectorXd::Zero(p);
    VectorXd row_g = VectorXd::Zero(m);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator i(A, k); i; ++i) {
        const double v = std::abs(i.value());
        col_max(i.col()) = std::max(col_max(i.col()), v);
        row_a(i.row()) = std::max(row_a(i.row()), v);
      }
    for (int k = 0; k < G.outerSize(); ++k)
      for (SpMat::InnerIterator i(G, k); i; ++i) {
        const double v = std::abs(i.value());
        col_max(i.col()) = std::max(col_max(i.col()), v);
        row_g(i.row()) = std::max(row_g(i.row()), v);
      }

    auto inv_sqrt = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
    VectorXd dc(n), da(p), dg(m);
    for (long j = 0; j < n; ++j) dc(j) = inv_sqrt(col_max(j));
    for (long i = 0; i < p; ++i) da(i) = inv_sqrt(row_a(i));
    long off = 0;
    for (const ConeBlock& blk : blocks) {
      double blk_max = 0.0;
      for (int i = 0; i < blk.dim; ++i) blk_max = std::max(blk_max, row_g(off + i));
      const double s = inv_sqrt(blk_max);
      for (int i = 0; i < blk.dim; ++i) dg(off + i) = s;
      off += blk.dim;
    }

    A = da.asDiagonal() * A * dc.asDiagonal();
    G = dg.asDiagonal() * G * dc.asDiagonal();
    eq.d = eq.d.cwiseProduct(dc);
    eq.e_a = eq.e_a.cwiseProduct(da);
    eq.e_g = eq.e_g.cwiseProduct(dg);
  }
  b = eq.e_a.cwiseProduct(b);
  h = eq.e_g.cwiseProduct(h);
  c = eq.d.cwiseProduct(c);
  return eq;
}

class HsdSolver {
 public:
  HsdSolver(const FoldedData& orig, const SolverSettings& st) : o_(orig), st_(st) {
    A_ = o_.A; G_ = o_.G; b_ = o_.b; h_ = o_.h; c_ = o_.c;
    if (st_.equilibrate)
      eq_ = ruiz_equilibrate(A_, G_, b_, h_, c_, o_.blocks, st_.equilibrate_iters);
    else {
      eq_.d = VectorXd::Ones(o_.n);
      eq_.e_a = VectorXd::Ones(o_.p);
      eq_.e_g = VectorXd::Ones(o_.m);
    }
    // cost normalization: positive rescalings of c solve the same iterates
    const double cnorm = c_.lpNorm<Eigen::Infinity>();
    sigma_c_ = cnorm > 0.0 ? 1.0 / cnorm : 1.0;
    c_ *= sigma_c_;
    data_norm_ = 1.0;
    for (int k = 0; k < o_.A.outerSize(); ++k)
      for (SpMat::InnerIterator i(o_.A, k); i; ++i) data_norm_ = std::max(data_norm_, std::abs(i.value()));
    for (int k = 0; k < o_.G.outerSize(); ++k)
      for (SpMat::InnerIterator i(o_.G, k); i; ++i) data_norm_ = std::max(data_norm_, std::abs(i.value()));
  }

  ConicSolution run() {
    const long n = o_.n, p = o_.p, m = o_.m;
    x_ = VectorXd::Zero(n);
    y_ = VectorXd::Zero(p);
    z_.resize(m);
    s_.resize(m);
    long off = 0;
    for (const ConeBlock& blk : o_.blocks) {
      z_.segment(off, blk.dim).setZero();
      s_.segment(off, blk.dim).setZero();
      if (blk.kind == ConeKind::Nonnegative) {
        z_.segment(off, blk.dim).setOnes();
        s_.segment(off, blk.dim).setOnes();
      } else {
        z_(off) = 1.0;
        s_(off) = 1.0;
      }
      off += blk.dim;
    }
    tau_ = 1.0;
    kappa_ = 1.0;

    ConicSolution sol;
    sol.status = SolveStatus::MaxIters;
    int iter = 0;
    for (; iter <= st_.max_iters; ++iter) {
      if (check_termination(sol)) {
        sol.iterations = iter;
        return sol;
      }
      if (iter == st_.max_iters) break;
      if (!take_step()) {
        fill_point(sol);
        sol.status = SolveStatus::NumericalFailure;
        sol.iterations = iter;
        return sol;
      }
    }
    fill_point(sol);
    sol.status = SolveStatus::MaxIters;
    sol.iterations = iter;
    return sol;
  }

 private:
  // ---- termination -------------------------------------------------------

  void fill_point(ConicSolution& sol) const {
    sol.x = eq_.d.cwiseProduct(x_) / tau_;
    sol.y = eq_.e_a.cwiseProduct(y_) / (tau_ * sigma_c_);
    sol.z = eq_.e_g.cwiseProduct(z_) / (tau_ * sigma_c_);
    sol.s = s_.cwiseQuotient(eq_.e_g) / tau_;
    sol.objective_value = o_.c.dot(sol.x);
    sol.residuals = point_residuals(sol.x, sol.y, sol.z, sol.s);
  }

  SolveResiduals point_residuals(const VectorXd& X, const VectorXd& Y, const VectorXd& Z,
                                 const VectorXd& S) const {
    SolveResiduals r;
    const double pres_eq = o_.p > 0 ? (o_.A * X - o_.b).norm() / (1.0 + o_.b.norm()) : 0.0;
    const double pres_cone = o_.m > 0 ? (o_.G * X + S - o_.h).norm() / (1.0 + o_.h.norm()) : 0.0;
    r.primal = std::max(pres_eq, pres_cone);
    VectorXd dres = o_.c;
    if (o_.p > 0) dres += o_.A.transpose() * Y;
    if (o_.m > 0) dres += o_.G.transpose() * Z;
    r.dual = dres.norm() / (1.0 + o_.c.norm());
    const double pobj = o_.c.dot(X);
    const double dobj = -(o_.b.dot(Y) + o_.h.dot(Z));
    r.gap = std::abs(pobj - dobj) / std::max({1.0, std::abs(pobj), std::abs(dobj)});
    return r;
  }

  bool check_termination(ConicSolution& sol) {
    // optimality on the tau-normalized point
    ConicSolution cand;
    fill_point(cand);
    if (cand.residuals.primal <= st_.tol_feas && cand.residuals.dual <= st_.tol_feas &&
        cand.residuals.gap <= st_.tol_gap_rel) {
      sol = cand;
      sol.status = SolveStatus::Optimal;
      return true;
    }

    // primal infeasibility: A'y + G'z = 0, b'y + h'z < 0, z in K*
    const VectorXd yc = eq_.e_a.cwiseProduct(y_) / sigma_c_;
    const VectorXd zc = eq_.e_g.cwiseProduct(z_) / sigma_c_;
    const double bty_htz = o_.b.dot(yc) + o_.h.dot(zc);
    if (bty_htz < 0.0) {
      VectorXd dres = VectorXd::Zero(o_.n);
      if (o_.p > 0) dres += o_.A.transpose() * yc;
      if (o_.m > 0) dres += o_.G.transpose() * zc;
      if (dres.lpNorm<Eigen::Infinity>() <= st_.tol_feas * data_norm_ * (-bty_htz)) {
        sol.status = SolveStatus::PrimalInfeasible;
        sol.x = VectorXd::Zero(o_.n);
        sol.s = VectorXd::Zero(o_.m);
        sol.y = yc / (-bty_htz);
        sol.z = zc / (-bty_htz);
        sol.objective_value = std::numeric_limits<double>::infinity();
        sol.residuals.dual = dres.lpNorm<Eigen::Infinity>() / (-bty_htz);
        return true;
      }
    }

    // dual infeasibility (primal unbounded): Ax = 0, Gx + s = 0, c'x < 0
    const VectorXd xc = eq_.d.cwiseProduct(x_);
    const VectorXd sc = s_.cwiseQuotient(eq_.e_g);
    const double ctx = o_.c.dot(xc);
    if (ctx < 0.0) {
      const double ra = o_.p > 0 ? (o_.A * xc).lpNorm<Eigen::Infinity>() : 0.0;
      const double rg = o_.m > 0 ? (o_.G * xc + sc).lpNorm<Eigen::Infinity>() : 0.0;
      if (std::max(ra, rg) <= st_.tol_feas * data_norm_ * (-ctx)) {
        sol.status = SolveStatus::DualInfeasible;
        sol.x = xc / (-ctx);
        sol.s = sc / (-ctx);
        sol.y = VectorXd::Zero(o_.p);
        sol.z = VectorXd::Zero(o_.m);
        sol.objective_value = -std::numeric_limits<double>::infinity();
        sol.residuals.primal = std::max(ra, rg) / (-ctx);
        return true;
      }
    }
    return false;
  }

  // ---- KKT ---------------------------------------------------------------

  void assemble_kkt(const std::vector<BlockScaling>& scal) {
    const long n = o_.n, p = o_.p, m = o_.m;
    const long dim = n + p + m;
    const double delta = st_.static_regularization;
    trip_.clear();
    for (long j = 0; j < n; ++j) trip_.emplace_back(j, j, delta);
    for (int k = 0; k < A_.outerSize(); ++k)
      for (SpMat::InnerIterator it(A_, k); it; ++it)
        trip_.emplace_back(static_cast<int>(n + it.row()), static_cast<int>(it.col()), it.value());
    for (long i = 0; i < p; ++i) trip_.emplace_back(n + i, n + i, -delta);
    for (int k = 0; k < G_.outerSize(); ++k)
      for (SpMat::InnerIterator it(G_, k); it; ++it)
        trip_.emplace_back(static_cast<int>(n + p + it.row()), static_cast<int>(it.col()), it.value());
    for (const BlockScaling& bs : scal) {
      const long base = n + p + bs.offset;
      if (bs.kind == ConeKind::Nonnegative) {
        for (int i = 0; i < bs.dim; ++i)
          trip_.emplace_back(base + i, base + i, -bs.w(i) * bs.w(i) - delta);
      } else {
        const double e2 = bs.eta * bs.eta;
        for (int i = 0; i < bs.dim; ++i)
          for (int j = 0; j <= i; ++j) {
            double v = 2.0 * bs.wbar(i) * bs.wbar(j);
            if (i == j) v -= (i == 0 ? 1.0 : -1.0);
            v *= e2;
            trip_.emplace_back(base + i, base + j, -v - (i == j ? delta : 0.0));
          }
      }
    }
    kkt_.resize(dim, dim);
    kkt_.setFromTriplets(trip_.begin(), trip_.end());
    kkt_.makeCompressed();
  }

  // K0 * v without regularization, for iterative refinement.
  VectorXd kkt_mul(const std::vector<BlockScaling>& scal, const VectorXd& v) const {
    const long n = o_.n, p = o_.p, m = o_.m;
    VectorXd out(n + p + m);
    const auto u = v.head(n);
    const auto yy = v.segment(n, p);
    const auto zz = v.tail(m);
    VectorXd top = VectorXd::Zero(n);
    if (p > 0) top += A_.transpose() * yy;
    if (m > 0) top += G_.transpose() * zz;
    out.head(n) = top;
    if (p > 0) out.segment(n, p) = A_ * u;
    if (m > 0) {
      out.tail(m) = G_ * u;
      for (const BlockScaling& bs : scal)
        out.segment(n + p + bs.offset, bs.dim) -= mul_wtw(bs, zz.segment(bs.offset, bs.dim));
    }
    return out;
  }

  VectorXd kkt_solve(const std::vector<BlockScaling>& scal, const VectorXd& rhs) {
    VectorXd sol = ldlt_.solve(rhs);
    for (int r = 0; r < st_.refine_steps; ++r) {
      const VectorXd resid = rhs - kkt_mul(scal, sol);
      sol += ldlt_.solve(resid);
    }
    return sol;
  }

  // ---- one predictor-corrector step ---------------------------------------

  bool take_step() {
    const long n = o_.n, p = o_.p, m = o_.m;

    std::vector<BlockScaling> scal;
    scal.reserve(o_.blocks.size());
    long off = 0;
    for (const ConeBlock& blk : o_.blocks) {
      scal.push_back(nt_scaling(blk.kind, off, s_.segment(off, blk.dim), z_.segment(off, blk.dim)));
      if (!scal.back().lambda.allFinite()) return false;
      off += blk.dim;
    }

    assemble_kkt(scal);
    if (!pattern_done_) {
      ldlt_.analyzePattern(kkt_);
      pattern_done_ = true;
    }
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) return false;

    // residuals of the homogeneous embedding
    VectorXd r_x = c_ * tau_;
    if (p > 0) r_x += A_.transpose() * y_;
    if (m > 0) r_x += G_.transpose() * z_;
    const VectorXd r_y = p > 0 ? VectorXd(A_ * x_ - b_ * tau_) : VectorXd(0);
    const VectorXd r_z = m > 0 ? VectorXd(G_ * x_ + s_ - h_ * tau_) : VectorXd(0);
    const double r_tau = c_.dot(x_) + (p > 0 ? b_.dot(y_) : 0.0) + (m > 0 ? h_.dot(z_) : 0.0) + kappa_;

    const double mu = (s_.dot(z_) + tau_ * kappa_) / (o_.cone_degree + 1.0);

    // constant-rhs solve used to recover dtau
    VectorXd rhs1(n + p + m);
    rhs1.head(n) = -c_;
    rhs1.segment(n, p) = b_;
    rhs1.tail(m) = h_;
    const VectorXd u1 = kkt_solve(scal, rhs1);
    const double rho1 = c_.dot(u1.head(n)) + (p > 0 ? b_.dot(u1.segment(n, p)) : 0.0) +
                        (m > 0 ? h_.dot(u1.tail(m)) : 0.0);
    const double denom = rho1 - kappa_ / tau_;
    if (!(denom < 0.0) || !std::isfinite(denom)) return false;

    auto direction = [&](const VectorXd& ds, double dkappa_rhs, double resid_scale, Step& st) {
      VectorXd w_jsol(m);
      for (const BlockScaling& bs : scal)
        w_jsol.segment(bs.offset, bs.dim) =
            mul_w(bs, jordan_solve(bs, ds.segment(bs.offset, bs.dim)));
      VectorXd rhs(n + p + m);
      rhs.head(n) = -resid_scale * r_x;
      rhs.segment(n, p) = -resid_scale * r_y;
      rhs.tail(m) = -resid_scale * r_z - w_jsol;
      const VectorXd u2 = kkt_solve(scal, rhs);
      const double rho2 = c_.dot(u2.head(n)) + (p > 0 ? b_.dot(u2.segment(n, p)) : 0.0) +
                          (m > 0 ? h_.dot(u2.tail(m)) : 0.0);
      st.dtau = (-resid_scale * r_tau - rho2 - dkappa_rhs / tau_) / denom;
      st.dx = u2.head(n) + st.dtau * u1.head(n);
      st.dy = u2.segment(n, p) + st.dtau * u1.segment(n, p);
      st.dz = u2.tail(m) + st.dtau * u1.tail(m);
      st.ds.resize(m);
      st.w_dz.resize(m);
      st.winv_t_ds.resize(m);
      for (const BlockScaling& bs : scal) {
        const VectorXd jsol = jordan_solve(bs, ds.segment(bs.offset, bs.dim));
        const VectorXd wdz = mul_w(bs, st.dz.segment(bs.offset, bs.dim));
        st.w_dz.segment(bs.offset, bs.dim) = wdz;
        st.winv_t_ds.segment(bs.offset, bs.dim) = jsol - wdz;
        st.ds.segment(bs.offset, bs.dim) = mul_w(bs, jsol - wdz);
      }
      st.dkappa = (dkappa_rhs - kappa_ * st.dtau) / tau_;
    };

    auto max_step = [&](const Step& st) {
      double alpha = 1.0;
      for (const BlockScaling& bs : scal) {
        alpha = step_to_boundary(bs.kind, s_.segment(bs.offset, bs.dim),
                                 st.ds.segment(bs.offset, bs.dim), alpha);
        alpha = step_to_boundary(bs.kind, z_.segment(bs.offset, bs.dim),
                                 st.dz.segment(bs.offset, bs.dim), alpha);
      }
      if (st.dtau < 0.0) alpha = std::min(alpha, -tau_ / st.dtau);
      if (st.dkappa < 0.0) alpha = std::min(alpha, -kappa_ / st.dkappa);
      return alpha;
    };

    // predictor
    VectorXd ds_aff(m);
    for (const BlockScaling& bs : scal)
      ds_aff.segment(bs.offset, bs.dim) = -jordan_prod(bs, bs.lambda, bs.lambda);
    Step aff;
    direction(ds_aff, -tau_ * kappa_, 1.0, aff);
    const double alpha_aff = max_step(aff);
    const double sigma = std::pow(std::clamp(1.0 - alpha_aff, 0.0, 1.0), 3);

    // corrector
    VectorXd ds_comb(m);
    for (const BlockScaling& bs : scal) {
      const VectorXd corr = jordan_prod(bs, aff.winv_t_ds.segment(bs.offset, bs.dim),
                                        aff.w_dz.segment(bs.offset, bs.dim));
      ds_comb.segment(bs.offset, bs.dim) =
          -jordan_prod(bs, bs.lambda, bs.lambda) - corr + sigma * mu * cone_unit(bs);
    }
    const double dkappa_comb = -tau_ * kappa_ - aff.dtau * aff.dkappa + sigma * mu;
    Step comb;
    direction(ds_comb, dkappa_comb, 1.0 - sigma, comb);
    const double alpha = std::min(1.0, st_.frac_to_boundary * max_step(comb));
    if (!(alpha > 1e-11) || !std::isfinite(alpha)) return false;

    x_ += alpha * comb.dx;
    y_ += alpha * comb.dy;
    z_ += alpha * comb.dz;
    s_ += alpha * comb.ds;
    tau_ += alpha * comb.dtau;
    kappa_ += alpha * comb.dkappa;
    if (!(tau_ > 0.0) || !(kappa_ > 0.0) || !x_.allFinite() || !s_.allFinite() || !z_.allFinite())
      return false;
    return true;
  }

  struct Step {
    VectorXd dx, dy, dz, ds;
    double dtau = 0.0, dkappa = 0.0;
    VectorXd w_dz, winv_t_ds;
  };

  const FoldedData& o_;
  SolverSettings st_;
  SpMat A_, G_;          // equilibrated data
  VectorXd b_, h_, c_;
  Equilibration eq_;
  double data_norm_ = 1.0;
  double sigma_c_ = 1.0;

  VectorXd x_, y_, z_, s_;
  double tau_ = 1.0, kappa_ = 1.0;

  std::vector<Eigen::Triplet<double>> trip_;
  SpMat kkt_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  bool pattern_done_ = false;
};

}  // namespace detail

// Solve a finalized program with a homogeneous self-dual interior-point
// method (Nesterov-Todd scaling, Mehrotra predictor-corrector). Reentrant;
// holds no global state.
inline ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings = {}) {
  prog.validate();
  const detail::FoldedData folded = detail::fold_zero_cones(prog);
  detail::HsdSolver solver(folded, settings);
  ConicSolution inner = solver.run();

  // map z/s back to the original cone-row order (zero cones included)
  ConicSolution out = inner;
  out.y = inner.y.head(folded.p_orig);
  out.z.resize(prog.G.rows());
  out.s.resize(prog.G.rows());
  for (long r = 0; r < prog.G.rows(); ++r) {
    const auto& [in_eq, idx] = folded.row_map[r];
    if (in_eq) {
      out.z(r) = inner.y(idx);
      out.s(r) = 0.0;
    } else {
      out.z(r) = inner.z(idx);
      out.s(r) = inner.s(idx);
    }
  }
  return out;
}

}  // namespace laptime::conic
