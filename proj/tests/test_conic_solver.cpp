#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "laptime/conic/program.hpp"
#include "laptime/conic/solver.hpp"

using namespace laptime::conic;

namespace {

bool bit_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("LP corner: min x s.t. x >= 3", "[conic_solver]") {
  ProgramBuilder b(1);
  b.objective_coeff(0, 1.0);
  b.add_nonneg(LinExpr(-3.0).add(0, 1.0));
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == Catch::Approx(3.0).margin(1e-7));
  CHECK(sol.residuals.primal <= 1e-8);
  CHECK(sol.residuals.dual <= 1e-8);
  CHECK(sol.residuals.gap <= 1e-8);
}

TEST_CASE("norm problem: min t s.t. (t,3,4) in SOC", "[conic_solver]") {
  ProgramBuilder b(1);
  b.objective_coeff(0, 1.0);
  b.add_soc({var(0), LinExpr(3.0), LinExpr(4.0)});
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == Catch::Approx(5.0).margin(1e-7));
  CHECK(sol.objective_value == Catch::Approx(5.0).margin(1e-7));
}

TEST_CASE("symmetric SOC: min -(u+v) with u^2+v^2 <= 4", "[conic_solver]") {
  ProgramBuilder b(2);
  b.objective_coeff(0, -1.0);
  b.objective_coeff(1, -1.0);
  b.add_soc({LinExpr(2.0), var(0), var(1)});
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::Optimal);
  const double root2 = std::sqrt(2.0);
  CHECK(sol.x(0) == Catch::Approx(root2).margin(1e-7));
  CHECK(sol.x(1) == Catch::Approx(root2).margin(1e-7));
  CHECK(sol.objective_value == Catch::Approx(-2.0 * root2).margin(1e-7));
}

TEST_CASE("square nonsingular equality system", "[conic_solver]") {
  ProgramBuilder b(2);
  b.add_equality(LinExpr(-3.0).add(0, 2.0).add(1, 1.0));
  b.add_equality(LinExpr(-4.0).add(0, 1.0).add(1, 3.0));
  const ConicProgram p = b.finalize();
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);

  Eigen::Matrix2d a;
  a << 2.0, 1.0, 1.0, 3.0;
  const Eigen::Vector2d expect = a.colPivHouseholderQr().solve(Eigen::Vector2d(3.0, 4.0));
  CHECK(sol.x(0) == Catch::Approx(expect(0)).margin(1e-8));
  CHECK(sol.x(1) == Catch::Approx(expect(1)).margin(1e-8));
}

TEST_CASE("infeasible pair produces a certificate", "[conic_solver]") {
  ProgramBuilder b(1);
  b.objective_coeff(0, 1.0);
  b.add_nonneg(LinExpr(-1.0).add(0, 1.0));  // x >= 1
  b.add_nonneg(var(0, -1.0));               // -x >= 0
  const ConicProgram p = b.finalize();
  const ConicSolution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::PrimalInfeasible);

  // Farkas: G'z = 0, z >= 0, h'z < 0 (normalized to -1)
  const Eigen::VectorXd gtz = p.G.transpose() * sol.z;
  CHECK(gtz.lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(sol.z.minCoeff() >= -1e-12);
  CHECK(p.h.dot(sol.z) == Catch::Approx(-1.0).margin(1e-6));
}

TEST_CASE("zero cones are honored", "[conic_solver]") {
  // min x+y s.t. x - y = 1 (as a zero cone), x >= 0, y >= 0
  ProgramBuilder b(2);
  b.objective_coeff(0, 1.0);
  b.objective_coeff(1, 1.0);
  b.add_cone({LinExpr(-1.0).add(0, 1.0).add(1, -1.0)}, ConeKind::Zero);
  b.add_nonneg(var(0));
  b.add_nonneg(var(1));
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == Catch::Approx(1.0).margin(1e-7));
  CHECK(sol.x(1) == Catch::Approx(0.0).margin(1e-7));
  CHECK(sol.s(0) == 0.0);
}

TEST_CASE("unbounded problem flagged dual infeasible", "[conic_solver]") {
  ProgramBuilder b(1);
  b.objective_coeff(0, -1.0);
  b.add_nonneg(var(0));  // x >= 0, min -x unbounded
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::DualInfeasible);
  // ray: c'x = -1, -Gx in K
  CHECK(sol.x(0) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("deterministic resolves", "[conic_solver]") {
  ProgramBuilder b(3);
  b.objective_coeff(0, 1.0);
  b.objective_coeff(2, 0.5);
  b.add_equality(LinExpr(-1.0).add(0, 1.0).add(1, 1.0));
  b.add_soc({LinExpr(1.5).add(2, 1.0), var(0), var(1)});
  b.add_nonneg(LinExpr(2.0).add(2, -1.0));
  const ConicProgram p = b.finalize();
  const ConicSolution s1 = solve(p);
  const ConicSolution s2 = solve(p);
  REQUIRE(s1.status == SolveStatus::Optimal);
  REQUIRE(s2.status == SolveStatus::Optimal);
  CHECK(bit_equal(s1.x, s2.x));
  CHECK(bit_equal(s1.y, s2.y));
  CHECK(bit_equal(s1.z, s2.z));
  CHECK(s1.objective_value == s2.objective_value);
  CHECK(s1.iterations == s2.iterations);
}

namespace {

// random primal-dual feasible SOCP: pick interior (x0, s0, z0, y0), then set
// b = A x0, h = G x0 + s0, c = -(A'y0 + G'z0) so both sides are attained
ConicProgram random_feasible(std::mt19937& rng, int n, int p, bool with_soc) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  ProgramBuilder b(n);
  Eigen::VectorXd x0(n), y0(p);
  for (int i = 0; i < n; ++i) x0(i) = ud(rng);
  for (int i = 0; i < p; ++i) y0(i) = ud(rng);

  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(p, n, [&]() { return ud(rng); });
  std::vector<std::vector<LinExpr>> cones;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  c -= a.transpose() * y0;

  // one nonneg block of 3 rows
  Eigen::MatrixXd g1 = Eigen::MatrixXd::NullaryExpr(3, n, [&]() { return ud(rng); });
  Eigen::Vector3d s1, z1;
  for (int i = 0; i < 3; ++i) {
    s1(i) = 0.5 + 0.5 * std::abs(ud(rng));
    z1(i) = 0.5 + 0.5 * std::abs(ud(rng));
  }
  c -= g1.transpose() * z1;

  Eigen::MatrixXd g2;
  Eigen::Vector3d s2, z2;
  if (with_soc) {
    g2 = Eigen::MatrixXd::NullaryExpr(3, n, [&]() { return ud(rng); });
    s2 << 2.0 + std::abs(ud(rng)), 0.5 * ud(rng), 0.5 * ud(rng);
    z2 << 2.0 + std::abs(ud(rng)), 0.5 * ud(rng), 0.5 * ud(rng);
    c -= g2.transpose() * z2;
  }

  for (int i = 0; i < n; ++i) b.objective_coeff(i, c(i));
  const Eigen::VectorXd beq = a * x0;
  for (int r = 0; r < p; ++r) {
    LinExpr e(-beq(r));
    for (int i = 0; i < n; ++i) e.add(i, a(r, i));
    b.add_equality(e);
  }
  const Eigen::Vector3d h1 = g1 * x0 + s1;
  for (int r = 0; r < 3; ++r) {
    LinExpr e(h1(r));
    for (int i = 0; i < n; ++i) e.add(i, -g1(r, i));
    b.add_nonneg(e);
  }
  if (with_soc) {
    const Eigen::Vector3d h2 = g2 * x0 + s2;
    std::vector<LinExpr> rows;
    for (int r = 0; r < 3; ++r) {
      LinExpr e(h2(r));
      for (int i = 0; i < n; ++i) e.add(i, -g2(r, i));
      rows.push_back(e);
    }
    b.add_soc(rows);
  }
  return b.finalize();
}

}  // namespace

TEST_CASE("random feasible problems: weak duality and residuals", "[conic_solver]") {
  std::mt19937 rng(2024);
  int solved = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const ConicProgram p = random_feasible(rng, 6, 2, trial % 2 == 0);
    const ConicSolution sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    ++solved;
    CHECK(sol.residuals.primal <= 1e-8);
    CHECK(sol.residuals.dual <= 1e-8);
    const double pobj = p.c.dot(sol.x);
    const double dobj = -(p.b.dot(sol.y) + p.h.dot(sol.z));
    const double scale = std::max({1.0, std::abs(pobj), std::abs(dobj)});
    CHECK(pobj >= dobj - 1e-7 * scale);
    // the returned point is cone-feasible
    const PointResiduals pr = residuals(p, sol.x);
    CHECK(pr.eq_violation <= 1e-6);
    CHECK(pr.cone_violation <= 1e-6);
  }
  CHECK(solved == 25);
}

TEST_CASE("objective scaling leaves the argmin unchanged", "[conic_solver]") {
  std::mt19937 rng(99);
  const ConicProgram p = random_feasible(rng, 5, 2, true);
  ConicProgram scaled = p;
  scaled.c *= 1000.0;
  const ConicSolution s1 = solve(p);
  const ConicSolution s2 = solve(scaled);
  REQUIRE(s1.status == SolveStatus::Optimal);
  REQUIRE(s2.status == SolveStatus::Optimal);
  CHECK((s1.x - s2.x).lpNorm<Eigen::Infinity>() <= 1e-7 * std::max(1.0, s1.x.norm()));
  CHECK(s2.objective_value == Catch::Approx(1000.0 * s1.objective_value)
                                  .epsilon(1e-6)
                                  .margin(1e-6));
}

TEST_CASE("equilibration handles badly scaled data", "[conic_solver]") {
  // min x1 + 1e6 x2 s.t. 1e-4 x1 >= 1, x2 >= 1e-6
  ProgramBuilder b(2);
  b.objective_coeff(0, 1.0);
  b.objective_coeff(1, 1e6);
  b.add_nonneg(LinExpr(-1.0).add(0, 1e-4));
  b.add_nonneg(LinExpr(-1e-6).add(1, 1.0));
  const ConicSolution sol = solve(b.finalize());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == Catch::Approx(1e4).epsilon(1e-6));
  CHECK(sol.x(1) == Catch::Approx(1e-6).epsilon(1e-4).margin(1e-9));
}
