#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "laptime/conic/program.hpp"

using namespace laptime::conic;

TEST_CASE("builder assembles a linear system program", "[conic_program]") {
  ProgramBuilder b(2);
  // 2x + y = 3, x + 3y = 4
  b.add_equality(LinExpr(-3.0).add(0, 2.0).add(1, 1.0));
  b.add_equality(LinExpr(-4.0).add(0, 1.0).add(1, 3.0));
  const ConicProgram p = b.finalize();
  CHECK(p.num_vars == 2);
  CHECK(p.A.rows() == 2);
  CHECK(p.G.rows() == 0);
  CHECK(p.b(0) == 3.0);
  CHECK(p.b(1) == 4.0);
}

TEST_CASE("builder emits a structural SOC block", "[conic_program]") {
  ProgramBuilder b(3);
  b.add_soc({var(0), var(1), var(2)});
  const ConicProgram p = b.finalize();
  REQUIRE(p.cones.size() == 1);
  CHECK(p.cones[0].kind == ConeKind::SecondOrder);
  CHECK(p.cones[0].dim == 3);
  CHECK(p.G.rows() == 3);
}

TEST_CASE("builder contract violations", "[conic_program]") {
  ProgramBuilder b(2);
  CHECK_THROWS_AS(b.objective_coeff(5, 1.0), std::out_of_range);
  CHECK_THROWS_AS(b.add_soc({var(0)}), std::invalid_argument);
  b.add_nonneg(var(0));
  (void)b.finalize();
  CHECK_THROWS_AS(b.finalize(), std::logic_error);
  CHECK_THROWS_AS(b.add_nonneg(var(1)), std::logic_error);
}

TEST_CASE("aggregate validation catches h/G mismatch", "[conic_program]") {
  ProgramBuilder b(2);
  b.add_soc({var(0), var(1)});
  ConicProgram p = b.finalize();
  p.h.resize(1);  // wrong length
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("point residuals", "[conic_program]") {
  ProgramBuilder b(3);
  b.add_equality(LinExpr(-1.0).add(0, 1.0));       // x0 = 1
  b.add_soc({var(0), var(1), var(2)});             // x0 >= ||(x1,x2)||
  const ConicProgram p = b.finalize();

  SECTION("feasible point") {
    Eigen::Vector3d x(1.0, 0.3, 0.4);
    const PointResiduals r = residuals(p, x);
    CHECK(r.eq_violation == 0.0);
    CHECK(r.cone_violation == 0.0);
  }
  SECTION("equality violated by 0.5") {
    Eigen::Vector3d x(1.5, 0.0, 0.0);
    CHECK(residuals(p, x).eq_violation == Catch::Approx(0.5));
  }
  SECTION("soc point (1,2,0) is outside by 1") {
    Eigen::Vector3d x(1.0, 2.0, 0.0);
    CHECK(residuals(p, x).cone_violation == Catch::Approx(1.0));
  }
}

TEST_CASE("dump/load round trip", "[conic_program]") {
  ProgramBuilder b(4);
  b.objective_coeff(0, 1.25);
  b.objective_coeff(3, -2.5);
  b.add_equality(LinExpr(-0.75).add(0, 2.0).add(2, -1.5));
  b.add_nonneg(LinExpr(3.0).add(1, -1.0));
  b.add_soc({LinExpr(2.0).add(0, 1.0), var(1, 0.5), var(2), LinExpr(-1.0).add(3, 1.0)});
  b.add_cone({LinExpr(1.0).add(3, -1.0)}, ConeKind::Zero);
  const ConicProgram p = b.finalize();

  std::stringstream buf;
  dump_program(p, buf);
  const ConicProgram q = load_program(buf);

  CHECK(q.num_vars == p.num_vars);
  CHECK((Eigen::MatrixXd(q.A) - Eigen::MatrixXd(p.A)).norm() == 0.0);
  CHECK((Eigen::MatrixXd(q.G) - Eigen::MatrixXd(p.G)).norm() == 0.0);
  CHECK((q.b - p.b).norm() == 0.0);
  CHECK((q.h - p.h).norm() == 0.0);
  CHECK((q.c - p.c).norm() == 0.0);
  REQUIRE(q.cones.size() == p.cones.size());
  for (std::size_t i = 0; i < p.cones.size(); ++i) {
    CHECK(q.cones[i].kind == p.cones[i].kind);
    CHECK(q.cones[i].dim == p.cones[i].dim);
  }
}
