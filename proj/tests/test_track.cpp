#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "laptime/track.hpp"

using namespace laptime;

TEST_CASE("csv loads a uniform grid", "[track]") {
  std::istringstream in(
      "position_m,theta_rad,v_max_mps\n"
      "0,0,50\n"
      "10,0,50\n"
      "20,0,50\n");
  const TrackProfile t = load_track(in, TrackFormat::Csv);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.step_length == Catch::Approx(10.0));
  CHECK(t.total_length() == Catch::Approx(20.0));
  CHECK(t.nodes[2].v_max == Catch::Approx(50.0));
}

TEST_CASE("csv rejects a non-uniform grid", "[track]") {
  std::istringstream in(
      "position_m,theta_rad,v_max_mps\n"
      "0,0,50\n"
      "10,0,50\n"
      "15,0,50\n");
  REQUIRE_THROWS_WITH(load_track(in, TrackFormat::Csv),
                      Catch::Matchers::ContainsSubstring("non-uniform grid"));
}

TEST_CASE("csv parse errors carry the line number", "[track]") {
  std::istringstream in(
      "position_m,theta_rad,v_max_mps\n"
      "0,0,50\n"
      "10,zero,50\n");
  REQUIRE_THROWS_WITH(load_track(in, TrackFormat::Csv),
                      Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("v_max must be positive", "[track]") {
  std::istringstream in(
      "position_m,theta_rad,v_max_mps\n"
      "0,0,50\n"
      "10,0,-1\n");
  REQUIRE_THROWS_AS(load_track(in, TrackFormat::Csv), ValidationError);
}

TEST_CASE("synthetic circuit at Le Mans length", "[track]") {
  // 1358 nodes at 10 m
  std::vector<TrackSegment> segs{{6780.0, 0.0, 0.0}, {220.0, 100.0, 0.0}, {6570.0, 0.0, 0.0}};
  const TrackProfile t = synthesize_track(segs, 10.0, 12.0, 80.0, "lemans_length");
  REQUIRE(t.nodes.size() == 1358);
  CHECK(t.total_length() == Catch::Approx(13570.0));

  std::stringstream buf;
  save_track_json(t, buf);
  const TrackProfile back = load_track_json(buf);
  REQUIRE(back.nodes.size() == t.nodes.size());
  CHECK(back.total_length() == Catch::Approx(13570.0));
}

TEST_CASE("save/load round trip", "[track]") {
  std::vector<TrackSegment> segs{{400.0, 0.0, 0.02}, {100.0, 80.0, 0.0}, {500.0, 0.0, -0.01}};
  const TrackProfile t = synthesize_track(segs, 10.0, 12.0, 60.0, "rt");

  SECTION("json is bit exact") {
    std::stringstream buf;
    save_track_json(t, buf);
    const TrackProfile back = load_track_json(buf);
    REQUIRE(back.nodes.size() == t.nodes.size());
    CHECK(back.step_length == t.step_length);
    CHECK(back.name == t.name);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      CHECK(back.nodes[k].position == t.nodes[k].position);
      CHECK(back.nodes[k].inclination_theta == t.nodes[k].inclination_theta);
      CHECK(back.nodes[k].v_max == t.nodes[k].v_max);
    }
  }

  SECTION("csv within 1e-12 relative") {
    std::stringstream buf;
    save_track_csv(t, buf);
    const TrackProfile back = load_track_csv(buf);
    REQUIRE(back.nodes.size() == t.nodes.size());
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      CHECK(back.nodes[k].v_max ==
            Catch::Approx(t.nodes[k].v_max).epsilon(1e-12));
      CHECK(back.nodes[k].inclination_theta ==
            Catch::Approx(t.nodes[k].inclination_theta).margin(1e-12));
    }
  }
}

TEST_CASE("precompute_vmax", "[track]") {
  SECTION("straight line hits the cap") {
    const auto v = precompute_vmax(std::vector<double>(5, 0.0), 25.0, 100.0);
    for (double x : v) CHECK(x == 100.0);
  }
  SECTION("curvature rule") {
    const auto v = precompute_vmax({0.01}, 25.0, 100.0);
    CHECK(v[0] == Catch::Approx(50.0));
  }
  SECTION("elementwise against a scalar loop") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> kap(-0.05, 0.05);
    std::vector<double> kappa(64);
    for (double& k : kappa) k = kap(rng);
    const auto v = precompute_vmax(kappa, 17.5, 73.0);
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      const double expect =
          kappa[i] == 0.0 ? 73.0 : std::min(73.0, std::sqrt(17.5 / std::abs(kappa[i])));
      CHECK(v[i] == Catch::Approx(expect).epsilon(1e-15));
    }
  }
  SECTION("monotone in a_lat_max") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> kap(0.0, 0.1);
    std::vector<double> kappa(32);
    for (double& k : kappa) k = kap(rng);
    const auto lo = precompute_vmax(kappa, 10.0, 80.0);
    const auto hi = precompute_vmax(kappa, 14.0, 80.0);
    for (std::size_t i = 0; i < kappa.size(); ++i) CHECK(hi[i] >= lo[i]);
  }
}

TEST_CASE("resample", "[track]") {
  std::vector<TrackSegment> segs{{300.0, 0.0, 0.0}, {100.0, 50.0, 0.0}, {200.0, 0.0, 0.0}};
  const TrackProfile t = synthesize_track(segs, 10.0, 12.0, 60.0, "rs");

  SECTION("identity") {
    const TrackProfile same = resample(t, 10.0);
    REQUIRE(same.nodes.size() == t.nodes.size());
    for (std::size_t k = 0; k < t.nodes.size(); ++k)
      CHECK(same.nodes[k].v_max == Catch::Approx(t.nodes[k].v_max));
  }

  SECTION("coarsening takes the min of the covered fine nodes") {
    const TrackProfile coarse = resample(t, 20.0);
    REQUIRE(coarse.nodes.size() == t.nodes.size() / 2 + 1);
    for (std::size_t k = 0; k + 1 < coarse.nodes.size(); ++k)
      CHECK(coarse.nodes[k].v_max ==
            Catch::Approx(std::min(t.nodes[2 * k].v_max, t.nodes[2 * k + 1].v_max)));
  }

  SECTION("conservative envelope property") {
    const TrackProfile coarse = resample(t, 30.0);
    for (std::size_t k = 0; k + 1 < coarse.nodes.size(); ++k) {
      const double lo = coarse.nodes[k].position;
      for (const TrackNode& fine : t.nodes)
        if (fine.position >= lo && fine.position < lo + 30.0)
          CHECK(coarse.nodes[k].v_max <= fine.v_max + 1e-12);
    }
  }

  SECTION("non-dividing step rejected") {
    REQUIRE_THROWS_WITH(resample(t, 7.0),
                        Catch::Matchers::ContainsSubstring("step must divide track length"));
  }
}

TEST_CASE("curvature csv variant needs a rule", "[track]") {
  const std::string body =
      "position_m,curvature_per_m\n"
      "0,0\n"
      "10,0.01\n"
      "20,0\n";
  {
    std::istringstream in(body);
    REQUIRE_THROWS_AS(load_track(in, TrackFormat::Csv), ValidationError);
  }
  {
    std::istringstream in(body);
    const CurvatureRule rule{25.0, 100.0};
    const TrackProfile t = load_track(in, TrackFormat::Csv, &rule);
    CHECK(t.nodes[0].v_max == 100.0);
    CHECK(t.nodes[1].v_max == Catch::Approx(50.0));
  }
}
