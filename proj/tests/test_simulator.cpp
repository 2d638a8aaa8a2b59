#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nav/simulator.hpp"

using namespace nav;

#ifndef SCENARIO_DIR
#define SCENARIO_DIR "scenarios"
#endif

TEST_CASE("pedestrians ping-pong between their endpoints") {
  PedestrianPath path;
  path.p0 = Eigen::Vector3d(0, 0, 0);
  path.p1 = Eigen::Vector3d(4, 0, 0);
  path.speed = 2.0;
  path.phase = 1.0;

  // Hand-worked waypoints: distance travelled s = phase + speed * t over a
  // cycle of length 2 * 4.
  CHECK((path.positionAt(0.0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((path.velocityAt(0.0) - Eigen::Vector3d(2, 0, 0)).norm() < 1e-12);
  CHECK((path.positionAt(1.5) - Eigen::Vector3d(4, 0, 0)).norm() < 1e-12);
  // Reflected at the far endpoint.
  CHECK((path.positionAt(2.0) - Eigen::Vector3d(3, 0, 0)).norm() < 1e-12);
  CHECK((path.velocityAt(2.0) - Eigen::Vector3d(-2, 0, 0)).norm() < 1e-12);
  // Back at the start after a half cycle from the far end.
  CHECK((path.positionAt(3.5) - Eigen::Vector3d(0, 0, 0)).norm() < 1e-12);
  // Periodic with period 2L / v = 4.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    double t = u(rng);
    CHECK((path.positionAt(t) - path.positionAt(t + 4.0)).norm() < 1e-9);
    // Always on the segment, always at the commanded speed.
    Eigen::Vector3d p = path.positionAt(t);
    CHECK(p.x() >= -1e-12);
    CHECK(p.x() <= 4.0 + 1e-12);
    CHECK(std::abs(p.y()) < 1e-12);
    CHECK(path.velocityAt(t).norm() == doctest::Approx(2.0));
    // Velocity is the derivative of position away from the endpoints.
    if (p.x() > 0.01 && p.x() < 3.99) {
      double h = 1e-6;
      Eigen::Vector3d fd = (path.positionAt(t + h) - path.positionAt(t - h)) / (2 * h);
      CHECK((fd - path.velocityAt(t)).norm() < 1e-6);
    }
  }
}

TEST_CASE("scenario serialization round-trips and rejects bad input") {
  Scenario sc = loadScenario(std::string(SCENARIO_DIR) + "/corridor_scene1.json");
  CHECK(sc.name == "corridor_scene1");
  CHECK(sc.pedestrians.size() == 1);
  CHECK(sc.agent.v_max == doctest::Approx(1.5));
  CHECK(sc.static_boxes.size() == 2);

  std::string once = scenarioToJson(sc);
  Scenario back = parseScenario(once);
  CHECK(scenarioToJson(back) == once);

  CHECK_THROWS_AS(parseScenario("this is not json"), ScenarioError);
  CHECK_THROWS_AS(loadScenario("/nonexistent/file.json"), ScenarioError);

  applyOverride(sc, "agent.v_max=2.0");
  CHECK(sc.agent.v_max == doctest::Approx(2.0));
  applyOverride(sc, "seed=7");
  CHECK(sc.seed == 7);
  CHECK_THROWS_AS(applyOverride(sc, "no_such.key=1"), ScenarioError);
  CHECK_THROWS_AS(applyOverride(sc, "missing-equals"), ScenarioError);

  Scenario invalid = back;
  invalid.agent.v_max = -1.0;
  CHECK_THROWS_AS(invalid.validate(), ScenarioError);
}

TEST_CASE("empty corridor run succeeds and is byte-identical across runs") {
  Scenario sc = loadScenario(std::string(SCENARIO_DIR) + "/corridor_empty.json");
  RunOutcome a = runScenario(sc);
  CHECK(a.event == RunEvent::Success);
  CHECK(a.duration > 0.0);
  CHECK(a.duration < sc.time_limit);
  CHECK(a.min_clearance > 0.0);
  CHECK(!a.timings.empty());
  CHECK(!a.trajectory_csv.empty());

  RunOutcome b = runScenario(sc);
  CHECK(a.deterministicLogs() == b.deterministicLogs());
  CHECK(a.event == b.event);
  CHECK(a.duration == b.duration);
}

TEST_CASE("stepping API matches the batch run") {
  Scenario sc = loadScenario(std::string(SCENARIO_DIR) + "/corridor_empty.json");
  Simulator sim(sc);
  CHECK(sim.time() == 0.0);
  CHECK((sim.agentPosition() - sc.agent.start).norm() < 1e-9);
  while (!sim.finished()) sim.step(sc.physics_dt);
  REQUIRE(sim.event().has_value());
  CHECK(*sim.event() == RunEvent::Success);
  CHECK((sim.agentPosition() - sc.agent.goal).norm() < 0.5);
}

TEST_CASE("tracking stays close to ground truth in the estimation scene") {
  Scenario sc = loadScenario(std::string(SCENARIO_DIR) + "/corridor_rmse.json");
  RunOutcome out = runScenario(sc);
  CHECK(out.event == RunEvent::Success);
  REQUIRE(!out.tracking.empty());
  REQUIRE(!out.truth.empty());

  RmseReport r = rmseReport(out);
  CHECK(r.matched_samples > 0);
  CHECK(r.position_rmse > 0.0);   // noisy sensing: exactly zero would be fake
  CHECK(r.position_rmse < 0.5);
  CHECK(r.velocity_rmse < 0.8);

  // The report excludes the warmup; a tight gate throws when nothing matches.
  CHECK_THROWS(rmseReport(out, 1e-9, 1.0));
}
