#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nav/optimizer.hpp"
#include "nav/search.hpp"

using namespace nav;

namespace {

OccupancyGrid emptyGrid(const Eigen::Vector3d& center) {
  OccupancyGrid::Config cfg;
  cfg.resolution = 0.1;
  cfg.size = Eigen::Vector3d(12.0, 12.0, 3.0);
  cfg.inflation_radius = 0.3;
  cfg.max_range = 20.0;
  cfg.truncation_distance = 3.0;
  return OccupancyGrid(cfg, center);
}

// Wall plane x = wall_x spanning the grid, carved from a sensor at `from`.
void buildWall(OccupancyGrid& grid, const Eigen::Vector3d& from, double wall_x) {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.translation() = from;
  std::vector<Eigen::Vector3d> pts;
  for (double y = -5.0; y <= 5.0; y += 0.05) {
    for (double z = -0.4; z <= 2.4; z += 0.05) {
      pts.push_back(Eigen::Vector3d(wall_x, y, z) - from);
    }
  }
  grid.insertPointCloud(pose, pts);
}

// Straight line with half-stride ramps at both ends so acceleration stays
// within limits for stride/dt up to 2 * a_max * dt.
BSpline straightLine(const Eigen::Vector3d& from, const Eigen::Vector3d& dir,
                     int strides, double stride_len, double dt) {
  Eigen::Matrix3Xd cps(3, strides + 7);
  cps.col(0) = cps.col(1) = cps.col(2) = from;
  Eigen::Vector3d p = from + 0.5 * stride_len * dir;
  cps.col(3) = p;
  for (int i = 0; i < strides; ++i) {
    p += stride_len * dir;
    cps.col(4 + i) = p;
  }
  p += 0.5 * stride_len * dir;
  cps.col(strides + 4) = cps.col(strides + 5) = cps.col(strides + 6) = p;
  return BSpline(cps, dt, 3);
}

ObstaclePrediction boxPrediction(int id, const Eigen::Vector3d& center,
                                 const Eigen::Vector3d& half) {
  ObstaclePrediction pred;
  pred.track_id = id;
  Box3D b;
  b.center = center;
  b.half_extents = half;
  for (double tau = 0.0; tau <= 2.0 + 1e-9; tau += 0.5) {
    pred.samples.emplace_back(tau, ConvexHull{b.corners()});
  }
  return pred;
}

double minStaticDistance(const BSpline& traj, const OccupancyGrid& grid,
                         double lo_frac = 0.0, double hi_frac = 1.0) {
  double worst = std::numeric_limits<double>::infinity();
  for (double t = lo_frac * traj.duration(); t < hi_frac * traj.duration();
       t += 0.01) {
    worst = std::min(worst, grid.distanceToObstacle(traj.position(t)));
  }
  return worst;
}

}  // namespace

TEST_CASE("smoothness cost vanishes on uniform straight lines and matches FD") {
  OptWeights w;
  // Uniformly spaced collinear control points: every difference stencil of
  // order >= 2 annihilates them, so all smoothness terms vanish.
  Eigen::Matrix3Xd uniform(3, 8);
  for (int i = 0; i < 8; ++i) uniform.col(i) = Eigen::Vector3d(0.3 * i, 0, 1);
  CHECK(smoothnessCost(BSpline(uniform, 0.3, 3), w, nullptr) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Gradient vs central finite differences on random control polygons.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-6;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::Matrix3Xd p(3, 9);
    for (int i = 0; i < 9; ++i) p.col(i) = Eigen::Vector3d(u(rng), u(rng), u(rng));
    Eigen::Matrix3Xd grad;
    smoothnessCost(BSpline(p, 0.3, 3), w, &grad);
    for (int trial = 0; trial < 6; ++trial) {
      int i = std::uniform_int_distribution<int>(0, 8)(rng);
      int ax = std::uniform_int_distribution<int>(0, 2)(rng);
      Eigen::Matrix3Xd pp = p, pm = p;
      pp(ax, i) += h;
      pm(ax, i) -= h;
      double fd = (smoothnessCost(BSpline(pp, 0.3, 3), w, nullptr) -
                   smoothnessCost(BSpline(pm, 0.3, 3), w, nullptr)) /
                  (2 * h);
      REQUIRE(grad(ax, i) ==
              doctest::Approx(fd).epsilon(1e-5).scale(1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("collision cost gradient matches FD away from hinge kinks") {
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  buildWall(grid, Eigen::Vector3d(0, 0, 1), 3.0);
  auto pred = boxPrediction(1, Eigen::Vector3d(1.5, 0.8, 0.85),
                            Eigen::Vector3d(0.3, 0.3, 0.85));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double d_min = 0.4, w_col = 10.0, h = 1e-6;
  int configs = 0;
  int checked = 0;
  for (int rep = 0; rep < 400 && configs < 100; ++rep) {
    Eigen::Matrix3Xd p(3, 8);
    Eigen::Vector3d base(0.5 + 1.5 * std::abs(u(rng)), 0.8 * u(rng), 1.0);
    for (int i = 0; i < 8; ++i) {
      p.col(i) = base + Eigen::Vector3d(0.25 * i, 0.3 * u(rng), 0.1 * u(rng));
    }
    BSpline traj(p, 0.3, 3);
    SegmentObstacleHulls hulls =
        buildSegmentObstacleHulls(traj, 0.0, {pred}, 2.0);

    // Skip configurations with a sample on a hinge boundary (cost is only
    // C0 there) or inside an obstacle / hull: in the penetration region the
    // sampled distance is flat zero and the implementation deliberately
    // substitutes a push-out pseudo-gradient, so FD is meaningless.
    bool near_kink = false;
    Eigen::Matrix3Xd pt(3, 1);
    for (int s = 0; s < traj.numSegments() && !near_kink; ++s) {
      for (int k = 0; k < 4; ++k) {
        double t = (s + (k + 0.5) / 4.0) * 0.3;
        Eigen::Vector3d q = traj.position(t);
        double sd = grid.distanceToObstacle(q);
        if (sd < 1e-3 || std::abs(sd - d_min) < 1e-4) near_kink = true;
        for (const auto& [id, hull] : hulls[s]) {
          pt.col(0) = q;
          double hd = gjkClosest(pt, hull.vertices).distance;
          if (hd < 1e-3 || std::abs(hd - d_min) < 1e-4) near_kink = true;
        }
      }
    }
    if (near_kink) continue;
    ++configs;

    Eigen::Matrix3Xd grad;
    collisionCost(traj, grid, hulls, d_min, w_col, &grad);
    auto eval = [&](const Eigen::Matrix3Xd& q) {
      return collisionCost(BSpline(q, 0.3, 3), grid, hulls, d_min, w_col,
                           nullptr);
    };
    for (int trial = 0; trial < 4; ++trial) {
      int i = std::uniform_int_distribution<int>(0, 7)(rng);
      int ax = std::uniform_int_distribution<int>(0, 2)(rng);
      auto central = [&](double step) {
        Eigen::Matrix3Xd pp = p, pm = p;
        pp(ax, i) += step;
        pm(ax, i) -= step;
        return (eval(pp) - eval(pm)) / (2 * step);
      };
      double fd = central(h);
      // The field is only piecewise smooth (voxel faces of the trilinear
      // distance field, GJK feature changes). Probe differentiability: two
      // FD step sizes must agree before the comparison is meaningful.
      if (std::abs(fd - central(10 * h)) > 1e-4 * (1.0 + std::abs(fd))) {
        continue;
      }
      ++checked;
      REQUIRE(grad(ax, i) ==
              doctest::Approx(fd).epsilon(1e-4).scale(1.0 + std::abs(fd)));
    }
  }
  REQUIRE(configs == 100);
  REQUIRE(checked >= 250);  // the vast majority of probes are usable
}

TEST_CASE("penetration gradient pushes a buried sample out of the hull") {
  // Inside a hull the sampled distance is flat zero; the cost supplies a
  // centroid-away pseudo-gradient so descent still escapes. Verify the
  // descent direction (-grad) moves the buried control points away from
  // the hull centroid.
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  Eigen::Vector3d c(1.5, 0.2, 1.0);
  auto pred = boxPrediction(9, c, Eigen::Vector3d(0.6, 0.6, 0.9));
  Eigen::Matrix3Xd p(3, 4);
  for (int i = 0; i < 4; ++i) p.col(i) = Eigen::Vector3d(1.35 + 0.1 * i, 0.25, 1.0);
  BSpline traj(p, 0.3, 3);
  SegmentObstacleHulls hulls = buildSegmentObstacleHulls(traj, 0.0, {pred}, 2.0);
  Eigen::Matrix3Xd grad;
  collisionCost(traj, grid, hulls, 0.4, 10.0, &grad);
  REQUIRE(grad.norm() > 0.0);
  for (int i = 0; i < 4; ++i) {
    CHECK((-grad.col(i)).dot(p.col(i) - c) > 0.0);
  }
}

TEST_CASE("separating planes put obstacle and segment on opposite sides") {
  BSpline traj = straightLine(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                              8, 0.3, 0.3);
  auto pred = boxPrediction(4, Eigen::Vector3d(1.2, 0.7, 0.85),
                            Eigen::Vector3d(0.3, 0.3, 0.85));
  SegmentObstacleHulls hulls = buildSegmentObstacleHulls(traj, 0.0, {pred}, 2.0);
  auto planes = assignSeparatingPlanes(traj, hulls, 2.0, 0.4);
  REQUIRE(planes.has_value());
  REQUIRE(!planes->empty());
  for (const auto& pa : *planes) {
    const auto& plane = pa.plane;
    REQUIRE(plane.normal.norm() == doctest::Approx(1.0));
    // Obstacle hull on the nonnegative side.
    ConvexHull window;
    for (const auto& [id, hull] : hulls[pa.segment]) {
      if (id == pa.obstacle_id) window = hull;
    }
    REQUIRE(window.vertices.cols() > 0);
    for (int i = 0; i < window.vertices.cols(); ++i) {
      REQUIRE(plane.normal.dot(window.vertices.col(i)) + plane.offset >= -1e-9);
    }
    // Segment control points on the nonpositive side.
    Eigen::Matrix3Xd seg = traj.segmentControlPoints(pa.segment);
    for (int i = 0; i < seg.cols(); ++i) {
      REQUIRE(plane.normal.dot(seg.col(i)) + plane.offset <= 1e-9);
    }
  }

  // A segment overlapping the obstacle admits no plane.
  BSpline through = straightLine(Eigen::Vector3d(1.2, 0.7, 0.85),
                                 Eigen::Vector3d::UnitX(), 4, 0.3, 0.3);
  SegmentObstacleHulls h2 = buildSegmentObstacleHulls(through, 0.0, {pred}, 2.0);
  CHECK_FALSE(assignSeparatingPlanes(through, h2, 2.0, 0.4).has_value());
}

TEST_CASE("optimization pushes a wall-grazing path out to the safety margin") {
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  buildWall(grid, Eigen::Vector3d(0, -1.0, 1), 3.0);

  // Straight line parallel to the wall at ~0.33 m from the occupied voxel
  // centers (inside d_min = 0.4 but outside the hard inflation radius).
  BSpline initial = straightLine(Eigen::Vector3d(2.72, -2.0, 1.0),
                                 Eigen::Vector3d::UnitY(), 10, 0.3, 0.3);
  OptConfig cfg;
  auto [optimized, report] = optimizeTrajectory(initial, grid, {}, 0.0, cfg);

  CHECK(report.termination == OptTermination::Converged);
  // The boundary control points are pinned, so compare clearance over the
  // interior of the curve, where the optimizer is free to act.
  double before = minStaticDistance(initial, grid, 0.25, 0.75);
  double after = minStaticDistance(optimized, grid, 0.25, 0.75);
  CHECK(before < 0.4);
  CHECK(after > before);
  // Boundary control points are pinned: the hand-over state and the goal
  // survive optimization untouched.
  for (int i : {0, 1, 2}) {
    CHECK((optimized.controlPoints().col(i) - initial.controlPoints().col(i)).norm() ==
          doctest::Approx(0.0));
  }
  int n = initial.numControlPoints();
  for (int i : {n - 3, n - 2, n - 1}) {
    CHECK((optimized.controlPoints().col(i) - initial.controlPoints().col(i)).norm() ==
          doctest::Approx(0.0));
  }
  auto audit = checkFeasibility(optimized, grid, {}, 0.0, cfg.limits);
  CHECK(audit.pass(1e-3));
}

TEST_CASE("optimization clears a predicted obstacle hull") {
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  // Hull edge 0.35 m off the path: beyond the plane margin (d_min / 2) so
  // the initial assignment is feasible, but inside the d_min hinge.
  auto pred = boxPrediction(2, Eigen::Vector3d(1.5, 0.65, 0.85),
                            Eigen::Vector3d(0.3, 0.3, 0.85));
  BSpline initial = straightLine(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                                 10, 0.3, 0.3);
  OptConfig cfg;
  auto [optimized, report] = optimizeTrajectory(initial, grid, {pred}, 0.0, cfg);
  CHECK(report.termination == OptTermination::Converged);
  auto audit = checkFeasibility(optimized, grid, {pred}, 0.0, cfg.limits);
  CHECK(audit.pass(1e-3));
  // The optimized curve is measurably farther from the hull than the
  // initial straight line was.
  ConvexHull hull = pred.samples.front().second;
  auto minDist = [&](const BSpline& tr) {
    double worst = std::numeric_limits<double>::infinity();
    Eigen::Matrix3Xd pt(3, 1);
    for (double t = 0; t < tr.duration(); t += 0.01) {
      pt.col(0) = tr.position(t);
      worst = std::min(worst, gjkClosest(pt, hull.vertices).distance);
    }
    return worst;
  };
  CHECK(minDist(optimized) > minDist(initial) + 0.01);
}

TEST_CASE("a feasible input is never made worse") {
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  BSpline initial = straightLine(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                                 10, 0.3, 0.3);
  OptConfig cfg;
  auto [optimized, report] = optimizeTrajectory(initial, grid, {}, 0.0, cfg);
  CHECK(report.termination == OptTermination::Converged);
  auto audit = checkFeasibility(optimized, grid, {}, 0.0, cfg.limits);
  CHECK(audit.pass(1e-3));

  Eigen::Matrix3Xd g;
  double init_cost = smoothnessCost(initial, cfg.weights, nullptr) +
                     collisionCost(initial, grid, {}, cfg.d_min, cfg.weights.w_collision,
                                   nullptr);
  double opt_cost = smoothnessCost(optimized, cfg.weights, nullptr) +
                    collisionCost(optimized, grid, {}, cfg.d_min, cfg.weights.w_collision,
                                  nullptr);
  CHECK(opt_cost <= init_cost + 1e-9);
}

TEST_CASE("feasibility audit reports exact derivative violations") {
  OccupancyGrid grid = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  OptLimits limits;

  // Velocity violation by construction: stride 0.6 at dt 0.3 -> 2.0 m/s on
  // the x axis, 0.5 beyond the limit.
  BSpline fast = straightLine(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                              6, 0.6, 0.3);
  auto audit = checkFeasibility(fast, grid, {}, 0.0, limits);
  CHECK(audit.velocity_violation == doctest::Approx(0.5).epsilon(1e-9));
  // The half-stride ramp also breaks the accel limit:
  // (0.6 / 2) / 0.3^2 - 3.0 = 1/3.
  CHECK(audit.accel_violation == doctest::Approx(0.3 / 0.09 - 3.0).epsilon(1e-9));
  CHECK_FALSE(audit.pass(1e-3));

  // Clean input passes with zeros.
  BSpline slow = straightLine(Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitX(),
                              10, 0.3, 0.3);
  auto clean = checkFeasibility(slow, grid, {}, 0.0, limits);
  CHECK(clean.velocity_violation == 0.0);
  CHECK(clean.accel_violation == 0.0);
  CHECK(clean.pass(1e-3));

  // A path through a wall is flagged as a static violation...
  OccupancyGrid walled = emptyGrid(Eigen::Vector3d(1.5, 0, 1));
  buildWall(walled, Eigen::Vector3d(0, 0, 1), 1.5);
  auto blocked = checkFeasibility(slow, walled, {}, 0.0, limits);
  CHECK(blocked.static_violation >= walled.inflationRadius() - 1e-9);
  // ...and a path through a predicted hull as a dynamic one.
  auto pred = boxPrediction(5, Eigen::Vector3d(1.5, 0.0, 0.85),
                            Eigen::Vector3d(0.3, 0.3, 0.85));
  auto dyn = checkFeasibility(slow, grid, {pred}, 0.0, limits);
  CHECK(dyn.dynamic_violation > 0.0);
}
