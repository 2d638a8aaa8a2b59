#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "nav/tracking.hpp"

using namespace nav;

namespace {

// Exhaustive assignment oracle: minimum total cost over all injective
// matchings that cover min(rows, cols) pairs. Rows left over are free.
double bruteAssignmentCost(const Eigen::MatrixXd& cost) {
  const int r = static_cast<int>(cost.rows());
  const int c = static_cast<int>(cost.cols());
  if (r <= c) {
    std::vector<int> cols(c);
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::sort(cols.begin(), cols.end());
    do {
      double total = 0;
      for (int i = 0; i < r; ++i) total += cost(i, cols[i]);
      best = std::min(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
  }
  return bruteAssignmentCost(cost.transpose());
}

double hungarianCost(const Eigen::MatrixXd& cost) {
  std::vector<int> match = hungarian(cost);
  double total = 0;
  std::vector<bool> used(cost.cols(), false);
  int matched = 0;
  for (int i = 0; i < static_cast<int>(match.size()); ++i) {
    int j = match[i];
    if (j < 0) continue;
    REQUIRE(j < cost.cols());
    REQUIRE(!used[j]);  // injective
    used[j] = true;
    total += cost(i, j);
    ++matched;
  }
  REQUIRE(matched == std::min(cost.rows(), cost.cols()));
  return total;
}

Track freshTrack(const KFModel& model, const Eigen::Vector2d& pos) {
  Track t;
  t.state << pos.x(), pos.y(), 0, 0;
  t.covariance = Eigen::Matrix4d::Identity();
  (void)model;
  return t;
}

Box3D unitRegion(const Eigen::Vector2d& pos) {
  Box3D b;
  b.center = Eigen::Vector3d(pos.x(), pos.y(), 0.85);
  b.half_extents = Eigen::Vector3d(0.3, 0.3, 0.85);
  return b;
}

}  // namespace

TEST_CASE("hungarian matches exhaustive search on random matrices") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 7);
  std::uniform_real_distribution<double> val(0.0, 10.0);
  for (int it = 0; it < 1000; ++it) {
    int r = dim(rng), c = dim(rng);
    Eigen::MatrixXd cost(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) cost(i, j) = val(rng);
    }
    double got = hungarianCost(cost);
    double expect = bruteAssignmentCost(cost);
    REQUIRE(got == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("kalman filter reproduces a hand-worked scalar update") {
  KFModel model;
  model.q_rate = Eigen::Vector4d::Zero();
  model.r = Eigen::Vector2d(0.25, 0.25);

  Track t;
  t.state << 1.0, 2.0, 0.0, 0.0;
  t.covariance = Eigen::Matrix4d::Identity() * 0.75;

  // Scalar form: K = P / (P + R) = 0.75 (positions decouple, velocity
  // unobserved and uncorrelated).
  REQUIRE(kfUpdate(t, model, Eigen::Vector2d(2.0, 2.0)));
  CHECK(t.state(0) == doctest::Approx(1.0 + 0.75 * 1.0));
  CHECK(t.state(1) == doctest::Approx(2.0));
  CHECK(t.state(2) == doctest::Approx(0.0));
  CHECK(t.covariance(0, 0) == doctest::Approx(0.25 * 0.75));  // (1-K)P
  CHECK(t.covariance(2, 2) == doctest::Approx(0.75));         // untouched

  // Prediction shifts position by velocity and grows covariance by Q.
  KFModel noisy;
  Track t2;
  t2.state << 0.0, 0.0, 1.0, -2.0;
  t2.covariance = Eigen::Matrix4d::Identity();
  kfPredict(t2, noisy, 0.5);
  CHECK(t2.state(0) == doctest::Approx(0.5));
  CHECK(t2.state(1) == doctest::Approx(-1.0));
  // P' = A P A^T + Q; with P = I the (0,0) term is 1 + dt^2 + dt*q0.
  CHECK(t2.covariance(0, 0) == doctest::Approx(1.0 + 0.25 + 0.5 * 0.01));
  CHECK(t2.covariance(0, 2) == doctest::Approx(0.5));
}

TEST_CASE("kalman filter with zero process noise matches least squares") {
  // With q_rate = 0 and a diffuse prior the KF is recursive least squares:
  // after n updates the state must match the normal-equations line fit.
  KFModel model;
  model.q_rate = Eigen::Vector4d::Zero();
  model.r = Eigen::Vector2d(0.04, 0.04);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.2);
  const double dt = 0.1;
  const int n = 30;

  Track t;
  t.state.setZero();
  t.covariance = Eigen::Matrix4d::Identity() * 1e10;

  std::vector<double> stamps;
  std::vector<Eigen::Vector2d> zs;
  for (int k = 0; k < n; ++k) {
    double time = k * dt;
    Eigen::Vector2d z(1.0 + 0.8 * time + noise(rng), -2.0 + 0.3 * time + noise(rng));
    stamps.push_back(time);
    zs.push_back(z);
    if (k > 0) kfPredict(t, model, dt);
    REQUIRE(kfUpdate(t, model, z));
  }

  // Independent oracle: unweighted LS fit z = x_end + v * (t - t_end).
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) {
      a(k, 0) = 1.0;
      a(k, 1) = stamps[k] - stamps[n - 1];
      b(k) = zs[k](axis);
    }
    Eigen::Vector2d fit = (a.transpose() * a).ldlt().solve(a.transpose() * b);
    CHECK(t.state(axis) == doctest::Approx(fit(0)).epsilon(1e-4));
    CHECK(t.state(axis + 2) == doctest::Approx(fit(1)).epsilon(1e-4));
  }
}

TEST_CASE("covariance stays symmetric positive definite over long runs") {
  KFModel model;
  Track t;
  t.state.setZero();
  t.covariance = Eigen::Matrix4d::Identity();
  std::mt19937_64 rng(23);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (int k = 0; k < 10000; ++k) {
    kfPredict(t, model, 0.1);
    Eigen::Vector2d z = t.position() + Eigen::Vector2d(noise(rng), noise(rng));
    REQUIRE(kfUpdate(t, model, z));
    REQUIRE((t.covariance - t.covariance.transpose()).norm() < 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(t.covariance);
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    REQUIRE(es.eigenvalues().maxCoeff() < 1e3);
  }
}

TEST_CASE("innovation gate flags only distant measurements") {
  KFModel model;
  Track t;
  t.state << 0, 0, 0, 0;
  t.covariance = Eigen::Matrix4d::Identity() * 0.01;
  // Innovation sigma = sqrt(P + R) = sqrt(0.05) ~ 0.224 per axis.
  CHECK_FALSE(checkTrackingError(t, model, Eigen::Vector2d(0.2, 0.0), 3.0));
  CHECK(checkTrackingError(t, model, Eigen::Vector2d(1.0, 0.0), 3.0));
  // Exactly at the boundary: 3 sigma along x.
  double sigma = std::sqrt(0.05);
  CHECK_FALSE(checkTrackingError(t, model, Eigen::Vector2d(2.99 * sigma, 0.0), 3.0));
  CHECK(checkTrackingError(t, model, Eigen::Vector2d(3.01 * sigma, 0.0), 3.0));
}

TEST_CASE("motion classification uses consecutive-sample hysteresis") {
  KFModel model;
  Track t = freshTrack(model, Eigen::Vector2d::Zero());
  const double v_d = 0.3;
  const int k = 5;

  t.state.tail<2>() << 1.0, 0.0;  // fast
  for (int i = 0; i < k - 1; ++i) {
    CHECK(classifyMotion(t, v_d, k) == MotionClass::Tentative);
  }
  CHECK(classifyMotion(t, v_d, k) == MotionClass::Dynamic);

  // A single slow sample must not flip the class...
  t.state.tail<2>() << 0.0, 0.0;
  CHECK(classifyMotion(t, v_d, k) == MotionClass::Dynamic);
  // ...and a fast sample resets the under-counter.
  t.state.tail<2>() << 0.5, 0.0;
  CHECK(classifyMotion(t, v_d, k) == MotionClass::Dynamic);
  t.state.tail<2>() << 0.0, 0.0;
  for (int i = 0; i < k - 1; ++i) {
    CHECK(classifyMotion(t, v_d, k) == MotionClass::Dynamic);
  }
  CHECK(classifyMotion(t, v_d, k) == MotionClass::Static);
}

TEST_CASE("association respects the distance gate") {
  KFModel model;
  std::vector<Track> tracks = {freshTrack(model, Eigen::Vector2d(0, 0)),
                               freshTrack(model, Eigen::Vector2d(5, 0))};
  Detection3D near, far, orphan;
  near.centroid = Eigen::Vector3d(0.3, 0.1, 0.85);
  far.centroid = Eigen::Vector3d(5.2, -0.1, 0.85);
  orphan.centroid = Eigen::Vector3d(20.0, 20.0, 0.85);

  Assignment a = associate(tracks, {orphan, far, near}, 2.0);
  REQUIRE(a.matches.size() == 2);
  std::sort(a.matches.begin(), a.matches.end());
  CHECK(a.matches[0] == std::make_pair(0, 2));
  CHECK(a.matches[1] == std::make_pair(1, 1));
  REQUIRE(a.unmatched_detections.size() == 1);
  CHECK(a.unmatched_detections[0] == 0);
  CHECK(a.unmatched_tracks.empty());

  // Degenerate inputs.
  Assignment empty = associate({}, {near}, 2.0);
  CHECK(empty.matches.empty());
  CHECK(empty.unmatched_detections.size() == 1);
  Assignment no_dets = associate(tracks, {}, 2.0);
  CHECK(no_dets.unmatched_tracks.size() == 2);
}

TEST_CASE("prediction translates hulls and inflates monotonically") {
  KFModel model;
  Track t;
  t.id = 9;
  t.state << 1.0, 2.0, 0.5, -0.25;
  t.covariance = Eigen::Matrix4d::Identity() * 0.01;
  t.motion_class = MotionClass::Dynamic;
  t.last_region = unitRegion(Eigen::Vector2d(1.0, 2.0));

  ObstaclePrediction pred = predictTrajectory(t, model, 10.0, 2.0, 0.5, 1.0);
  CHECK(pred.track_id == 9);
  REQUIRE(pred.samples.size() == 5);
  double prev_width = 0.0;
  for (size_t i = 0; i < pred.samples.size(); ++i) {
    double tau = 0.5 * static_cast<double>(i);
    CHECK(pred.samples[i].first == doctest::Approx(10.0 + tau));
    Eigen::Vector3d lo = pred.samples[i].second.vertices.rowwise().minCoeff();
    Eigen::Vector3d hi = pred.samples[i].second.vertices.rowwise().maxCoeff();
    Eigen::Vector3d mid = (lo + hi) / 2;
    // Center rides the constant-velocity extrapolation.
    CHECK(mid.x() == doctest::Approx(1.0 + 0.5 * tau).epsilon(1e-9));
    CHECK(mid.y() == doctest::Approx(2.0 - 0.25 * tau).epsilon(1e-9));
    // Horizontal extent never shrinks along the horizon.
    double width = hi.x() - lo.x();
    CHECK(width >= prev_width - 1e-12);
    CHECK(width >= 0.6);  // at least the region itself
    prev_width = width;
  }

  Track still = t;
  still.motion_class = MotionClass::Static;
  CHECK_THROWS_AS(predictTrajectory(still, model, 0, 2, 0.5), std::domain_error);
  CHECK_THROWS_AS(predictTrajectory(t, model, 0, -1, 0.5), std::domain_error);
}

TEST_CASE("tracker pipeline classifies a walking pedestrian and prunes stale tracks") {
  TrackerConfig cfg;
  Tracker tracker(cfg);
  const double dt = 0.1;
  const Eigen::Vector2d vel(1.0, 0.0);

  for (int k = 0; k < 30; ++k) {
    Eigen::Vector2d pos = Eigen::Vector2d(2.0, 0.0) + k * dt * vel;
    Detection3D d;
    d.centroid = Eigen::Vector3d(pos.x(), pos.y(), 0.85);
    d.region = unitRegion(pos);
    d.class_label = "person";
    tracker.step(k * dt, {d});
  }
  REQUIRE(tracker.tracks().size() == 1);
  const Track& tr = tracker.tracks()[0];
  CHECK(tr.motion_class == MotionClass::Dynamic);
  CHECK(tr.velocity().x() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(tr.velocity().y() == doctest::Approx(0.0).scale(1.0).epsilon(0.1));
  CHECK(!tracker.predictions(3.0).empty());

  // Detections stop: the track survives max_misses empty cycles and is
  // pruned on the next one.
  for (int k = 0; k < cfg.max_misses; ++k) {
    tracker.step(3.0 + k * dt, {});
    REQUIRE(tracker.tracks().size() == 1);
  }
  tracker.step(5.0, {});
  CHECK(tracker.tracks().empty());
}

TEST_CASE("split detections collapse to a single track") {
  TrackerConfig cfg;
  Tracker tracker(cfg);

  // One object momentarily seen as two detections 0.1 m apart.
  Detection3D a, b;
  a.centroid = Eigen::Vector3d(2.0, 0.0, 0.85);
  a.region = unitRegion(Eigen::Vector2d(2.0, 0.0));
  b.centroid = Eigen::Vector3d(2.1, 0.0, 0.85);
  b.region = unitRegion(Eigen::Vector2d(2.1, 0.0));
  tracker.step(0.0, {a, b});
  CHECK(tracker.tracks().size() == 1);

  // Well-separated objects both keep their tracks.
  Detection3D c;
  c.centroid = Eigen::Vector3d(5.0, 0.0, 0.85);
  c.region = unitRegion(Eigen::Vector2d(5.0, 0.0));
  tracker.step(0.1, {a, c});
  CHECK(tracker.tracks().size() == 2);
}

TEST_CASE("a teleporting measurement restarts the filter") {
  TrackerConfig cfg;
  cfg.gate = 100.0;  // force association despite the jump
  Tracker tracker(cfg);
  for (int k = 0; k < 10; ++k) {
    Detection3D d;
    d.centroid = Eigen::Vector3d(1.0, 1.0, 0.85);
    d.region = unitRegion(Eigen::Vector2d(1.0, 1.0));
    tracker.step(k * 0.1, {d});
  }
  REQUIRE(tracker.tracks().size() == 1);
  int id_before = tracker.tracks()[0].id;

  Detection3D jump;
  jump.centroid = Eigen::Vector3d(50.0, 1.0, 0.85);
  jump.region = unitRegion(Eigen::Vector2d(50.0, 1.0));
  tracker.step(1.0, {jump});
  REQUIRE(tracker.tracks().size() == 1);
  const Track& tr = tracker.tracks()[0];
  // Same track object, but state re-seeded at the measurement with the
  // classification reset.
  CHECK(tr.id == id_before);
  CHECK(tr.position().x() == doctest::Approx(50.0).epsilon(1e-6));
  CHECK(tr.velocity().norm() == doctest::Approx(0.0));
  CHECK(tr.motion_class == MotionClass::Tentative);
}
