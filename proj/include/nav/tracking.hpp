#ifndef NAV_TRACKING_HPP
#define NAV_TRACKING_HPP

#include <Eigen/Dense>
#include <deque>
#include <string>
#include <vector>

#include "nav/convex.hpp"
#include "nav/perception.hpp"
#include "nav/world.hpp"

namespace nav {

// Optimal assignment (Hungarian / Jonker-Volgenant style, O(n^3)).
// cost(i, j) is the cost of matching row i to column j. Returns for each
// row the matched column or -1.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

// Constant-velocity KF over [x, y, vx, vy]. Process noise scales with dt:
// Q(dt) = dt * q_rate.
struct KFModel {
  Eigen::Vector4d q_rate = Eigen::Vector4d(0.01, 0.01, 0.1, 0.1);
  Eigen::Vector2d r = Eigen::Vector2d(0.04, 0.04);

  Eigen::Matrix4d transition(double dt) const {
    Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
    a(0, 2) = dt;
    a(1, 3) = dt;
    return a;
  }
  Eigen::Matrix4d processNoise(double dt) const {
    return (dt * q_rate).asDiagonal();
  }
  Eigen::Matrix<double, 2, 4> observation() const {
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = 1;
    h(1, 1) = 1;
    return h;
  }
  Eigen::Matrix2d measurementNoise() const { return r.asDiagonal(); }
};

enum class MotionClass { Tentative, Static, Dynamic };

struct Track {
  int id = -1;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // x, y, vx, vy
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  std::string class_label;
  Box3D last_region;
  MotionClass motion_class = MotionClass::Tentative;
  int consecutive_over = 0;   // speed samples above v_d in a row
  int consecutive_under = 0;  // speed samples at or below v_d in a row
  int misses = 0;
  std::deque<std::pair<double, Eigen::Vector2d>> history;

  Eigen::Vector2d position() const { return state.head<2>(); }
  Eigen::Vector2d velocity() const { return state.tail<2>(); }
};

void kfPredict(Track& track, const KFModel& model, double dt);
// Returns false when the innovation covariance is numerically singular.
bool kfUpdate(Track& track, const KFModel& model, const Eigen::Vector2d& z);

// True when the innovation Mahalanobis distance exceeds the gate (the
// caller then re-initializes the track from the measurement).
bool checkTrackingError(const Track& track, const KFModel& model,
                        const Eigen::Vector2d& z, double gate_mahalanobis);

// Updates the hysteresis counters with one speed sample and returns the
// resulting class.
MotionClass classifyMotion(Track& track, double v_d, int k_classify);

Assignment associate(const std::vector<Track>& tracks,
                     const std::vector<Detection3D>& detections, double gate);

struct ObstaclePrediction {
  int track_id = -1;
  std::vector<std::pair<double, ConvexHull>> samples;  // (stamp, hull)
};

// Predicted hull sequence; regions translated along the estimated velocity
// and inflated by kappa * propagated position sigma.
ObstaclePrediction predictTrajectory(const Track& track, const KFModel& model,
                                     double now, double horizon, double step,
                                     double kappa = 1.0);

struct TrackerConfig {
  KFModel model;
  double v_d = 0.3;
  int k_classify = 5;
  double gate = 2.0;
  double mahalanobis_gate = 3.0;
  int max_misses = 10;
  // Two estimates closer than this describe one object (split detections
  // briefly spawn duplicates); the younger one is dropped.
  double merge_distance = 0.3;
  double horizon = 2.0;
  double step = 0.5;
  double kappa = 1.0;
};

// Multi-object tracker: associate, filter, classify. Single writer.
class Tracker {
 public:
  explicit Tracker(const TrackerConfig& cfg) : cfg_(cfg) {}

  void step(double stamp, const std::vector<Detection3D>& detections);
  const std::vector<Track>& tracks() const { return tracks_; }
  std::vector<ObstaclePrediction> predictions(double now) const;

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  double last_stamp_ = -1.0;
  int next_id_ = 0;
};

}  // namespace nav

#endif
