#include "nav/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nav {

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  // Potentials-based shortest augmenting path assignment on a square
  // matrix (rows/columns padded implicitly with zeros cost is wrong; pad
  // explicitly instead).
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  const int n = std::max(rows, cols);
  const double pad = 0.0;
  auto c = [&](int i, int j) -> double {
    if (i < rows && j < cols) return cost(i, j);
    return pad;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> match(rows, -1);
  for (int j = 1; j <= n; ++j) {
    int i = p[j];
    if (i >= 1 && i <= rows && j <= cols) match[i - 1] = j - 1;
  }
  return match;
}

void kfPredict(Track& track, const KFModel& model, double dt) {
  if (!(dt > 0)) return;
  Eigen::Matrix4d a = model.transition(dt);
  track.state = a * track.state;
  track.covariance =
      a * track.covariance * a.transpose() + model.processNoise(dt);
  track.covariance = 0.5 * (track.covariance + track.covariance.transpose());
}

namespace {

// Fresh tracks know their position to measurement accuracy but nothing
// about velocity; a wide velocity prior lets the first updates set the
// velocity by differencing instead of dragging it up from zero.
Eigen::Matrix4d initialCovariance(const KFModel& model) {
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  p(0, 0) = model.r(0);
  p(1, 1) = model.r(1);
  p(2, 2) = 25.0;
  p(3, 3) = 25.0;
  return p;
}

}  // namespace

bool kfUpdate(Track& track, const KFModel& model, const Eigen::Vector2d& z) {
  const auto h = model.observation();
  Eigen::Matrix2d s =
      h * track.covariance * h.transpose() + model.measurementNoise();
  double det = s.determinant();
  if (!(std::abs(det) > 1e-18)) return false;
  Eigen::Matrix<double, 4, 2> k = track.covariance * h.transpose() * s.inverse();
  track.state += k * (z - h * track.state);
  track.covariance = (Eigen::Matrix4d::Identity() - k * h) * track.covariance;
  track.covariance = 0.5 * (track.covariance + track.covariance.transpose());
  return true;
}

bool checkTrackingError(const Track& track, const KFModel& model,
                        const Eigen::Vector2d& z, double gate_mahalanobis) {
  const auto h = model.observation();
  Eigen::Matrix2d s =
      h * track.covariance * h.transpose() + model.measurementNoise();
  double det = s.determinant();
  if (!(std::abs(det) > 1e-18)) return true;  // singular: treat as error
  Eigen::Vector2d innov = z - h * track.state;
  double m2 = innov.dot(s.inverse() * innov);
  return std::sqrt(std::max(m2, 0.0)) > gate_mahalanobis;
}

MotionClass classifyMotion(Track& track, double v_d, int k_classify) {
  double speed = track.velocity().norm();
  if (speed > v_d) {
    ++track.consecutive_over;
    track.consecutive_under = 0;
  } else {
    ++track.consecutive_under;
    track.consecutive_over = 0;
  }
  if (track.consecutive_over >= k_classify) {
    track.motion_class = MotionClass::Dynamic;
  } else if (track.consecutive_under >= k_classify) {
    track.motion_class = MotionClass::Static;
  }
  return track.motion_class;
}

Assignment associate(const std::vector<Track>& tracks,
                     const std::vector<Detection3D>& detections, double gate) {
  Assignment out;
  if (tracks.empty() || detections.empty()) {
    for (size_t i = 0; i < tracks.size(); ++i) out.unmatched_tracks.push_back(static_cast<int>(i));
    for (size_t j = 0; j < detections.size(); ++j) out.unmatched_detections.push_back(static_cast<int>(j));
    return out;
  }

  const double big = 1e6;
  Eigen::MatrixXd cost(tracks.size(), detections.size());
  for (size_t i = 0; i < tracks.size(); ++i) {
    for (size_t j = 0; j < detections.size(); ++j) {
      Eigen::Vector2d d = tracks[i].position() - detections[j].centroid.head<2>();
      double dist = d.norm();
      cost(static_cast<int>(i), static_cast<int>(j)) = dist > gate ? big : dist;
    }
  }

  std::vector<int> match = hungarian(cost);
  std::vector<bool> det_used(detections.size(), false);
  for (size_t i = 0; i < tracks.size(); ++i) {
    int j = match[i];
    if (j >= 0 && cost(static_cast<int>(i), j) < big) {
      out.matches.emplace_back(static_cast<int>(i), j);
      det_used[j] = true;
    } else {
      out.unmatched_tracks.push_back(static_cast<int>(i));
    }
  }
  for (size_t j = 0; j < detections.size(); ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(static_cast<int>(j));
  }
  return out;
}

ObstaclePrediction predictTrajectory(const Track& track, const KFModel& model,
                                     double now, double horizon, double step,
                                     double kappa) {
  if (track.motion_class != MotionClass::Dynamic) {
    throw std::domain_error("predictTrajectory: track is not Dynamic");
  }
  if (!(horizon > 0) || !(step > 0)) {
    throw std::domain_error("predictTrajectory: horizon and step must be positive");
  }
  ObstaclePrediction pred;
  pred.track_id = track.id;
  Eigen::Vector2d vel = track.velocity();

  double max_sigma = 0.0;
  for (double tau = 0.0; tau <= horizon + 1e-9; tau += step) {
    Eigen::Matrix4d a = model.transition(tau);
    Eigen::Matrix4d p =
        a * track.covariance * a.transpose() + tau * Eigen::Matrix4d(model.q_rate.asDiagonal());
    double sigma = std::sqrt(std::max(p(0, 0), p(1, 1)));
    max_sigma = std::max(max_sigma, sigma);  // conservative: never shrink
    double inflate = kappa * max_sigma;

    Box3D region = track.last_region;
    region.center.head<2>() += tau * vel;
    region.half_extents.x() += inflate;
    region.half_extents.y() += inflate;
    pred.samples.emplace_back(now + tau, ConvexHull{region.corners()});
  }
  return pred;
}

void Tracker::step(double stamp, const std::vector<Detection3D>& detections) {
  double dt = last_stamp_ < 0 ? 0.0 : stamp - last_stamp_;
  last_stamp_ = stamp;
  if (dt > 0) {
    for (auto& t : tracks_) kfPredict(t, cfg_.model, dt);
  }

  Assignment assign = associate(tracks_, detections, cfg_.gate);

  for (const auto& [ti, dj] : assign.matches) {
    Track& t = tracks_[ti];
    const Detection3D& d = detections[dj];
    Eigen::Vector2d z = d.centroid.head<2>();
    if (checkTrackingError(t, cfg_.model, z, cfg_.mahalanobis_gate) ||
        !kfUpdate(t, cfg_.model, z)) {
      // Tracking error: restart the filter from the measurement.
      t.state << z.x(), z.y(), 0, 0;
      t.covariance = initialCovariance(cfg_.model);
      t.motion_class = MotionClass::Tentative;
      t.consecutive_over = 0;
      t.consecutive_under = 0;
      t.history.clear();
    }
    t.last_region = d.region;
    t.class_label = d.class_label;
    t.misses = 0;
    t.history.emplace_back(stamp, t.position());
    while (t.history.size() > 50) t.history.pop_front();
    classifyMotion(t, cfg_.v_d, cfg_.k_classify);
  }

  for (int ti : assign.unmatched_tracks) {
    ++tracks_[ti].misses;
  }

  for (int dj : assign.unmatched_detections) {
    const Detection3D& d = detections[dj];
    Track t;
    t.id = next_id_++;
    t.state << d.centroid.x(), d.centroid.y(), 0, 0;
    t.covariance = initialCovariance(cfg_.model);
    t.class_label = d.class_label;
    t.last_region = d.region;
    t.history.emplace_back(stamp, t.position());
    tracks_.push_back(std::move(t));
  }

  tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                               [&](const Track& t) { return t.misses > cfg_.max_misses; }),
                tracks_.end());

  // Duplicate suppression: transient double detections of one object spawn
  // a second track that can then alternate stealing the object's single
  // detection with the first, keeping both alive forever. Keep the more
  // established estimate of any pair that has converged onto one spot.
  std::vector<bool> drop(tracks_.size(), false);
  for (size_t i = 0; i < tracks_.size(); ++i) {
    for (size_t j = i + 1; j < tracks_.size(); ++j) {
      if (drop[i] || drop[j]) continue;
      double d = (tracks_[i].position() - tracks_[j].position()).norm();
      if (d < cfg_.merge_distance) {
        drop[tracks_[i].history.size() >= tracks_[j].history.size() ? j : i] = true;
      }
    }
  }
  size_t w = 0;
  for (size_t i = 0; i < tracks_.size(); ++i) {
    if (drop[i]) continue;
    if (w != i) tracks_[w] = std::move(tracks_[i]);
    ++w;
  }
  tracks_.resize(w);
}

std::vector<ObstaclePrediction> Tracker::predictions(double now) const {
  std::vector<ObstaclePrediction> out;
  for (const auto& t : tracks_) {
    if (t.motion_class == MotionClass::Dynamic) {
      out.push_back(predictTrajectory(t, cfg_.model, now, cfg_.horizon,
                                      cfg_.step, cfg_.kappa));
    }
  }
  return out;
}

}  // namespace nav
