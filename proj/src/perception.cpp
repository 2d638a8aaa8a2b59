#include "nav/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nav {

Eigen::Isometry3d cameraPose(const Eigen::Vector3d& position, double yaw) {
  // World x-forward at yaw=0 maps to optical z; world z (up) maps to -y.
  Eigen::Matrix3d body;
  body = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ());
  // Columns of R are the camera axes (right, down, forward) in world frame.
  Eigen::Matrix3d r;
  r.col(0) = body * Eigen::Vector3d(0, -1, 0);  // right
  r.col(1) = body * Eigen::Vector3d(0, 0, -1);  // down
  r.col(2) = body * Eigen::Vector3d(1, 0, 0);   // forward

  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.linear() = r;
  pose.translation() = position;
  return pose;
}

namespace {

Eigen::Vector3d pixelRay(const CameraIntrinsics& k, double u, double v) {
  Eigen::Vector3d d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return d.normalized();
}

}  // namespace

DepthImage renderDepth(const std::vector<Box3D>& boxes,
                       const std::vector<Cylinder>& cylinders,
                       const Eigen::Isometry3d& camera_pose,
                       const CameraIntrinsics& intrinsics, double max_range) {
  if (!(max_range > 0)) throw std::invalid_argument("renderDepth: max_range <= 0");
  DepthImage img;
  img.intrinsics = intrinsics;
  img.depth.assign(static_cast<size_t>(intrinsics.width) * intrinsics.height, 0.f);
  const Eigen::Vector3d origin = camera_pose.translation();
  const Eigen::Matrix3d rot = camera_pose.linear();

  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      Eigen::Vector3d dir = rot * pixelRay(intrinsics, u + 0.5, v + 0.5);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : boxes) {
        double t = rayBoxRange(origin, dir, b);
        if (t > 0 && t < best) best = t;
      }
      for (const auto& c : cylinders) {
        double t = rayCylinderRange(origin, dir, c);
        if (t > 0 && t < best) best = t;
      }
      if (best <= max_range) img.at(u, v) = static_cast<float>(best);
    }
  }
  return img;
}

std::vector<Detection2D> detect(const std::vector<ObstacleTruth>& truth,
                                const Eigen::Isometry3d& camera_pose,
                                const CameraIntrinsics& intrinsics,
                                double max_range,
                                const DetectorNoiseModel& noise,
                                std::mt19937_64& rng) {
  std::vector<Detection2D> out;
  const Eigen::Isometry3d world_to_cam = camera_pose.inverse();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, std::max(noise.bbox_jitter_px, 1e-12));

  for (const auto& obs : truth) {
    // Project silhouette sample points of the cylinder.
    const auto& cyl = obs.shape;
    double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
    double v_min = u_min, v_max = -u_min;
    int visible = 0;
    for (int ring = 0; ring < 2; ++ring) {
      double z = cyl.base_center.z() + ring * cyl.height;
      for (int k = 0; k < 16; ++k) {
        double ang = 2 * M_PI * k / 16;
        Eigen::Vector3d p(cyl.base_center.x() + cyl.radius * std::cos(ang),
                          cyl.base_center.y() + cyl.radius * std::sin(ang), z);
        Eigen::Vector3d pc = world_to_cam * p;
        if (pc.z() < 0.1 || pc.norm() > max_range) continue;
        double u = intrinsics.fx * pc.x() / pc.z() + intrinsics.cx;
        double v = intrinsics.fy * pc.y() / pc.z() + intrinsics.cy;
        if (u >= 0 && u < intrinsics.width && v >= 0 && v < intrinsics.height) {
          ++visible;
        }
        u_min = std::min(u_min, u);
        u_max = std::max(u_max, u);
        v_min = std::min(v_min, v);
        v_max = std::max(v_max, v);
      }
    }
    if (visible < 4) continue;
    if (noise.miss_rate > 0 && unit(rng) < noise.miss_rate) continue;

    Detection2D d;
    d.class_label = obs.label;
    d.u_min = u_min;
    d.u_max = u_max;
    d.v_min = v_min;
    d.v_max = v_max;
    if (noise.bbox_jitter_px > 0) {
      d.u_min += jitter(rng);
      d.u_max += jitter(rng);
      d.v_min += jitter(rng);
      d.v_max += jitter(rng);
      if (d.u_min > d.u_max) std::swap(d.u_min, d.u_max);
      if (d.v_min > d.v_max) std::swap(d.v_min, d.v_max);
    }
    d.u_min = std::clamp(d.u_min, 0.0, intrinsics.width - 1.0);
    d.u_max = std::clamp(d.u_max, 0.0, intrinsics.width - 1.0);
    d.v_min = std::clamp(d.v_min, 0.0, intrinsics.height - 1.0);
    d.v_max = std::clamp(d.v_max, 0.0, intrinsics.height - 1.0);
    out.push_back(d);
  }

  if (noise.false_positive_rate > 0) {
    std::poisson_distribution<int> fp_count(noise.false_positive_rate);
    int n_fp = fp_count(rng);
    for (int i = 0; i < n_fp; ++i) {
      Detection2D d;
      d.class_label = "ghost";
      double u0 = unit(rng) * (intrinsics.width - 8);
      double v0 = unit(rng) * (intrinsics.height - 8);
      d.u_min = u0;
      d.v_min = v0;
      d.u_max = u0 + 4 + unit(rng) * 4;
      d.v_max = v0 + 4 + unit(rng) * 4;
      out.push_back(d);
    }
  }
  return out;
}

std::optional<Detection3D> extract3dRegion(const Detection2D& det,
                                           const DepthImage& depth,
                                           const Eigen::Isometry3d& camera_pose,
                                           double stamp, double delta) {
  const auto& k = depth.intrinsics;
  int u0 = std::clamp(static_cast<int>(std::floor(det.u_min)), 0, k.width - 1);
  int u1 = std::clamp(static_cast<int>(std::ceil(det.u_max)), 0, k.width - 1);
  int v0 = std::clamp(static_cast<int>(std::floor(det.v_min)), 0, k.height - 1);
  int v1 = std::clamp(static_cast<int>(std::ceil(det.v_max)), 0, k.height - 1);

  std::vector<float> depths;
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      float d = depth.at(u, v);
      if (d > 0.f) depths.push_back(d);
    }
  }
  if (depths.empty()) return std::nullopt;

  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  float median = depths[depths.size() / 2];

  // Background elimination: keep pixels near the median depth.
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  int n = 0;
  const Eigen::Vector3d origin = camera_pose.translation();
  const Eigen::Matrix3d rot = camera_pose.linear();
  // Lateral axis perpendicular to the central viewing ray (horizontal),
  // used below to estimate the object radius from the cluster width.
  Eigen::Vector3d center_ray =
      rot * pixelRay(k, 0.5 * (u0 + u1) + 0.5, 0.5 * (v0 + v1) + 0.5);
  Eigen::Vector3d view_h(center_ray.x(), center_ray.y(), 0.0);
  double view_h_norm = view_h.norm();
  view_h = view_h_norm > 1e-9 ? Eigen::Vector3d(view_h / view_h_norm)
                              : Eigen::Vector3d::UnitX();
  Eigen::Vector3d lateral(-view_h.y(), view_h.x(), 0.0);
  double s_min = std::numeric_limits<double>::infinity(), s_max = -s_min;
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      float d = depth.at(u, v);
      if (d <= 0.f || std::abs(d - median) > delta) continue;
      Eigen::Vector3d p = origin + rot * pixelRay(k, u + 0.5, v + 0.5) * d;
      sum += p;
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      double s = p.dot(lateral);
      s_min = std::min(s_min, s);
      s_max = std::max(s_max, s);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;

  Detection3D out;
  out.class_label = det.class_label;
  out.stamp = stamp;
  out.centroid = sum / n;
  // The visible front surface of a convex object pulls the centroid toward
  // the sensor. For a vertical cylinder sampled uniformly across its image
  // width, the mean depth deficit is (pi/4)*radius; push the centroid back
  // along the viewing direction using the cluster's lateral half-width as
  // the radius estimate.
  double radius_est = 0.5 * (s_max - s_min);
  out.centroid += view_h * (M_PI / 4.0) * radius_est;
  out.region.center = (lo + hi) / 2;
  out.region.half_extents = ((hi - lo) / 2).cwiseMax(0.05);
  out.region.yaw = 0.0;
  return out;
}

std::vector<Eigen::Vector3d> depthToPointCloud(const DepthImage& depth, int stride) {
  std::vector<Eigen::Vector3d> out;
  const auto& k = depth.intrinsics;
  for (int v = 0; v < k.height; v += stride) {
    for (int u = 0; u < k.width; u += stride) {
      float d = depth.at(u, v);
      if (d <= 0.f) continue;
      out.push_back(pixelRay(k, u + 0.5, v + 0.5) * d);
    }
  }
  return out;
}

}  // namespace nav
