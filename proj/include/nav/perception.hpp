#ifndef NAV_PERCEPTION_HPP
#define NAV_PERCEPTION_HPP

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nav/world.hpp"

namespace nav {

struct CameraIntrinsics {
  int width = 80;
  int height = 60;
  double fx = 40.0;
  double fy = 40.0;
  double cx = 40.0;
  double cy = 30.0;
};

// Range image: meters along the pixel ray, 0 = invalid / beyond range.
struct DepthImage {
  CameraIntrinsics intrinsics;
  std::vector<float> depth;

  float at(int u, int v) const { return depth[v * intrinsics.width + u]; }
  float& at(int u, int v) { return depth[v * intrinsics.width + u]; }
};

struct Detection2D {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  std::string class_label;
  double score = 1.0;
};

struct Detection3D {
  Box3D region;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  std::string class_label;
  double stamp = 0.0;
};

struct DetectorNoiseModel {
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;
  double bbox_jitter_px = 0.0;
};

// Camera pose convention: +z forward, +x right, +y down (optical frame).
Eigen::Isometry3d cameraPose(const Eigen::Vector3d& position, double yaw);

DepthImage renderDepth(const std::vector<Box3D>& boxes,
                       const std::vector<Cylinder>& cylinders,
                       const Eigen::Isometry3d& camera_pose,
                       const CameraIntrinsics& intrinsics, double max_range);

// Synthetic stand-in for a learned detector: projects ground-truth
// obstacles and applies a parametric noise model. Deterministic per rng.
std::vector<Detection2D> detect(const std::vector<ObstacleTruth>& truth,
                                const Eigen::Isometry3d& camera_pose,
                                const CameraIntrinsics& intrinsics,
                                double max_range,
                                const DetectorNoiseModel& noise,
                                std::mt19937_64& rng);

// Depth-histogram foreground split and back-projection of a 2D detection.
// delta is the half-width of the depth window around the median.
std::optional<Detection3D> extract3dRegion(const Detection2D& det,
                                           const DepthImage& depth,
                                           const Eigen::Isometry3d& camera_pose,
                                           double stamp, double delta = 0.4);

// Sensor-frame point cloud from a depth image (pixel stride for speed).
std::vector<Eigen::Vector3d> depthToPointCloud(const DepthImage& depth,
                                               int stride = 1);

}  // namespace nav

#endif
