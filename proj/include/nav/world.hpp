#ifndef NAV_WORLD_HPP
#define NAV_WORLD_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nav/convex.hpp"

namespace nav {

// Yaw-rotated box, used both for static scene geometry and for the 3D
// regions of detected obstacles.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
  double yaw = 0.0;

  Eigen::Matrix3d rotation() const {
    return Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  }

  // World-frame corners.
  Eigen::Matrix3Xd corners() const;
  bool contains(const Eigen::Vector3d& p) const;
  Box3D expanded(double by) const;
  ConvexHull hull() const { return ConvexHull{corners()}; }
  // Euclidean distance from a point to the box surface (0 inside).
  double distanceTo(const Eigen::Vector3d& p) const;
};

// Vertical cylinder standing on base_center, the pedestrian model.
struct Cylinder {
  Eigen::Vector3d base_center = Eigen::Vector3d::Zero();
  double radius = 0.3;
  double height = 1.7;

  Box3D boundingBox() const {
    Box3D b;
    b.center = base_center + Eigen::Vector3d(0, 0, height / 2);
    b.half_extents = Eigen::Vector3d(radius, radius, height / 2);
    return b;
  }
};

// Ground-truth state of one obstacle as seen by the synthetic detector.
struct ObstacleTruth {
  Cylinder shape;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // horizontal
  std::string label = "person";
};

// Ray-primitive intersections; return the hit range along the unit-length
// direction, or a negative value on miss.
double rayBoxRange(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                   const Box3D& box);
double rayCylinderRange(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                        const Cylinder& cyl);

}  // namespace nav

#endif
