#include "nav/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nav {

Eigen::Matrix3Xd Box3D::corners() const {
  Eigen::Matrix3Xd out(3, 8);
  Eigen::Matrix3d rot = rotation();
  int c = 0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        Eigen::Vector3d local(sx * half_extents.x(), sy * half_extents.y(),
                              sz * half_extents.z());
        out.col(c++) = center + rot * local;
      }
    }
  }
  return out;
}

bool Box3D::contains(const Eigen::Vector3d& p) const {
  Eigen::Vector3d local = rotation().transpose() * (p - center);
  return std::abs(local.x()) <= half_extents.x() &&
         std::abs(local.y()) <= half_extents.y() &&
         std::abs(local.z()) <= half_extents.z();
}

Box3D Box3D::expanded(double by) const {
  Box3D b = *this;
  b.half_extents.array() += by;
  return b;
}

double Box3D::distanceTo(const Eigen::Vector3d& p) const {
  Eigen::Vector3d local = rotation().transpose() * (p - center);
  Eigen::Vector3d excess =
      (local.cwiseAbs() - half_extents).cwiseMax(0.0);
  return excess.norm();
}

double rayBoxRange(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                   const Box3D& box) {
  Eigen::Matrix3d rot_t = box.rotation().transpose();
  Eigen::Vector3d o = rot_t * (origin - box.center);
  Eigen::Vector3d d = rot_t * dir;

  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d(i)) < 1e-12) {
      if (std::abs(o(i)) > box.half_extents(i)) return -1.0;
      continue;
    }
    double t1 = (-box.half_extents(i) - o(i)) / d(i);
    double t2 = (box.half_extents(i) - o(i)) / d(i);
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return -1.0;
  }
  return tmin;
}

double rayCylinderRange(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                        const Cylinder& cyl) {
  // Lateral surface: quadratic in the horizontal plane.
  double ox = origin.x() - cyl.base_center.x();
  double oy = origin.y() - cyl.base_center.y();
  double a = dir.x() * dir.x() + dir.y() * dir.y();
  double best = std::numeric_limits<double>::infinity();

  double z0 = cyl.base_center.z();
  double z1 = z0 + cyl.height;

  if (a > 1e-12) {
    double b = 2.0 * (ox * dir.x() + oy * dir.y());
    double c = ox * ox + oy * oy - cyl.radius * cyl.radius;
    double disc = b * b - 4 * a * c;
    if (disc >= 0.0) {
      double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t <= 0.0) continue;
        double z = origin.z() + t * dir.z();
        if (z >= z0 && z <= z1) best = std::min(best, t);
      }
    }
  }

  // End caps.
  if (std::abs(dir.z()) > 1e-12) {
    for (double zc : {z0, z1}) {
      double t = (zc - origin.z()) / dir.z();
      if (t <= 0.0) continue;
      double x = origin.x() + t * dir.x() - cyl.base_center.x();
      double y = origin.y() + t * dir.y() - cyl.base_center.y();
      if (x * x + y * y <= cyl.radius * cyl.radius) best = std::min(best, t);
    }
  }

  return std::isfinite(best) ? best : -1.0;
}

}  // namespace nav
