#ifndef NAV_CONVEX_HPP
#define NAV_CONVEX_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace nav {

// Convex hull represented by its extreme vertices. Degenerate
// (coplanar/collinear/point) sets are valid hulls.
struct ConvexHull {
  Eigen::Matrix3Xd vertices;
};

// Plane n.x + d = 0 with |n| = 1. Separating convention: the first hull
// (obstacle side) lies in n.x + d >= 0, the second in n.x + d <= 0.
struct SeparatingPlane {
  Eigen::Vector3d normal;
  double offset;

  double signedDistance(const Eigen::Vector3d& p) const {
    return normal.dot(p) + offset;
  }
};

// Closest points between the convex hulls of two point sets (GJK).
struct ClosestPair {
  double distance;
  Eigen::Vector3d on_a;
  Eigen::Vector3d on_b;
};

ClosestPair gjkClosest(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b);

double hullDistance(const ConvexHull& a, const ConvexHull& b);

// Distance from a point to the convex hull of a point set.
double pointHullDistance(const Eigen::Vector3d& p, const Eigen::Matrix3Xd& hull);

// Extreme-vertex reduction. Throws on empty input. Handles degenerate sets.
ConvexHull convexHull(const Eigen::Matrix3Xd& points);
ConvexHull convexHull(const std::vector<Eigen::Vector3d>& points);

// True iff the closed hulls share a point (distance <= 1e-9).
bool hullsIntersect(const ConvexHull& a, const ConvexHull& b);

// Plane through the midpoint of the closest pair, normal toward a.
// Returns nullopt when the hulls are closer than margin (or intersect).
std::optional<SeparatingPlane> findSeparatingPlane(const ConvexHull& a,
                                                   const ConvexHull& b,
                                                   double margin);

}  // namespace nav

#endif
