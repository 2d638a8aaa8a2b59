#ifndef NAV_OCCUPANCY_GRID_HPP
#define NAV_OCCUPANCY_GRID_HPP

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nav/world.hpp"

namespace nav {

enum class VoxelState : uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

// Voxelized static-world belief. Single writer per cycle; planners work on
// snapshots (copies are cheap enough at local-map sizes).
class OccupancyGrid {
 public:
  struct Config {
    double resolution = 0.1;
    Eigen::Vector3d size = Eigen::Vector3d(12.0, 12.0, 3.0);
    double inflation_radius = 0.3;
    double max_range = 6.0;
    double truncation_distance = 3.0;
    bool unknown_as_occupied = true;
  };

  OccupancyGrid(const Config& cfg, const Eigen::Vector3d& center);

  double resolution() const { return cfg_.resolution; }
  double inflationRadius() const { return cfg_.inflation_radius; }
  double truncationDistance() const { return cfg_.truncation_distance; }
  const Eigen::Vector3d& origin() const { return origin_; }
  const Eigen::Vector3i& dims() const { return dims_; }

  bool inBounds(const Eigen::Vector3d& p) const;
  Eigen::Vector3i worldToVoxel(const Eigen::Vector3d& p) const;
  Eigen::Vector3d voxelCenter(const Eigen::Vector3i& v) const;
  bool voxelInBounds(const Eigen::Vector3i& v) const;
  VoxelState state(const Eigen::Vector3i& v) const;
  VoxelState stateAt(const Eigen::Vector3d& p) const;  // Unknown outside

  // Shift the grid so its box is centered on `center`, keeping overlapping
  // content; newly exposed voxels are Unknown.
  void recenter(const Eigen::Vector3d& center);

  // Points are in the sensor frame; `pose` maps sensor to world. Rays from
  // the sensor origin carve Free space; endpoints within max_range mark
  // Occupied.
  void insertPointCloud(const Eigen::Isometry3d& pose,
                        const std::vector<Eigen::Vector3d>& points);

  // Free every voxel whose center lies in the region expanded by one
  // resolution.
  void clearRegion(const Box3D& region);

  bool isOccupied(const Eigen::Vector3d& p, bool inflate) const;
  bool isOccupied(const Eigen::Vector3d& p, bool inflate,
                  bool unknown_as_occupied) const;

  // Distance to the nearest occupied voxel center, trilinear over the
  // distance field, saturating at the truncation distance. Throws when p
  // is outside the grid.
  double distanceToObstacle(const Eigen::Vector3d& p) const;

  // Central finite difference of distanceToObstacle, step = resolution.
  Eigen::Vector3d distanceGradient(const Eigen::Vector3d& p) const;

  // Exact gradient of the trilinear distance interpolant, used by
  // optimization cost terms.
  Eigen::Vector3d distanceFieldGradient(const Eigen::Vector3d& p) const;

  void writeBinary(std::ostream& os) const;
  void writeOccupiedCsv(std::ostream& os) const;

 private:
  int index(const Eigen::Vector3i& v) const {
    return (v.z() * dims_.y() + v.y()) * dims_.x() + v.x();
  }
  void refreshDistanceField() const;
  double fieldValue(const Eigen::Vector3i& v) const;

  Config cfg_;
  Eigen::Vector3i dims_;
  Eigen::Vector3d origin_;  // min corner
  std::vector<uint8_t> states_;
  mutable std::vector<float> distance_;  // at voxel centers, meters
  mutable bool distance_dirty_ = true;
};

}  // namespace nav

#endif
