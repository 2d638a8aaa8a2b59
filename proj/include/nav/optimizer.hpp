#ifndef NAV_OPTIMIZER_HPP
#define NAV_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "nav/bspline.hpp"
#include "nav/convex.hpp"
#include "nav/occupancy_grid.hpp"
#include "nav/tracking.hpp"

namespace nav {

struct OptWeights {
  double w_collision = 10.0;
  double w_accel = 1.0;
  double w_jerk = 0.5;
  double w_snap = 0.1;
};

struct OptLimits {
  double v_max = 1.5;
  double a_max = 3.0;
};

struct OptConfig {
  OptWeights weights;
  OptLimits limits;
  double d_min = 0.4;
  double interaction_radius = 2.0;
  int max_outer = 8;
  int max_inner = 200;
  double inner_rel_tol = 1e-6;
  double constraint_tol = 1e-4;
  // Starting AL penalty. Large enough that the first inner solve already
  // lands near the constraint boundary; the ×10 escalation then only has
  // to fire when progress stalls.
  double initial_penalty = 1000.0;
};

enum class OptTermination { Converged, IterLimit, Infeasible };

struct OptReport {
  OptTermination termination = OptTermination::IterLimit;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double final_cost = 0.0;
  // Worst violation per constraint family of the separating-plane /
  // velocity / acceleration set.
  double plane_trajectory_violation = 0.0;
  double plane_obstacle_violation = 0.0;
  double velocity_violation = 0.0;
  double accel_violation = 0.0;
  double maxViolation() const {
    return std::max(std::max(plane_trajectory_violation, plane_obstacle_violation),
                    std::max(velocity_violation, accel_violation));
  }
};

struct PlaneAssignment {
  int segment = -1;
  int obstacle_id = -1;
  SeparatingPlane plane;
};

// Per-segment time-matched obstacle hulls (swept over the segment's
// window), used by both the collision cost and plane assignment. Hulls
// farther than keep_radius from the segment's control-point box are
// dropped — no cost or constraint term can see them.
using SegmentObstacleHulls = std::vector<std::vector<std::pair<int, ConvexHull>>>;

SegmentObstacleHulls buildSegmentObstacleHulls(
    const BSpline& traj, double plan_start_time,
    const std::vector<ObstaclePrediction>& predictions, double keep_radius);

// w2*sum|a_i|^2 + w3*sum|j_i|^2 + w4*sum|s_i|^2 over derivative control
// points; analytic gradient w.r.t. every control point.
double smoothnessCost(const BSpline& traj, const OptWeights& weights,
                      Eigen::Matrix3Xd* grad);

// Hinge-squared penalty on the truncated static distance field plus the
// distance to each time-matched obstacle hull, sampled 4x per segment.
double collisionCost(const BSpline& traj, const OccupancyGrid& grid,
                     const SegmentObstacleHulls& hulls, double d_min,
                     double w_collision, Eigen::Matrix3Xd* grad);

// One plane per (segment, obstacle) pair within the interaction radius.
// nullopt when some interacting pair admits no plane (infeasible start).
std::optional<std::vector<PlaneAssignment>> assignSeparatingPlanes(
    const BSpline& traj, const SegmentObstacleHulls& hulls,
    double interaction_radius, double d_min);

std::pair<BSpline, OptReport> optimizeTrajectory(
    const BSpline& initial, const OccupancyGrid& grid,
    const std::vector<ObstaclePrediction>& predictions, double plan_start_time,
    const OptConfig& cfg);

struct FeasibilityAudit {
  double static_violation = 0.0;    // required clearance shortfall, meters
  double dynamic_violation = 0.0;   // nonzero when a sample enters a hull
  double velocity_violation = 0.0;  // m/s beyond v_max
  double accel_violation = 0.0;     // m/s^2 beyond a_max
  bool pass(double tol) const {
    return static_violation < tol && dynamic_violation < tol &&
           velocity_violation < tol && accel_violation < tol;
  }
};

// Exhaustive audit: ~1 cm arc sampling against the inflated static map,
// hull membership against time-matched predictions, and derivative
// control-point limits.
FeasibilityAudit checkFeasibility(const BSpline& traj, const OccupancyGrid& grid,
                                  const std::vector<ObstaclePrediction>& predictions,
                                  double plan_start_time, const OptLimits& limits,
                                  bool unknown_as_occupied = false);

}  // namespace nav

#endif
