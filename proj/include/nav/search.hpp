#ifndef NAV_SEARCH_HPP
#define NAV_SEARCH_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "nav/bspline.hpp"
#include "nav/occupancy_grid.hpp"
#include "nav/tracking.hpp"

namespace nav {

struct SearchConfig {
  double lambda = 5.0;
  double lattice_step = 0.2;
  double knot_dt = 0.3;
  double v_max = 1.5;
  double a_max = 3.0;
  int max_expansions = 2000;
  double unknown_cost_weight = 2.0;
  // Per-control-point cost; rewards trajectories that need fewer knots
  // (i.e. faster ones). Must stay below lambda * lattice_step so the best-
  // first frontier keeps making progress toward the goal.
  double time_weight = 0.8;
  // Clearance required against predicted obstacle hulls (agent radius).
  double dynamic_margin = 0.3;
};

struct SearchResult {
  std::optional<BSpline> trajectory;
  int expansions = 0;
  Eigen::Vector3d clipped_goal = Eigen::Vector3d::Zero();
};

// Swept conservative hull over all prediction samples with stamps in
// [t0, t1]; extends the last hull beyond the horizon.
ConvexHull timeWindowHull(const ObstaclePrediction& pred, double t0, double t1);

// A* over B-spline control points on a lattice. initial_cps are the first
// three control points (all at the start for a fresh plan, stitch points
// when replanning); plan_start_time aligns segment windows with the
// absolute stamps of the predictions.
SearchResult searchInitialTrajectory(const OccupancyGrid& grid,
                                     const std::vector<ObstaclePrediction>& predictions,
                                     const Eigen::Matrix3d& initial_cps,
                                     const Eigen::Vector3d& goal,
                                     double plan_start_time,
                                     const SearchConfig& cfg);

struct StitchState {
  Eigen::Matrix3d control_points;  // first three control points of the next plan
  double start_time;               // absolute time the new plan takes over
  Eigen::Vector3d position;
  Eigen::Vector3d velocity;
};

// Hand-over state for replanning: the three control points trailing the
// active segment at t_now keep the stitched plan C2-continuous at the next
// knot boundary. Times are relative to the trajectory's own clock.
StitchState replanStitch(const BSpline& prev, double t_now);

}  // namespace nav

#endif
