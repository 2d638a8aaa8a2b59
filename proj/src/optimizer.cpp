#include "nav/optimizer.hpp"
#include "nav/search.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

namespace nav {

namespace {

// Distance between axis-aligned bounding boxes; a cheap lower bound on the
// hull distance used to drop obstacles no cost term can see.
double aabbGap(const Eigen::Vector3d& lo_a, const Eigen::Vector3d& hi_a,
               const Eigen::Vector3d& lo_b, const Eigen::Vector3d& hi_b) {
  Eigen::Vector3d gap = (lo_a - hi_b).cwiseMax(lo_b - hi_a).cwiseMax(0.0);
  return gap.norm();
}

}  // namespace

SegmentObstacleHulls buildSegmentObstacleHulls(
    const BSpline& traj, double plan_start_time,
    const std::vector<ObstaclePrediction>& predictions, double keep_radius) {
  const int num_segments = traj.numSegments();
  const double knot_dt = traj.knotDt();
  const auto& p = traj.controlPoints();
  SegmentObstacleHulls out(num_segments);
  for (int s = 0; s < num_segments; ++s) {
    double w0 = plan_start_time + s * knot_dt;
    double w1 = plan_start_time + (s + 3) * knot_dt;
    Eigen::Vector3d seg_lo = p.middleCols(s, 4).rowwise().minCoeff();
    Eigen::Vector3d seg_hi = p.middleCols(s, 4).rowwise().maxCoeff();
    for (const auto& pred : predictions) {
      ConvexHull hull = timeWindowHull(pred, w0, w1);
      Eigen::Vector3d lo = hull.vertices.rowwise().minCoeff();
      Eigen::Vector3d hi = hull.vertices.rowwise().maxCoeff();
      if (aabbGap(seg_lo, seg_hi, lo, hi) > keep_radius) continue;
      out[s].emplace_back(pred.track_id, std::move(hull));
    }
  }
  return out;
}

double smoothnessCost(const BSpline& traj, const OptWeights& weights,
                      Eigen::Matrix3Xd* grad) {
  const auto& p = traj.controlPoints();
  const int n = static_cast<int>(p.cols());
  const double dt = traj.knotDt();
  double cost = 0.0;
  if (grad) grad->setZero(3, n);

  auto addTerm = [&](double w, int order) {
    // Difference stencils for acceleration (2), jerk (3), snap (4).
    static const std::vector<std::vector<double>> stencils = {
        {1, -2, 1}, {-1, 3, -3, 1}, {1, -4, 6, -4, 1}};
    const auto& st = stencils[order - 2];
    double scale = std::pow(dt, -order);
    for (int i = 0; i + order < n; ++i) {
      Eigen::Vector3d d = Eigen::Vector3d::Zero();
      for (size_t k = 0; k < st.size(); ++k) {
        d += st[k] * p.col(i + static_cast<int>(k));
      }
      d *= scale;
      cost += w * d.squaredNorm();
      if (grad) {
        for (size_t k = 0; k < st.size(); ++k) {
          grad->col(i + static_cast<int>(k)) += 2 * w * scale * st[k] * d;
        }
      }
    }
  };

  if (weights.w_accel > 0) addTerm(weights.w_accel, 2);
  if (weights.w_jerk > 0) addTerm(weights.w_jerk, 3);
  if (weights.w_snap > 0) addTerm(weights.w_snap, 4);
  return cost;
}

namespace {

// Basis weights of the 4 segment control points at local parameter u.
Eigen::Vector4d cubicBasis(double u) {
  double u2 = u * u, u3 = u2 * u;
  return Eigen::Vector4d((1 - 3 * u + 3 * u2 - u3) / 6.0,
                         (4 - 6 * u2 + 3 * u3) / 6.0,
                         (1 + 3 * u + 3 * u2 - 3 * u3) / 6.0, u3 / 6.0);
}

}  // namespace

double collisionCost(const BSpline& traj, const OccupancyGrid& grid,
                     const SegmentObstacleHulls& hulls, double d_min,
                     double w_collision, Eigen::Matrix3Xd* grad) {
  const auto& p = traj.controlPoints();
  const int n = static_cast<int>(p.cols());
  double cost = 0.0;
  if (grad) grad->setZero(3, n);

  Eigen::Matrix3Xd point(3, 1);
  for (int s = 0; s < traj.numSegments(); ++s) {
    for (int k = 0; k < 4; ++k) {
      double u = (k + 0.5) / 4.0;
      Eigen::Vector4d w = cubicBasis(u);
      Eigen::Vector3d q = p.middleCols(s, 4) * w;

      // Static field hinge.
      double dist;
      Eigen::Vector3d ddir;
      if (grid.inBounds(q)) {
        dist = grid.distanceToObstacle(q);
        ddir = grid.distanceFieldGradient(q);
      } else {
        dist = 0.0;  // out of map: maximum penalty, no useful direction
        ddir.setZero();
      }
      double hinge = std::max(0.0, d_min - dist);
      if (hinge > 0) {
        cost += w_collision * hinge * hinge;
        if (grad) {
          Eigen::Vector3d g_q = -2 * w_collision * hinge * ddir;
          for (int j = 0; j < 4; ++j) grad->col(s + j) += w(j) * g_q;
        }
      }

      // Predicted-obstacle hinge.
      if (s < static_cast<int>(hulls.size())) {
        for (const auto& [id, hull] : hulls[s]) {
          point.col(0) = q;
          ClosestPair cp = gjkClosest(point, hull.vertices);
          double hd = cp.distance;
          Eigen::Vector3d dir;
          if (hd > 1e-9) {
            dir = (q - cp.on_b) / hd;
          } else {
            Eigen::Vector3d centroid = hull.vertices.rowwise().mean();
            Eigen::Vector3d away = q - centroid;
            dir = away.norm() > 1e-9 ? away.normalized() : Eigen::Vector3d::UnitZ();
            hd = 0.0;
          }
          double h2 = std::max(0.0, d_min - hd);
          if (h2 > 0) {
            cost += w_collision * h2 * h2;
            if (grad) {
              Eigen::Vector3d g_q = -2 * w_collision * h2 * dir;
              for (int j = 0; j < 4; ++j) grad->col(s + j) += w(j) * g_q;
            }
          }
        }
      }
    }
  }
  return cost;
}

std::optional<std::vector<PlaneAssignment>> assignSeparatingPlanes(
    const BSpline& traj, const SegmentObstacleHulls& hulls,
    double interaction_radius, double d_min) {
  std::vector<PlaneAssignment> out;
  for (int s = 0; s < traj.numSegments(); ++s) {
    if (s >= static_cast<int>(hulls.size())) break;
    ConvexHull seg_hull{traj.segmentControlPoints(s)};
    for (const auto& [id, obstacle] : hulls[s]) {
      double dist = hullDistance(obstacle, seg_hull);
      if (dist > interaction_radius) continue;
      auto plane = findSeparatingPlane(obstacle, seg_hull, d_min / 2);
      if (!plane) return std::nullopt;
      out.push_back({s, id, *plane});
    }
  }
  return out;
}

namespace {

// Limited-memory BFGS with Armijo backtracking.
struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
};

LbfgsResult lbfgsMinimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
    Eigen::VectorXd x0, int max_iter, double rel_tol) {
  const int m = 8;
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  Eigen::VectorXd g(x0.size()), g_new(x0.size());
  double f = fg(x0, g);
  LbfgsResult res;
  res.x = x0;
  res.f = f;

  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() < 1e-12) break;

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0) {  // not a descent direction: fall back to steepest
      dir = -g;
      slope = -g.squaredNorm();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-12)) : 1.0;
    double f_new = f;
    Eigen::VectorXd x_new = res.x;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      x_new = res.x + step * dir;
      f_new = fg(x_new, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd s_vec = x_new - res.x;
    Eigen::VectorXd y_vec = g_new - g;
    double sy = s_vec.dot(y_vec);
    if (sy > 1e-12) {
      s_hist.push_back(s_vec);
      y_hist.push_back(y_vec);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > m) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    double improvement = f - f_new;
    res.x = x_new;
    f = f_new;
    g = g_new;
    res.iterations = it + 1;
    if (improvement < rel_tol * std::max(std::abs(f), 1.0)) break;
  }
  res.f = f;
  return res;
}

struct ConstraintSet {
  std::vector<PlaneAssignment> planes;
  // Multipliers: planes (4 per assignment), then velocity and acceleration
  // (two one-sided constraints per derivative control point component).
  Eigen::VectorXd mu_plane, mu_v, mu_a;
};

}  // namespace

std::pair<BSpline, OptReport> optimizeTrajectory(
    const BSpline& initial, const OccupancyGrid& grid,
    const std::vector<ObstaclePrediction>& predictions, double plan_start_time,
    const OptConfig& cfg) {
  OptReport report;
  const int n = initial.numControlPoints();
  const double dt = initial.knotDt();
  const int n_free = n - 6;  // endpoint triples are fixed
  SegmentObstacleHulls hulls = buildSegmentObstacleHulls(
      initial, plan_start_time, predictions, cfg.interaction_radius);

  auto evalViolations = [&](const BSpline& traj, const std::vector<PlaneAssignment>& planes,
                            OptReport* rep) {
    const auto& p = traj.controlPoints();
    double worst_plane = 0, worst_obs = 0, worst_v = 0, worst_a = 0;
    for (const auto& pa : planes) {
      for (int j = 0; j < 4; ++j) {
        worst_plane = std::max(worst_plane, pa.plane.signedDistance(p.col(pa.segment + j)));
      }
      for (const auto& [id, hull] : hulls[pa.segment]) {
        if (id != pa.obstacle_id) continue;
        for (int c = 0; c < hull.vertices.cols(); ++c) {
          worst_obs = std::max(worst_obs, -pa.plane.signedDistance(hull.vertices.col(c)));
        }
      }
    }
    for (int i = 0; i + 1 < n; ++i) {
      Eigen::Vector3d v = (p.col(i + 1) - p.col(i)) / dt;
      worst_v = std::max(worst_v, (v.cwiseAbs().array() - cfg.limits.v_max).maxCoeff());
    }
    for (int i = 0; i + 2 < n; ++i) {
      Eigen::Vector3d a = (p.col(i + 2) - 2 * p.col(i + 1) + p.col(i)) / (dt * dt);
      worst_a = std::max(worst_a, (a.cwiseAbs().array() - cfg.limits.a_max).maxCoeff());
    }
    rep->plane_trajectory_violation = std::max(0.0, worst_plane);
    rep->plane_obstacle_violation = std::max(0.0, worst_obs);
    rep->velocity_violation = std::max(0.0, worst_v);
    rep->accel_violation = std::max(0.0, worst_a);
  };

  Eigen::Matrix3Xd grad_buffer;
  auto objective = [&](const BSpline& traj, Eigen::Matrix3Xd* grad) {
    double c = smoothnessCost(traj, cfg.weights, grad);
    Eigen::Matrix3Xd g2;
    c += collisionCost(traj, grid, hulls, cfg.d_min, cfg.weights.w_collision,
                       grad ? &g2 : nullptr);
    if (grad) *grad += g2;
    return c;
  };

  auto initial_planes = assignSeparatingPlanes(initial, hulls,
                                               cfg.interaction_radius, cfg.d_min);
  if (!initial_planes) {
    report.termination = OptTermination::Infeasible;
    evalViolations(initial, {}, &report);
    report.final_cost = objective(initial, nullptr);
    return {initial, report};
  }

  if (n_free <= 0) {
    report.termination = OptTermination::Converged;
    evalViolations(initial, *initial_planes, &report);
    report.final_cost = objective(initial, nullptr);
    return {initial, report};
  }

  const double initial_cost = objective(initial, nullptr);
  OptReport initial_report;
  evalViolations(initial, *initial_planes, &initial_report);
  const bool initial_feasible = initial_report.maxViolation() < cfg.constraint_tol;

  ConstraintSet cs;
  cs.planes = *initial_planes;
  double rho = cfg.initial_penalty;
  double prev_viol = std::numeric_limits<double>::infinity();

  auto packed = [&](const BSpline& traj) {
    Eigen::VectorXd x(3 * n_free);
    for (int i = 0; i < n_free; ++i) x.segment<3>(3 * i) = traj.controlPoints().col(3 + i);
    return x;
  };
  auto unpack = [&](const Eigen::VectorXd& x) {
    Eigen::Matrix3Xd cps = initial.controlPoints();
    for (int i = 0; i < n_free; ++i) cps.col(3 + i) = x.segment<3>(3 * i);
    return BSpline(cps, dt, 3);
  };

  Eigen::VectorXd x = packed(initial);
  BSpline current = initial;

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    ++report.outer_iterations;
    const int n_planes = static_cast<int>(cs.planes.size());
    cs.mu_plane = cs.mu_plane.size() == 4 * n_planes ? cs.mu_plane
                                                     : Eigen::VectorXd::Zero(4 * n_planes);
    if (cs.mu_v.size() != 6 * (n - 1)) cs.mu_v = Eigen::VectorXd::Zero(6 * (n - 1));
    if (cs.mu_a.size() != 6 * (n - 2)) cs.mu_a = Eigen::VectorXd::Zero(6 * (n - 2));

    // Augmented Lagrangian value and gradient in packed coordinates.
    auto fg = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& gout) {
      BSpline traj = unpack(xv);
      const auto& p = traj.controlPoints();
      double f = objective(traj, &grad_buffer);
      Eigen::Matrix3Xd gfull = grad_buffer;

      auto alTerm = [&](double mu, double c, double* dpsi_dc) {
        double t = mu + rho * c;
        if (t > 0) {
          *dpsi_dc = t;
          return (t * t - mu * mu) / (2 * rho);
        }
        *dpsi_dc = 0.0;
        return -mu * mu / (2 * rho);
      };

      for (int pi = 0; pi < n_planes; ++pi) {
        const auto& pa = cs.planes[pi];
        for (int j = 0; j < 4; ++j) {
          double c = pa.plane.signedDistance(p.col(pa.segment + j));
          double d;
          f += alTerm(cs.mu_plane(4 * pi + j), c, &d);
          gfull.col(pa.segment + j) += d * pa.plane.normal;
        }
      }
      int vi = 0;
      for (int i = 0; i + 1 < n; ++i) {
        Eigen::Vector3d v = (p.col(i + 1) - p.col(i)) / dt;
        for (int ax = 0; ax < 3; ++ax) {
          double d;
          f += alTerm(cs.mu_v(vi), v(ax) - cfg.limits.v_max, &d);
          gfull(ax, i + 1) += d / dt;
          gfull(ax, i) -= d / dt;
          ++vi;
          f += alTerm(cs.mu_v(vi), -v(ax) - cfg.limits.v_max, &d);
          gfull(ax, i + 1) -= d / dt;
          gfull(ax, i) += d / dt;
          ++vi;
        }
      }
      int ai = 0;
      double dt2 = dt * dt;
      for (int i = 0; i + 2 < n; ++i) {
        Eigen::Vector3d a = (p.col(i + 2) - 2 * p.col(i + 1) + p.col(i)) / dt2;
        for (int ax = 0; ax < 3; ++ax) {
          double d;
          f += alTerm(cs.mu_a(ai), a(ax) - cfg.limits.a_max, &d);
          gfull(ax, i + 2) += d / dt2;
          gfull(ax, i + 1) -= 2 * d / dt2;
          gfull(ax, i) += d / dt2;
          ++ai;
          f += alTerm(cs.mu_a(ai), -a(ax) - cfg.limits.a_max, &d);
          gfull(ax, i + 2) -= d / dt2;
          gfull(ax, i + 1) += 2 * d / dt2;
          gfull(ax, i) -= d / dt2;
          ++ai;
        }
      }

      gout.resize(3 * n_free);
      for (int i = 0; i < n_free; ++i) gout.segment<3>(3 * i) = gfull.col(3 + i);
      return f;
    };

    LbfgsResult inner = lbfgsMinimize(fg, x, cfg.max_inner, cfg.inner_rel_tol);
    report.inner_iterations += inner.iterations;
    x = inner.x;
    current = unpack(x);

    OptReport vio;
    evalViolations(current, cs.planes, &vio);
    double max_viol = vio.maxViolation();

    if (max_viol < cfg.constraint_tol) {
      report.termination = OptTermination::Converged;
      report.plane_trajectory_violation = vio.plane_trajectory_violation;
      report.plane_obstacle_violation = vio.plane_obstacle_violation;
      report.velocity_violation = vio.velocity_violation;
      report.accel_violation = vio.accel_violation;
      break;
    }

    // Multiplier updates.
    const auto& p = current.controlPoints();
    for (int pi = 0; pi < n_planes; ++pi) {
      for (int j = 0; j < 4; ++j) {
        double c = cs.planes[pi].plane.signedDistance(p.col(cs.planes[pi].segment + j));
        cs.mu_plane(4 * pi + j) = std::max(0.0, cs.mu_plane(4 * pi + j) + rho * c);
      }
    }
    int vi = 0;
    for (int i = 0; i + 1 < n; ++i) {
      Eigen::Vector3d v = (p.col(i + 1) - p.col(i)) / dt;
      for (int ax = 0; ax < 3; ++ax) {
        cs.mu_v(vi) = std::max(0.0, cs.mu_v(vi) + rho * (v(ax) - cfg.limits.v_max));
        ++vi;
        cs.mu_v(vi) = std::max(0.0, cs.mu_v(vi) + rho * (-v(ax) - cfg.limits.v_max));
        ++vi;
      }
    }
    int ai = 0;
    for (int i = 0; i + 2 < n; ++i) {
      Eigen::Vector3d a = (p.col(i + 2) - 2 * p.col(i + 1) + p.col(i)) / (dt * dt);
      for (int ax = 0; ax < 3; ++ax) {
        cs.mu_a(ai) = std::max(0.0, cs.mu_a(ai) + rho * (a(ax) - cfg.limits.a_max));
        ++ai;
        cs.mu_a(ai) = std::max(0.0, cs.mu_a(ai) + rho * (-a(ax) - cfg.limits.a_max));
        ++ai;
      }
    }
    if (max_viol > 0.5 * prev_viol) rho *= 10.0;
    prev_viol = max_viol;

    // Refresh planes against the moved trajectory.
    auto refreshed = assignSeparatingPlanes(current, hulls, cfg.interaction_radius,
                                            cfg.d_min);
    if (!refreshed) {
      report.termination = OptTermination::Infeasible;
      report.plane_trajectory_violation = vio.plane_trajectory_violation;
      report.plane_obstacle_violation = vio.plane_obstacle_violation;
      report.velocity_violation = vio.velocity_violation;
      report.accel_violation = vio.accel_violation;
      report.final_cost = objective(current, nullptr);
      return {initial, report};
    }
    if (refreshed->size() != cs.planes.size()) {
      cs.mu_plane = Eigen::VectorXd::Zero(4 * refreshed->size());
    }
    cs.planes = *refreshed;

    if (outer == cfg.max_outer - 1) {
      report.termination = OptTermination::Infeasible;
      report.plane_trajectory_violation = vio.plane_trajectory_violation;
      report.plane_obstacle_violation = vio.plane_obstacle_violation;
      report.velocity_violation = vio.velocity_violation;
      report.accel_violation = vio.accel_violation;
      report.final_cost = objective(current, nullptr);
      return {initial, report};
    }
  }

  report.final_cost = objective(current, nullptr);
  // Never hand back something worse than a feasible input.
  if (initial_feasible && report.final_cost > initial_cost + 1e-9) {
    report.final_cost = initial_cost;
    return {initial, report};
  }
  return {current, report};
}

FeasibilityAudit checkFeasibility(const BSpline& traj, const OccupancyGrid& grid,
                                  const std::vector<ObstaclePrediction>& predictions,
                                  double plan_start_time, const OptLimits& limits,
                                  bool unknown_as_occupied) {
  FeasibilityAudit audit;
  const auto& p = traj.controlPoints();
  const int n = static_cast<int>(p.cols());
  const double dt = traj.knotDt();

  for (int i = 0; i + 1 < n; ++i) {
    Eigen::Vector3d v = (p.col(i + 1) - p.col(i)) / dt;
    audit.velocity_violation = std::max(
        audit.velocity_violation, (v.cwiseAbs().array() - limits.v_max).maxCoeff());
  }
  for (int i = 0; i + 2 < n; ++i) {
    Eigen::Vector3d a = (p.col(i + 2) - 2 * p.col(i + 1) + p.col(i)) / (dt * dt);
    audit.accel_violation = std::max(
        audit.accel_violation, (a.cwiseAbs().array() - limits.a_max).maxCoeff());
  }
  audit.velocity_violation = std::max(0.0, audit.velocity_violation);
  audit.accel_violation = std::max(0.0, audit.accel_violation);

  // Membership tests only matter for hulls the curve can actually touch;
  // the convex-hull property bounds the curve by the control-point box.
  SegmentObstacleHulls hulls =
      buildSegmentObstacleHulls(traj, plan_start_time, predictions, 0.1);

  // ~1 cm arc steps.
  int per_segment = std::max(4, static_cast<int>(std::ceil(dt * limits.v_max / 0.01)));
  Eigen::Matrix3Xd point(3, 1);
  for (int s = 0; s < traj.numSegments(); ++s) {
    for (int k = 0; k <= per_segment; ++k) {
      double t = (s + static_cast<double>(k) / per_segment) * dt;
      Eigen::Vector3d q = traj.position(std::min(t, traj.duration()));
      if (!grid.inBounds(q)) {
        audit.static_violation = std::max(audit.static_violation, grid.inflationRadius());
        continue;
      }
      if (unknown_as_occupied && grid.stateAt(q) == VoxelState::Unknown) {
        audit.static_violation = std::max(audit.static_violation, grid.inflationRadius());
      }
      double d = grid.distanceToObstacle(q);
      audit.static_violation =
          std::max(audit.static_violation, grid.inflationRadius() - d);
      for (const auto& [id, hull] : hulls[s]) {
        point.col(0) = q;
        if (gjkClosest(point, hull.vertices).distance <= 1e-9) {
          audit.dynamic_violation = std::max(audit.dynamic_violation, 1.0);
        }
      }
    }
  }
  audit.static_violation = std::max(0.0, audit.static_violation);
  return audit;
}

}  // namespace nav
