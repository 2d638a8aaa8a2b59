#include "nav/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <cmath>
#include <sstream>

namespace nav {

std::string toString(RunEvent e) {
  switch (e) {
    case RunEvent::Success:
      return "Success";
    case RunEvent::Collision:
      return "Collision";
    case RunEvent::Freezing:
      return "Freezing";
  }
  return "Unknown";
}

std::string RunOutcome::deterministicLogs() const {
  std::ostringstream out;
  std::istringstream in(trajectory_csv);
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.rfind(',');
    out << (pos == std::string::npos ? line : line.substr(0, pos)) << "\n";
  }
  out << tracking_csv << pedestrian_csv;
  return out.str();
}

RmseReport rmseReport(const RunOutcome& outcome, double gate, double warmup) {
  RmseReport report;
  double pos_sq = 0.0, vel_sq = 0.0;

  size_t cursor = 0;
  for (const auto& truth : outcome.truth) {
    if (truth.stamp < warmup) continue;
    // Tracking samples are stamped in the same cycle order.
    const TrackingSample* best = nullptr;
    double best_dist = gate;
    for (size_t i = cursor; i < outcome.tracking.size(); ++i) {
      const auto& ts = outcome.tracking[i];
      if (ts.stamp < truth.stamp - 1e-9) continue;
      if (ts.stamp > truth.stamp + 1e-9) break;
      double d = std::hypot(ts.x - truth.x, ts.y - truth.y);
      if (d <= best_dist) {
        best_dist = d;
        best = &ts;
      }
    }
    if (!best) {
      ++report.unmatched_truth_samples;
      continue;
    }
    pos_sq += (best->x - truth.x) * (best->x - truth.x) +
              (best->y - truth.y) * (best->y - truth.y);
    vel_sq += (best->vx - truth.vx) * (best->vx - truth.vx) +
              (best->vy - truth.vy) * (best->vy - truth.vy);
    ++report.matched_samples;
  }
  if (report.matched_samples == 0) {
    throw std::runtime_error("rmseReport: no matched tracking samples");
  }
  report.position_rmse = std::sqrt(pos_sq / report.matched_samples);
  report.velocity_rmse = std::sqrt(vel_sq / report.matched_samples);
  return report;
}

namespace {

double pointCylinderClearance(const Eigen::Vector3d& p, const Cylinder& c) {
  double lateral = std::max(
      0.0, std::hypot(p.x() - c.base_center.x(), p.y() - c.base_center.y()) - c.radius);
  double below = c.base_center.z() - p.z();
  double above = p.z() - (c.base_center.z() + c.height);
  double vertical = std::max({0.0, below, above});
  return std::hypot(lateral, vertical);
}

double maxSplineSpeed(const BSpline& traj) {
  BSpline d = traj.derivative();
  double v = 0.0;
  for (int i = 0; i < d.numControlPoints(); ++i) {
    v = std::max(v, d.controlPoints().col(i).norm());
  }
  return v;
}

}  // namespace

struct Simulator::Impl {
  Scenario sc;
  OccupancyGrid grid;
  Tracker tracker;
  std::mt19937_64 rng;

  double t = 0.0;
  Eigen::Vector3d agent_pos;
  Eigen::Vector3d agent_vel = Eigen::Vector3d::Zero();

  std::optional<BSpline> active;
  double active_start = 0.0;
  std::optional<BSpline> pending;
  double pending_start = 0.0;

  double next_plan_time = 0.0;
  int consecutive_failures = 0;
  std::optional<RunEvent> event;
  RunOutcome outcome;
  std::ostringstream traj_log, track_log, truth_log;
  double last_cycle_ms = 0.0;

  explicit Impl(Scenario scenario)
      : sc(normalize(std::move(scenario))),
        grid(sc.map, sc.agent.start),
        tracker(sc.tracker),
        rng(sc.seed),
        agent_pos(sc.agent.start) {
    traj_log << "stamp,x,y,z,vx,vy,vz,min_clearance,cycle_ms\n";
    track_log << "stamp,id,x,y,vx,vy,motion_class\n";
    truth_log << "stamp,pedestrian,x,y,vx,vy\n";
  }

  static Scenario normalize(Scenario s) {
    s.validate();
    s.search.v_max = s.agent.v_max;
    s.search.a_max = s.agent.a_max;
    s.search.dynamic_margin = s.agent.radius;
    s.opt.limits.v_max = s.agent.v_max;
    s.opt.limits.a_max = s.agent.a_max;
    s.map.inflation_radius = s.agent.radius;
    s.map.max_range = s.agent.sensing_range;
    // A one-lattice-step stride change must stay within a_max, and a
    // single step at v_max must be representable.
    double min_dt = std::max(std::sqrt(s.search.lattice_step / s.agent.a_max),
                             s.search.lattice_step / s.agent.v_max);
    if (s.search.knot_dt < min_dt) {
      s.search.knot_dt = std::ceil(min_dt * 10.0) / 10.0;
    }
    return s;
  }

  std::vector<ObstacleTruth> obstacleTruths(double stamp) const {
    std::vector<ObstacleTruth> out;
    for (const auto& p : sc.pedestrians) {
      ObstacleTruth o;
      o.shape = p.shapeAt(stamp);
      o.velocity = p.velocityAt(stamp).head<2>();
      out.push_back(o);
    }
    return out;
  }

  void commit(BSpline traj, double start_time) {
    // Replanning is faster than the knot interval, so a not-yet-active
    // pending plan is simply superseded by the newer one.
    if (!active || start_time <= t + 1e-9) {
      active = std::move(traj);
      active_start = start_time;
      pending.reset();
    } else {
      pending = std::move(traj);
      pending_start = start_time;
    }
  }

  void promotePending() {
    if (pending && t + 1e-9 >= pending_start) {
      active = std::move(pending);
      active_start = pending_start;
      pending.reset();
    }
  }

  void planningCycle() {
    promotePending();
    using clock = std::chrono::steady_clock;
    CycleTiming timing;
    timing.stamp = t;

    auto map_begin = clock::now();
    // --- sensing ---
    Eigen::Vector3d look = sc.agent.goal - agent_pos;
    double yaw = std::abs(look.x()) + std::abs(look.y()) > 1e-6
                     ? std::atan2(look.y(), look.x())
                     : 0.0;
    Eigen::Isometry3d cam = cameraPose(agent_pos, yaw);
    CameraIntrinsics intr;
    intr.width = sc.agent.sensor_width;
    intr.height = sc.agent.sensor_height;
    intr.fx = intr.fy = sc.agent.sensor_width / 2.0;  // ~90 deg horizontal fov
    intr.cx = sc.agent.sensor_width / 2.0;
    intr.cy = sc.agent.sensor_height / 2.0;

    std::vector<Cylinder> cylinders;
    for (const auto& p : sc.pedestrians) cylinders.push_back(p.shapeAt(t));
    DepthImage depth = renderDepth(sc.static_boxes, cylinders, cam, intr,
                                   sc.agent.sensing_range);

    auto truths = obstacleTruths(t);
    auto det2 = detect(truths, cam, intr, sc.agent.sensing_range, sc.noise, rng);
    std::vector<Detection3D> det3;
    for (const auto& d : det2) {
      if (auto r = extract3dRegion(d, depth, cam, t)) det3.push_back(*r);
    }

    // --- mapping ---
    grid.recenter(agent_pos);
    grid.insertPointCloud(cam, depthToPointCloud(depth));

    // --- tracking ---
    tracker.step(t, det3);
    for (const auto& tr : tracker.tracks()) {
      track_log << t << "," << tr.id << "," << tr.state(0) << "," << tr.state(1)
                << "," << tr.state(2) << "," << tr.state(3) << ","
                << static_cast<int>(tr.motion_class) << "\n";
      outcome.tracking.push_back({t, tr.id, tr.state(0), tr.state(1), tr.state(2),
                                  tr.state(3), tr.motion_class});
    }
    for (size_t i = 0; i < sc.pedestrians.size(); ++i) {
      Eigen::Vector3d pp = sc.pedestrians[i].positionAt(t);
      Eigen::Vector3d pv = sc.pedestrians[i].velocityAt(t);
      truth_log << t << "," << i << "," << pp.x() << "," << pp.y() << ","
                << pv.x() << "," << pv.y() << "\n";
      outcome.truth.push_back({t, static_cast<int>(i), pp.x(), pp.y(), pv.x(), pv.y()});
    }

    std::vector<ObstaclePrediction> predictions;
    if (sc.prediction_enabled) {
      for (const auto& tr : tracker.tracks()) {
        if (tr.motion_class == MotionClass::Dynamic) {
          grid.clearRegion(tr.last_region);
          // Also erase the ghost trail the obstacle leaves behind: voxels it
          // occupied recently stay occupied when occluded by the obstacle
          // itself, and the stale trail can sweep over the agent.
          for (const auto& [stamp, centroid] : tr.history) {
            if (t - stamp > 2.0) continue;
            Box3D swept = tr.last_region;
            swept.center.head<2>() = centroid;
            grid.clearRegion(swept);
          }
        }
      }
      predictions = tracker.predictions(t);
    }
    timing.map_ms =
        std::chrono::duration<double, std::milli>(clock::now() - map_begin).count();

    // --- planning ---
    Eigen::Matrix3d initial_cps;
    double plan_t0;
    if (active) {
      // Stitch off the plan currently being flown: the new plan takes over
      // at the next knot boundary of the active trajectory.
      StitchState stitch = replanStitch(
          *active, std::clamp(t - active_start, 0.0, active->duration()));
      initial_cps = stitch.control_points;
      plan_t0 = active_start + stitch.start_time;
    } else {
      initial_cps.col(0) = agent_pos;
      initial_cps.col(1) = agent_pos;
      initial_cps.col(2) = agent_pos;
      plan_t0 = t;
    }

    auto search_begin = clock::now();
    SearchResult sr = searchInitialTrajectory(grid, predictions, initial_cps,
                                              sc.agent.goal, plan_t0, sc.search);
    timing.search_ms =
        std::chrono::duration<double, std::milli>(clock::now() - search_begin).count();
    timing.expansions = sr.expansions;
    timing.search_ok = sr.trajectory.has_value();

    bool committed = false;
    if (sr.trajectory) {
      auto opt_begin = clock::now();
      auto [optimized, report] =
          optimizeTrajectory(*sr.trajectory, grid, predictions, plan_t0, sc.opt);
      timing.opt_ms =
          std::chrono::duration<double, std::milli>(clock::now() - opt_begin).count();

      const BSpline* chosen = &*sr.trajectory;
      if (report.termination == OptTermination::Converged &&
          checkFeasibility(optimized, grid, predictions, plan_t0, sc.opt.limits)
              .pass(1e-3) &&
          maxSplineSpeed(optimized) < sc.agent.v_max + 1e-3) {
        chosen = &optimized;
      }
      commit(*chosen, plan_t0);
      committed = true;
      consecutive_failures = 0;
    }

    if (!committed) {
      ++consecutive_failures;
      // Keep flying the old plan only while it stays feasible against the
      // latest map and predictions; otherwise stop.
      if (active) {
        auto audit =
            checkFeasibility(*active, grid, predictions, active_start, sc.opt.limits);
        if (!audit.pass(1e-3)) {
          active.reset();
          pending.reset();
        }
      }
      if (consecutive_failures >= 20) event = RunEvent::Freezing;
    }

    last_cycle_ms = timing.search_ms + timing.opt_ms;
    outcome.timings.push_back(timing);
  }

  void advance(double dt) {
    promotePending();
    double new_t = t + dt;
    if (active) {
      double tau = std::clamp(new_t - active_start, 0.0, active->duration());
      agent_pos = active->position(tau);
      agent_vel = new_t - active_start <= active->duration() ? active->velocity(tau)
                                                             : Eigen::Vector3d::Zero();
    } else {
      agent_vel.setZero();
    }
    t = new_t;

    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& p : sc.pedestrians) {
      clearance = std::min(clearance, pointCylinderClearance(agent_pos, p.shapeAt(t)) -
                                          sc.agent.radius);
    }
    for (const auto& b : sc.static_boxes) {
      clearance = std::min(clearance, b.distanceTo(agent_pos) - sc.agent.radius);
    }
    outcome.min_clearance = std::min(outcome.min_clearance, clearance);

    traj_log << t << "," << agent_pos.x() << "," << agent_pos.y() << ","
             << agent_pos.z() << "," << agent_vel.x() << "," << agent_vel.y()
             << "," << agent_vel.z() << "," << clearance << "," << last_cycle_ms
             << "\n";

    if (clearance <= 0.0) {
      event = RunEvent::Collision;
    } else if ((agent_pos - sc.agent.goal).norm() <= 0.5) {
      event = RunEvent::Success;
    } else if (t >= sc.time_limit) {
      event = RunEvent::Freezing;
    }
  }

  void step(double dt) {
    if (event) return;
    if (t + 1e-9 >= next_plan_time) {
      planningCycle();
      next_plan_time += sc.planning_period;
    }
    if (!event) advance(dt);
  }

  RunOutcome finish() {
    outcome.event = event.value_or(RunEvent::Freezing);
    outcome.duration = t;
    outcome.trajectory_csv = traj_log.str();
    outcome.tracking_csv = track_log.str();
    outcome.pedestrian_csv = truth_log.str();
    return outcome;
  }
};

Simulator::Simulator(Scenario scenario) : impl_(std::make_unique<Impl>(std::move(scenario))) {}
Simulator::~Simulator() = default;

void Simulator::step(double dt) { impl_->step(dt); }

RunOutcome Simulator::run() {
  while (!impl_->event) {
    impl_->step(impl_->sc.physics_dt);
  }
  return impl_->finish();
}

double Simulator::time() const { return impl_->t; }
const Eigen::Vector3d& Simulator::agentPosition() const { return impl_->agent_pos; }
bool Simulator::finished() const { return impl_->event.has_value(); }
std::optional<RunEvent> Simulator::event() const { return impl_->event; }

RunOutcome runScenario(const Scenario& scenario) {
  Simulator sim(scenario);
  return sim.run();
}

SweepResult sweepPedestrianSpeed(const Scenario& scenario, double v_start,
                                 double dv, double v_end) {
  if (!(dv > 0)) throw ScenarioError("sweep step must be > 0");
  SweepResult result;
  result.max_collision_free_speed = v_start - dv;
  for (double v = v_start; v <= v_end + 1e-9; v += dv) {
    Scenario sc = scenario;
    for (auto& p : sc.pedestrians) p.speed = v;
    RunOutcome outcome = runScenario(sc);
    result.outcomes.emplace_back(v, outcome.event);
    if (outcome.event == RunEvent::Collision) break;
    result.max_collision_free_speed = v;
  }
  return result;
}

}  // namespace nav
