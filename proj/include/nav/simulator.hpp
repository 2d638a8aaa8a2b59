#ifndef NAV_SIMULATOR_HPP
#define NAV_SIMULATOR_HPP

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nav/scenario.hpp"

namespace nav {

enum class RunEvent { Success, Collision, Freezing };

std::string toString(RunEvent e);

struct CycleTiming {
  double stamp = 0.0;
  double search_ms = 0.0;
  double opt_ms = 0.0;
  double map_ms = 0.0;
  int expansions = 0;
  bool search_ok = false;
};

struct TrackingSample {
  double stamp;
  int track_id;
  double x, y, vx, vy;
  MotionClass motion_class;
};

struct TruthSample {
  double stamp;
  int pedestrian;
  double x, y, vx, vy;
};

struct RunOutcome {
  RunEvent event = RunEvent::Freezing;
  double duration = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();
  std::vector<CycleTiming> timings;
  std::vector<TrackingSample> tracking;
  std::vector<TruthSample> truth;
  std::string trajectory_csv;  // stamp,x,y,z,vx,vy,vz,min_clearance,cycle_ms
  std::string tracking_csv;    // stamp,id,x,y,vx,vy,motion_class
  std::string pedestrian_csv;  // stamp,pedestrian,x,y,vx,vy

  // Wall-time-free view of the logs for determinism checks (strips the
  // cycle_ms column).
  std::string deterministicLogs() const;
};

struct RmseReport {
  double position_rmse = 0.0;
  double velocity_rmse = 0.0;
  int matched_samples = 0;
  int unmatched_truth_samples = 0;
};

// Nearest-centroid matching within a gate; unmatched truth samples are
// excluded from the RMSE but counted. Throws when nothing matches.
RmseReport rmseReport(const RunOutcome& outcome, double gate = 1.0,
                      double warmup = 1.0);

// Deterministic closed-loop world: scripted pedestrians, synthetic
// sensing, perception -> tracking -> mapping -> planning, ideal tracking
// of the committed spline.
class Simulator {
 public:
  explicit Simulator(Scenario scenario);
  ~Simulator();

  void step(double dt);
  RunOutcome run();

  double time() const;
  const Eigen::Vector3d& agentPosition() const;
  bool finished() const;
  std::optional<RunEvent> event() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

RunOutcome runScenario(const Scenario& scenario);

struct SweepResult {
  std::vector<std::pair<double, RunEvent>> outcomes;
  double max_collision_free_speed = 0.0;
};

// Raises every pedestrian's speed from v_start to v_end in dv steps and
// reports the largest collision-free speed before the first collision.
SweepResult sweepPedestrianSpeed(const Scenario& scenario, double v_start,
                                 double dv, double v_end);

}  // namespace nav

#endif
