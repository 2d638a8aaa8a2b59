#include "nav/search.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

namespace nav {

ConvexHull timeWindowHull(const ObstaclePrediction& pred, double t0, double t1) {
  if (pred.samples.empty()) {
    throw std::domain_error("timeWindowHull: empty prediction");
  }
  std::vector<Eigen::Vector3d> pts;
  for (const auto& [stamp, hull] : pred.samples) {
    if (stamp >= t0 - 1e-9 && stamp <= t1 + 1e-9) {
      for (int i = 0; i < hull.vertices.cols(); ++i) pts.push_back(hull.vertices.col(i));
    }
  }
  if (pts.empty()) {
    // Window beyond the horizon (or between samples): fall back to the
    // nearest hull, the last one being the conservative extension.
    const ConvexHull* nearest = &pred.samples.back().second;
    for (const auto& [stamp, hull] : pred.samples) {
      if (stamp >= t0) {
        nearest = &hull;
        break;
      }
    }
    return *nearest;
  }
  // The samples are axis-aligned inflated regions, so the axis-aligned box
  // of the window is a tight conservative sweep and keeps GJK cheap
  // (8 vertices instead of the whole vertex union).
  Eigen::Vector3d lo = pts[0], hi = pts[0];
  for (const auto& q : pts) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  ConvexHull hull;
  hull.vertices.resize(3, 8);
  for (int i = 0; i < 8; ++i) {
    hull.vertices.col(i) = Eigen::Vector3d(i & 1 ? hi.x() : lo.x(),
                                           i & 2 ? hi.y() : lo.y(),
                                           i & 4 ? hi.z() : lo.z());
  }
  return hull;
}

namespace {

struct Node {
  Eigen::Vector3d pos;
  int parent = -1;
  double g = 0.0;
  int depth = 0;  // index of this control point in the trajectory
};

struct QueueEntry {
  double f;
  double h;
  long seq;
  int node;
  bool operator>(const QueueEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return seq > o.seq;
  }
};

uint64_t packKey(const Eigen::Vector3i& cell, const Eigen::Vector3i& disp) {
  uint64_t k = 0;
  for (int i = 0; i < 3; ++i) {
    k = (k << 11) | static_cast<uint64_t>(cell(i) + 1024);
  }
  for (int i = 0; i < 3; ++i) {
    k = (k << 5) | static_cast<uint64_t>(disp(i) + 16);
  }
  return k;
}

class SearchContext {
 public:
  SearchContext(const OccupancyGrid& grid,
                const std::vector<ObstaclePrediction>& predictions,
                const SearchConfig& cfg, double t0, const Eigen::Vector3d& start)
      : grid_(grid), predictions_(predictions), cfg_(cfg), t0_(t0) {
    // Obstacles that already violate the margin at the plan start (e.g. a
    // pedestrian bearing down on the hovering agent) must not veto the
    // escape: skip them for the first few segments instead of failing
    // every candidate plan.
    engaged_at_start_.resize(predictions_.size(), false);
    for (size_t i = 0; i < predictions_.size(); ++i) {
      if (predictions_[i].samples.empty()) continue;
      ConvexHull h0 = timeWindowHull(predictions_[i], t0, t0 + cfg_.knot_dt);
      if (pointHullDistance(start, h0.vertices) < cfg_.dynamic_margin) {
        engaged_at_start_[i] = true;
      }
    }
  }

  // Collision check for one cubic segment given its 4 control points and
  // segment index (for the dynamic time window). Returns false when
  // blocked; accumulates the unknown-traversal cost surcharge.
  bool segmentAdmissible(const Eigen::Matrix3Xd& seg_cps, int segment,
                         double* unknown_cost) {
    const double margin = grid_.inflationRadius() + 0.5 * grid_.resolution();
    BSpline seg(seg_cps, cfg_.knot_dt, 3);
    int unknown_samples = 0;
    const int n_samples = 12;
    for (int k = 0; k <= n_samples; ++k) {
      double t = cfg_.knot_dt * k / n_samples;
      Eigen::Vector3d p = seg.position(t);
      if (!grid_.inBounds(p)) return false;
      if (grid_.distanceToObstacle(p) < margin) return false;
      if (grid_.stateAt(p) == VoxelState::Unknown) ++unknown_samples;
    }
    if (unknown_cost) {
      *unknown_cost += cfg_.unknown_cost_weight * cfg_.lattice_step *
                       static_cast<double>(unknown_samples) / (n_samples + 1);
    }

    if (!predictions_.empty()) {
      ConvexHull seg_hull{seg_cps};
      Eigen::Vector3d seg_lo = seg_cps.rowwise().minCoeff();
      Eigen::Vector3d seg_hi = seg_cps.rowwise().maxCoeff();
      double w0 = t0_ + segment * cfg_.knot_dt;
      double w1 = t0_ + (segment + 3) * cfg_.knot_dt;
      for (size_t pi = 0; pi < predictions_.size(); ++pi) {
        if (engaged_at_start_[pi] && segment < 3) continue;  // escape window
        const auto& pred = predictions_[pi];
        const CachedHull& swept = windowHullCached(pred, segment, w0, w1);
        // Bounding-box gap is a lower bound on the hull distance.
        Eigen::Vector3d gap =
            (seg_lo - swept.hi).cwiseMax(swept.lo - seg_hi).cwiseMax(0.0);
        if (gap.norm() >= cfg_.dynamic_margin) continue;
        if (hullDistance(seg_hull, swept.hull) < cfg_.dynamic_margin) return false;
      }
    }
    return true;
  }

 private:
  struct CachedHull {
    ConvexHull hull;
    Eigen::Vector3d lo, hi;
  };

  const CachedHull& windowHullCached(const ObstaclePrediction& pred, int segment,
                                     double w0, double w1) {
    auto key = std::make_pair(pred.track_id, segment);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    CachedHull c;
    c.hull = timeWindowHull(pred, w0, w1);
    c.lo = c.hull.vertices.rowwise().minCoeff();
    c.hi = c.hull.vertices.rowwise().maxCoeff();
    return cache_.emplace(key, std::move(c)).first->second;
  }

  struct PairHash {
    size_t operator()(const std::pair<int, int>& p) const {
      return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^ p.second);
    }
  };

  const OccupancyGrid& grid_;
  const std::vector<ObstaclePrediction>& predictions_;
  const SearchConfig& cfg_;
  double t0_;
  std::vector<bool> engaged_at_start_;
  std::unordered_map<std::pair<int, int>, CachedHull, PairHash> cache_;
};

// Clip the goal onto the start->goal line: inside the grid with a border
// margin, clear of the inflated static map, and clear of where each
// predicted obstacle ends up (its last predicted hull). Without this the
// search can only fail when the raw goal is blocked.
Eigen::Vector3d clipGoalToGrid(const OccupancyGrid& grid,
                               const std::vector<ObstaclePrediction>& predictions,
                               const Eigen::Vector3d& start,
                               const Eigen::Vector3d& goal,
                               const SearchConfig& cfg) {
  const double border = 2 * grid.resolution();
  const double clearance = grid.inflationRadius() + 0.5 * grid.resolution() + 0.05;
  auto admissible = [&](const Eigen::Vector3d& p) {
    for (int i = 0; i < 3; ++i) {
      double lo = grid.origin()(i) + border;
      double hi = grid.origin()(i) + grid.dims()(i) * grid.resolution() - border;
      if (p(i) < lo || p(i) > hi) return false;
    }
    if (grid.distanceToObstacle(p) < clearance) return false;
    for (const auto& pred : predictions) {
      if (pred.samples.empty()) continue;
      if (pointHullDistance(p, pred.samples.back().second.vertices) <
          cfg.dynamic_margin) {
        return false;
      }
    }
    return true;
  };
  for (double s = 1.0; s >= 0.0; s -= 0.01) {
    Eigen::Vector3d p = start + s * (goal - start);
    if (admissible(p)) return p;
  }
  return start;
}

// Clip only against the grid bounds, ignoring obstacles. Used when the
// admissible clip degenerates to the start (the whole lane toward the goal
// is obstructed): the search then still needs a direction to pull toward,
// and the partial-progress fallback supplies the safe endpoint.
Eigen::Vector3d clipGoalToBounds(const OccupancyGrid& grid,
                                 const Eigen::Vector3d& start,
                                 const Eigen::Vector3d& goal) {
  const double border = 2 * grid.resolution();
  auto inside = [&](const Eigen::Vector3d& p) {
    for (int i = 0; i < 3; ++i) {
      double lo = grid.origin()(i) + border;
      double hi = grid.origin()(i) + grid.dims()(i) * grid.resolution() - border;
      if (p(i) < lo || p(i) > hi) return false;
    }
    return true;
  };
  for (double s = 1.0; s >= 0.0; s -= 0.01) {
    Eigen::Vector3d p = start + s * (goal - start);
    if (inside(p)) return p;
  }
  return start;
}

}  // namespace

SearchResult searchInitialTrajectory(const OccupancyGrid& grid,
                                     const std::vector<ObstaclePrediction>& predictions,
                                     const Eigen::Matrix3d& initial_cps,
                                     const Eigen::Vector3d& goal,
                                     double plan_start_time,
                                     const SearchConfig& cfg) {
  SearchResult result;
  const double s = cfg.lattice_step;
  const double dt = cfg.knot_dt;
  const double eps = 1e-9;

  Eigen::Vector3d start = initial_cps.col(2);
  Eigen::Vector3d clipped = clipGoalToGrid(grid, predictions, start, goal, cfg);
  if ((clipped - start).norm() < 2 * cfg.lattice_step &&
      (goal - start).norm() >= 2 * cfg.lattice_step) {
    // The whole lane toward the goal is obstructed; keep pulling toward the
    // goal direction and rely on the fallback to end at a safe sidestep.
    clipped = clipGoalToBounds(grid, start, goal);
  }
  result.clipped_goal = clipped;

  SearchContext ctx(grid, predictions, cfg, plan_start_time, start);

  const int max_step = std::max(1, static_cast<int>(std::floor(cfg.v_max * dt / s + eps)));

  std::vector<Node> arena;
  arena.push_back({start, -1, 0.0, 2});

  // p_{k-1}, p_{k-2} via the parent chain, falling back to the fixed
  // initial control points.
  auto chainPos = [&](int node, int back) {
    int cur = node;
    while (back > 0 && arena[cur].parent >= 0) {
      cur = arena[cur].parent;
      --back;
    }
    if (back == 0) return arena[cur].pos;
    int idx = 2 - back;  // arena root is initial cp index 2
    idx = std::max(idx, 0);
    return Eigen::Vector3d(initial_cps.col(idx));
  };

  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<QueueEntry>> open;
  std::unordered_map<uint64_t, double> best_g;
  long seq = 0;

  auto pushNode = [&](int idx) {
    double h = (arena[idx].pos - clipped).norm();
    open.push({arena[idx].g + cfg.lambda * h, h, seq++, idx});
  };
  pushNode(0);

  auto latticeCell = [&](const Eigen::Vector3d& p) {
    Eigen::Vector3d rel = (p - start) / s;
    return Eigen::Vector3i(static_cast<int>(std::llround(rel.x())),
                           static_cast<int>(std::llround(rel.y())),
                           static_cast<int>(std::llround(rel.z())));
  };

  // Append an endpoint triple and verify the trailing segments.
  auto tryComplete = [&](int node_idx,
                         const Eigen::Vector3d& endpoint) -> std::optional<BSpline> {
    std::vector<Eigen::Vector3d> chain;
    for (int cur = node_idx; cur >= 0; cur = arena[cur].parent) {
      chain.push_back(arena[cur].pos);
    }
    std::reverse(chain.begin(), chain.end());

    int n = static_cast<int>(chain.size()) + 2 + 3;
    Eigen::Matrix3Xd cps(3, n);
    cps.col(0) = initial_cps.col(0);
    cps.col(1) = initial_cps.col(1);
    for (size_t i = 0; i < chain.size(); ++i) cps.col(2 + static_cast<int>(i)) = chain[i];
    for (int i = 0; i < 3; ++i) cps.col(n - 3 + i) = endpoint;

    // Kinodynamic audit of the appended tail.
    for (int i = std::max(1, n - 6); i + 1 < n; ++i) {
      Eigen::Vector3d v = (cps.col(i + 1) - cps.col(i)) / dt;
      if (v.norm() > cfg.v_max + 1e-6) return std::nullopt;
      Eigen::Vector3d a = (cps.col(i + 1) - 2 * cps.col(i) + cps.col(i - 1)) / (dt * dt);
      if ((a.cwiseAbs().array() > cfg.a_max + 1e-6).any()) return std::nullopt;
    }
    // Collision audit of the tail segments introduced by the goal triple.
    for (int segment = std::max(0, n - 9); segment < n - 3; ++segment) {
      if (!ctx.segmentAdmissible(cps.middleCols(segment, 4), segment, nullptr)) {
        return std::nullopt;
      }
    }
    return BSpline(cps, dt, 3);
  };

  // Popped nodes by heuristic value: when the clipped goal itself turns out
  // to be unreachable, fall back to a receding-horizon plan ending at the
  // best reachable node.
  std::vector<std::pair<double, int>> popped;

  while (!open.empty() && result.expansions < cfg.max_expansions) {
    QueueEntry top = open.top();
    open.pop();
    int ni = top.node;
    const Node node = arena[ni];
    ++result.expansions;
    popped.emplace_back(top.h, ni);

    if ((node.pos - clipped).norm() <= s + eps) {
      if (auto traj = tryComplete(ni, clipped)) {
        result.trajectory = std::move(traj);
        return result;
      }
    }

    Eigen::Vector3d prev1 = chainPos(ni, 1);
    for (int dx = -max_step; dx <= max_step; ++dx) {
      for (int dy = -max_step; dy <= max_step; ++dy) {
        for (int dz = -max_step; dz <= max_step; ++dz) {
          Eigen::Vector3d child = node.pos + s * Eigen::Vector3d(dx, dy, dz);
          Eigen::Vector3d v = (child - node.pos) / dt;
          if (v.norm() > cfg.v_max + eps) continue;
          Eigen::Vector3d acc = (child - 2 * node.pos + prev1) / (dt * dt);
          if ((acc.cwiseAbs().array() > cfg.a_max + eps).any()) continue;

          double unknown_cost = 0.0;
          int new_depth = node.depth + 1;
          if (new_depth >= 3) {
            Eigen::Matrix3Xd seg_cps(3, 4);
            seg_cps.col(0) = chainPos(ni, 2);
            seg_cps.col(1) = prev1;
            seg_cps.col(2) = node.pos;
            seg_cps.col(3) = child;
            if (!ctx.segmentAdmissible(seg_cps, new_depth - 3, &unknown_cost)) continue;
          }

          double g = node.g + acc.squaredNorm() + unknown_cost + cfg.time_weight;
          Eigen::Vector3i cell = latticeCell(child);
          uint64_t key = packKey(cell, Eigen::Vector3i(dx, dy, dz));
          auto it = best_g.find(key);
          if (it != best_g.end() && it->second <= g + eps) continue;
          best_g[key] = g;

          arena.push_back({child, ni, g, new_depth});
          pushNode(static_cast<int>(arena.size()) - 1);
        }
      }
    }
  }

  // Partial progress: stop the trajectory at the most promising node that
  // admits a feasible braking tail. A zero-progress (or even retreating)
  // endpoint is still a valid receding-horizon answer when the lane ahead
  // is blocked — ending somewhere safe beats having no plan at all.
  std::sort(popped.begin(), popped.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 0; i < popped.size() && i < 50; ++i) {
    const auto& [h, ni] = popped[i];
    if (auto traj = tryComplete(ni, arena[ni].pos)) {
      result.trajectory = std::move(traj);
      result.clipped_goal = arena[ni].pos;
      return result;
    }
  }
  return result;  // no admissible trajectory: search failure
}

StitchState replanStitch(const BSpline& prev, double t_now) {
  if (t_now < -1e-9 || t_now > prev.duration() + 1e-9) {
    throw std::domain_error("replanStitch: t_now outside trajectory domain");
  }
  int j = std::min(static_cast<int>(std::floor(t_now / prev.knotDt())),
                   prev.numSegments() - 1);
  StitchState out;
  out.control_points = prev.controlPoints().middleCols(j + 1, 3);
  out.start_time = (j + 1) * prev.knotDt();
  double t_eval = std::min(out.start_time, prev.duration());
  out.position = prev.position(t_eval);
  out.velocity = prev.velocity(t_eval);
  return out;
}

}  // namespace nav
