#include "nav/convex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nav {

namespace {

constexpr double kGeomTol = 1e-9;

struct SimplexVertex {
  Eigen::Vector3d w;  // support on the Minkowski difference a - b
  Eigen::Vector3d sa;
  Eigen::Vector3d sb;
};

int supportIndex(const Eigen::Matrix3Xd& pts, const Eigen::Vector3d& dir) {
  int best = 0;
  double best_dot = pts.col(0).dot(dir);
  for (int i = 1; i < pts.cols(); ++i) {
    double d = pts.col(i).dot(dir);
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  return best;
}

// Fixed-capacity simplex (GJK never needs more than 4 vertices); avoids
// any heap traffic in the hot path.
struct Simplex {
  SimplexVertex verts[4];
  double weights[4];
  int n = 0;
};

// Equality-constrained least squares over a k-point subset: minimize
// |sum w_i v_i|^2 with sum w_i = 1, solved via the (k+1)x(k+1) KKT system
// on fixed-size stack matrices.
template <int K>
bool solveSubset(const SimplexVertex* verts, const int* idx, double* lambda,
                 Eigen::Vector3d* pt) {
  Eigen::Matrix<double, K + 1, K + 1> sys;
  Eigen::Matrix<double, K + 1, 1> rhs = Eigen::Matrix<double, K + 1, 1>::Zero();
  for (int r = 0; r < K; ++r) {
    for (int c = 0; c < K; ++c) {
      sys(r, c) = verts[idx[r]].w.dot(verts[idx[c]].w);
    }
    sys(r, K) = 1.0;
    sys(K, r) = 1.0;
  }
  sys(K, K) = 0.0;
  rhs(K) = 1.0;

  Eigen::FullPivLU<Eigen::Matrix<double, K + 1, K + 1>> lu(sys);
  if (!lu.isInvertible()) return false;
  Eigen::Matrix<double, K + 1, 1> sol = lu.solve(rhs);
  for (int r = 0; r < K; ++r) {
    if (sol(r) < -1e-12) return false;
  }
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int r = 0; r < K; ++r) {
    p += sol(r) * verts[idx[r]].w;
    lambda[r] = sol(r);
  }
  *pt = p;
  return true;
}

// Closest point to the origin on the simplex. Reduces the simplex to the
// minimal supporting subset and fills barycentric weights.
Eigen::Vector3d closestOnSimplex(Simplex& s) {
  const int n = s.n;
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_subset[4];
  int best_k = 5;
  double best_lambda[4];
  Eigen::Vector3d best_point = Eigen::Vector3d::Zero();

  for (int mask = 1; mask < (1 << n); ++mask) {
    int idx[4];
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) idx[k++] = i;
    }
    double lambda[4];
    Eigen::Vector3d pt;
    bool ok = false;
    switch (k) {
      case 1: ok = solveSubset<1>(s.verts, idx, lambda, &pt); break;
      case 2: ok = solveSubset<2>(s.verts, idx, lambda, &pt); break;
      case 3: ok = solveSubset<3>(s.verts, idx, lambda, &pt); break;
      case 4: ok = solveSubset<4>(s.verts, idx, lambda, &pt); break;
    }
    if (!ok) continue;

    double d2 = pt.squaredNorm();
    if (d2 < best_d2 - 1e-15 || (d2 < best_d2 + 1e-15 && k < best_k)) {
      best_d2 = d2;
      best_k = k;
      for (int r = 0; r < k; ++r) {
        best_subset[r] = idx[r];
        best_lambda[r] = lambda[r];
      }
      best_point = pt;
    }
  }

  SimplexVertex reduced[4];
  for (int r = 0; r < best_k; ++r) reduced[r] = s.verts[best_subset[r]];
  for (int r = 0; r < best_k; ++r) {
    s.verts[r] = reduced[r];
    s.weights[r] = best_lambda[r];
  }
  s.n = best_k;
  return best_point;
}

}  // namespace

ClosestPair gjkClosest(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  if (a.cols() == 0 || b.cols() == 0) {
    throw std::domain_error("gjkClosest: empty point set");
  }
  auto support = [&](const Eigen::Vector3d& dir) {
    SimplexVertex v;
    v.sa = a.col(supportIndex(a, dir));
    v.sb = b.col(supportIndex(b, -dir));
    v.w = v.sa - v.sb;
    return v;
  };

  Simplex simplex;
  simplex.verts[0] = support(Eigen::Vector3d(1, 0, 0));
  simplex.weights[0] = 1.0;
  simplex.n = 1;

  Eigen::Vector3d v = simplex.verts[0].w;
  bool weights_valid = true;

  for (int iter = 0; iter < 128; ++iter) {
    v = closestOnSimplex(simplex);
    weights_valid = true;
    double vnorm2 = v.squaredNorm();
    if (vnorm2 < 1e-24) break;  // origin contained: hulls touch

    SimplexVertex w = support(-v);
    // No further progress toward the origin.
    if (vnorm2 - v.dot(w.w) <= 1e-12 * std::max(vnorm2, 1e-12)) break;
    bool duplicate = false;
    for (int i = 0; i < simplex.n; ++i) {
      if ((simplex.verts[i].w - w.w).squaredNorm() < 1e-24) {
        duplicate = true;
        break;
      }
    }
    if (duplicate || simplex.n == 4) break;
    simplex.verts[simplex.n++] = w;
    weights_valid = false;
  }

  if (!weights_valid) {
    closestOnSimplex(simplex);
  }
  ClosestPair out;
  out.on_a = Eigen::Vector3d::Zero();
  out.on_b = Eigen::Vector3d::Zero();
  for (int i = 0; i < simplex.n; ++i) {
    out.on_a += simplex.weights[i] * simplex.verts[i].sa;
    out.on_b += simplex.weights[i] * simplex.verts[i].sb;
  }
  out.distance = (out.on_a - out.on_b).norm();
  return out;
}

double hullDistance(const ConvexHull& a, const ConvexHull& b) {
  return gjkClosest(a.vertices, b.vertices).distance;
}

double pointHullDistance(const Eigen::Vector3d& p, const Eigen::Matrix3Xd& hull) {
  Eigen::Matrix3Xd single(3, 1);
  single.col(0) = p;
  return gjkClosest(single, hull).distance;
}

ConvexHull convexHull(const Eigen::Matrix3Xd& points) {
  if (points.cols() == 0) {
    throw std::domain_error("convexHull: empty input");
  }
  // Drop duplicates first.
  std::vector<int> unique_idx;
  for (int i = 0; i < points.cols(); ++i) {
    bool dup = false;
    for (int j : unique_idx) {
      if ((points.col(i) - points.col(j)).norm() < kGeomTol) {
        dup = true;
        break;
      }
    }
    if (!dup) unique_idx.push_back(i);
  }

  std::vector<bool> keep(unique_idx.size(), true);
  for (size_t i = 0; i < unique_idx.size(); ++i) {
    int n_others = 0;
    for (size_t j = 0; j < unique_idx.size(); ++j) {
      if (j != i && keep[j]) ++n_others;
    }
    if (n_others == 0) continue;
    Eigen::Matrix3Xd others(3, n_others);
    int c = 0;
    for (size_t j = 0; j < unique_idx.size(); ++j) {
      if (j != i && keep[j]) others.col(c++) = points.col(unique_idx[j]);
    }
    if (pointHullDistance(points.col(unique_idx[i]), others) <= kGeomTol) {
      keep[i] = false;
    }
  }

  int n = 0;
  for (bool k : keep) n += k ? 1 : 0;
  ConvexHull hull;
  hull.vertices.resize(3, n);
  int c = 0;
  for (size_t i = 0; i < unique_idx.size(); ++i) {
    if (keep[i]) hull.vertices.col(c++) = points.col(unique_idx[i]);
  }
  return hull;
}

ConvexHull convexHull(const std::vector<Eigen::Vector3d>& points) {
  Eigen::Matrix3Xd m(3, static_cast<int>(points.size()));
  for (size_t i = 0; i < points.size(); ++i) m.col(static_cast<int>(i)) = points[i];
  return convexHull(m);
}

bool hullsIntersect(const ConvexHull& a, const ConvexHull& b) {
  return hullDistance(a, b) <= kGeomTol;
}

std::optional<SeparatingPlane> findSeparatingPlane(const ConvexHull& a,
                                                   const ConvexHull& b,
                                                   double margin) {
  ClosestPair cp = gjkClosest(a.vertices, b.vertices);
  if (cp.distance <= kGeomTol || cp.distance < margin) {
    return std::nullopt;
  }
  SeparatingPlane plane;
  plane.normal = (cp.on_a - cp.on_b) / cp.distance;
  Eigen::Vector3d mid = 0.5 * (cp.on_a + cp.on_b);
  plane.offset = -plane.normal.dot(mid);
  return plane;
}

}  // namespace nav
