#include "nav/occupancy_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

namespace nav {

namespace {

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const std::vector<float>& f, std::vector<float>& out,
          std::vector<int>& v, std::vector<float>& z) {
  const int n = static_cast<int>(f.size());
  v.assign(n, 0);
  z.assign(n + 1, 0.f);
  int k = 0;
  z[0] = -std::numeric_limits<float>::infinity();
  z[1] = std::numeric_limits<float>::infinity();
  for (int q = 1; q < n; ++q) {
    float s;
    while (true) {
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.f * q - 2.f * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<float>::infinity();
  }
  k = 0;
  out.resize(n);
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    float d = static_cast<float>(q - v[k]);
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

OccupancyGrid::OccupancyGrid(const Config& cfg, const Eigen::Vector3d& center)
    : cfg_(cfg) {
  if (!(cfg_.resolution > 0)) {
    throw std::invalid_argument("OccupancyGrid: resolution must be positive");
  }
  for (int i = 0; i < 3; ++i) {
    dims_(i) = std::max(1, static_cast<int>(std::round(cfg_.size(i) / cfg_.resolution)));
  }
  origin_ = center - dims_.cast<double>() * cfg_.resolution / 2.0;
  states_.assign(static_cast<size_t>(dims_.prod()), static_cast<uint8_t>(VoxelState::Unknown));
  distance_.assign(states_.size(), 0.f);
}

bool OccupancyGrid::inBounds(const Eigen::Vector3d& p) const {
  Eigen::Vector3d rel = p - origin_;
  for (int i = 0; i < 3; ++i) {
    if (rel(i) < 0 || rel(i) >= dims_(i) * cfg_.resolution) return false;
  }
  return true;
}

Eigen::Vector3i OccupancyGrid::worldToVoxel(const Eigen::Vector3d& p) const {
  Eigen::Vector3d rel = (p - origin_) / cfg_.resolution;
  return Eigen::Vector3i(static_cast<int>(std::floor(rel.x())),
                         static_cast<int>(std::floor(rel.y())),
                         static_cast<int>(std::floor(rel.z())));
}

Eigen::Vector3d OccupancyGrid::voxelCenter(const Eigen::Vector3i& v) const {
  return origin_ + (v.cast<double>() + Eigen::Vector3d::Constant(0.5)) * cfg_.resolution;
}

bool OccupancyGrid::voxelInBounds(const Eigen::Vector3i& v) const {
  return v.x() >= 0 && v.y() >= 0 && v.z() >= 0 && v.x() < dims_.x() &&
         v.y() < dims_.y() && v.z() < dims_.z();
}

VoxelState OccupancyGrid::state(const Eigen::Vector3i& v) const {
  return static_cast<VoxelState>(states_[index(v)]);
}

VoxelState OccupancyGrid::stateAt(const Eigen::Vector3d& p) const {
  Eigen::Vector3i v = worldToVoxel(p);
  if (!voxelInBounds(v)) return VoxelState::Unknown;
  return state(v);
}

void OccupancyGrid::recenter(const Eigen::Vector3d& center) {
  Eigen::Vector3d new_origin =
      center - dims_.cast<double>() * cfg_.resolution / 2.0;
  // Snap the shift to whole voxels so content moves without resampling.
  Eigen::Vector3i shift;
  for (int i = 0; i < 3; ++i) {
    shift(i) = static_cast<int>(std::round((new_origin(i) - origin_(i)) / cfg_.resolution));
  }
  if (shift == Eigen::Vector3i::Zero()) return;

  std::vector<uint8_t> fresh(states_.size(), static_cast<uint8_t>(VoxelState::Unknown));
  for (int z = 0; z < dims_.z(); ++z) {
    for (int y = 0; y < dims_.y(); ++y) {
      for (int x = 0; x < dims_.x(); ++x) {
        Eigen::Vector3i src(x + shift.x(), y + shift.y(), z + shift.z());
        if (voxelInBounds(src)) {
          fresh[index(Eigen::Vector3i(x, y, z))] = states_[index(src)];
        }
      }
    }
  }
  states_ = std::move(fresh);
  origin_ += shift.cast<double>() * cfg_.resolution;
  distance_dirty_ = true;
}

void OccupancyGrid::insertPointCloud(const Eigen::Isometry3d& pose,
                                     const std::vector<Eigen::Vector3d>& points) {
  const Eigen::Vector3d sensor = pose.translation();
  std::unordered_set<int> hit_this_update;
  std::vector<Eigen::Vector3i> endpoints;
  endpoints.reserve(points.size());

  for (const auto& p_sensor : points) {
    if (p_sensor.norm() > cfg_.max_range) continue;
    Eigen::Vector3d p = pose * p_sensor;
    Eigen::Vector3i v = worldToVoxel(p);
    if (!voxelInBounds(v)) continue;
    endpoints.push_back(v);
    hit_this_update.insert(index(v));
  }

  // Carve free space with a DDA traversal from the sensor to each endpoint.
  for (const auto& end_voxel : endpoints) {
    Eigen::Vector3d target = voxelCenter(end_voxel);
    Eigen::Vector3d dir = target - sensor;
    double len = dir.norm();
    if (len < 1e-9) continue;
    dir /= len;

    Eigen::Vector3i v = worldToVoxel(sensor);
    Eigen::Vector3i step;
    Eigen::Vector3d t_max, t_delta;
    for (int i = 0; i < 3; ++i) {
      step(i) = dir(i) > 0 ? 1 : -1;
      double bound = origin_(i) + (v(i) + (dir(i) > 0 ? 1 : 0)) * cfg_.resolution;
      t_max(i) = std::abs(dir(i)) < 1e-12
                     ? std::numeric_limits<double>::infinity()
                     : (bound - sensor(i)) / dir(i);
      t_delta(i) = std::abs(dir(i)) < 1e-12
                       ? std::numeric_limits<double>::infinity()
                       : cfg_.resolution / std::abs(dir(i));
    }

    int guard = dims_.sum() * 3;
    while (v != end_voxel && guard-- > 0) {
      if (voxelInBounds(v) && hit_this_update.find(index(v)) == hit_this_update.end()) {
        states_[index(v)] = static_cast<uint8_t>(VoxelState::Free);
      }
      int axis = 0;
      if (t_max.y() < t_max.x()) axis = 1;
      if (t_max.z() < t_max(axis)) axis = 2;
      if (t_max(axis) > len) break;
      v(axis) += step(axis);
      t_max(axis) += t_delta(axis);
    }
  }

  for (int idx : hit_this_update) {
    states_[idx] = static_cast<uint8_t>(VoxelState::Occupied);
  }
  if (!endpoints.empty()) distance_dirty_ = true;
}

void OccupancyGrid::clearRegion(const Box3D& region) {
  Box3D expanded = region.expanded(cfg_.resolution);
  Eigen::Matrix3Xd corners = expanded.corners();
  Eigen::Vector3d lo = corners.rowwise().minCoeff();
  Eigen::Vector3d hi = corners.rowwise().maxCoeff();
  Eigen::Vector3i vlo = worldToVoxel(lo);
  Eigen::Vector3i vhi = worldToVoxel(hi);
  bool changed = false;
  for (int z = std::max(0, vlo.z()); z <= std::min(dims_.z() - 1, vhi.z()); ++z) {
    for (int y = std::max(0, vlo.y()); y <= std::min(dims_.y() - 1, vhi.y()); ++y) {
      for (int x = std::max(0, vlo.x()); x <= std::min(dims_.x() - 1, vhi.x()); ++x) {
        Eigen::Vector3i v(x, y, z);
        if (expanded.contains(voxelCenter(v))) {
          states_[index(v)] = static_cast<uint8_t>(VoxelState::Free);
          changed = true;
        }
      }
    }
  }
  if (changed) distance_dirty_ = true;
}

bool OccupancyGrid::isOccupied(const Eigen::Vector3d& p, bool inflate) const {
  return isOccupied(p, inflate, cfg_.unknown_as_occupied);
}

bool OccupancyGrid::isOccupied(const Eigen::Vector3d& p, bool inflate,
                               bool unknown_as_occupied) const {
  VoxelState s = stateAt(p);
  if (s == VoxelState::Occupied) return true;
  if (unknown_as_occupied && s == VoxelState::Unknown) return true;
  if (!inflate) return false;
  if (!inBounds(p)) return false;
  return distanceToObstacle(p) <= cfg_.inflation_radius;
}

void OccupancyGrid::refreshDistanceField() const {
  if (!distance_dirty_) return;
  const float inf = 1e12f;
  const int nx = dims_.x(), ny = dims_.y(), nz = dims_.z();
  std::vector<float> sq(states_.size());
  for (size_t i = 0; i < states_.size(); ++i) {
    sq[i] = states_[i] == static_cast<uint8_t>(VoxelState::Occupied) ? 0.f : inf;
  }

  std::vector<float> line, out;
  std::vector<int> v_buf;
  std::vector<float> z_buf;

  // x pass
  line.resize(nx);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      size_t base = (static_cast<size_t>(z) * ny + y) * nx;
      for (int x = 0; x < nx; ++x) line[x] = sq[base + x];
      dt1d(line, out, v_buf, z_buf);
      for (int x = 0; x < nx; ++x) sq[base + x] = out[x];
    }
  }
  // y pass
  line.resize(ny);
  for (int z = 0; z < nz; ++z) {
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) line[y] = sq[(static_cast<size_t>(z) * ny + y) * nx + x];
      dt1d(line, out, v_buf, z_buf);
      for (int y = 0; y < ny; ++y) sq[(static_cast<size_t>(z) * ny + y) * nx + x] = out[y];
    }
  }
  // z pass
  line.resize(nz);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      for (int z = 0; z < nz; ++z) line[z] = sq[(static_cast<size_t>(z) * ny + y) * nx + x];
      dt1d(line, out, v_buf, z_buf);
      for (int z = 0; z < nz; ++z) sq[(static_cast<size_t>(z) * ny + y) * nx + x] = out[z];
    }
  }

  distance_.resize(sq.size());
  const float res = static_cast<float>(cfg_.resolution);
  const float trunc = static_cast<float>(cfg_.truncation_distance);
  for (size_t i = 0; i < sq.size(); ++i) {
    distance_[i] = std::min(trunc, std::sqrt(sq[i]) * res);
  }
  distance_dirty_ = false;
}

double OccupancyGrid::fieldValue(const Eigen::Vector3i& v) const {
  Eigen::Vector3i c = v.cwiseMax(Eigen::Vector3i::Zero()).cwiseMin(dims_ - Eigen::Vector3i::Ones());
  return distance_[index(c)];
}

double OccupancyGrid::distanceToObstacle(const Eigen::Vector3d& p) const {
  if (!inBounds(p)) {
    throw std::domain_error("distanceToObstacle: point outside grid");
  }
  refreshDistanceField();
  if (stateAt(p) == VoxelState::Occupied) return 0.0;
  // Trilinear interpolation over voxel centers.
  Eigen::Vector3d rel = (p - origin_) / cfg_.resolution - Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3i lo(static_cast<int>(std::floor(rel.x())),
                     static_cast<int>(std::floor(rel.y())),
                     static_cast<int>(std::floor(rel.z())));
  Eigen::Vector3d f = rel - lo.cast<double>();
  double result = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        double w = (dx ? f.x() : 1 - f.x()) * (dy ? f.y() : 1 - f.y()) *
                   (dz ? f.z() : 1 - f.z());
        result += w * fieldValue(lo + Eigen::Vector3i(dx, dy, dz));
      }
    }
  }
  return result;
}

Eigen::Vector3d OccupancyGrid::distanceGradient(const Eigen::Vector3d& p) const {
  if (!inBounds(p)) {
    throw std::domain_error("distanceGradient: point outside grid");
  }
  const double h = cfg_.resolution;
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d lo = p, hi = p;
    lo(i) -= h;
    hi(i) += h;
    double d_lo = inBounds(lo) ? distanceToObstacle(lo) : distanceToObstacle(p);
    double d_hi = inBounds(hi) ? distanceToObstacle(hi) : distanceToObstacle(p);
    double span = (inBounds(hi) ? h : 0.0) + (inBounds(lo) ? h : 0.0);
    g(i) = span > 0 ? (d_hi - d_lo) / span : 0.0;
  }
  return g;
}

Eigen::Vector3d OccupancyGrid::distanceFieldGradient(const Eigen::Vector3d& p) const {
  if (!inBounds(p)) {
    throw std::domain_error("distanceFieldGradient: point outside grid");
  }
  refreshDistanceField();
  Eigen::Vector3d rel = (p - origin_) / cfg_.resolution - Eigen::Vector3d::Constant(0.5);
  Eigen::Vector3i lo(static_cast<int>(std::floor(rel.x())),
                     static_cast<int>(std::floor(rel.y())),
                     static_cast<int>(std::floor(rel.z())));
  Eigen::Vector3d f = rel - lo.cast<double>();

  auto val = [&](int dx, int dy, int dz) {
    return fieldValue(lo + Eigen::Vector3i(dx, dy, dz));
  };
  Eigen::Vector3d g;
  g.x() = (1 - f.y()) * (1 - f.z()) * (val(1, 0, 0) - val(0, 0, 0)) +
          f.y() * (1 - f.z()) * (val(1, 1, 0) - val(0, 1, 0)) +
          (1 - f.y()) * f.z() * (val(1, 0, 1) - val(0, 0, 1)) +
          f.y() * f.z() * (val(1, 1, 1) - val(0, 1, 1));
  g.y() = (1 - f.x()) * (1 - f.z()) * (val(0, 1, 0) - val(0, 0, 0)) +
          f.x() * (1 - f.z()) * (val(1, 1, 0) - val(1, 0, 0)) +
          (1 - f.x()) * f.z() * (val(0, 1, 1) - val(0, 0, 1)) +
          f.x() * f.z() * (val(1, 1, 1) - val(1, 0, 1));
  g.z() = (1 - f.x()) * (1 - f.y()) * (val(0, 0, 1) - val(0, 0, 0)) +
          f.x() * (1 - f.y()) * (val(1, 0, 1) - val(1, 0, 0)) +
          (1 - f.x()) * f.y() * (val(0, 1, 1) - val(0, 1, 0)) +
          f.x() * f.y() * (val(1, 1, 1) - val(1, 1, 0));
  return g / cfg_.resolution;
}

void OccupancyGrid::writeBinary(std::ostream& os) const {
  double origin[3] = {origin_.x(), origin_.y(), origin_.z()};
  double res = cfg_.resolution;
  int32_t dims[3] = {dims_.x(), dims_.y(), dims_.z()};
  os.write(reinterpret_cast<const char*>(origin), sizeof(origin));
  os.write(reinterpret_cast<const char*>(&res), sizeof(res));
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  os.write(reinterpret_cast<const char*>(states_.data()),
           static_cast<std::streamsize>(states_.size()));
}

void OccupancyGrid::writeOccupiedCsv(std::ostream& os) const {
  os << "x,y,z\n";
  for (int z = 0; z < dims_.z(); ++z) {
    for (int y = 0; y < dims_.y(); ++y) {
      for (int x = 0; x < dims_.x(); ++x) {
        Eigen::Vector3i v(x, y, z);
        if (state(v) == VoxelState::Occupied) {
          Eigen::Vector3d c = voxelCenter(v);
          os << c.x() << "," << c.y() << "," << c.z() << "\n";
        }
      }
    }
  }
}

}  // namespace nav
