#include "nav/bspline.hpp"

#include <cmath>
#include <stdexcept>

namespace nav {

namespace {

Eigen::MatrixXd basisMatrix(int degree) {
  switch (degree) {
    case 1: {
      Eigen::MatrixXd m(2, 2);
      m << 1, 0, -1, 1;
      return m;
    }
    case 2: {
      Eigen::MatrixXd m(3, 3);
      m << 1, 1, 0, -2, 2, 0, 1, -2, 1;
      return m / 2.0;
    }
    case 3: {
      Eigen::MatrixXd m(4, 4);
      m << 1, 4, 1, 0, -3, 0, 3, 0, 3, -6, 3, 0, -1, 3, -3, 1;
      return m / 6.0;
    }
    default:
      throw std::invalid_argument("BSpline: unsupported degree");
  }
}

}  // namespace

BSpline::BSpline(Eigen::Matrix3Xd control_points, double knot_dt, int degree)
    : cps_(std::move(control_points)), dt_(knot_dt), degree_(degree) {
  if (degree_ < 1 || degree_ > 3) {
    throw std::invalid_argument("BSpline: degree must be in [1,3]");
  }
  if (cps_.cols() < degree_ + 1) {
    throw std::invalid_argument("BSpline: need at least degree+1 control points");
  }
  if (!(dt_ > 0.0)) {
    throw std::invalid_argument("BSpline: knot_dt must be positive");
  }
}

Eigen::Vector3d BSpline::position(double t) const {
  const double eps = 1e-9;
  if (t < -eps || t > duration() + eps) {
    throw std::domain_error("BSpline::position: t outside [0, duration]");
  }
  t = std::min(std::max(t, 0.0), duration());
  int seg = std::min(static_cast<int>(std::floor(t / dt_)), numSegments() - 1);
  double u = t / dt_ - seg;

  Eigen::VectorXd uv(degree_ + 1);
  double p = 1.0;
  for (int i = 0; i <= degree_; ++i) {
    uv(i) = p;
    p *= u;
  }
  static const Eigen::MatrixXd m1 = basisMatrix(1);
  static const Eigen::MatrixXd m2 = basisMatrix(2);
  static const Eigen::MatrixXd m3 = basisMatrix(3);
  const Eigen::MatrixXd& m = degree_ == 3 ? m3 : (degree_ == 2 ? m2 : m1);
  Eigen::VectorXd weights = m.transpose() * uv;
  return cps_.middleCols(seg, degree_ + 1) * weights;
}

BSpline BSpline::derivative() const {
  if (cps_.cols() < 2) {
    throw std::domain_error("BSpline::derivative: need at least 2 control points");
  }
  Eigen::Matrix3Xd d(3, cps_.cols() - 1);
  for (int i = 0; i + 1 < cps_.cols(); ++i) {
    d.col(i) = (cps_.col(i + 1) - cps_.col(i)) / dt_;
  }
  return BSpline(std::move(d), dt_, degree_ - 1);
}

Eigen::Matrix3Xd BSpline::segmentControlPoints(int segment) const {
  if (segment < 0 || segment >= numSegments()) {
    throw std::domain_error("BSpline::segmentControlPoints: segment out of range");
  }
  return cps_.middleCols(segment, degree_ + 1);
}

}  // namespace nav
