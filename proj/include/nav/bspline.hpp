#ifndef NAV_BSPLINE_HPP
#define NAV_BSPLINE_HPP

#include <Eigen/Dense>

namespace nav {

// Uniform B-spline over 3D control points with a fixed knot interval.
// Trajectories are cubic (degree 3); derivatives lower the degree by one
// and are represented by difference control points.
class BSpline {
 public:
  BSpline(Eigen::Matrix3Xd control_points, double knot_dt, int degree = 3);

  const Eigen::Matrix3Xd& controlPoints() const { return cps_; }
  double knotDt() const { return dt_; }
  int degree() const { return degree_; }
  int numControlPoints() const { return static_cast<int>(cps_.cols()); }
  int numSegments() const { return numControlPoints() - degree_; }
  double duration() const { return numSegments() * dt_; }

  // Curve point at t in [0, duration], basis-matrix evaluation.
  Eigen::Vector3d position(double t) const;

  // Derivative spline: degree reduced by one, control points
  // v_i = (p_{i+1} - p_i) / knot_dt.
  BSpline derivative() const;

  Eigen::Vector3d velocity(double t) const { return derivative().position(t); }
  Eigen::Vector3d acceleration(double t) const {
    return derivative().derivative().position(t);
  }

  // The degree+1 control points defining segment i.
  Eigen::Matrix3Xd segmentControlPoints(int segment) const;

 private:
  Eigen::Matrix3Xd cps_;
  double dt_;
  int degree_;
};

}  // namespace nav

#endif
