#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nde {

enum class SplineKind { NaturalCubic, HermiteBackward };

SplineKind spline_kind_from_string(const std::string& name);
std::string to_string(SplineKind k);

// Piecewise-cubic interpolant of a multichannel sequence, used as the control
// path Y(t) driving the CDE. On interval [t_i, t_{i+1}] each channel is
//   a + b*u + c*u^2 + d*u^3, u = t - t_i.
// Evaluation at a knot uses the interval to its right, except at the final
// knot which uses the last interval. No extrapolation: evaluating outside
// [t_0, t_n] throws.
class ControlPath {
 public:
  // Natural cubic spline: C2, second derivative zero at both endpoints.
  static ControlPath natural(const Eigen::VectorXd& times, const Eigen::MatrixXd& values);

  // Cubic Hermite with backward-difference knot derivatives
  //   d_i = (y_i - y_{i-1}) / (t_i - t_{i-1}), d_0 = d_1.
  // Coefficients on [t_i, t_{i+1}] depend only on knots up to i+1, so the
  // path is causal in its inputs.
  static ControlPath hermite_backward(const Eigen::VectorXd& times,
                                      const Eigen::MatrixXd& values);

  static ControlPath build(SplineKind kind, const Eigen::VectorXd& times,
                           const Eigen::MatrixXd& values);

  // Direct construction from per-interval coefficient blocks (each n x dim).
  ControlPath(Eigen::VectorXd times, Eigen::MatrixXd a, Eigen::MatrixXd b,
              Eigen::MatrixXd c, Eigen::MatrixXd d);

  Eigen::VectorXd value(double t) const;
  Eigen::VectorXd derivative(double t) const;
  void eval(double t, Eigen::VectorXd* value, Eigen::VectorXd* derivative) const;

  int dim() const { return static_cast<int>(a_.cols()); }
  double t_begin() const { return times_[0]; }
  double t_end() const { return times_[times_.size() - 1]; }
  const Eigen::VectorXd& knots() const { return times_; }

 private:
  int interval_of(double t) const;

  Eigen::VectorXd times_;
  Eigen::MatrixXd a_, b_, c_, d_;  // (n_intervals) x dim each
};

}  // namespace nde
