#include "nde/spline.hpp"

#include <algorithm>
#include <stdexcept>

namespace nde {

SplineKind spline_kind_from_string(const std::string& name) {
  if (name == "natural") return SplineKind::NaturalCubic;
  if (name == "hermite") return SplineKind::HermiteBackward;
  throw std::invalid_argument("unknown spline kind: " + name +
                              " (expected 'natural' or 'hermite')");
}

std::string to_string(SplineKind k) {
  return k == SplineKind::NaturalCubic ? "natural" : "hermite";
}

namespace {

void check_knots(const Eigen::VectorXd& times, const Eigen::MatrixXd& values) {
  if (times.size() < 2) throw std::invalid_argument("need at least 2 knots");
  if (times.size() != values.rows())
    throw std::invalid_argument("knot times and value rows differ");
  for (Eigen::Index i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("knot times must be strictly increasing");
}

}  // namespace

ControlPath::ControlPath(Eigen::VectorXd times, Eigen::MatrixXd a, Eigen::MatrixXd b,
                         Eigen::MatrixXd c, Eigen::MatrixXd d)
    : times_(std::move(times)),
      a_(std::move(a)),
      b_(std::move(b)),
      c_(std::move(c)),
      d_(std::move(d)) {
  const Eigen::Index n = times_.size() - 1;
  if (n < 1 || a_.rows() != n || b_.rows() != n || c_.rows() != n || d_.rows() != n)
    throw std::invalid_argument("coefficient blocks must have one row per interval");
}

ControlPath ControlPath::natural(const Eigen::VectorXd& times,
                                 const Eigen::MatrixXd& values) {
  check_knots(times, values);
  const Eigen::Index n = times.size() - 1;  // intervals
  const Eigen::Index dim = values.cols();

  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h[i] = times[i + 1] - times[i];

  // Second derivatives M at the knots, M_0 = M_n = 0; interior knots solve a
  // tridiagonal system. Thomas algorithm per channel.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, dim);
  if (n >= 2) {
    const Eigen::Index m = n - 1;  // unknowns M_1..M_{n-1}
    Eigen::VectorXd diag(m), lower(m), upper(m);
    Eigen::MatrixXd rhs(m, dim);
    for (Eigen::Index i = 0; i < m; ++i) {
      lower[i] = h[i] / 6.0;
      diag[i] = (h[i] + h[i + 1]) / 3.0;
      upper[i] = h[i + 1] / 6.0;
      rhs.row(i) = (values.row(i + 2) - values.row(i + 1)) / h[i + 1] -
                   (values.row(i + 1) - values.row(i)) / h[i];
    }
    for (Eigen::Index i = 1; i < m; ++i) {
      const double w = lower[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs.row(i) -= w * rhs.row(i - 1);
    }
    M.row(n - 1) = rhs.row(m - 1) / diag[m - 1];
    for (Eigen::Index i = m - 2; i >= 0; --i)
      M.row(i + 1) = (rhs.row(i) - upper[i] * M.row(i + 2)) / diag[i];
  }

  Eigen::MatrixXd a(n, dim), b(n, dim), c(n, dim), d(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) = values.row(i);
    b.row(i) = (values.row(i + 1) - values.row(i)) / h[i] -
               h[i] * (2.0 * M.row(i) + M.row(i + 1)) / 6.0;
    c.row(i) = M.row(i) / 2.0;
    d.row(i) = (M.row(i + 1) - M.row(i)) / (6.0 * h[i]);
  }
  return ControlPath(times, std::move(a), std::move(b), std::move(c), std::move(d));
}

ControlPath ControlPath::hermite_backward(const Eigen::VectorXd& times,
                                          const Eigen::MatrixXd& values) {
  check_knots(times, values);
  const Eigen::Index n = times.size() - 1;
  const Eigen::Index dim = values.cols();

  Eigen::MatrixXd deriv(n + 1, dim);
  for (Eigen::Index i = 1; i <= n; ++i)
    deriv.row(i) = (values.row(i) - values.row(i - 1)) / (times[i] - times[i - 1]);
  deriv.row(0) = deriv.row(1);

  Eigen::MatrixXd a(n, dim), b(n, dim), c(n, dim), d(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = times[i + 1] - times[i];
    const Eigen::RowVectorXd slope = (values.row(i + 1) - values.row(i)) / h;
    a.row(i) = values.row(i);
    b.row(i) = deriv.row(i);
    c.row(i) = (3.0 * slope - 2.0 * deriv.row(i) - deriv.row(i + 1)) / h;
    d.row(i) = (deriv.row(i) + deriv.row(i + 1) - 2.0 * slope) / (h * h);
  }
  return ControlPath(times, std::move(a), std::move(b), std::move(c), std::move(d));
}

ControlPath ControlPath::build(SplineKind kind, const Eigen::VectorXd& times,
                               const Eigen::MatrixXd& values) {
  return kind == SplineKind::NaturalCubic ? natural(times, values)
                                          : hermite_backward(times, values);
}

int ControlPath::interval_of(double t) const {
  const Eigen::Index n = times_.size() - 1;
  if (t < times_[0] || t > times_[n])
    throw std::out_of_range("control path evaluated outside its knot range");
  const double* begin = times_.data();
  const double* pos = std::upper_bound(begin, begin + n + 1, t);
  Eigen::Index i = (pos - begin) - 1;
  if (i >= n) i = n - 1;  // t == t_n uses the last interval
  return static_cast<int>(i);
}

void ControlPath::eval(double t, Eigen::VectorXd* value, Eigen::VectorXd* derivative) const {
  const int i = interval_of(t);
  const double u = t - times_[i];
  if (value)
    *value = a_.row(i).transpose() +
             u * (b_.row(i).transpose() + u * (c_.row(i).transpose() + u * d_.row(i).transpose()));
  if (derivative)
    *derivative = b_.row(i).transpose() +
                  u * (2.0 * c_.row(i).transpose() + 3.0 * u * d_.row(i).transpose());
}

Eigen::VectorXd ControlPath::value(double t) const {
  Eigen::VectorXd v;
  eval(t, &v, nullptr);
  return v;
}

Eigen::VectorXd ControlPath::derivative(double t) const {
  Eigen::VectorXd d;
  eval(t, nullptr, &d);
  return d;
}

}  // namespace nde
