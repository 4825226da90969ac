#include "nde/solvers.hpp"

namespace nde {

SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "euler") return SolverKind::Euler;
  if (name == "rk4") return SolverKind::Rk4;
  if (name == "euler-maruyama") return SolverKind::EulerMaruyama;
  throw std::invalid_argument("unknown solver kind: " + name +
                              " (expected 'euler', 'rk4', or 'euler-maruyama')");
}

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::Euler: return "euler";
    case SolverKind::Rk4: return "rk4";
    default: return "euler-maruyama";
  }
}

ButcherTableau ButcherTableau::euler() {
  ButcherTableau t;
  t.alpha = Eigen::VectorXd::Zero(1);
  t.beta = {Eigen::VectorXd()};
  t.gamma = Eigen::VectorXd::Ones(1);
  return t;
}

ButcherTableau ButcherTableau::rk4() {
  ButcherTableau t;
  t.alpha.resize(4);
  t.alpha << 0.0, 0.5, 0.5, 1.0;
  t.beta.resize(4);
  t.beta[0] = Eigen::VectorXd();
  t.beta[1] = Eigen::VectorXd::Constant(1, 0.5);
  t.beta[2].resize(2);
  t.beta[2] << 0.0, 0.5;
  t.beta[3].resize(3);
  t.beta[3] << 0.0, 0.0, 1.0;
  t.gamma.resize(4);
  t.gamma << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
  return t;
}

void ButcherTableau::validate() const {
  const auto s = alpha.size();
  if (s < 1) throw std::invalid_argument("tableau needs at least one stage");
  if (gamma.size() != s || static_cast<Eigen::Index>(beta.size()) != s)
    throw std::invalid_argument("tableau coefficient lengths disagree");
  for (Eigen::Index i = 0; i < s; ++i)
    if (beta[static_cast<std::size_t>(i)].size() != i)
      throw std::invalid_argument("tableau beta row " + std::to_string(i) +
                                  " must have " + std::to_string(i) + " entries");
  if (std::abs(gamma.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("tableau output weights must sum to 1");
}

Grid make_grid(const Eigen::VectorXd& obs_times, int substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (obs_times.size() < 2) throw std::invalid_argument("need at least 2 observation times");
  const Eigen::Index n = obs_times.size() - 1;
  Grid g;
  g.t.resize(n * substeps + 1);
  g.obs_index.resize(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(obs_times[i + 1] > obs_times[i]))
      throw std::invalid_argument("observation times must be strictly increasing");
    g.obs_index[static_cast<std::size_t>(i)] = static_cast<int>(i * substeps);
    for (int s = 0; s < substeps; ++s) {
      const double frac = static_cast<double>(s) / substeps;
      g.t[i * substeps + s] = obs_times[i] + frac * (obs_times[i + 1] - obs_times[i]);
    }
  }
  g.t[n * substeps] = obs_times[n];
  g.obs_index[static_cast<std::size_t>(n)] = static_cast<int>(n * substeps);
  return g;
}

}  // namespace nde
