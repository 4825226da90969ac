#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nde/noise.hpp"
#include "nde/spline.hpp"

namespace nde {

enum class SolverKind { Euler, Rk4, EulerMaruyama };

SolverKind solver_kind_from_string(const std::string& name);
std::string to_string(SolverKind k);

// Coefficients of an explicit Runge-Kutta scheme: stage times alpha, stage
// weight rows beta (row s holds s entries), output weights gamma.
struct ButcherTableau {
  Eigen::VectorXd alpha;
  std::vector<Eigen::VectorXd> beta;
  Eigen::VectorXd gamma;

  static ButcherTableau euler();
  static ButcherTableau rk4();

  int stages() const { return static_cast<int>(alpha.size()); }
  void validate() const;
};

struct SolverConfig {
  SolverKind kind = SolverKind::Rk4;
  int substeps = 4;
  ButcherTableau tableau = ButcherTableau::rk4();
  std::uint64_t noise_seed = 0;
};

// Uniform refinement of the observation times: each [t_i, t_{i+1}] is split
// into `substeps` equal pieces. Observation i sits at grid node i * substeps.
struct Grid {
  Eigen::VectorXd t;
  std::vector<int> obs_index;
};

Grid make_grid(const Eigen::VectorXd& obs_times, int substeps);

// Latent states at every grid node plus the observation map.
struct LatentTrajectory {
  Grid grid;
  std::vector<Eigen::VectorXd> z;

  const Eigen::VectorXd& at_obs(int i) const {
    return z[static_cast<std::size_t>(grid.obs_index[static_cast<std::size_t>(i)])];
  }
};

namespace detail {

inline void check_state(const Eigen::VectorXd& z, std::size_t step) {
  if (!z.allFinite())
    throw std::runtime_error("non-finite state at solver step " + std::to_string(step));
}

}  // namespace detail

// One explicit Runge-Kutta step for dz/dt = field(t, z).
template <class Field>
Eigen::VectorXd rk_step(const ButcherTableau& tab, Field&& field, double t, double dt,
                        const Eigen::VectorXd& z) {
  const int s = tab.stages();
  std::vector<Eigen::VectorXd> k(static_cast<std::size_t>(s));
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(z.size());
  for (int i = 0; i < s; ++i) {
    Eigen::VectorXd u = z;
    for (int j = 0; j < i; ++j)
      u += dt * tab.beta[static_cast<std::size_t>(i)][j] * k[static_cast<std::size_t>(j)];
    k[static_cast<std::size_t>(i)] = field(t + tab.alpha[i] * dt, u);
    acc += tab.gamma[i] * k[static_cast<std::size_t>(i)];
  }
  return z + dt * acc;
}

template <class Field>
Eigen::VectorXd euler_step(Field&& field, double t, double dt, const Eigen::VectorXd& z) {
  return z + dt * field(t, z);
}

// Integrates dz/dt = field(t, z) across the grid with the configured scheme.
template <class Field>
LatentTrajectory integrate_ode(const SolverConfig& cfg, Field&& field, const Grid& grid,
                               Eigen::VectorXd z0) {
  if (cfg.kind == SolverKind::EulerMaruyama)
    throw std::invalid_argument("stochastic scheme requires drift and diffusion");
  LatentTrajectory out;
  out.grid = grid;
  out.z.reserve(static_cast<std::size_t>(grid.t.size()));
  out.z.push_back(std::move(z0));
  for (Eigen::Index s = 0; s + 1 < grid.t.size(); ++s) {
    const double t = grid.t[s], dt = grid.t[s + 1] - grid.t[s];
    const Eigen::VectorXd& z = out.z.back();
    Eigen::VectorXd next = cfg.kind == SolverKind::Euler
                               ? euler_step(field, t, dt, z)
                               : rk_step(cfg.tableau, field, t, dt, z);
    detail::check_state(next, static_cast<std::size_t>(s));
    out.z.push_back(std::move(next));
  }
  return out;
}

// Standard-normal increment for SDE step `step`, component-indexed. The
// stream is expected to be keyed by (seed, trajectory) already.
inline Eigen::VectorXd sde_noise(const rng::Stream& noise, std::size_t step, Eigen::Index dim) {
  Eigen::VectorXd zeta(dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    zeta[j] = noise.normal(static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(dim) +
                           static_cast<std::uint64_t>(j));
  return zeta;
}

// Euler-Maruyama: z' = z + dt*drift + sqrt(dt) * diffusion .* N(0, I).
template <class Drift, class Diffusion>
LatentTrajectory integrate_sde(const SolverConfig& cfg, Drift&& drift, Diffusion&& diffusion,
                               const Grid& grid, Eigen::VectorXd z0, const rng::Stream& noise) {
  LatentTrajectory out;
  out.grid = grid;
  out.z.reserve(static_cast<std::size_t>(grid.t.size()));
  out.z.push_back(std::move(z0));
  for (Eigen::Index s = 0; s + 1 < grid.t.size(); ++s) {
    const double t = grid.t[s], dt = grid.t[s + 1] - grid.t[s];
    const Eigen::VectorXd& z = out.z.back();
    const Eigen::VectorXd zeta = sde_noise(noise, static_cast<std::size_t>(s), z.size());
    Eigen::VectorXd next =
        z + dt * drift(t, z) + std::sqrt(dt) * diffusion(t, z).cwiseProduct(zeta);
    detail::check_state(next, static_cast<std::size_t>(s));
    out.z.push_back(std::move(next));
  }
  return out;
}

// Controlled equation dz = field(t, z) dY: integrates the induced ODE
// dz/dt = field(t, z) * dY/dt with the configured base solver. The field
// returns a d_z x d_y matrix.
template <class MatrixField>
LatentTrajectory integrate_cde(const SolverConfig& cfg, MatrixField&& field,
                               const ControlPath& path, const Grid& grid,
                               Eigen::VectorXd z0) {
  if (grid.t[0] < path.t_begin() || grid.t[grid.t.size() - 1] > path.t_end())
    throw std::invalid_argument("grid extends outside the control path domain");
  auto induced = [&](double t, const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return field(t, z) * path.derivative(t);
  };
  return integrate_ode(cfg, induced, grid, std::move(z0));
}

}  // namespace nde
