#include "nde/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "nde/dataset.hpp"

namespace nde {

namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::VectorXd with_time(double t, const Eigen::VectorXd& z) {
  Eigen::VectorXd u(z.size() + 1);
  u[0] = t;
  u.tail(z.size()) = z;
  return u;
}

auto ode_field(const NdeModel& m) {
  return [&m](double t, const Eigen::VectorXd& z) { return m.f.forward(with_time(t, z)); };
}

auto diffusion_field(const NdeModel& m) {
  return [&m](double t, const Eigen::VectorXd& z) { return m.g.forward(with_time(t, z)); };
}

auto matrix_field(const NdeModel& m) {
  return [&m](double t, const Eigen::VectorXd& z) -> Eigen::MatrixXd {
    const Eigen::VectorXd out = m.f.forward(with_time(t, z));
    return Eigen::Map<const RowMajorMat>(out.data(), m.d_z, m.d_y);
  };
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n && !failed.load();
           i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Eigen::VectorXd readout_feature(const NdeModel& m, const LatentTrajectory& lt) {
  const auto& obs = lt.grid.obs_index;
  if (m.readout == ReadoutKind::Final)
    return lt.z[static_cast<std::size_t>(obs.back())];
  Eigen::VectorXd feature = Eigen::VectorXd::Zero(m.d_z);
  for (int idx : obs) feature += lt.z[static_cast<std::size_t>(idx)];
  return feature / static_cast<double>(obs.size());
}

struct ReadoutGrad {
  double loss = 0.0;
  double p = 0.0;
  std::vector<Eigen::VectorXd> inj;  // cotangent per grid node; empty = zero
};

// Loss head: readout -> k -> c -> sigmoid -> BCE. Accumulates the k and c
// gradients and distributes the feature cotangent onto the grid nodes it
// came from.
ReadoutGrad readout_grad(const NdeModel& m, const LatentTrajectory& lt, int label,
                         GradientSet* g) {
  ReadoutGrad r;
  const Eigen::VectorXd feature = readout_feature(m, lt);
  std::vector<Eigen::VectorXd> k_tape, c_tape;
  const Eigen::VectorXd z_star = m.k.forward(feature, &k_tape);
  const double score = m.c.forward(z_star, &c_tape)[0];
  r.p = sigmoid(score);
  r.loss = bce_loss(r.p, label);

  // Exact derivative of the clamped loss: zero once the probability is
  // outside the clamp range.
  const double dscore =
      (r.p < kClampLo || r.p > kClampHi) ? 0.0 : r.p - static_cast<double>(label);
  Eigen::VectorXd seed(1);
  seed[0] = dscore;
  const Eigen::VectorXd bar_star = m.c.backward(c_tape, seed, &g->c);
  const Eigen::VectorXd bar_feature = m.k.backward(k_tape, bar_star, &g->k);

  const auto& obs = lt.grid.obs_index;
  r.inj.assign(lt.z.size(), Eigen::VectorXd());
  if (m.readout == ReadoutKind::Final) {
    r.inj[static_cast<std::size_t>(obs.back())] = bar_feature;
  } else {
    const Eigen::VectorXd share = bar_feature / static_cast<double>(obs.size());
    for (int idx : obs) r.inj[static_cast<std::size_t>(idx)] = share;
  }
  return r;
}

// Cotangent of the field output for the controlled variant: the step uses
// K = F(t, z) * w with F flattened row-major, so bar_F = bar_K * w^T.
Eigen::VectorXd cde_output_cotangent(const Eigen::VectorXd& bar_k,
                                     const Eigen::VectorXd& w) {
  Eigen::VectorXd out(bar_k.size() * w.size());
  for (Eigen::Index r = 0; r < bar_k.size(); ++r)
    out.segment(r * w.size(), w.size()) = bar_k[r] * w;
  return out;
}

double clamp_to_path(double t, const ControlPath& path) {
  return std::min(std::max(t, path.t_begin()), path.t_end());
}

Eigen::VectorXd euler_step_vjp(const NdeModel& m, const ControlPath* path, double t,
                               double dt, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& a, MlpGrads* gf) {
  std::vector<Eigen::VectorXd> tape;
  m.f.forward(with_time(t, z), &tape);
  Eigen::VectorXd out_cot;
  if (path) {
    const Eigen::VectorXd w = path->derivative(clamp_to_path(t, *path));
    out_cot = cde_output_cotangent((dt * a).eval(), w);
  } else {
    out_cot = dt * a;
  }
  const Eigen::VectorXd v = m.f.backward(tape, out_cot, gf);
  return a + v.tail(z.size());
}

Eigen::VectorXd rk_step_vjp(const NdeModel& m, const ButcherTableau& tab,
                            const ControlPath* path, double t, double dt,
                            const Eigen::VectorXd& z, const Eigen::VectorXd& a,
                            MlpGrads* gf) {
  const int stages = tab.stages();
  const Eigen::Index d_z = z.size();
  std::vector<Eigen::VectorXd> k(static_cast<std::size_t>(stages));
  std::vector<std::vector<Eigen::VectorXd>> tapes(static_cast<std::size_t>(stages));
  std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(stages));

  for (int i = 0; i < stages; ++i) {
    Eigen::VectorXd u = z;
    for (int j = 0; j < i; ++j)
      u += dt * tab.beta[static_cast<std::size_t>(i)][j] * k[static_cast<std::size_t>(j)];
    const double ts = t + tab.alpha[i] * dt;
    Eigen::VectorXd out =
        m.f.forward(with_time(ts, u), &tapes[static_cast<std::size_t>(i)]);
    if (path) {
      w[static_cast<std::size_t>(i)] = path->derivative(clamp_to_path(ts, *path));
      const Eigen::Map<const RowMajorMat> mat(out.data(), d_z,
                                              w[static_cast<std::size_t>(i)].size());
      k[static_cast<std::size_t>(i)] = mat * w[static_cast<std::size_t>(i)];
    } else {
      k[static_cast<std::size_t>(i)] = std::move(out);
    }
  }

  std::vector<Eigen::VectorXd> bar_k(static_cast<std::size_t>(stages));
  for (int i = 0; i < stages; ++i)
    bar_k[static_cast<std::size_t>(i)] = dt * tab.gamma[i] * a;
  Eigen::VectorXd bar_z = a;
  for (int i = stages - 1; i >= 0; --i) {
    const Eigen::VectorXd out_cot =
        path ? cde_output_cotangent(bar_k[static_cast<std::size_t>(i)],
                                    w[static_cast<std::size_t>(i)])
             : bar_k[static_cast<std::size_t>(i)];
    const Eigen::VectorXd v =
        m.f.backward(tapes[static_cast<std::size_t>(i)], out_cot, gf);
    const Eigen::VectorXd vz = v.tail(d_z);
    bar_z += vz;
    for (int j = 0; j < i; ++j)
      bar_k[static_cast<std::size_t>(j)] +=
          dt * tab.beta[static_cast<std::size_t>(i)][j] * vz;
  }
  return bar_z;
}

Eigen::VectorXd em_step_vjp(const NdeModel& m, const rng::Stream& noise, std::size_t step,
                            double t, double dt, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& a, MlpGrads* gf, MlpGrads* gg) {
  const Eigen::VectorXd u = with_time(t, z);
  std::vector<Eigen::VectorXd> f_tape, g_tape;
  m.f.forward(u, &f_tape);
  m.g.forward(u, &g_tape);
  const Eigen::VectorXd zeta = sde_noise(noise, step, z.size());
  const Eigen::VectorXd vf = m.f.backward(f_tape, (dt * a).eval(), gf);
  const Eigen::VectorXd vg =
      m.g.backward(g_tape, (std::sqrt(dt) * a.cwiseProduct(zeta)).eval(), gg);
  return a + vf.tail(z.size()) + vg.tail(z.size());
}

struct SampleGrad {
  double loss = 0.0;
  GradientSet g;
};

LatentTrajectory integrate_sample(const NdeModel& m, const Grid& grid,
                                  const ControlPath* path, const rng::Stream* noise,
                                  Eigen::VectorXd z0) {
  switch (m.kind) {
    case ModelKind::Ode:
      return integrate_ode(m.solver, ode_field(m), grid, std::move(z0));
    case ModelKind::Cde:
      return integrate_cde(m.solver, matrix_field(m), *path, grid, std::move(z0));
    default:
      return integrate_sde(m.solver, ode_field(m), diffusion_field(m), grid,
                           std::move(z0), *noise);
  }
}

SampleGrad sample_grad(const NdeModel& m, const ProjectedSample& s,
                       const rng::Stream* noise) {
  if (s.y.cols() != m.d_y)
    throw std::invalid_argument("projected dimension mismatch for '" + s.id + "'");
  const Grid grid = make_grid(s.times, m.solver.substeps);
  std::optional<ControlPath> path;
  if (m.kind == ModelKind::Cde)
    path.emplace(ControlPath::build(m.spline, s.times, s.y));

  std::vector<Eigen::VectorXd> h_tape;
  Eigen::VectorXd z0 = m.h.forward(s.y.row(0).transpose(), &h_tape);
  const LatentTrajectory lt =
      integrate_sample(m, grid, path ? &*path : nullptr, noise, std::move(z0));

  SampleGrad out;
  out.g = zero_grads(m);
  const ReadoutGrad ro = readout_grad(m, lt, s.label, &out.g);
  out.loss = ro.loss;

  const std::size_t nodes = lt.z.size();
  Eigen::VectorXd a = ro.inj[nodes - 1].size()
                          ? ro.inj[nodes - 1]
                          : Eigen::VectorXd::Zero(m.d_z).eval();
  for (std::size_t node = nodes - 1; node > 0; --node) {
    const std::size_t step = node - 1;
    const double t = grid.t[static_cast<Eigen::Index>(step)];
    const double dt = grid.t[static_cast<Eigen::Index>(node)] - t;
    const Eigen::VectorXd& z = lt.z[step];
    if (m.kind == ModelKind::Sde)
      a = em_step_vjp(m, *noise, step, t, dt, z, a, &out.g.f, &out.g.g);
    else if (m.solver.kind == SolverKind::Euler)
      a = euler_step_vjp(m, path ? &*path : nullptr, t, dt, z, a, &out.g.f);
    else
      a = rk_step_vjp(m, m.solver.tableau, path ? &*path : nullptr, t, dt, z, a,
                      &out.g.f);
    if (ro.inj[step].size()) a += ro.inj[step];
  }
  m.h.backward(h_tape, a, &out.g.h);
  return out;
}

GradResult grad_over(const NdeModel& model,
                     const std::vector<const ProjectedSample*>& batch,
                     const rng::Stream& sde_noise) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<SampleGrad> work(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    const rng::Stream per_sample = sde_noise.fork(rng::fnv1a64(batch[i]->id));
    work[i] = sample_grad(model, *batch[i],
                          model.kind == ModelKind::Sde ? &per_sample : nullptr);
  });
  GradResult res;
  res.grads = zero_grads(model);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  for (const auto& w : work) {
    loss_sum += w.loss;
    res.grads.add(w.g, inv);
  }
  res.loss = loss_sum * inv;
  return res;
}

}  // namespace

double bce_loss(double p, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  const double q = std::clamp(p, kClampLo, kClampHi);
  return label == 1 ? -std::log(q) : -std::log1p(-q);
}

int worker_count() {
  if (const char* env = std::getenv("NDE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min<long>(v, 1024));
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

GradResult grad_through_solver(const NdeModel& model,
                               const std::vector<ProjectedSample>& batch,
                               const rng::Stream& sde_noise) {
  std::vector<const ProjectedSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return grad_over(model, ptrs, sde_noise);
}

AdjointResult adjoint_grad_ode(const NdeModel& m, const ProjectedSample& s) {
  if (m.kind != ModelKind::Ode)
    throw std::invalid_argument(
        "continuous-adjoint gradients are defined for the ode variant only");
  if (s.y.cols() != m.d_y)
    throw std::invalid_argument("projected dimension mismatch for '" + s.id + "'");

  const Grid grid = make_grid(s.times, m.solver.substeps);
  std::vector<Eigen::VectorXd> h_tape;
  Eigen::VectorXd z0 = m.h.forward(s.y.row(0).transpose(), &h_tape);
  const LatentTrajectory lt = integrate_ode(m.solver, ode_field(m), grid, z0);

  AdjointResult res;
  res.grid = grid;
  res.grads = zero_grads(m);
  const ReadoutGrad ro = readout_grad(m, lt, s.label, &res.grads);
  res.loss = ro.loss;

  const ButcherTableau tab =
      m.solver.kind == SolverKind::Euler ? ButcherTableau::euler() : m.solver.tableau;
  const std::size_t nodes = lt.z.size();

  // Augmented backward system in forward time t:
  //   dz/dt = f(t, z)
  //   da/dt = -(df/dz)^T a
  //   dG/dt = -a^T df/dtheta
  // integrated from t_n down to t_0, so G(t_0) = integral of a^T df/dtheta.
  struct Rates {
    Eigen::VectorXd z, a;
    MlpGrads g;
  };
  auto rhs = [&](double t, const Eigen::VectorXd& z, const Eigen::VectorXd& a) {
    Rates d;
    std::vector<Eigen::VectorXd> tape;
    d.z = m.f.forward(with_time(t, z), &tape);
    MlpGrads q = m.f.zero_grads();
    const Eigen::VectorXd v = m.f.backward(tape, a, &q);
    d.a = -v.tail(z.size());
    for (auto& mat : q.w) mat = -mat;
    for (auto& vec : q.b) vec = -vec;
    d.g = std::move(q);
    return d;
  };

  Eigen::VectorXd z = lt.z[nodes - 1];
  Eigen::VectorXd a = ro.inj[nodes - 1].size()
                          ? ro.inj[nodes - 1]
                          : Eigen::VectorXd::Zero(m.d_z).eval();
  MlpGrads big_g = m.f.zero_grads();
  res.adjoint.assign(nodes, Eigen::VectorXd());
  res.adjoint[nodes - 1] = a;

  const int stages = tab.stages();
  for (std::size_t node = nodes - 1; node > 0; --node) {
    const double t = grid.t[static_cast<Eigen::Index>(node)];
    const double dt = grid.t[static_cast<Eigen::Index>(node - 1)] - t;  // negative
    std::vector<Rates> k(static_cast<std::size_t>(stages));
    for (int i = 0; i < stages; ++i) {
      Eigen::VectorXd uz = z, ua = a;
      for (int j = 0; j < i; ++j) {
        const double c = dt * tab.beta[static_cast<std::size_t>(i)][j];
        uz += c * k[static_cast<std::size_t>(j)].z;
        ua += c * k[static_cast<std::size_t>(j)].a;
      }
      k[static_cast<std::size_t>(i)] = rhs(t + tab.alpha[i] * dt, uz, ua);
    }
    for (int i = 0; i < stages; ++i) {
      const double c = dt * tab.gamma[i];
      z += c * k[static_cast<std::size_t>(i)].z;
      a += c * k[static_cast<std::size_t>(i)].a;
      big_g.add(k[static_cast<std::size_t>(i)].g, c);
    }
    if (ro.inj[node - 1].size()) a += ro.inj[node - 1];
    res.adjoint[node - 1] = a;
  }

  res.grads.f = std::move(big_g);
  m.h.backward(h_tape, a, &res.grads.h);
  return res;
}

AdamState make_adam_state(const NdeModel& model) {
  AdamState st;
  st.m = zero_grads(model);
  st.v = zero_grads(model);
  return st;
}

void adam_update_mlp(Mlp& net, const MlpGrads& grads, MlpGrads& m1, MlpGrads& m2,
                     std::int64_t step, double lr, double beta1, double beta2,
                     double eps) {
  if (grads.w.size() != net.w.size())
    throw std::invalid_argument("gradient shape mismatch");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    if (grads.w[l].rows() != net.w[l].rows() || grads.w[l].cols() != net.w[l].cols() ||
        grads.b[l].size() != net.b[l].size())
      throw std::invalid_argument("gradient shape mismatch");
    m1.w[l] = beta1 * m1.w[l] + (1.0 - beta1) * grads.w[l];
    m2.w[l] = beta2 * m2.w[l] + (1.0 - beta2) * grads.w[l].cwiseProduct(grads.w[l]);
    net.w[l].array() -=
        lr * (m1.w[l].array() / bc1) / ((m2.w[l].array() / bc2).sqrt() + eps);
    m1.b[l] = beta1 * m1.b[l] + (1.0 - beta1) * grads.b[l];
    m2.b[l] = beta2 * m2.b[l] + (1.0 - beta2) * grads.b[l].cwiseProduct(grads.b[l]);
    net.b[l].array() -=
        lr * (m1.b[l].array() / bc1) / ((m2.b[l].array() / bc2).sqrt() + eps);
  }
}

void adam_step(NdeModel& model, const GradientSet& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  state.step += 1;
  adam_update_mlp(model.h, grads.h, state.m.h, state.v.h, state.step, lr, beta1, beta2, eps);
  adam_update_mlp(model.f, grads.f, state.m.f, state.v.f, state.step, lr, beta1, beta2, eps);
  adam_update_mlp(model.g, grads.g, state.m.g, state.v.g, state.step, lr, beta1, beta2, eps);
  adam_update_mlp(model.k, grads.k, state.m.k, state.v.k, state.step, lr, beta1, beta2, eps);
  adam_update_mlp(model.c, grads.c, state.m.c, state.v.c, state.step, lr, beta1, beta2, eps);
}

TrainResult train_projected(NdeModel& model, const std::vector<ProjectedSample>& train_set,
                            const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  for (const auto& s : train_set)
    if (s.y.cols() != model.d_y)
      throw std::invalid_argument("projected dimension mismatch for '" + s.id + "'");

  AdamState state = make_adam_state(model);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const rng::Stream root(cfg.seed);

  TrainResult out;
  out.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(order, root.fork("shuffle").fork(static_cast<std::uint64_t>(epoch)));
    const rng::Stream noise = root.fork("sde").fork(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch));
      std::vector<const ProjectedSample*> batch;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const GradResult gr = grad_over(model, batch, noise);
      loss_sum += gr.loss * static_cast<double>(batch.size());
      adam_step(model, gr.grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    out.epoch_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
  }
  return out;
}

TrainResult train(NdeModel& model, const std::vector<LabeledTrajectory>& train_set,
                  const TrainConfig& cfg) {
  if (model.projection.components.size() == 0)
    throw std::runtime_error("model has no fitted projection");
  return train_projected(model, project_dataset(model.projection, train_set), cfg);
}

namespace {

double forward_probability(const NdeModel& m, const ProjectedSample& s,
                           const rng::Stream* noise) {
  const Grid grid = make_grid(s.times, m.solver.substeps);
  std::optional<ControlPath> path;
  if (m.kind == ModelKind::Cde)
    path.emplace(ControlPath::build(m.spline, s.times, s.y));
  Eigen::VectorXd z0 = m.h.forward(s.y.row(0).transpose());
  const LatentTrajectory lt =
      integrate_sample(m, grid, path ? &*path : nullptr, noise, std::move(z0));
  return classify(m, m.k.forward(readout_feature(m, lt)));
}

}  // namespace

double predict(const NdeModel& model, const ProjectedSample& sample, int n_samples) {
  if (n_samples < 1) throw std::invalid_argument("sample count must be >= 1");
  if (sample.y.cols() != model.d_y)
    throw std::invalid_argument("projected dimension mismatch for '" + sample.id + "'");
  if (model.kind != ModelKind::Sde) return forward_probability(model, sample, nullptr);

  const rng::Stream base =
      rng::Stream(model.solver.noise_seed).fork("predict").fork(rng::fnv1a64(sample.id));
  double acc = 0.0;
  for (int d = 0; d < n_samples; ++d) {
    const rng::Stream draw = base.fork(static_cast<std::uint64_t>(d));
    acc += forward_probability(model, sample, &draw);
  }
  return acc / static_cast<double>(n_samples);
}

double predict(const NdeModel& model, const LabeledTrajectory& raw, int n_samples) {
  if (model.projection.components.size() == 0)
    throw std::runtime_error("model has no fitted projection");
  validate(raw);
  if (raw.embeddings.cols() != model.projection.components.cols())
    throw std::invalid_argument("embedding dimension mismatch for '" + raw.id + "'");
  return predict(model, project_trajectory(model.projection, raw), n_samples);
}

std::vector<double> predict_all(const NdeModel& model,
                                const std::vector<LabeledTrajectory>& set,
                                int n_samples) {
  std::vector<double> out(set.size());
  parallel_for(set.size(),
               [&](std::size_t i) { out[i] = predict(model, set[i], n_samples); });
  return out;
}

}  // namespace nde
