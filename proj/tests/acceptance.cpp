// End-to-end acceptance checks. Each criterion prints one PASS line; any
// failure aborts with a diagnostic and a nonzero exit code.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nde/baselines.hpp"
#include "nde/dataset.hpp"
#include "nde/evaluation.hpp"
#include "nde/model.hpp"
#include "nde/pca.hpp"
#include "nde/solvers.hpp"
#include "nde/spline.hpp"
#include "nde/training.hpp"

namespace fs = std::filesystem;

#define REQUIRE(cond, msg)                                                     \
  do {                                                                         \
    if (!(cond)) {                                                             \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg      \
                << "\n";                                                       \
      std::exit(1);                                                            \
    }                                                                          \
  } while (0)

namespace {

std::string g_cli;
fs::path g_work;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd z(1);
  z[0] = v;
  return z;
}

Eigen::VectorXd unit_interval() {
  Eigen::VectorXd t(2);
  t << 0.0, 1.0;
  return t;
}

double exp_terminal(nde::SolverKind kind, int substeps) {
  nde::SolverConfig cfg;
  cfg.kind = kind;
  if (kind == nde::SolverKind::Euler) cfg.tableau = nde::ButcherTableau::euler();
  cfg.substeps = substeps;
  const auto field = [](double, const Eigen::VectorXd& z) { return z; };
  const nde::Grid grid = nde::make_grid(unit_interval(), substeps);
  return nde::integrate_ode(cfg, field, grid, scalar(1.0)).z.back()[0];
}

// ---- random small-model family shared by the gradient criteria ----

nde::ProjectedSample family_sample(std::uint64_t seed, int tokens, int d_y) {
  const nde::rng::Stream s(nde::rng::mix(seed, 0x5a5a));
  nde::ProjectedSample out;
  out.id = "fam-" + std::to_string(seed);
  out.label = static_cast<int>(s.below(999, 2));
  out.times = Eigen::VectorXd::LinSpaced(tokens, 0.0, tokens - 1.0);
  out.y.resize(tokens, d_y);
  for (int i = 0; i < tokens; ++i)
    for (int j = 0; j < d_y; ++j)
      out.y(i, j) = s.normal(static_cast<std::uint64_t>(i * d_y + j));
  return out;
}

nde::NdeModel family_model(nde::ModelKind kind, std::uint64_t seed, int d_y, int d_z,
                           int substeps) {
  nde::ModelConfig cfg;
  cfg.kind = kind;
  cfg.d_y = d_y;
  cfg.d_z = d_z;
  cfg.readout = (seed % 2 == 0) ? nde::ReadoutKind::Final : nde::ReadoutKind::Mean;
  cfg.solver.substeps = substeps;
  cfg.seed = seed;
  return nde::init_model(cfg);
}

// single affine layer with fixed weights
nde::Mlp affine(const Eigen::MatrixXd& w) {
  nde::Mlp m;
  m.act = nde::Activation::Tanh;
  m.w.push_back(w);
  m.b.push_back(Eigen::VectorXd::Zero(w.rows()));
  return m;
}

struct RunOutput {
  int status = -1;
  std::string out;
};

RunOutput run_cli(const std::string& args, const std::string& tag) {
  const fs::path log = g_work / (tag + ".out");
  const fs::path err = g_work / (tag + ".err");
  const std::string cmd =
      g_cli + " " + args + " > " + log.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  RunOutput r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream is(log);
  std::stringstream buf;
  buf << is.rdbuf();
  r.out = buf.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good(), "cannot read " << p);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// ---- criteria ----

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const double exact = std::exp(1.0);

  const double e1 = std::abs(exp_terminal(nde::SolverKind::Euler, 32) - exact);
  const double e2 = std::abs(exp_terminal(nde::SolverKind::Euler, 64) - exact);
  const double euler_ratio = e1 / e2;
  REQUIRE(euler_ratio >= 1.8 && euler_ratio <= 2.2,
          "euler error ratio " << euler_ratio << " outside [1.8, 2.2]");

  const double r1 = std::abs(exp_terminal(nde::SolverKind::Rk4, 8) - exact);
  const double r2 = std::abs(exp_terminal(nde::SolverKind::Rk4, 16) - exact);
  const double rk4_ratio = r1 / r2;
  REQUIRE(rk4_ratio >= 13.0 && rk4_ratio <= 19.0,
          "rk4 error ratio " << rk4_ratio << " outside [13, 19]");

  const double dt = seconds_since(t0);
  REQUIRE(dt < 1.0, "convergence study took " << dt << " s");
  std::cout << "criterion 1 (solver convergence orders): PASS (euler "
            << euler_ratio << ", rk4 " << rk4_ratio << ")\n";
}

void criterion_2() {
  const auto field = [](double, const Eigen::VectorXd& z) { return z; };
  const double one_step =
      nde::rk_step(nde::ButcherTableau::rk4(), field, 0.0, 0.1, scalar(1.0))[0];
  REQUIRE(std::abs(one_step - 1.1051708333) <= 1e-10,
          "rk4 step " << one_step << " != 1.1051708333 +- 1e-10");

  nde::SolverConfig cfg;
  const auto ramp = [](double t, const Eigen::VectorXd&) { return scalar(t); };
  const nde::Grid g = nde::make_grid(unit_interval(), 1);
  const double area = nde::integrate_ode(cfg, ramp, g, scalar(0.0)).z.back()[0];
  REQUIRE(std::abs(area - 0.5) <= 1e-12, "rk4 on f(t)=t gave " << area);
  std::cout << "criterion 2 (rk4 single-step exactness): PASS\n";
}

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  const double fd_step = 1e-5;
  int models = 0, coords = 0;

  for (const auto kind :
       {nde::ModelKind::Ode, nde::ModelKind::Cde, nde::ModelKind::Sde}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const int d_y = 2 + static_cast<int>(seed % 3);       // 2..4
      const int d_z = 3 + static_cast<int>(seed % 4);       // 3..6
      const int tokens = 3 + static_cast<int>(seed % 3);    // 3..5
      const nde::NdeModel model = family_model(kind, seed, d_y, d_z, 2);
      const std::vector<nde::ProjectedSample> batch{family_sample(seed, tokens, d_y)};
      const nde::rng::Stream noise(nde::rng::mix(seed, 77));

      const auto res = nde::grad_through_solver(model, batch, noise);
      const Eigen::VectorXd grad = nde::flatten_grads(res.grads);
      const Eigen::VectorXd theta = nde::flatten_params(model);

      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd up = theta, dn = theta;
        up[i] += fd_step;
        dn[i] -= fd_step;
        nde::NdeModel m = model;
        nde::set_params(m, up);
        const double lu = nde::grad_through_solver(m, batch, noise).loss;
        nde::set_params(m, dn);
        const double ld = nde::grad_through_solver(m, batch, noise).loss;
        const double fd = (lu - ld) / (2.0 * fd_step);
        const double err = std::abs(grad[i] - fd);
        const double scale = std::max(std::abs(grad[i]), std::abs(fd));
        REQUIRE(err <= std::max(1e-7, 1e-4 * scale),
                nde::to_string(kind) << " seed " << seed << " coord " << i
                                     << ": grad " << grad[i] << " fd " << fd);
        ++coords;
      }
      ++models;
    }
  }
  const double dt = seconds_since(t0);
  REQUIRE(dt < 60.0, "gradient check took " << dt << " s");
  std::cout << "criterion 3 (gradients match finite differences): PASS (" << models
            << " models, " << coords << " coordinates, " << dt << " s)\n";
}

void criterion_4() {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int d_y = 2 + static_cast<int>(seed % 3);
    const int d_z = 3 + static_cast<int>(seed % 4);
    const int tokens = 3 + static_cast<int>(seed % 3);
    const nde::NdeModel model = family_model(nde::ModelKind::Ode, seed, d_y, d_z, 8);
    const nde::ProjectedSample sample = family_sample(seed, tokens, d_y);

    const auto direct = nde::grad_through_solver(model, {sample});
    const auto adj = nde::adjoint_grad_ode(model, sample);
    const Eigen::VectorXd g1 = nde::flatten_grads(direct.grads);
    const Eigen::VectorXd g2 = nde::flatten_grads(adj.grads);
    const double rel = (g1 - g2).norm() / std::max({g1.norm(), g2.norm(), 1e-300});
    REQUIRE(rel < 1e-3, "seed " << seed << ": adjoint/backprop discrepancy " << rel);
  }

  // scalar linear field f = theta z; the adjoint is a(T) e^{theta (T - t)}
  const double theta = 0.8;
  nde::NdeModel lin;
  lin.kind = nde::ModelKind::Ode;
  lin.readout = nde::ReadoutKind::Final;
  lin.d_y = 1;
  lin.d_z = 1;
  lin.d_star = 1;
  lin.solver.kind = nde::SolverKind::Rk4;
  lin.solver.substeps = 32;
  lin.h = affine((Eigen::MatrixXd(1, 1) << 1.0).finished());
  lin.f = affine((Eigen::MatrixXd(1, 2) << 0.0, theta).finished());
  lin.k = affine((Eigen::MatrixXd(1, 1) << 1.0).finished());
  lin.c = affine((Eigen::MatrixXd(1, 1) << 1.0).finished());

  nde::ProjectedSample s;
  s.id = "linear";
  s.label = 1;
  s.times = unit_interval();
  s.y = Eigen::MatrixXd::Ones(2, 1);

  const auto adj = nde::adjoint_grad_ode(lin, s);
  const double T = adj.grid.t[adj.grid.t.size() - 1];
  const double aT = adj.adjoint.back()[0];
  REQUIRE(std::abs(aT) > 1e-8, "terminal adjoint vanished");
  for (Eigen::Index i = 0; i < adj.grid.t.size(); ++i) {
    const double expected = aT * std::exp(theta * (T - adj.grid.t[i]));
    const double got = adj.adjoint[static_cast<std::size_t>(i)][0];
    REQUIRE(std::abs(got - expected) <= 1e-5 * std::abs(expected),
            "adjoint at t=" << adj.grid.t[i] << ": " << got << " vs " << expected);
  }
  std::cout << "criterion 4 (adjoint agrees with backprop): PASS\n";
}

void criterion_5() {
  const nde::rng::Stream root(505);
  for (int rep = 0; rep < 10; ++rep) {
    const nde::rng::Stream s = root.fork(static_cast<std::uint64_t>(rep));
    const int n = 5 + static_cast<int>(s.below(0, 4));
    Eigen::VectorXd t(n);
    t[0] = s.uniform(1, -2.0, 0.0);
    for (int i = 1; i < n; ++i)
      t[i] = t[i - 1] + s.uniform(static_cast<std::uint64_t>(10 + i), 0.1, 2.0);
    Eigen::MatrixXd y(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j)
        y(i, j) = 3.0 * s.normal(static_cast<std::uint64_t>(100 + 2 * i + j));

    for (const auto kind :
         {nde::SplineKind::NaturalCubic, nde::SplineKind::HermiteBackward}) {
      const nde::ControlPath p = nde::ControlPath::build(kind, t, y);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) {
          const double v = p.value(t[i])[j];
          REQUIRE(std::abs(v - y(i, j)) <= 1e-10 * std::max(1.0, std::abs(y(i, j))),
                  nde::to_string(kind) << " rep " << rep << " knot " << i
                                       << " channel " << j << ": " << v << " vs "
                                       << y(i, j));
        }
    }
  }

  Eigen::VectorXd kt(3);
  kt << 0.0, 1.0, 2.0;
  Eigen::MatrixXd ky(3, 1);
  ky << 0.0, 1.0, 0.0;
  const nde::ControlPath tent = nde::ControlPath::natural(kt, ky);
  const double mid = tent.value(0.5)[0];
  REQUIRE(std::abs(mid - 0.6875) <= 1e-12, "natural tent at 0.5: " << mid);

  const double eps = 1e-6;
  const double c0 = (tent.derivative(0.0 + eps)[0] - tent.derivative(0.0)[0]) / eps;
  const double cn = (tent.derivative(2.0 - eps)[0] - tent.derivative(2.0 - 2 * eps)[0]) / eps;
  REQUIRE(std::abs(c0) <= 1e-5, "left endpoint curvature " << c0);
  REQUIRE(std::abs(cn) <= 1e-5, "right endpoint curvature " << cn);
  std::cout << "criterion 5 (spline exactness): PASS\n";
}

void criterion_6() {
  nde::SolverConfig cfg;
  cfg.kind = nde::SolverKind::EulerMaruyama;
  cfg.substeps = 10;
  const auto drift = [](double, const Eigen::VectorXd& z) {
    return Eigen::VectorXd(Eigen::VectorXd::Zero(z.size()));
  };
  const auto unit_diff = [](double, const Eigen::VectorXd& z) {
    return Eigen::VectorXd(Eigen::VectorXd::Ones(z.size()));
  };
  const nde::Grid g = nde::make_grid(unit_interval(), cfg.substeps);

  const int n = 10000;
  const nde::rng::Stream root(2026);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = nde::integrate_sde(cfg, drift, unit_diff, g, scalar(0.0),
                                        root.fork(static_cast<std::uint64_t>(i)))
                         .z.back()[0];
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  const double four_se = 4.0 * std::sqrt(2.0 / (n - 1));
  REQUIRE(std::abs(var - 1.0) <= four_se,
          "terminal variance " << var << " not within " << four_se << " of 1");

  const auto wavy = [](double t, const Eigen::VectorXd& z) {
    return Eigen::VectorXd(0.4 * z.array().cos() - 0.1 * t);
  };
  const auto zero = [](double, const Eigen::VectorXd& z) {
    return Eigen::VectorXd(Eigen::VectorXd::Zero(z.size()));
  };
  nde::SolverConfig euler;
  euler.kind = nde::SolverKind::Euler;
  euler.tableau = nde::ButcherTableau::euler();
  euler.substeps = cfg.substeps;
  Eigen::VectorXd z0(3);
  z0 << 0.2, -0.7, 1.4;
  const auto with_noise_path =
      nde::integrate_sde(cfg, wavy, zero, g, z0, nde::rng::Stream(8));
  const auto plain = nde::integrate_ode(euler, wavy, g, z0);
  REQUIRE(with_noise_path.z.size() == plain.z.size(), "grid size mismatch");
  for (std::size_t i = 0; i < plain.z.size(); ++i)
    REQUIRE(with_noise_path.z[i] == plain.z[i],
            "zero-diffusion path deviates from euler at node " << i);
  std::cout << "criterion 6 (stochastic integrator statistics): PASS (var " << var
            << ")\n";
}

void criterion_7() {
  const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> labels{0, 0, 1, 1};
  REQUIRE(nde::auc_roc(scores, labels) == 0.75, "worked example is not 0.75");

  const nde::rng::Stream root(707);
  for (int rep = 0; rep < 100; ++rep) {
    const nde::rng::Stream s = root.fork(static_cast<std::uint64_t>(rep));
    const std::size_t n = 2 + s.below(0, 49);
    std::vector<double> sc(n);
    std::vector<int> lb(n);
    const bool coarse = s.below(1, 2) == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = s.unit(10 + i);
      sc[i] = coarse ? std::floor(u * 6.0) / 6.0 : u;
      lb[i] = static_cast<int>(s.below(1000 + i, 2));
    }
    lb[0] = 1;
    lb[n - 1] = 0;

    double credit = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (lb[i] != 1) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (lb[j] != 0) continue;
        ++pairs;
        if (sc[i] > sc[j])
          credit += 1.0;
        else if (sc[i] == sc[j])
          credit += 0.5;
      }
    }
    const double brute = credit / static_cast<double>(pairs);
    const double fast = nde::auc_roc(sc, lb);
    REQUIRE(std::abs(fast - brute) <= 1e-12,
            "rep " << rep << ": " << fast << " vs brute " << brute);
  }
  std::cout << "criterion 7 (auc pairwise oracle): PASS\n";
}

void criterion_8() {
  const auto t0 = std::chrono::steady_clock::now();
  ::setenv("NDE_THREADS", "1", 1);

  nde::SynthSpec spec;
  spec.per_class = 150;
  spec.d_x = 16;
  spec.seed = 42;
  const auto all = nde::gen_synthetic(spec);
  const auto [train, test] = nde::split_dataset(all, 0.3334, 2);
  REQUIRE(train.size() == 200, "train size " << train.size());
  REQUIRE(test.size() == 100, "test size " << test.size());

  nde::ModelConfig mc;
  mc.kind = nde::ModelKind::Cde;
  mc.d_y = 16;
  mc.d_z = 16;
  mc.readout = nde::ReadoutKind::Mean;
  mc.seed = 3;
  nde::NdeModel model = nde::init_model(mc);
  model.projection = nde::fit_pca(train, 16);

  nde::TrainConfig tc;
  tc.seed = 3;
  const auto log = nde::train(model, train, tc);
  REQUIRE(log.epoch_loss.size() == 50, "expected 50 epoch losses");

  const std::vector<double> cde_scores = nde::predict_all(model, test);
  std::vector<int> labels;
  for (const auto& t : test) labels.push_back(t.label);
  const double cde_auc = nde::auc_roc(cde_scores, labels);
  REQUIRE(cde_auc >= 0.95, "cde auc " << cde_auc << " below 0.95");

  nde::ProbeConfig pc;
  pc.seed = 3;
  const auto probe = nde::train_last_token_probe(train, pc);
  const double probe_auc = nde::auc_roc(nde::probe_scores(probe, test), labels);
  REQUIRE(probe_auc <= 0.60, "last-token probe auc " << probe_auc << " above 0.60");

  const double dt = seconds_since(t0);
  REQUIRE(dt < 300.0, "scenario took " << dt << " s");
  ::unsetenv("NDE_THREADS");
  std::cout << "criterion 8 (mid-sequence divergence separates the detectors): PASS "
            << "(cde " << cde_auc << ", probe " << probe_auc << ", " << dt << " s)\n";
}

void criterion_9() {
  const fs::path data = g_work / "det-data";
  REQUIRE(run_cli("synth --per-class 6 --dx 5 --seed 21 --out " + data.string(),
                  "det-synth")
                  .status == 0,
          "synth failed");

  for (const std::string variant : {"ode", "cde", "sde"}) {
    const fs::path a = g_work / ("det-" + variant + "-a");
    const fs::path b = g_work / ("det-" + variant + "-b");
    const std::string flags = " --variant " + variant +
                              " --epochs 2 --dz 3 --k 3 --substeps 2 --seed 6";
    for (const auto& dir : {a, b}) {
      const auto r = run_cli("train --data " + data.string() + " --out " +
                                 dir.string() + flags,
                             "det-train-" + variant + dir.filename().string());
      REQUIRE(r.status == 0, variant << " training failed:\n" << r.out);
    }
    REQUIRE(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"),
            variant << " checkpoints differ between reruns");
    REQUIRE(slurp(a / "projection.bin") == slurp(b / "projection.bin"),
            variant << " projections differ between reruns");
    REQUIRE(slurp(a / "loss.csv") == slurp(b / "loss.csv"),
            variant << " loss logs differ between reruns");

    const std::string eval_flags = variant == "sde" ? " --sde-samples 3" : "";
    const fs::path ra = g_work / ("det-" + variant + "-a.csv");
    const fs::path rb = g_work / ("det-" + variant + "-b.csv");
    const auto e1 = run_cli("eval --model " + (a / "model.ckpt").string() + " --data " +
                                data.string() + " --out " + ra.string() + eval_flags,
                            "det-eval-" + variant + "-a");
    const auto e2 = run_cli("eval --model " + (a / "model.ckpt").string() + " --data " +
                                data.string() + " --out " + rb.string() + eval_flags,
                            "det-eval-" + variant + "-b");
    REQUIRE(e1.status == 0 && e2.status == 0, variant << " evaluation failed");
    REQUIRE(e1.out == e2.out, variant << " reports differ between reruns");
    REQUIRE(slurp(ra) == slurp(rb), variant << " report files differ between reruns");
  }
  std::cout << "criterion 9 (bit-identical reruns for every variant): PASS\n";
}

void criterion_10() {
  nde::TokenLikelihoods t;
  t.p = {0.5, 0.25};
  const auto m = nde::logit_metrics(t);
  REQUIRE(std::abs(m.avg_prob - 1.0397207708399179) <= 1e-6,
          "avg -ln p: " << m.avg_prob);
  REQUIRE(std::abs(m.max_prob - 1.3862943611198906) <= 1e-6,
          "max -ln p: " << m.max_prob);

  // corpus counts a:3, b:1 -> smoothed p(a) = 4/7, p(unknown) = 1/7
  const nde::NgramModel model = nde::fit_ngram({{"a", "a", "a", "b"}}, 1);
  const auto seen = nde::unigram_scores(model, {"a", "a"});
  REQUIRE(std::abs(seen.avg - 0.5596157879354227) <= 1e-6, "avg for aa: " << seen.avg);
  REQUIRE(std::abs(seen.max - 0.5596157879354227) <= 1e-6, "max for aa: " << seen.max);
  const auto unseen = nde::unigram_scores(model, {"q"});
  REQUIRE(std::abs(unseen.avg - 1.9459101490553132) <= 1e-6,
          "unknown-token score: " << unseen.avg);
  std::cout << "criterion 10 (baseline formulas): PASS\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-nde-binary>\n";
    return 1;
  }
  g_cli = argv[1];
  g_work = fs::temp_directory_path() / "nde-acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();

  fs::remove_all(g_work);
  std::cout << "all acceptance criteria passed\n";
  return 0;
}
