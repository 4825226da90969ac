#pragma once

#include <vector>

#include "nde/model.hpp"
#include "nde/pca.hpp"
#include "nde/solvers.hpp"

namespace nde {

struct TrainConfig {
  int epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
};

struct AdamState {
  GradientSet m, v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const NdeModel& model);

// Bias-corrected Adam update, applied in place.
void adam_step(NdeModel& model, const GradientSet& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Same update for a single network; `step` is the 1-based update count.
void adam_update_mlp(Mlp& net, const MlpGrads& grads, MlpGrads& m1, MlpGrads& m2,
                     std::int64_t step, double lr, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8);

// Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p, int label);

struct GradResult {
  double loss = 0.0;   // mean over the batch
  GradientSet grads;   // gradient of the mean loss
};

// Reverse-mode differentiation through the solver steps: exact for the
// discretized computation (integration, readout, classifier, loss). For the
// sde variant the supplied stream drives the path noise, which is held fixed
// between the forward pass and differentiation.
GradResult grad_through_solver(const NdeModel& model,
                               const std::vector<ProjectedSample>& batch,
                               const rng::Stream& sde_noise = rng::Stream(0));

struct AdjointResult {
  double loss = 0.0;
  GradientSet grads;
  Grid grid;
  std::vector<Eigen::VectorXd> adjoint;  // a(t) at each grid node, forward order
};

// Continuous-adjoint gradients for the ode variant: integrates the state,
// sensitivity, and parameter-gradient system backward over the same grid and
// with the same scheme as the forward pass. Cross-check for
// grad_through_solver; throws for cde/sde models.
AdjointResult adjoint_grad_ode(const NdeModel& model, const ProjectedSample& sample);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean train loss per epoch
};

// Minibatch Adam over shuffled epochs. Deterministic given cfg.seed: the
// shuffle order is seeded per epoch and sde path noise is redrawn per epoch
// from the same counter generator. The train set is projected with the
// model's stored projection.
TrainResult train(NdeModel& model, const std::vector<LabeledTrajectory>& train_set,
                  const TrainConfig& cfg);
TrainResult train_projected(NdeModel& model, const std::vector<ProjectedSample>& train_set,
                            const TrainConfig& cfg);

// Probability that the trajectory is hallucinated. The sde variant draws its
// path noise from the checkpointed noise seed keyed by the sample id; with
// n_samples > 1 the returned probability is the mean over that many draws.
double predict(const NdeModel& model, const ProjectedSample& sample, int n_samples = 1);
double predict(const NdeModel& model, const LabeledTrajectory& raw, int n_samples = 1);
std::vector<double> predict_all(const NdeModel& model,
                                const std::vector<LabeledTrajectory>& set, int n_samples = 1);

// Worker cap honoring the NDE_THREADS environment variable.
int worker_count();

}  // namespace nde
