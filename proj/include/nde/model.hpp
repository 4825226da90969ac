#pragma once

#include <filesystem>
#include <string>

#include "nde/mlp.hpp"
#include "nde/pca.hpp"
#include "nde/solvers.hpp"
#include "nde/spline.hpp"

namespace nde {

enum class ModelKind { Ode, Cde, Sde };
enum class ReadoutKind { Final, Mean };

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind k);
ReadoutKind readout_from_string(const std::string& name);
std::string to_string(ReadoutKind k);

// Depth convention: "N layers" means N weight matrices (N - 1 hidden
// activations). Kept as named constants so the convention is changed in one
// place if ever revisited.
inline constexpr int kCdeFieldLayers = 8;
inline constexpr int kOdeFieldLayers = 10;
inline constexpr int kSdeFieldLayers = 10;
inline constexpr int kDiffusionLayers = 4;

struct ModelConfig {
  ModelKind kind = ModelKind::Cde;
  int d_y = 0;      // projected input dimension
  int d_z = 16;     // latent dimension
  int d_star = 0;   // readout dimension; 0 means d_z
  int f_layers = 0; // 0 means the variant default depth
  ReadoutKind readout = ReadoutKind::Final;
  SplineKind spline = SplineKind::NaturalCubic;
  SolverConfig solver;  // kind is overridden to the variant default when unset
  std::uint64_t seed = 1;
};

// The five parameter blocks of the detector. h lifts the first projected
// observation into latent space, f is the vector field (matrix-valued and
// flattened row-major for the controlled variant), g the diffusion (present
// only for the stochastic variant), k the readout map, c the classifier
// producing the pre-sigmoid score.
struct NdeModel {
  ModelKind kind = ModelKind::Cde;
  ReadoutKind readout = ReadoutKind::Final;
  SplineKind spline = SplineKind::NaturalCubic;
  SolverConfig solver;
  int d_y = 0, d_z = 0, d_star = 0;
  Mlp h, f, g, k, c;
  Projection projection;
  std::uint64_t projection_hash = 0;

  std::int64_t param_count() const;
};

struct GradientSet {
  MlpGrads h, f, g, k, c;

  void set_zero();
  void add(const GradientSet& other, double scale = 1.0);
};

NdeModel init_model(const ModelConfig& cfg);

GradientSet zero_grads(const NdeModel& m);

// Visits parameter-shaped blocks in a fixed order (h, f, g, k, c; weights
// before biases within each layer). All flattened views use this order.
template <class Model, class Fn>
void for_each_block(Model&& m, Fn&& fn) {
  fn(m.h);
  fn(m.f);
  fn(m.g);
  fn(m.k);
  fn(m.c);
}

Eigen::VectorXd flatten_params(const NdeModel& m);
void set_params(NdeModel& m, const Eigen::VectorXd& v);
Eigen::VectorXd flatten_grads(const GradientSet& g);

double sigmoid(double x);

// Classifier head applied to the readout vector: sigmoid(c(z_star)).
double classify(const NdeModel& m, const Eigen::VectorXd& z_star);

// Checkpoint with the projection embedded so evaluation is self-contained;
// the hash of the projection file used at training time is kept for
// provenance checks.
void save_model(const NdeModel& m, const std::filesystem::path& path);
NdeModel load_model(const std::filesystem::path& path);

}  // namespace nde
