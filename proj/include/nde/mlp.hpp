#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nde/noise.hpp"

namespace nde {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Gradients (or any other accumulator) shaped like an Mlp's parameters.
struct MlpGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  void set_zero();
  void add(const MlpGrads& other, double scale = 1.0);
};

// Fully connected network. The activation follows every layer except the
// last, which stays affine. A network with L weight matrices is "L layers";
// a single-layer Mlp is a plain affine map.
struct Mlp {
  Activation act = Activation::Relu;
  std::vector<Eigen::MatrixXd> w;  // layer l maps R^{cols} -> R^{rows}
  std::vector<Eigen::VectorXd> b;

  // Weights and biases ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)). Nonzero
  // biases keep relu layers from dying wholesale at initialization, which the
  // gradient could never undo. `sizes` lists (input, hidden..., output).
  static Mlp make(const std::vector<int>& sizes, Activation act, rng::Stream s);

  int in_dim() const { return w.empty() ? 0 : static_cast<int>(w.front().cols()); }
  int out_dim() const { return w.empty() ? 0 : static_cast<int>(w.back().rows()); }
  int layer_count() const { return static_cast<int>(w.size()); }
  std::int64_t param_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  // Forward pass recording post-activation values: tape[0] = x, tape[l] =
  // output of layer l. Post-activation values suffice to evaluate the
  // activation derivatives in backward().
  Eigen::VectorXd forward(const Eigen::VectorXd& x,
                          std::vector<Eigen::VectorXd>* tape) const;

  // Accumulates parameter gradients for the recorded pass into `g` and
  // returns the cotangent with respect to the input.
  Eigen::VectorXd backward(const std::vector<Eigen::VectorXd>& tape,
                           const Eigen::VectorXd& out_cotangent, MlpGrads* g) const;

  MlpGrads zero_grads() const;
};

}  // namespace nde
