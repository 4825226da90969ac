#include "nde/mlp.hpp"

#include <stdexcept>

namespace nde {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

void MlpGrads::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

void MlpGrads::add(const MlpGrads& other, double scale) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += scale * other.w[l];
    b[l] += scale * other.b[l];
  }
}

Mlp Mlp::make(const std::vector<int>& sizes, Activation act, rng::Stream s) {
  if (sizes.size() < 2) throw std::invalid_argument("need at least input and output sizes");
  for (int d : sizes)
    if (d < 1) throw std::invalid_argument("layer sizes must be positive");
  Mlp net;
  net.act = act;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const rng::Stream ls = s.fork(static_cast<std::uint64_t>(l));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c)
        w(r, c) = ls.uniform(static_cast<std::uint64_t>(r) * in + c, -bound, bound);
    Eigen::VectorXd b(out);
    const auto base = static_cast<std::uint64_t>(out) * static_cast<std::uint64_t>(in);
    for (int r = 0; r < out; ++r) b[r] = ls.uniform(base + r, -bound, bound);
    net.w.push_back(std::move(w));
    net.b.push_back(std::move(b));
  }
  return net;
}

std::int64_t Mlp::param_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  return n;
}

namespace {

void apply_activation(Activation act, Eigen::VectorXd& v) {
  if (act == Activation::Relu)
    v = v.cwiseMax(0.0);
  else
    v = v.array().tanh();
}

}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward(x, nullptr);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x,
                             std::vector<Eigen::VectorXd>* tape) const {
  if (x.size() != in_dim()) throw std::invalid_argument("input length mismatch");
  if (tape) {
    tape->clear();
    tape->push_back(x);
  }
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    a = w[l] * a + b[l];
    if (l + 1 < w.size()) apply_activation(act, a);
    if (tape) tape->push_back(a);
  }
  return a;
}

Eigen::VectorXd Mlp::backward(const std::vector<Eigen::VectorXd>& tape,
                              const Eigen::VectorXd& out_cotangent, MlpGrads* g) const {
  const auto last = static_cast<std::ptrdiff_t>(w.size()) - 1;
  Eigen::VectorXd bar = out_cotangent;
  for (std::ptrdiff_t l = last; l >= 0; --l) {
    if (g) {
      g->w[static_cast<std::size_t>(l)].noalias() +=
          bar * tape[static_cast<std::size_t>(l)].transpose();
      g->b[static_cast<std::size_t>(l)] += bar;
    }
    bar = w[static_cast<std::size_t>(l)].transpose() * bar;
    if (l > 0) {
      const Eigen::VectorXd& a = tape[static_cast<std::size_t>(l)];
      if (act == Activation::Relu)
        bar.array() *= (a.array() > 0.0).cast<double>();
      else
        bar.array() *= 1.0 - a.array().square();
    }
  }
  return bar;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (std::size_t l = 0; l < w.size(); ++l) {
    g.w.push_back(Eigen::MatrixXd::Zero(w[l].rows(), w[l].cols()));
    g.b.push_back(Eigen::VectorXd::Zero(b[l].size()));
  }
  return g;
}

}  // namespace nde
