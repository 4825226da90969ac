#include "nde/model.hpp"

#include <fstream>
#include <stdexcept>

#include "nde/binio.hpp"

namespace nde {

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "ode") return ModelKind::Ode;
  if (name == "cde") return ModelKind::Cde;
  if (name == "sde") return ModelKind::Sde;
  throw std::invalid_argument("unknown variant: " + name +
                              " (expected 'ode', 'cde', or 'sde')");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Ode: return "ode";
    case ModelKind::Cde: return "cde";
    default: return "sde";
  }
}

ReadoutKind readout_from_string(const std::string& name) {
  if (name == "final") return ReadoutKind::Final;
  if (name == "mean") return ReadoutKind::Mean;
  throw std::invalid_argument("unknown readout: " + name + " (expected 'final' or 'mean')");
}

std::string to_string(ReadoutKind k) {
  return k == ReadoutKind::Final ? "final" : "mean";
}

void GradientSet::set_zero() {
  h.set_zero();
  f.set_zero();
  g.set_zero();
  k.set_zero();
  c.set_zero();
}

void GradientSet::add(const GradientSet& other, double scale) {
  h.add(other.h, scale);
  f.add(other.f, scale);
  g.add(other.g, scale);
  k.add(other.k, scale);
  c.add(other.c, scale);
}

namespace {

std::vector<int> stacked_sizes(int in, int width, int out, int weight_layers) {
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int l = 0; l < weight_layers - 1; ++l) sizes.push_back(width);
  sizes.push_back(out);
  return sizes;
}

}  // namespace

NdeModel init_model(const ModelConfig& cfg) {
  if (cfg.d_y < 1 || cfg.d_z < 1) throw std::invalid_argument("dimensions must be positive");
  const int d_star = cfg.d_star == 0 ? cfg.d_z : cfg.d_star;
  if (d_star < 1) throw std::invalid_argument("dimensions must be positive");
  if (d_star > cfg.d_z)
    throw std::invalid_argument("readout dimension must not exceed the latent dimension");

  NdeModel m;
  m.kind = cfg.kind;
  m.readout = cfg.readout;
  m.spline = cfg.spline;
  m.solver = cfg.solver;
  if (cfg.kind == ModelKind::Sde)
    m.solver.kind = SolverKind::EulerMaruyama;
  else if (m.solver.kind == SolverKind::EulerMaruyama)
    throw std::invalid_argument("the stochastic scheme applies only to the sde variant");
  m.solver.tableau.validate();
  m.d_y = cfg.d_y;
  m.d_z = cfg.d_z;
  m.d_star = d_star;

  const Activation act = cfg.kind == ModelKind::Ode ? Activation::Tanh : Activation::Relu;
  const int default_depth = cfg.kind == ModelKind::Cde
                                ? kCdeFieldLayers
                                : (cfg.kind == ModelKind::Ode ? kOdeFieldLayers : kSdeFieldLayers);
  const int f_layers = cfg.f_layers == 0 ? default_depth : cfg.f_layers;
  if (f_layers < 1) throw std::invalid_argument("field depth must be >= 1");
  const int f_out = cfg.kind == ModelKind::Cde ? cfg.d_z * cfg.d_y : cfg.d_z;

  const rng::Stream root = rng::Stream(cfg.seed).fork("model");
  m.h = Mlp::make({cfg.d_y, cfg.d_z, cfg.d_z}, act, root.fork("h"));
  m.f = Mlp::make(stacked_sizes(1 + cfg.d_z, cfg.d_z, f_out, f_layers), act,
                  root.fork("f"));
  if (cfg.kind == ModelKind::Sde)
    m.g = Mlp::make(stacked_sizes(1 + cfg.d_z, cfg.d_z, cfg.d_z, kDiffusionLayers),
                    Activation::Relu, root.fork("g"));
  m.k = Mlp::make({cfg.d_z, d_star}, act, root.fork("k"));
  m.c = Mlp::make({d_star, 1}, act, root.fork("c"));
  return m;
}

std::int64_t NdeModel::param_count() const {
  std::int64_t n = 0;
  for_each_block(*this, [&](const Mlp& b) { n += b.param_count(); });
  return n;
}

GradientSet zero_grads(const NdeModel& m) {
  GradientSet g;
  g.h = m.h.zero_grads();
  g.f = m.f.zero_grads();
  g.g = m.g.zero_grads();
  g.k = m.k.zero_grads();
  g.c = m.c.zero_grads();
  return g;
}

Eigen::VectorXd flatten_params(const NdeModel& m) {
  Eigen::VectorXd v(m.param_count());
  Eigen::Index at = 0;
  for_each_block(m, [&](const Mlp& b) {
    for (std::size_t l = 0; l < b.w.size(); ++l) {
      for (Eigen::Index r = 0; r < b.w[l].rows(); ++r)
        for (Eigen::Index c = 0; c < b.w[l].cols(); ++c) v[at++] = b.w[l](r, c);
      v.segment(at, b.b[l].size()) = b.b[l];
      at += b.b[l].size();
    }
  });
  return v;
}

void set_params(NdeModel& m, const Eigen::VectorXd& v) {
  if (v.size() != m.param_count())
    throw std::invalid_argument("parameter vector length mismatch");
  Eigen::Index at = 0;
  for_each_block(m, [&](Mlp& b) {
    for (std::size_t l = 0; l < b.w.size(); ++l) {
      for (Eigen::Index r = 0; r < b.w[l].rows(); ++r)
        for (Eigen::Index c = 0; c < b.w[l].cols(); ++c) b.w[l](r, c) = v[at++];
      b.b[l] = v.segment(at, b.b[l].size());
      at += b.b[l].size();
    }
  });
}

Eigen::VectorXd flatten_grads(const GradientSet& g) {
  Eigen::Index total = 0;
  auto count = [&](const MlpGrads& b) {
    for (std::size_t l = 0; l < b.w.size(); ++l) total += b.w[l].size() + b.b[l].size();
  };
  count(g.h), count(g.f), count(g.g), count(g.k), count(g.c);

  Eigen::VectorXd v(total);
  Eigen::Index at = 0;
  auto emit = [&](const MlpGrads& b) {
    for (std::size_t l = 0; l < b.w.size(); ++l) {
      for (Eigen::Index r = 0; r < b.w[l].rows(); ++r)
        for (Eigen::Index c = 0; c < b.w[l].cols(); ++c) v[at++] = b.w[l](r, c);
      v.segment(at, b.b[l].size()) = b.b[l];
      at += b.b[l].size();
    }
  };
  emit(g.h), emit(g.f), emit(g.g), emit(g.k), emit(g.c);
  return v;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double classify(const NdeModel& m, const Eigen::VectorXd& z_star) {
  return sigmoid(m.c.forward(z_star)[0]);
}

namespace {

constexpr char kMagic[9] = "NDECKPT1";

void write_mlp(std::ostream& os, const Mlp& m) {
  io::write_pod<std::uint8_t>(os, m.act == Activation::Relu ? 0 : 1);
  io::write_pod<std::uint64_t>(os, m.w.size());
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    io::write_matrix(os, m.w[l]);
    io::write_vector(os, m.b[l]);
  }
}

Mlp read_mlp(std::istream& is) {
  Mlp m;
  m.act = io::read_pod<std::uint8_t>(is) == 0 ? Activation::Relu : Activation::Tanh;
  const auto layers = io::read_pod<std::uint64_t>(is);
  for (std::uint64_t l = 0; l < layers; ++l) {
    m.w.push_back(io::read_matrix(is));
    m.b.push_back(io::read_vector(is));
  }
  return m;
}

}  // namespace

void save_model(const NdeModel& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, [&](std::ostream& os) {
    os.write(kMagic, 8);
    io::write_string(os, to_string(m.kind));
    io::write_string(os, to_string(m.readout));
    io::write_string(os, to_string(m.spline));
    io::write_string(os, to_string(m.solver.kind));
    io::write_pod<std::int32_t>(os, m.solver.substeps);
    io::write_vector(os, m.solver.tableau.alpha);
    for (const auto& row : m.solver.tableau.beta) io::write_vector(os, row);
    io::write_vector(os, m.solver.tableau.gamma);
    io::write_pod<std::uint64_t>(os, m.solver.noise_seed);
    io::write_pod<std::int32_t>(os, m.d_y);
    io::write_pod<std::int32_t>(os, m.d_z);
    io::write_pod<std::int32_t>(os, m.d_star);
    io::write_pod<std::uint64_t>(os, m.projection_hash);
    io::write_vector(os, m.projection.mean);
    io::write_matrix(os, m.projection.components);
    io::write_vector(os, m.projection.variances);
    write_mlp(os, m.h);
    write_mlp(os, m.f);
    io::write_pod<std::uint8_t>(os, m.kind == ModelKind::Sde ? 1 : 0);
    if (m.kind == ModelKind::Sde) write_mlp(os, m.g);
    write_mlp(os, m.k);
    write_mlp(os, m.c);
  });
}

NdeModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string_view(magic, 8) != std::string_view(kMagic, 8))
    throw std::runtime_error("not a checkpoint file: " + path.string());

  NdeModel m;
  m.kind = model_kind_from_string(io::read_string(is));
  m.readout = readout_from_string(io::read_string(is));
  m.spline = spline_kind_from_string(io::read_string(is));
  m.solver.kind = solver_kind_from_string(io::read_string(is));
  m.solver.substeps = io::read_pod<std::int32_t>(is);
  m.solver.tableau.alpha = io::read_vector(is);
  m.solver.tableau.beta.clear();
  for (Eigen::Index i = 0; i < m.solver.tableau.alpha.size(); ++i)
    m.solver.tableau.beta.push_back(io::read_vector(is));
  m.solver.tableau.gamma = io::read_vector(is);
  m.solver.noise_seed = io::read_pod<std::uint64_t>(is);
  m.d_y = io::read_pod<std::int32_t>(is);
  m.d_z = io::read_pod<std::int32_t>(is);
  m.d_star = io::read_pod<std::int32_t>(is);
  m.projection_hash = io::read_pod<std::uint64_t>(is);
  m.projection.mean = io::read_vector(is);
  m.projection.components = io::read_matrix(is);
  m.projection.variances = io::read_vector(is);
  m.h = read_mlp(is);
  m.f = read_mlp(is);
  if (io::read_pod<std::uint8_t>(is) == 1) m.g = read_mlp(is);
  m.k = read_mlp(is);
  m.c = read_mlp(is);
  m.solver.tableau.validate();
  return m;
}

}  // namespace nde
