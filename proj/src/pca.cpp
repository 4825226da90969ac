#include "nde/pca.hpp"

#include <fstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "nde/binio.hpp"

namespace nde {

namespace {
constexpr char kMagic[9] = "NDEPCA01";
}

Projection fit_pca(const std::vector<LabeledTrajectory>& train, int k) {
  Eigen::Index total = 0;
  for (const auto& t : train) total += t.embeddings.rows();
  if (total < 2) throw std::invalid_argument("need at least 2 pooled tokens to fit");
  const Eigen::Index d_x = train.empty() ? 0 : train.front().embeddings.cols();
  if (k < 1 || k > d_x)
    throw std::invalid_argument("component count must be in [1, embedding dim]");

  Eigen::MatrixXd pooled(total, d_x);
  Eigen::Index row = 0;
  for (const auto& t : train) {
    if (t.embeddings.cols() != d_x)
      throw std::invalid_argument("mixed embedding dimensions");
    pooled.middleRows(row, t.embeddings.rows()) = t.embeddings;
    row += t.embeddings.rows();
  }

  const Eigen::VectorXd mean = pooled.colwise().mean();
  pooled.rowwise() -= mean.transpose();
  const Eigen::MatrixXd cov =
      (pooled.transpose() * pooled) / static_cast<double>(total - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top k in descending order.
  Projection p;
  p.mean = mean;
  p.components.resize(k, d_x);
  p.variances.resize(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::Index src = d_x - 1 - i;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0) v = -v;
    p.components.row(i) = v.transpose();
    p.variances[i] = eig.eigenvalues()[src];
  }
  return p;
}

Eigen::VectorXd project(const Projection& p, const Eigen::VectorXd& x) {
  if (x.size() != p.components.cols())
    throw std::invalid_argument("embedding dimension mismatch");
  return p.components * (x - p.mean);
}

Eigen::MatrixXd project_rows(const Projection& p, const Eigen::MatrixXd& x) {
  if (x.cols() != p.components.cols())
    throw std::invalid_argument("embedding dimension mismatch");
  return (x.rowwise() - p.mean.transpose()) * p.components.transpose();
}

ProjectedSample project_trajectory(const Projection& p, const LabeledTrajectory& t) {
  ProjectedSample s;
  s.id = t.id;
  s.times = t.times;
  s.y = project_rows(p, t.embeddings);
  s.label = t.label;
  return s;
}

std::vector<ProjectedSample> project_dataset(const Projection& p,
                                             const std::vector<LabeledTrajectory>& set) {
  std::vector<ProjectedSample> out;
  out.reserve(set.size());
  for (const auto& t : set) out.push_back(project_trajectory(p, t));
  return out;
}

void export_pca_2d(const Projection& p, const std::vector<LabeledTrajectory>& set,
                   const std::filesystem::path& csv_path) {
  if (p.k() < 2) throw std::invalid_argument("2-d export needs at least 2 components");
  io::write_file_atomic(csv_path, [&](std::ostream& os) {
    os << "id,label,pc1,pc2\n";
    os.precision(17);
    for (const auto& t : set) {
      const Eigen::VectorXd y =
          p.components.topRows(2) * (t.embeddings.row(t.embeddings.rows() - 1).transpose() - p.mean);
      os << t.id << ',' << t.label << ',' << y[0] << ',' << y[1] << '\n';
    }
  });
}

void save_projection(const Projection& p, const std::filesystem::path& path) {
  io::write_file_atomic(path, [&](std::ostream& os) {
    os.write(kMagic, 8);
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p.k()));
    io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(p.d_x()));
    io::write_vector(os, p.mean);
    io::write_matrix(os, p.components);
    io::write_vector(os, p.variances);
  });
}

Projection load_projection(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open projection file: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string_view(magic, 8) != std::string_view(kMagic, 8))
    throw std::runtime_error("not a projection file: " + path.string());
  const auto k = io::read_pod<std::uint64_t>(is);
  const auto d_x = io::read_pod<std::uint64_t>(is);
  Projection p;
  p.mean = io::read_vector(is);
  p.components = io::read_matrix(is);
  p.variances = io::read_vector(is);
  if (p.components.rows() != static_cast<Eigen::Index>(k) ||
      p.components.cols() != static_cast<Eigen::Index>(d_x) ||
      p.mean.size() != static_cast<Eigen::Index>(d_x) ||
      p.variances.size() != static_cast<Eigen::Index>(k))
    throw std::runtime_error("corrupt projection file: " + path.string());
  return p;
}

}  // namespace nde
