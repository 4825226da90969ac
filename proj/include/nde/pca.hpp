#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nde/trajectory.hpp"

namespace nde {

// Linear projection of token embeddings onto the top principal directions of
// the pooled training tokens. Rows of `components` are unit eigenvectors of
// the pooled covariance, ordered by decreasing variance; each row's sign is
// fixed so its largest-magnitude entry is positive.
struct Projection {
  Eigen::VectorXd mean;        // d_x
  Eigen::MatrixXd components;  // K x d_x
  Eigen::VectorXd variances;   // K, descending

  int k() const { return static_cast<int>(components.rows()); }
  int d_x() const { return static_cast<int>(components.cols()); }
};

// A trajectory after projection: y has one row per token, d_y = K columns.
struct ProjectedSample {
  std::string id;
  Eigen::VectorXd times;
  Eigen::MatrixXd y;
  int label = 0;
};

// Fits a K-component projection to all tokens of all trajectories pooled
// together. Covariance uses the 1/(N-1) convention. Throws if K exceeds the
// embedding dimension or fewer than two pooled tokens are available.
Projection fit_pca(const std::vector<LabeledTrajectory>& train, int k);

Eigen::VectorXd project(const Projection& p, const Eigen::VectorXd& x);
Eigen::MatrixXd project_rows(const Projection& p, const Eigen::MatrixXd& x);
ProjectedSample project_trajectory(const Projection& p, const LabeledTrajectory& t);
std::vector<ProjectedSample> project_dataset(const Projection& p,
                                             const std::vector<LabeledTrajectory>& set);

// Writes one CSV row per trajectory with its final token projected onto the
// first two components: id,label,pc1,pc2. Requires K >= 2.
void export_pca_2d(const Projection& p, const std::vector<LabeledTrajectory>& set,
                   const std::filesystem::path& csv_path);

void save_projection(const Projection& p, const std::filesystem::path& path);
Projection load_projection(const std::filesystem::path& path);

}  // namespace nde
