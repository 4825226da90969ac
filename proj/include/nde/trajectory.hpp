#pragma once
// Core data carriers: a labeled token-embedding trajectory and the manifest
// describing a dataset on disk.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nde {

// One statement: per-token embedding rows x_0..x_n at strictly increasing
// times, with a binary hallucination label (1 = hallucinated).
struct LabeledTrajectory {
  std::string id;
  Eigen::MatrixXd embeddings;       // (n+1) x d_x, row i is the embedding of token i
  Eigen::VectorXd times;            // n+1 strictly increasing
  int label = 0;                    // 1 = hallucination
  std::vector<std::string> tokens;  // optional token text, empty or size n+1
};

// Throws std::invalid_argument when an invariant is violated.
void validate(const LabeledTrajectory& t);

struct ManifestRecord {
  std::string id;
  int label = 0;
  std::int64_t token_count = 0;  // n+1
  std::int64_t offset = 0;       // byte offset into the payload file
  std::string file;              // payload file name, relative to the manifest
  std::vector<double> times;
  std::vector<std::string> tokens;  // optional
};

struct DatasetManifest {
  int version = 1;
  int d_x = 0;
  std::string split = "unassigned";  // train | test | unassigned
  std::string source;                // optional provenance note (model / layer)
  std::vector<ManifestRecord> records;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<LabeledTrajectory> trajectories;
};

// Parameters of the synthetic two-class generator. Class dynamics differ only
// inside [window_begin, window_end); the last `shared_suffix` positions of
// every trajectory are drawn from a class-independent anchor sequence, so the
// final embedding carries no label signal by construction.
struct SynthSpec {
  int per_class = 100;
  int d_x = 16;
  int min_len = 12;  // token counts n+1, inclusive range
  int max_len = 20;
  int window_begin = 2;  // step indices with class-specific drift, [begin, end)
  int window_end = 8;
  int shared_suffix = 4;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

}  // namespace nde
