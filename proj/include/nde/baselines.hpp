#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nde/mlp.hpp"
#include "nde/trajectory.hpp"

namespace nde {

// Per-token likelihood record for one response: the probability the source
// model assigned to each realized token, and optionally the full next-token
// distribution entropy at that position.
struct TokenLikelihoods {
  std::vector<double> p;
  std::vector<double> entropy;  // empty when not recorded

  bool has_entropy() const { return !entropy.empty(); }
};

struct LogitMetrics {
  double max_prob = 0.0;  // max of -ln p
  double avg_prob = 0.0;  // mean of -ln p
  std::optional<double> max_ent;
  std::optional<double> avg_ent;
};

// Sentence-level uncertainty aggregates. Higher values mean more uncertain,
// so they already score in the "more hallucinated" direction.
LogitMetrics logit_metrics(const TokenLikelihoods& t);

// Side-file IO: CSV with header id,token_index,probability,entropy. The
// entropy column may be empty.
std::map<std::string, TokenLikelihoods> load_likelihoods(const std::filesystem::path& csv);
void write_likelihoods(const std::map<std::string, TokenLikelihoods>& by_id,
                       const std::filesystem::path& csv);

// Last-token probe: a feedforward classifier on the final token's embedding.
// Hidden widths follow (min(1024, 4 d_x), min(512, 2 d_x), min(256, d_x)).
struct LastTokenProbe {
  Mlp net;

  double predict(const Eigen::VectorXd& final_embedding) const;
};

struct ProbeConfig {
  int epochs = 20;
  int batch = 32;
  double lr = 5e-4;
  std::uint64_t seed = 1;
};

LastTokenProbe train_last_token_classifier(const Eigen::MatrixXd& features,
                                           const std::vector<int>& labels,
                                           const ProbeConfig& cfg = {});

// Convenience wrappers operating on trajectories via their final tokens.
LastTokenProbe train_last_token_probe(const std::vector<LabeledTrajectory>& train_set,
                                      const ProbeConfig& cfg = {});
std::vector<double> probe_scores(const LastTokenProbe& probe,
                                 const std::vector<LabeledTrajectory>& set);

// n-gram language model with add-one smoothing and a single unknown bucket:
// p(token | context) = (count + 1) / (context total + vocab size + 1).
struct NgramModel {
  int n = 1;
  std::set<std::string> vocab;
  std::map<std::string, std::map<std::string, std::int64_t>> counts;  // context -> token
  std::map<std::string, std::int64_t> context_total;

  double probability(const std::vector<std::string>& context,
                     const std::string& token) const;
};

NgramModel fit_ngram(const std::vector<std::vector<std::string>>& sequences, int n = 1);

struct NgramScores {
  double avg = 0.0;  // mean of -ln p over the response
  double max = 0.0;  // max of -ln p
};

NgramScores unigram_scores(const NgramModel& model, const std::vector<std::string>& response);

}  // namespace nde
