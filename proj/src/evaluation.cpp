#include "nde/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "nde/binio.hpp"

namespace nde {

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("score and label counts differ");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("scores must be finite");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1)
      ++n_pos;
    else if (l == 0)
      ++n_neg;
    else
      throw std::invalid_argument("labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("need at least one positive and one negative label");

  // Rank-sum formulation with average ranks across ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t at = 0;
  while (at < idx.size()) {
    std::size_t end = at + 1;
    while (end < idx.size() && scores[idx[end]] == scores[idx[at]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(at + 1 + end);  // 1-based
    for (std::size_t i = at; i < end; ++i)
      if (labels[idx[i]] == 1) rank_sum_pos += avg_rank;
    at = end;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_roc(const ScoredSet& scored) {
  if (scored.ids.size() != scored.scores.size() ||
      scored.ids.size() != scored.labels.size())
    throw std::invalid_argument("scored set field lengths differ");
  return auc_roc(scored.scores, scored.labels);
}

ReportRow evaluate(const std::string& method, const std::string& dataset,
                   const std::vector<double>& scores, const std::vector<int>& labels,
                   std::uint64_t seed) {
  ReportRow row;
  row.method = method;
  row.dataset = dataset;
  row.auc_roc = auc_roc(scores, labels);
  row.n = scores.size();
  row.seed = seed;
  return row;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out = "method,dataset,auc_roc,n,seed\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3f", r.auc_roc);
    out += r.method + ',' + r.dataset + ',' + buf + ',' + std::to_string(r.n) + ',' +
           std::to_string(r.seed) + '\n';
  }
  return out;
}

void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& csv) {
  io::write_file_atomic(csv, [&](std::ostream& os) { os << format_report(rows); });
}

}  // namespace nde
