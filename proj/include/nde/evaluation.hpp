#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace nde {

struct ScoredSet {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<int> labels;
};

// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
// positive scores strictly higher, ties counted half. Labels use 1 for the
// hallucinated (positive) class; scores must rank more-hallucinated higher.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);
double auc_roc(const ScoredSet& scored);

struct ReportRow {
  std::string method;
  std::string dataset;
  double auc_roc = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

ReportRow evaluate(const std::string& method, const std::string& dataset,
                   const std::vector<double>& scores, const std::vector<int>& labels,
                   std::uint64_t seed);

// CSV with header method,dataset,auc_roc,n,seed; AUC printed to 3 decimals.
void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& csv);
std::string format_report(const std::vector<ReportRow>& rows);

}  // namespace nde
