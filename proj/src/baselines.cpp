#include "nde/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nde/binio.hpp"
#include "nde/model.hpp"
#include "nde/training.hpp"

namespace nde {

LogitMetrics logit_metrics(const TokenLikelihoods& t) {
  if (t.p.empty()) throw std::invalid_argument("no token probabilities");
  LogitMetrics m;
  m.max_prob = 0.0;
  double sum = 0.0;
  for (double p : t.p) {
    if (!(p > 0.0 && p <= 1.0))
      throw std::invalid_argument("token probabilities must lie in (0, 1]");
    const double nll = -std::log(p);
    sum += nll;
    m.max_prob = std::max(m.max_prob, nll);
  }
  m.avg_prob = sum / static_cast<double>(t.p.size());
  if (t.has_entropy()) {
    if (t.entropy.size() != t.p.size())
      throw std::invalid_argument("entropy list length mismatch");
    double esum = 0.0, emax = 0.0;
    for (double h : t.entropy) {
      if (h < 0.0) throw std::invalid_argument("entropies must be nonnegative");
      esum += h;
      emax = std::max(emax, h);
    }
    m.avg_ent = esum / static_cast<double>(t.entropy.size());
    m.max_ent = emax;
  }
  return m;
}

std::map<std::string, TokenLikelihoods> load_likelihoods(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw std::runtime_error("cannot open likelihood file: " + csv.string());
  std::map<std::string, TokenLikelihoods> by_id;
  std::map<std::string, bool> any_entropy;
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty likelihood file: " + csv.string());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, index_s, p_s, h_s;
    if (!std::getline(row, id, ',') || !std::getline(row, index_s, ',') ||
        !std::getline(row, p_s, ','))
      throw std::runtime_error("malformed likelihood row at line " +
                               std::to_string(lineno));
    std::getline(row, h_s, ',');
    auto& rec = by_id[id];
    const std::size_t index = std::stoul(index_s);
    if (index != rec.p.size())
      throw std::runtime_error("token indices out of order at line " +
                               std::to_string(lineno));
    rec.p.push_back(std::stod(p_s));
    if (!h_s.empty()) {
      if (rec.entropy.size() != index)
        throw std::runtime_error("sparse entropy column at line " + std::to_string(lineno));
      rec.entropy.push_back(std::stod(h_s));
      any_entropy[id] = true;
    } else if (any_entropy.count(id)) {
      throw std::runtime_error("sparse entropy column at line " + std::to_string(lineno));
    }
  }
  if (by_id.empty()) throw std::runtime_error("empty likelihood file: " + csv.string());
  return by_id;
}

void write_likelihoods(const std::map<std::string, TokenLikelihoods>& by_id,
                       const std::filesystem::path& csv) {
  io::write_file_atomic(csv, [&](std::ostream& os) {
    os.precision(17);
    os << "id,token_index,probability,entropy\n";
    for (const auto& [id, rec] : by_id) {
      for (std::size_t j = 0; j < rec.p.size(); ++j) {
        os << id << ',' << j << ',' << rec.p[j] << ',';
        if (rec.has_entropy()) os << rec.entropy[j];
        os << '\n';
      }
    }
  });
}

double LastTokenProbe::predict(const Eigen::VectorXd& final_embedding) const {
  return sigmoid(net.forward(final_embedding)[0]);
}

LastTokenProbe train_last_token_classifier(const Eigen::MatrixXd& features,
                                           const std::vector<int>& labels,
                                           const ProbeConfig& cfg) {
  if (features.rows() == 0) throw std::invalid_argument("empty probe training set");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("feature and label counts differ");
  if (cfg.epochs < 1 || cfg.batch < 1)
    throw std::invalid_argument("epochs and batch size must be >= 1");

  const int d_x = static_cast<int>(features.cols());
  const std::vector<int> sizes = {d_x, std::min(1024, 4 * d_x), std::min(512, 2 * d_x),
                                  std::min(256, d_x), 1};
  const rng::Stream root = rng::Stream(cfg.seed).fork("probe");
  LastTokenProbe probe{Mlp::make(sizes, Activation::Relu, root.fork("init"))};

  MlpGrads m1 = probe.net.zero_grads();
  MlpGrads m2 = probe.net.zero_grads();
  std::int64_t step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(order, root.fork("shuffle").fork(static_cast<std::uint64_t>(epoch)));
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch));
      MlpGrads grads = probe.net.zero_grads();
      const double inv = 1.0 / static_cast<double>(end - at);
      for (std::size_t i = at; i < end; ++i) {
        const auto row = order[i];
        std::vector<Eigen::VectorXd> tape;
        const double score =
            probe.net.forward(features.row(static_cast<Eigen::Index>(row)).transpose(),
                              &tape)[0];
        const double p = sigmoid(score);
        Eigen::VectorXd seed(1);
        seed[0] = inv * (p - static_cast<double>(labels[row]));
        probe.net.backward(tape, seed, &grads);
      }
      adam_update_mlp(probe.net, grads, m1, m2, ++step, cfg.lr);
    }
  }
  return probe;
}

namespace {

Eigen::MatrixXd final_token_matrix(const std::vector<LabeledTrajectory>& set) {
  if (set.empty()) throw std::invalid_argument("empty probe training set");
  const Eigen::Index d_x = set.front().embeddings.cols();
  Eigen::MatrixXd features(static_cast<Eigen::Index>(set.size()), d_x);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].embeddings.cols() != d_x)
      throw std::invalid_argument("mixed embedding dimensions");
    features.row(static_cast<Eigen::Index>(i)) =
        set[i].embeddings.row(set[i].embeddings.rows() - 1);
  }
  return features;
}

}  // namespace

LastTokenProbe train_last_token_probe(const std::vector<LabeledTrajectory>& train_set,
                                      const ProbeConfig& cfg) {
  std::vector<int> labels;
  labels.reserve(train_set.size());
  for (const auto& t : train_set) labels.push_back(t.label);
  return train_last_token_classifier(final_token_matrix(train_set), labels, cfg);
}

std::vector<double> probe_scores(const LastTokenProbe& probe,
                                 const std::vector<LabeledTrajectory>& set) {
  std::vector<double> scores;
  scores.reserve(set.size());
  for (const auto& t : set)
    scores.push_back(probe.predict(t.embeddings.row(t.embeddings.rows() - 1).transpose()));
  return scores;
}

namespace {

constexpr const char* kUnknown = "\x1c" "unk";
constexpr const char* kBegin = "\x1c" "bos";
constexpr char kSep = '\x1f';

std::string context_key(const std::vector<std::string>& window) {
  std::string key;
  for (const auto& tok : window) {
    key += tok;
    key += kSep;
  }
  return key;
}

}  // namespace

NgramModel fit_ngram(const std::vector<std::vector<std::string>>& sequences, int n) {
  if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
  NgramModel model;
  model.n = n;
  for (const auto& seq : sequences)
    for (const auto& tok : seq) model.vocab.insert(tok);
  if (model.vocab.empty()) throw std::invalid_argument("empty training corpus");
  for (const auto& seq : sequences) {
    for (std::size_t j = 0; j < seq.size(); ++j) {
      std::vector<std::string> window;
      for (int back = n - 1; back >= 1; --back) {
        const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(j) - back;
        window.push_back(at < 0 ? kBegin : seq[static_cast<std::size_t>(at)]);
      }
      const std::string key = context_key(window);
      model.counts[key][seq[j]] += 1;
      model.context_total[key] += 1;
    }
  }
  return model;
}

double NgramModel::probability(const std::vector<std::string>& context,
                               const std::string& token) const {
  if (static_cast<int>(context.size()) != n - 1)
    throw std::invalid_argument("context length must be n - 1");
  std::vector<std::string> window;
  window.reserve(context.size());
  for (const auto& tok : context)
    window.push_back(tok == kBegin || vocab.count(tok) ? tok : kUnknown);
  const std::string key = context_key(window);

  const auto total_it = context_total.find(key);
  const double total =
      total_it == context_total.end() ? 0.0 : static_cast<double>(total_it->second);
  double count = 0.0;
  if (vocab.count(token)) {
    const auto ctx_it = counts.find(key);
    if (ctx_it != counts.end()) {
      const auto tok_it = ctx_it->second.find(token);
      if (tok_it != ctx_it->second.end()) count = static_cast<double>(tok_it->second);
    }
  }
  // Add-one smoothing over the vocabulary plus one unknown bucket.
  return (count + 1.0) / (total + static_cast<double>(vocab.size()) + 1.0);
}

NgramScores unigram_scores(const NgramModel& model, const std::vector<std::string>& response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  NgramScores s;
  double sum = 0.0;
  for (std::size_t j = 0; j < response.size(); ++j) {
    std::vector<std::string> context;
    for (int back = model.n - 1; back >= 1; --back) {
      const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(j) - back;
      context.push_back(at < 0 ? kBegin : response[static_cast<std::size_t>(at)]);
    }
    const double nll = -std::log(model.probability(context, response[j]));
    sum += nll;
    s.max = std::max(s.max, nll);
  }
  s.avg = sum / static_cast<double>(response.size());
  return s;
}

}  // namespace nde
