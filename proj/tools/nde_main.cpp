#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nde/baselines.hpp"
#include "nde/binio.hpp"
#include "nde/dataset.hpp"
#include "nde/evaluation.hpp"
#include "nde/model.hpp"
#include "nde/pca.hpp"
#include "nde/training.hpp"

namespace fs = std::filesystem;

namespace {

int default_components(int d_x) { return std::min(d_x, 64); }

std::string dataset_label(const fs::path& data, const std::string& override_name) {
  if (!override_name.empty()) return override_name;
  fs::path p = data;
  if (p.filename().empty()) p = p.parent_path();
  const std::string stem = p.filename().string();
  return stem.empty() ? "dataset" : stem;
}

struct SynthArgs {
  nde::SynthSpec spec;
  std::string split = "unassigned";
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto set = nde::gen_synthetic(a.spec);
  nde::write_dataset(set, a.out, a.split,
                     "synthetic seed=" + std::to_string(a.spec.seed));
  std::cout << "wrote " << set.size() << " trajectories to " << a.out << "\n";
  return 0;
}

struct IngestArgs {
  std::string input;
  std::string out;
  std::string split = "unassigned";
  std::string source;
};

int cmd_ingest(const IngestArgs& a) {
  std::ifstream is(a.input);
  if (!is) throw std::runtime_error("cannot open input: " + a.input);
  std::vector<nde::LabeledTrajectory> set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
    }
    nde::LabeledTrajectory t;
    t.id = j.at("id").get<std::string>();
    t.label = j.at("label").get<int>();
    const auto& rows = j.at("embeddings");
    if (!rows.is_array() || rows.empty())
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": embeddings must be a nonempty array");
    const std::size_t d_x = rows.front().size();
    t.embeddings.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(d_x));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != d_x)
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": ragged embedding rows");
      for (std::size_t c = 0; c < d_x; ++c)
        t.embeddings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            rows[r][c].get<double>();
    }
    if (j.contains("times")) {
      const auto times = j.at("times").get<std::vector<double>>();
      t.times = Eigen::Map<const Eigen::VectorXd>(times.data(),
                                                  static_cast<Eigen::Index>(times.size()));
    } else {
      t.times = Eigen::VectorXd::LinSpaced(t.embeddings.rows(), 0.0,
                                           static_cast<double>(t.embeddings.rows() - 1));
    }
    if (j.contains("tokens")) t.tokens = j.at("tokens").get<std::vector<std::string>>();
    nde::validate(t);
    set.push_back(std::move(t));
  }
  if (set.empty()) throw std::runtime_error("empty dataset: " + a.input);
  nde::write_dataset(set, a.out, a.split,
                     a.source.empty() ? ("ingested from " + fs::path(a.input).filename().string())
                                      : a.source);
  std::cout << "wrote " << set.size() << " trajectories to " << a.out << "\n";
  return 0;
}

struct SplitArgs {
  std::string data;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
  std::string out_train;
  std::string out_test;
};

int cmd_split(const SplitArgs& a) {
  const nde::Dataset ds = nde::load_dataset(a.data);
  auto [train, test] = nde::split_dataset(ds.trajectories, a.test_fraction, a.seed);
  nde::write_dataset(train, a.out_train, "train", ds.manifest.source);
  nde::write_dataset(test, a.out_test, "test", ds.manifest.source);
  std::cout << "train: " << train.size() << " test: " << test.size() << "\n";
  return 0;
}

struct FitPcaArgs {
  std::string data;
  int k = 0;
  std::string out;
  std::string export_2d;
};

int cmd_fit_pca(const FitPcaArgs& a) {
  const nde::Dataset ds = nde::load_dataset(a.data);
  const int k = a.k > 0 ? a.k : default_components(ds.manifest.d_x);
  const nde::Projection p = nde::fit_pca(ds.trajectories, k);
  nde::save_projection(p, a.out);
  if (!a.export_2d.empty()) nde::export_pca_2d(p, ds.trajectories, a.export_2d);
  std::cout << "fitted " << k << " components from " << ds.trajectories.size()
            << " trajectories\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string variant = "cde";
  std::string pca_file;
  int k = 0;
  int d_z = 16;
  int d_star = 0;
  int f_layers = 0;
  std::string readout = "final";
  std::string spline = "natural";
  std::string solver;
  int substeps = 4;
  std::uint64_t noise_seed = 0;
  nde::TrainConfig train;
};

int cmd_train(const TrainArgs& a) {
  const nde::Dataset ds = nde::load_dataset(a.data);

  nde::ModelConfig mc;
  mc.kind = nde::model_kind_from_string(a.variant);
  mc.d_z = a.d_z;
  mc.d_star = a.d_star;
  mc.f_layers = a.f_layers;
  mc.readout = nde::readout_from_string(a.readout);
  mc.spline = nde::spline_kind_from_string(a.spline);
  mc.seed = a.train.seed;
  mc.solver.substeps = a.substeps;
  mc.solver.noise_seed = a.noise_seed;
  if (!a.solver.empty())
    mc.solver.kind = nde::solver_kind_from_string(a.solver);
  else
    mc.solver.kind = mc.kind == nde::ModelKind::Sde ? nde::SolverKind::EulerMaruyama
                                                    : nde::SolverKind::Rk4;

  fs::create_directories(a.out);
  const fs::path proj_path = fs::path(a.out) / "projection.bin";
  nde::Projection projection;
  if (!a.pca_file.empty()) {
    projection = nde::load_projection(a.pca_file);
    fs::copy_file(a.pca_file, proj_path, fs::copy_options::overwrite_existing);
  } else {
    const int k = a.k > 0 ? a.k : default_components(ds.manifest.d_x);
    projection = nde::fit_pca(ds.trajectories, k);
    nde::save_projection(projection, proj_path);
  }
  mc.d_y = projection.k();

  nde::NdeModel model = nde::init_model(mc);
  model.projection = projection;
  model.projection_hash = nde::io::hash_file(proj_path);

  const nde::TrainResult result = nde::train(model, ds.trajectories, a.train);

  nde::save_model(model, fs::path(a.out) / "model.ckpt");
  nde::io::write_file_atomic(fs::path(a.out) / "loss.csv", [&](std::ostream& os) {
    os << "epoch,mean_train_loss\n";
    os.precision(17);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
      os << e << ',' << result.epoch_loss[e] << '\n';
  });
  std::cout << "trained " << a.variant << " on " << ds.trajectories.size()
            << " trajectories; final loss " << result.epoch_loss.back() << "\n";
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string train_data;
  std::string baselines;
  std::string probs;
  std::string export_pca2d;
  std::string out;
  std::string dataset_name;
  std::uint64_t seed = 1;
  int sde_samples = 1;
};

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_eval(const EvalArgs& a) {
  const nde::NdeModel model = nde::load_model(a.model);
  const nde::Dataset ds = nde::load_dataset(a.data);
  if (ds.manifest.split == "train")
    std::cerr << "warning: evaluating on the training split\n";

  std::vector<int> labels;
  labels.reserve(ds.trajectories.size());
  for (const auto& t : ds.trajectories) labels.push_back(t.label);
  const std::string dataset = dataset_label(a.data, a.dataset_name);

  std::vector<nde::ReportRow> rows;
  {
    const std::vector<double> scores = nde::predict_all(model, ds.trajectories, a.sde_samples);
    rows.push_back(nde::evaluate("nde-" + nde::to_string(model.kind), dataset, scores,
                                 labels, a.seed));
  }

  std::vector<nde::LabeledTrajectory> train_set;
  auto need_train_data = [&](const std::string& what) -> const std::vector<nde::LabeledTrajectory>& {
    if (train_set.empty()) {
      if (a.train_data.empty())
        throw std::runtime_error("baseline '" + what + "' needs --train-data");
      train_set = nde::load_dataset(a.train_data).trajectories;
    }
    return train_set;
  };

  std::map<std::string, nde::TokenLikelihoods> likelihoods;
  auto metrics_of = [&](const nde::LabeledTrajectory& t) {
    if (likelihoods.empty()) {
      if (a.probs.empty())
        throw std::runtime_error("logit baselines need --probs with a likelihood file");
      likelihoods = nde::load_likelihoods(a.probs);
    }
    const auto it = likelihoods.find(t.id);
    if (it == likelihoods.end())
      throw std::runtime_error("no recorded likelihoods for '" + t.id + "'");
    return nde::logit_metrics(it->second);
  };

  for (const std::string& name : split_list(a.baselines)) {
    std::vector<double> scores;
    scores.reserve(ds.trajectories.size());
    if (name == "saplma") {
      const nde::ProbeConfig pc{20, 32, 5e-4, a.seed};
      const nde::LastTokenProbe probe = nde::train_last_token_probe(need_train_data(name), pc);
      scores = nde::probe_scores(probe, ds.trajectories);
    } else if (name == "maxprob" || name == "avgprob" || name == "logit" ||
               name == "maxent" || name == "avgent") {
      for (const auto& t : ds.trajectories) {
        const nde::LogitMetrics m = metrics_of(t);
        if (name == "maxprob") {
          scores.push_back(m.max_prob);
        } else if (name == "maxent" || name == "avgent") {
          const auto& v = name == "maxent" ? m.max_ent : m.avg_ent;
          if (!v) throw std::runtime_error("likelihood file has no entropies");
          scores.push_back(*v);
        } else {
          scores.push_back(m.avg_prob);
        }
      }
    } else if (name == "unigram" || name == "unigram-avg" || name == "unigram-max") {
      std::vector<std::vector<std::string>> corpus;
      for (const auto& t : need_train_data(name)) {
        if (t.tokens.empty())
          throw std::runtime_error("record '" + t.id + "' carries no token text");
        corpus.push_back(t.tokens);
      }
      const nde::NgramModel ng = nde::fit_ngram(corpus, 1);
      for (const auto& t : ds.trajectories) {
        if (t.tokens.empty())
          throw std::runtime_error("record '" + t.id + "' carries no token text");
        const nde::NgramScores s = nde::unigram_scores(ng, t.tokens);
        scores.push_back(name == "unigram-max" ? s.max : s.avg);
      }
    } else {
      throw std::runtime_error(
          "unknown baseline '" + name +
          "' (expected saplma, logit, maxprob, avgprob, maxent, avgent, unigram, "
          "unigram-avg, or unigram-max)");
    }
    rows.push_back(nde::evaluate(name, dataset, scores, labels, a.seed));
  }

  if (!a.export_pca2d.empty())
    nde::export_pca_2d(model.projection, ds.trajectories, a.export_pca2d);

  const std::string report = nde::format_report(rows);
  if (!a.out.empty()) {
    nde::io::write_file_atomic(a.out, [&](std::ostream& os) { os << report; });
  }
  std::cout << report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-trajectory hallucination detector"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  s->set_config("--config");
  s->add_option("--per-class", synth.spec.per_class, "Trajectory pairs per class");
  s->add_option("--dx", synth.spec.d_x, "Embedding dimension");
  s->add_option("--min-len", synth.spec.min_len, "Shortest trajectory length");
  s->add_option("--max-len", synth.spec.max_len, "Longest trajectory length");
  s->add_option("--window-begin", synth.spec.window_begin, "First divergent step");
  s->add_option("--window-end", synth.spec.window_end, "One past the last divergent step");
  s->add_option("--suffix", synth.spec.shared_suffix, "Shared trailing tokens");
  s->add_option("--noise", synth.spec.noise, "Per-step noise scale");
  s->add_option("--seed", synth.spec.seed, "Generator seed");
  s->add_option("--split", synth.split, "Split tag for the manifest");
  s->add_option("--out", synth.out, "Output dataset directory")->required();

  IngestArgs ingest;
  CLI::App* i = app.add_subcommand("ingest", "Convert JSONL records to a dataset");
  i->set_config("--config");
  i->add_option("--input", ingest.input, "JSONL file of trajectories")->required();
  i->add_option("--out", ingest.out, "Output dataset directory")->required();
  i->add_option("--split", ingest.split, "Split tag for the manifest");
  i->add_option("--source", ingest.source, "Provenance note for the manifest");

  SplitArgs split;
  CLI::App* sp = app.add_subcommand("split", "Split a dataset into train and test");
  sp->set_config("--config");
  sp->add_option("--data", split.data, "Input dataset directory or manifest")->required();
  sp->add_option("--test-fraction", split.test_fraction, "Held-out fraction");
  sp->add_option("--seed", split.seed, "Shuffle seed");
  sp->add_option("--out-train", split.out_train, "Train output directory")->required();
  sp->add_option("--out-test", split.out_test, "Test output directory")->required();

  FitPcaArgs fp;
  CLI::App* f = app.add_subcommand("fit-pca", "Fit a linear projection to a dataset");
  f->set_config("--config");
  f->add_option("--data", fp.data, "Input dataset directory or manifest")->required();
  f->add_option("--k", fp.k, "Component count (default min(d_x, 64))");
  f->add_option("--out", fp.out, "Projection output file")->required();
  f->add_option("--export-2d", fp.export_2d, "Also write final-token 2-d coordinates");

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "Train a detector");
  t->set_config("--config");
  t->add_option("--data", train.data, "Training dataset directory or manifest")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--variant", train.variant, "ode, cde, or sde");
  t->add_option("--pca", train.pca_file, "Reuse a fitted projection file");
  t->add_option("--k", train.k, "Projection components (default min(d_x, 64))");
  t->add_option("--dz", train.d_z, "Latent dimension");
  t->add_option("--dstar", train.d_star, "Readout dimension (default d_z)");
  t->add_option("--f-layers", train.f_layers, "Field depth (default per variant)");
  t->add_option("--readout", train.readout, "final or mean");
  t->add_option("--spline", train.spline, "natural or hermite");
  t->add_option("--solver", train.solver, "euler, rk4, or euler-maruyama");
  t->add_option("--substeps", train.substeps, "Solver substeps per interval");
  t->add_option("--noise-seed", train.noise_seed, "Path-noise seed (sde)");
  t->add_option("--epochs", train.train.epochs, "Training epochs");
  t->add_option("--batch", train.train.batch, "Batch size");
  t->add_option("--lr", train.train.lr, "Learning rate");
  t->add_option("--seed", train.train.seed, "Training seed");

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint and baselines");
  e->set_config("--config");
  e->add_option("--model", eval.model, "Checkpoint file")->required();
  e->add_option("--data", eval.data, "Evaluation dataset directory or manifest")->required();
  e->add_option("--train-data", eval.train_data, "Training dataset for fitted baselines");
  e->add_option("--baselines", eval.baselines, "Comma-separated baseline list");
  e->add_option("--probs", eval.probs, "Per-token likelihood CSV for logit baselines");
  e->add_option("--export-pca2d", eval.export_pca2d, "Write final-token 2-d coordinates");
  e->add_option("--out", eval.out, "Report CSV path (also printed)");
  e->add_option("--dataset-name", eval.dataset_name, "Dataset name for the report");
  e->add_option("--seed", eval.seed, "Seed recorded in the report and used by baselines");
  e->add_option("--sde-samples", eval.sde_samples, "Noise draws averaged per prediction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& pe) {
    std::cerr << pe.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (i->parsed()) return cmd_ingest(ingest);
    if (sp->parsed()) return cmd_split(split);
    if (f->parsed()) return cmd_fit_pca(fp);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
