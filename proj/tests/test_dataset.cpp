#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nde/dataset.hpp"

namespace fs = std::filesystem;
using nde::LabeledTrajectory;
using nde::SynthSpec;

namespace {

LabeledTrajectory simple_trajectory(const std::string& id, int label) {
  LabeledTrajectory t;
  t.id = id;
  t.label = label;
  t.embeddings.resize(3, 2);
  t.embeddings << 0.5f, -1.25f, 2.0f, 0.125f, -3.5f, 4.0f;
  t.times = Eigen::VectorXd::LinSpaced(3, 0.0, 2.0);
  return t;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nde-test-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("trajectory validation rejects malformed records") {
  LabeledTrajectory t = simple_trajectory("ok", 0);
  CHECK_NOTHROW(nde::validate(t));

  t = simple_trajectory("short", 0);
  t.embeddings.conservativeResize(1, 2);
  t.times = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(nde::validate(t), std::invalid_argument);

  t = simple_trajectory("times", 0);
  t.times[2] = t.times[1];
  CHECK_THROWS_AS(nde::validate(t), std::invalid_argument);

  t = simple_trajectory("label", 2);
  CHECK_THROWS_AS(nde::validate(t), std::invalid_argument);

  t = simple_trajectory("tokens", 0);
  t.tokens = {"a", "b"};
  CHECK_THROWS_AS(nde::validate(t), std::invalid_argument);
  t.tokens = {"a", "b", "c"};
  CHECK_NOTHROW(nde::validate(t));

  t = simple_trajectory("nan", 0);
  t.embeddings(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nde::validate(t), std::invalid_argument);
}

TEST_CASE("datasets round-trip bit-exactly through disk") {
  std::vector<LabeledTrajectory> set{simple_trajectory("a", 0), simple_trajectory("b", 1)};
  set[1].tokens = {"x", "y", "z"};
  set[1].times << 0.0, 0.5, 4.0;

  const fs::path dir = fresh_dir("roundtrip");
  const auto manifest = nde::write_dataset(set, dir, "test", "unit fixture");
  CHECK(manifest.d_x == 2);
  CHECK(manifest.split == "test");
  CHECK(manifest.records.size() == 2);

  const nde::Dataset back = nde::load_dataset(dir);
  CHECK(back.manifest.split == "test");
  CHECK(back.manifest.source == "unit fixture");
  REQUIRE(back.trajectories.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.trajectories[i].id == set[i].id);
    CHECK(back.trajectories[i].label == set[i].label);
    CHECK(back.trajectories[i].embeddings == set[i].embeddings);
    CHECK(back.trajectories[i].times == set[i].times);
    CHECK(back.trajectories[i].tokens == set[i].tokens);
  }

  // loading via the manifest file is the same as via the directory
  const nde::Dataset by_file = nde::load_dataset(dir / "manifest.json");
  CHECK(by_file.trajectories.size() == 2);
}

TEST_CASE("writing rejects mixed dimensions and duplicate ids") {
  std::vector<LabeledTrajectory> mixed{simple_trajectory("a", 0), simple_trajectory("b", 1)};
  mixed[1].embeddings.resize(3, 4);
  mixed[1].embeddings.setZero();
  CHECK_THROWS_AS(nde::write_dataset(mixed, fresh_dir("mixed")), std::invalid_argument);

  std::vector<LabeledTrajectory> dup{simple_trajectory("a", 0), simple_trajectory("a", 1)};
  CHECK_THROWS_AS(nde::write_dataset(dup, fresh_dir("dup")), std::invalid_argument);

  CHECK_THROWS_AS(nde::write_dataset({}, fresh_dir("empty")), std::invalid_argument);
}

TEST_CASE("loading rejects a corrupt payload") {
  const fs::path dir = fresh_dir("corrupt");
  nde::write_dataset({simple_trajectory("a", 0)}, dir);
  fs::resize_file(dir / "embeddings.f32bin", 4);
  CHECK_THROWS_AS(nde::load_dataset(dir), std::runtime_error);
  CHECK_THROWS_AS(nde::load_dataset(fresh_dir("missing")), std::runtime_error);
}

TEST_CASE("synthetic pairs share everything except the window dynamics") {
  SynthSpec spec;
  spec.per_class = 5;
  spec.d_x = 6;
  spec.seed = 21;
  const auto set = nde::gen_synthetic(spec);
  REQUIRE(set.size() == 10);

  int positives = 0;
  for (const auto& t : set) positives += t.label;
  CHECK(positives == 5);

  const auto rerun = nde::gen_synthetic(spec);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set[i].id == rerun[i].id);
    CHECK(set[i].embeddings == rerun[i].embeddings);
  }

  for (int pair = 0; pair < spec.per_class; ++pair) {
    const auto& a = set[static_cast<std::size_t>(2 * pair)];
    const auto& b = set[static_cast<std::size_t>(2 * pair + 1)];
    CHECK(a.label != b.label);
    REQUIRE(a.embeddings.rows() == b.embeddings.rows());
    CHECK(a.times == b.times);

    // identical prefix up to the divergence window, then distinct rows
    for (int i = 0; i <= spec.window_begin; ++i)
      CHECK(a.embeddings.row(i) == b.embeddings.row(i));
    CHECK(a.embeddings.row(spec.window_begin + 1) != b.embeddings.row(spec.window_begin + 1));

    // trailing suffix rows agree within the pair even with noise on
    const auto n = a.embeddings.rows();
    for (int k = 1; k <= spec.shared_suffix; ++k)
      CHECK(a.embeddings.row(n - k) == b.embeddings.row(n - k));
  }
}

TEST_CASE("noise-free suffixes agree across every equal-length pairing") {
  SynthSpec spec;
  spec.per_class = 6;
  spec.d_x = 4;
  spec.noise = 0.0;
  spec.seed = 4;
  const auto set = nde::gen_synthetic(spec);
  for (const auto& a : set)
    for (const auto& b : set) {
      if (a.embeddings.rows() != b.embeddings.rows() || a.label == b.label) continue;
      const auto n = a.embeddings.rows();
      for (int k = 1; k <= spec.shared_suffix; ++k)
        CHECK(a.embeddings.row(n - k) == b.embeddings.row(n - k));
    }
}

TEST_CASE("generator parameters are validated") {
  SynthSpec spec;
  spec.window_end = spec.min_len - spec.shared_suffix + 1;
  CHECK_THROWS_AS(nde::gen_synthetic(spec), std::invalid_argument);
  spec = SynthSpec{};
  spec.per_class = 0;
  CHECK_THROWS_AS(nde::gen_synthetic(spec), std::invalid_argument);
  spec = SynthSpec{};
  spec.min_len = 10;
  spec.max_len = 9;
  CHECK_THROWS_AS(nde::gen_synthetic(spec), std::invalid_argument);
  spec = SynthSpec{};
  spec.noise = -0.1;
  CHECK_THROWS_AS(nde::gen_synthetic(spec), std::invalid_argument);
}

TEST_CASE("edit distance counts unit operations") {
  CHECK(nde::levenshtein("kitten", "sitting") == 3);
  CHECK(nde::levenshtein("", "abc") == 3);
  CHECK(nde::levenshtein("abc", "") == 3);
  CHECK(nde::levenshtein("abc", "abc") == 0);
  CHECK(nde::levenshtein("flaw", "lawn") == 2);
}

TEST_CASE("splitting partitions the set deterministically") {
  SynthSpec spec;
  spec.per_class = 20;
  spec.d_x = 4;
  spec.seed = 6;
  const auto set = nde::gen_synthetic(spec);

  const auto [train, test] = nde::split_dataset(set, 0.25, 17);
  CHECK(test.size() == 10);
  CHECK(train.size() == 30);

  std::set<std::string> ids;
  for (const auto& t : train) ids.insert(t.id);
  for (const auto& t : test) ids.insert(t.id);
  CHECK(ids.size() == set.size());

  const auto [train2, test2] = nde::split_dataset(set, 0.25, 17);
  for (std::size_t i = 0; i < test.size(); ++i) CHECK(test[i].id == test2[i].id);
  const auto [train3, test3] = nde::split_dataset(set, 0.25, 18);
  bool same = test.size() == test3.size();
  if (same)
    for (std::size_t i = 0; i < test.size(); ++i) same = same && test[i].id == test3[i].id;
  CHECK_FALSE(same);

  CHECK_THROWS_AS(nde::split_dataset(set, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(nde::split_dataset(set, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(nde::split_dataset(set, -0.1, 1), std::invalid_argument);
}
