#pragma once
// Dataset IO (JSON manifest + raw f32 payload), the synthetic generator and
// the small text utilities used in dataset preparation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nde/trajectory.hpp"

namespace nde {

// `path` may be the manifest file itself or a directory containing
// manifest.json. Payload values are read bit-exactly (f32 widened to f64).
Dataset load_dataset(const std::filesystem::path& path);

// Writes manifest.json plus a single embeddings.f32bin payload into `dir`
// (created if missing). Round-trips bit-exactly with load_dataset.
DatasetManifest write_dataset(const std::vector<LabeledTrajectory>& set,
                              const std::filesystem::path& dir,
                              const std::string& split = "unassigned",
                              const std::string& source = "");

// Deterministic given spec.seed; labels are balanced (per_class each).
std::vector<LabeledTrajectory> gen_synthetic(const SynthSpec& spec);

// Unit-cost edit distance (insert / delete / substitute).
std::size_t levenshtein(const std::string& a, const std::string& b);

// Disjoint, exhaustive partition with |test| = round(fraction * total),
// deterministic given seed.
std::pair<std::vector<LabeledTrajectory>, std::vector<LabeledTrajectory>>
split_dataset(const std::vector<LabeledTrajectory>& set, double test_fraction,
              std::uint64_t seed);

}  // namespace nde
