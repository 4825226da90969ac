#include "nde/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "nde/binio.hpp"
#include "nde/noise.hpp"

namespace nde {

using json = nlohmann::ordered_json;

void validate(const LabeledTrajectory& t) {
  if (t.embeddings.rows() < 2)
    throw std::invalid_argument("trajectory '" + t.id + "': need at least 2 tokens");
  if (t.embeddings.rows() != t.times.size())
    throw std::invalid_argument("trajectory '" + t.id +
                                "': embedding rows and times length differ");
  for (Eigen::Index i = 1; i < t.times.size(); ++i)
    if (!(t.times[i] > t.times[i - 1]))
      throw std::invalid_argument("trajectory '" + t.id + "': non-monotone times");
  if (t.label != 0 && t.label != 1)
    throw std::invalid_argument("trajectory '" + t.id + "': label must be 0 or 1");
  if (!t.tokens.empty() &&
      static_cast<Eigen::Index>(t.tokens.size()) != t.embeddings.rows())
    throw std::invalid_argument("trajectory '" + t.id + "': token text length mismatch");
  if (!t.embeddings.allFinite() || !t.times.allFinite())
    throw std::invalid_argument("trajectory '" + t.id + "': non-finite values");
}

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kPayloadName = "embeddings.f32bin";

std::filesystem::path manifest_path_of(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / kManifestName : p;
}

DatasetManifest parse_manifest(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open manifest: " + file.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest parse error in " + file.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.d_x = j.at("d_x").get<int>();
  m.split = j.value("split", std::string("unassigned"));
  m.source = j.value("source", std::string());
  for (const auto& r : j.at("records")) {
    ManifestRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.label = r.at("label").get<int>();
    rec.token_count = r.at("token_count").get<std::int64_t>();
    rec.offset = r.at("offset").get<std::int64_t>();
    rec.file = r.at("file").get<std::string>();
    rec.times = r.at("times").get<std::vector<double>>();
    if (r.contains("tokens")) rec.tokens = r.at("tokens").get<std::vector<std::string>>();
    m.records.push_back(std::move(rec));
  }
  return m;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  const auto mpath = manifest_path_of(path);
  Dataset ds;
  ds.manifest = parse_manifest(mpath);
  const auto& m = ds.manifest;
  if (m.records.empty()) throw std::runtime_error("empty dataset: " + mpath.string());
  if (m.d_x <= 0) throw std::runtime_error("manifest d_x must be positive");

  const auto base = mpath.parent_path();

  // Check offsets do not overlap within each payload file.
  {
    std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>> spans;
    for (const auto& r : m.records) {
      const std::int64_t bytes = r.token_count * m.d_x * 4;
      spans.push_back({r.file, {r.offset, r.offset + bytes}});
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].first == spans[i - 1].first &&
          spans[i].second.first < spans[i - 1].second.second)
        throw std::runtime_error("overlapping payload offsets in " + spans[i].first);
  }

  for (const auto& r : m.records) {
    const auto fpath = base / r.file;
    std::ifstream is(fpath, std::ios::binary);
    if (!is) throw std::runtime_error("missing embedding file: " + fpath.string());
    const auto fsize = static_cast<std::int64_t>(std::filesystem::file_size(fpath));
    const std::int64_t count = r.token_count * m.d_x;
    if (r.token_count < 2)
      throw std::runtime_error("record '" + r.id + "': need at least 2 tokens");
    if (r.offset < 0 || r.offset + count * 4 > fsize)
      throw std::runtime_error("truncated payload for record '" + r.id + "' in " +
                               fpath.string());
    if (static_cast<std::int64_t>(r.times.size()) != r.token_count)
      throw std::runtime_error("record '" + r.id + "': times length mismatch");

    is.seekg(r.offset);
    std::vector<float> buf(static_cast<std::size_t>(count));
    is.read(reinterpret_cast<char*>(buf.data()), count * 4);
    if (!is) throw std::runtime_error("short read in " + fpath.string());

    LabeledTrajectory t;
    t.id = r.id;
    t.label = r.label;
    t.embeddings.resize(r.token_count, m.d_x);
    for (std::int64_t i = 0; i < r.token_count; ++i)
      for (std::int64_t j = 0; j < m.d_x; ++j)
        t.embeddings(i, j) = static_cast<double>(buf[static_cast<std::size_t>(i * m.d_x + j)]);
    t.times = Eigen::Map<const Eigen::VectorXd>(r.times.data(),
                                                static_cast<Eigen::Index>(r.times.size()));
    t.tokens = r.tokens;
    validate(t);
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

DatasetManifest write_dataset(const std::vector<LabeledTrajectory>& set,
                              const std::filesystem::path& dir,
                              const std::string& split, const std::string& source) {
  if (set.empty()) throw std::invalid_argument("empty dataset");
  const auto d_x = set.front().embeddings.cols();
  std::set<std::string> seen;
  for (const auto& t : set) {
    validate(t);
    if (t.embeddings.cols() != d_x)
      throw std::invalid_argument("mixed embedding dimensions in dataset (" +
                                  std::to_string(d_x) + " vs " +
                                  std::to_string(t.embeddings.cols()) + ")");
    if (!seen.insert(t.id).second)
      throw std::invalid_argument("duplicate trajectory id: " + t.id);
  }

  std::filesystem::create_directories(dir);

  DatasetManifest m;
  m.d_x = static_cast<int>(d_x);
  m.split = split;
  m.source = source;

  io::write_file_atomic(dir / kPayloadName, [&](std::ostream& os) {
    std::int64_t offset = 0;
    for (const auto& t : set) {
      ManifestRecord rec;
      rec.id = t.id;
      rec.label = t.label;
      rec.token_count = t.embeddings.rows();
      rec.offset = offset;
      rec.file = kPayloadName;
      rec.times.assign(t.times.data(), t.times.data() + t.times.size());
      rec.tokens = t.tokens;
      for (Eigen::Index i = 0; i < t.embeddings.rows(); ++i)
        for (Eigen::Index j = 0; j < d_x; ++j)
          io::write_pod<float>(os, static_cast<float>(t.embeddings(i, j)));
      offset += rec.token_count * d_x * 4;
      m.records.push_back(std::move(rec));
    }
  });

  json j;
  j["version"] = m.version;
  j["d_x"] = m.d_x;
  j["split"] = m.split;
  if (!m.source.empty()) j["source"] = m.source;
  j["records"] = json::array();
  for (const auto& r : m.records) {
    json rec;
    rec["id"] = r.id;
    rec["label"] = r.label;
    rec["token_count"] = r.token_count;
    rec["offset"] = r.offset;
    rec["file"] = r.file;
    rec["times"] = r.times;
    if (!r.tokens.empty()) rec["tokens"] = r.tokens;
    j["records"].push_back(std::move(rec));
  }
  io::write_file_atomic(dir / kManifestName,
                        [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return m;
}

namespace {

// Round through f32 so written datasets reload bit-exactly.
double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void check_spec(const SynthSpec& s) {
  if (s.per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  if (s.d_x < 1) throw std::invalid_argument("d_x must be >= 1");
  if (s.min_len < 2 || s.max_len < s.min_len)
    throw std::invalid_argument("invalid length range");
  if (s.window_begin < 0 || s.window_end <= s.window_begin)
    throw std::invalid_argument("invalid divergence window");
  if (s.shared_suffix < 1) throw std::invalid_argument("shared_suffix must be >= 1");
  if (s.noise < 0) throw std::invalid_argument("noise scale must be nonnegative");
  // The window must end before the suffix starts for every length, and the
  // shortest trajectory must still have room for both.
  if (s.window_end > s.min_len - s.shared_suffix)
    throw std::invalid_argument("divergence window must strictly precede the shared suffix");
  if (!(s.min_len > s.shared_suffix + (s.window_end - s.window_begin)))
    throw std::invalid_argument("min length must exceed suffix length plus window width");
}

Eigen::MatrixXd random_matrix(rng::Stream s, int rows, int cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = scale * s.normal(static_cast<std::uint64_t>(r) * cols + c);
  return m;
}

Eigen::VectorXd random_vector(rng::Stream s, int n, double scale) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * s.normal(static_cast<std::uint64_t>(i));
  return v;
}

// Random rotation generator. Skew-symmetry keeps the step map x + delta*A*x
// close to an isometry, so embedding norms stay bounded over long sequences
// and the class signal is a direction of rotation rather than a growth rate.
Eigen::MatrixXd random_skew(rng::Stream s, int n, double scale) {
  const Eigen::MatrixXd m = random_matrix(s, n, n, scale);
  return (m - m.transpose()) / std::sqrt(2.0);
}

}  // namespace

std::vector<LabeledTrajectory> gen_synthetic(const SynthSpec& spec) {
  check_spec(spec);
  const rng::Stream root = rng::Stream(spec.seed).fork("synth");
  const double mat_scale = 1.0 / std::sqrt(static_cast<double>(spec.d_x));

  // Per-seed fixed objects: shared drift, two class drifts, suffix anchors.
  // The class drifts sit on opposite sides of the shared drift, so inside the
  // divergence window the classes rotate away from each other while the
  // overall motion scale stays comparable to the shared segments.
  const Eigen::MatrixXd drift_shared =
      random_skew(root.fork("drift-shared"), spec.d_x, mat_scale);
  const Eigen::MatrixXd drift_split =
      random_skew(root.fork("drift-split"), spec.d_x, mat_scale);
  const Eigen::MatrixXd drift_class[2] = {drift_shared + drift_split,
                                          drift_shared - drift_split};
  // anchor[k] is the embedding at position (length - shared_suffix + k)
  std::vector<Eigen::VectorXd> anchor(static_cast<std::size_t>(spec.shared_suffix));
  for (int k = 0; k < spec.shared_suffix; ++k)
    anchor[static_cast<std::size_t>(k)] =
        random_vector(root.fork("anchor").fork(static_cast<std::uint64_t>(k)), spec.d_x, 1.0);

  constexpr double kDriftStep = 0.4;

  std::vector<LabeledTrajectory> out;
  out.reserve(static_cast<std::size_t>(2 * spec.per_class));

  for (int pair = 0; pair < spec.per_class; ++pair) {
    const rng::Stream ps = root.fork("pair").fork(static_cast<std::uint64_t>(pair));
    const int len = spec.min_len +
                    static_cast<int>(ps.fork("len").below(
                        0, static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
    const Eigen::VectorXd x0 = random_vector(ps.fork("x0"), spec.d_x, 1.0);
    const int suffix_start = len - spec.shared_suffix;

    for (int cls = 0; cls < 2; ++cls) {
      LabeledTrajectory t;
      t.id = "synth-" + std::to_string(spec.seed) + "-" + std::to_string(pair) + "-c" +
             std::to_string(cls);
      t.label = cls;
      t.embeddings.resize(len, spec.d_x);
      t.times = Eigen::VectorXd::LinSpaced(len, 0.0, static_cast<double>(len - 1));

      Eigen::VectorXd x = x0;
      for (int i = 0; i < len; ++i) {
        if (i >= suffix_start) {
          // Suffix: class-independent anchor plus pair-shared noise, so the
          // final tokens carry no label signal.
          const rng::Stream ns =
              ps.fork("suffix-noise").fork(static_cast<std::uint64_t>(i - suffix_start));
          x = anchor[static_cast<std::size_t>(i - suffix_start)];
          for (int j = 0; j < spec.d_x; ++j)
            x[j] += spec.noise * ns.normal(static_cast<std::uint64_t>(j));
        } else if (i > 0) {
          const bool in_window = (i - 1) >= spec.window_begin && (i - 1) < spec.window_end;
          const Eigen::MatrixXd& drift = in_window ? drift_class[cls] : drift_shared;
          // Prefix noise is pair-shared so paired statements agree until the
          // window, mirroring identical leading tokens.
          const rng::Stream ns = (i - 1) < spec.window_begin
                                     ? ps.fork("prefix-noise").fork(static_cast<std::uint64_t>(i))
                                     : ps.fork("noise")
                                           .fork(static_cast<std::uint64_t>(cls))
                                           .fork(static_cast<std::uint64_t>(i));
          x += kDriftStep * (drift * x);
          for (int j = 0; j < spec.d_x; ++j)
            x[j] += spec.noise * ns.normal(static_cast<std::uint64_t>(j));
        }
        for (int j = 0; j < spec.d_x; ++j) t.embeddings(i, j) = as_f32(x[j]);
        x = t.embeddings.row(i).transpose();  // keep dynamics in f32-exact state
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::pair<std::vector<LabeledTrajectory>, std::vector<LabeledTrajectory>>
split_dataset(const std::vector<LabeledTrajectory>& set, double test_fraction,
              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test fraction must be in (0,1)");
  if (set.size() < 2) throw std::invalid_argument("need at least 2 records to split");

  const auto n = set.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test == n)
    throw std::invalid_argument("split would leave an empty side");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng::shuffle(idx, rng::Stream(seed).fork("split"));

  std::pair<std::vector<LabeledTrajectory>, std::vector<LabeledTrajectory>> parts;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_test ? parts.second : parts.first).push_back(set[idx[i]]);
  return parts;
}

}  // namespace nde
