#pragma once

// Teacher-defined instance distributions and clean/corrupted datasets.
//
// Clean examples carry the teacher's deterministic label y(x); corrupted
// examples are fresh draws from the same distribution whose labels are +1/-1
// with equal probability, independent of x.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisylab/core.hpp"
#include "noisylab/format.hpp"

namespace noisylab {

// ---------------------------------------------------------------------------
// Feature maps shared by teachers and students.
// ---------------------------------------------------------------------------

enum class FeatureKind { identity, random_fourier };

struct FeatureMap {
  FeatureKind kind = FeatureKind::identity;
  std::size_t input_dim = 0;
  std::size_t num_features = 0;  // random_fourier only
  double bandwidth = 1.0;        // random_fourier only
  Vector frequencies;            // num_features x input_dim, row-major
  Vector phases;                 // num_features

  static FeatureMap identity(std::size_t d) {
    if (d == 0) throw ConfigError("feature map: input_dim must be >= 1");
    FeatureMap f;
    f.input_dim = d;
    return f;
  }

  /// z(x) = sqrt(2/D) cos(W x + b), W ~ N(0, 1/bandwidth^2), b ~ U[0, 2pi).
  static FeatureMap random_fourier(std::size_t d, std::size_t count, double bandwidth,
                                   std::uint64_t seed) {
    if (d == 0) throw ConfigError("feature map: input_dim must be >= 1");
    if (count == 0) throw ConfigError("feature map: random-fourier feature count must be >= 1");
    if (!(bandwidth > 0.0)) throw ConfigError("feature map: bandwidth must be > 0");
    FeatureMap f;
    f.kind = FeatureKind::random_fourier;
    f.input_dim = d;
    f.num_features = count;
    f.bandwidth = bandwidth;
    Rng rng(seed);
    f.frequencies.resize(count * d);
    for (auto& w : f.frequencies) w = rng.normal() / bandwidth;
    f.phases.resize(count);
    for (auto& b : f.phases) b = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return f;
  }

  std::size_t output_dim() const {
    return kind == FeatureKind::identity ? input_dim : num_features;
  }

  void apply(std::span<const double> x, std::span<double> out) const {
    if (x.size() != input_dim) throw InputError("feature map: input dimension mismatch");
    if (kind == FeatureKind::identity) {
      std::copy(x.begin(), x.end(), out.begin());
      return;
    }
    const double scale = std::sqrt(2.0 / static_cast<double>(num_features));
    for (std::size_t k = 0; k < num_features; ++k) {
      const std::span<const double> row(frequencies.data() + k * input_dim, input_dim);
      out[k] = scale * std::cos(dot(row, x) + phases[k]);
    }
  }

  Vector operator()(std::span<const double> x) const {
    Vector out(output_dim());
    apply(x, out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Instance distribution.
// ---------------------------------------------------------------------------

enum class DistributionKind { standard_gaussian, uniform_sphere };

struct DistributionSpec {
  DistributionKind kind = DistributionKind::standard_gaussian;
  std::size_t input_dim = 1;

  void validate() const {
    if (input_dim == 0) throw ConfigError("distribution: input_dim must be >= 1");
  }

  void draw(Rng& rng, std::span<double> out) const {
    for (auto& v : out) v = rng.normal();
    if (kind == DistributionKind::uniform_sphere) {
      const double r = norm(out);
      for (auto& v : out) v /= r;
    }
  }

  Vector draw(Rng& rng) const {
    Vector x(input_dim);
    draw(rng, x);
    return x;
  }
};

inline std::vector<Vector> sample_instances(const DistributionSpec& dist, std::size_t count,
                                            std::uint64_t seed) {
  dist.validate();
  Rng rng(seed);
  std::vector<Vector> xs;
  xs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) xs.push_back(dist.draw(rng));
  return xs;
}

// ---------------------------------------------------------------------------
// Teacher.
// ---------------------------------------------------------------------------

enum class TeacherKind { linear_sign, mlp_sign };

struct TeacherSpec {
  TeacherKind kind = TeacherKind::linear_sign;
  std::size_t input_dim = 1;
  std::size_t hidden = 16;  // mlp_sign only
  FeatureKind feature_kind = FeatureKind::identity;
  std::size_t num_features = 0;
  double bandwidth = 1.0;
};

struct Teacher {
  TeacherSpec spec;
  std::uint64_t seed = 0;
  FeatureMap features;
  // linear_sign: unit vector w (length p).
  // mlp_sign: [V (hidden x p) | c (hidden) | a (hidden)].
  Vector weights;

  /// Real-valued score whose sign is the label.
  double score(std::span<const double> x) const {
    const Vector z = features(x);
    const std::size_t p = z.size();
    if (spec.kind == TeacherKind::linear_sign) return dot(weights, z);
    const std::size_t h = spec.hidden;
    double s = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const std::span<const double> row(weights.data() + j * p, p);
      s += weights[h * p + h + j] * std::tanh(dot(row, z) + weights[h * p + j]);
    }
    return s;
  }

  /// y(x) in {-1, +1}; a zero score maps to +1.
  double label(std::span<const double> x) const { return score(x) >= 0.0 ? 1.0 : -1.0; }

  std::string id() const;
};

inline std::string to_string(TeacherKind k) {
  return k == TeacherKind::linear_sign ? "linear-sign" : "mlp-sign";
}
inline std::string to_string(FeatureKind k) {
  return k == FeatureKind::identity ? "identity" : "random-fourier";
}
inline std::string to_string(DistributionKind k) {
  return k == DistributionKind::standard_gaussian ? "standard-gaussian" : "uniform-sphere";
}

inline TeacherKind parse_teacher_kind(const std::string& s) {
  if (s == "linear-sign") return TeacherKind::linear_sign;
  if (s == "mlp-sign") return TeacherKind::mlp_sign;
  throw ConfigError("unknown teacher kind '" + s + "'");
}
inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "identity") return FeatureKind::identity;
  if (s == "random-fourier") return FeatureKind::random_fourier;
  throw ConfigError("unknown feature map '" + s + "'");
}
inline DistributionKind parse_distribution_kind(const std::string& s) {
  if (s == "standard-gaussian") return DistributionKind::standard_gaussian;
  if (s == "uniform-sphere") return DistributionKind::uniform_sphere;
  throw ConfigError("unknown distribution '" + s + "'");
}

inline nlohmann::json to_json(const TeacherSpec& t) {
  return {{"kind", to_string(t.kind)},
          {"input_dim", t.input_dim},
          {"hidden", t.hidden},
          {"feature_map", to_string(t.feature_kind)},
          {"num_features", t.num_features},
          {"bandwidth", t.bandwidth}};
}

inline TeacherSpec teacher_spec_from_json(const nlohmann::json& j) {
  TeacherSpec t;
  t.kind = parse_teacher_kind(j.at("kind").get<std::string>());
  t.input_dim = j.at("input_dim").get<std::size_t>();
  t.hidden = j.value("hidden", std::size_t{16});
  t.feature_kind = parse_feature_kind(j.value("feature_map", std::string("identity")));
  t.num_features = j.value("num_features", std::size_t{0});
  t.bandwidth = j.value("bandwidth", 1.0);
  return t;
}

inline nlohmann::json to_json(const DistributionSpec& d) {
  return {{"kind", to_string(d.kind)}, {"input_dim", d.input_dim}};
}

inline DistributionSpec distribution_spec_from_json(const nlohmann::json& j) {
  DistributionSpec d;
  d.kind = parse_distribution_kind(j.at("kind").get<std::string>());
  d.input_dim = j.at("input_dim").get<std::size_t>();
  return d;
}

inline std::string Teacher::id() const {
  const std::string key = to_json(spec).dump() + "#" + std::to_string(seed);
  return to_string(spec.kind) + "-" + hex64(fnv1a(key)).substr(0, 12);
}

/// Builds a teacher whose parameters are drawn from the seeded stream.
inline Teacher make_teacher(const TeacherSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0) throw ConfigError("teacher: input_dim must be >= 1");
  if (spec.kind == TeacherKind::mlp_sign && spec.hidden == 0)
    throw ConfigError("teacher: mlp-sign needs hidden >= 1");
  Teacher t;
  t.spec = spec;
  t.seed = seed;
  if (spec.feature_kind == FeatureKind::random_fourier) {
    t.features = FeatureMap::random_fourier(spec.input_dim, spec.num_features, spec.bandwidth,
                                            derive_seed(seed, {0xFEA7}));
  } else {
    t.features = FeatureMap::identity(spec.input_dim);
  }
  const std::size_t p = t.features.output_dim();
  Rng rng(derive_seed(seed, {0x7EAC}));
  if (spec.kind == TeacherKind::linear_sign) {
    t.weights.resize(p);
    for (auto& w : t.weights) w = rng.normal();
    const double r = norm(t.weights);
    for (auto& w : t.weights) w /= r;
  } else {
    const std::size_t h = spec.hidden;
    t.weights.resize(h * p + 2 * h);
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(p));
    for (std::size_t i = 0; i < h * p; ++i) t.weights[i] = rng.normal() * in_scale;
    for (std::size_t j = 0; j < h; ++j) t.weights[h * p + j] = 0.1 * rng.normal();
    for (std::size_t j = 0; j < h; ++j) t.weights[h * p + h + j] = rng.normal();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Dataset.
// ---------------------------------------------------------------------------

enum class Provenance { clean, corrupted };

struct Example {
  Vector x;
  double label = 1.0;
  Provenance provenance = Provenance::clean;
};

/// D_a (clean) followed by D_b (corrupted). Pooled index i < m addresses
/// clean[i]; i >= m addresses corrupted[i - m].
struct Dataset {
  std::vector<Example> clean;
  std::vector<Example> corrupted;
  std::uint64_t seed = 0;
  std::string teacher_id;

  std::size_t m() const { return clean.size(); }
  std::size_t n() const { return corrupted.size(); }
  std::size_t size() const { return clean.size() + corrupted.size(); }
  std::size_t input_dim() const { return clean.empty() ? 0 : clean.front().x.size(); }

  const Example& at(std::size_t i) const { return i < m() ? clean[i] : corrupted[i - m()]; }

  void validate() const {
    if (clean.empty()) throw InputError("dataset: needs at least one clean example (m >= 1)");
    for (const auto& e : clean)
      if (e.provenance != Provenance::clean) throw InputError("dataset: clean part has a corrupted example");
    for (const auto& e : corrupted)
      if (e.provenance != Provenance::corrupted)
        throw InputError("dataset: corrupted part has a clean example");
  }
};

/// n / (m + n).
inline double gamma(const Dataset& ds) {
  return static_cast<double>(ds.n()) / static_cast<double>(ds.m() + ds.n());
}

inline Dataset build_dataset(const Teacher& teacher, const DistributionSpec& dist, std::size_t m,
                             std::size_t n, std::uint64_t seed) {
  if (m == 0) throw ConfigError("build_dataset: m must be >= 1");
  dist.validate();
  if (dist.input_dim != teacher.spec.input_dim)
    throw ConfigError("build_dataset: distribution and teacher dimensions differ");
  Dataset ds;
  ds.seed = seed;
  ds.teacher_id = teacher.id();
  Rng clean_rng(derive_seed(seed, {1}));
  Rng noisy_rng(derive_seed(seed, {2}));
  Rng label_rng(derive_seed(seed, {3}));
  ds.clean.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Example e;
    e.x = dist.draw(clean_rng);
    e.label = teacher.label(e.x);
    e.provenance = Provenance::clean;
    ds.clean.push_back(std::move(e));
  }
  ds.corrupted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    e.x = dist.draw(noisy_rng);
    e.label = label_rng.rademacher();
    e.provenance = Provenance::corrupted;
    ds.corrupted.push_back(std::move(e));
  }
  return ds;
}

/// Relabels the corrupted part with a fresh uniform +/-1 draw, keeping instances.
inline Dataset resample_corrupted_labels(Dataset ds, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& e : ds.corrupted) e.label = rng.rademacher();
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization: CSV `idx,provenance,label,x0,...` plus a JSON sidecar.
// ---------------------------------------------------------------------------

inline std::string dataset_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "idx,provenance,label";
  for (std::size_t k = 0; k < ds.input_dim(); ++k) out << ",x" << k;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Example& e = ds.at(i);
    out << i << ',' << (e.provenance == Provenance::clean ? "clean" : "corrupted") << ','
        << (e.label > 0 ? "1" : "-1");
    for (double v : e.x) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json dataset_sidecar(const Dataset& ds, const Teacher& teacher,
                                      const DistributionSpec& dist) {
  return {{"teacher", to_json(teacher.spec)},
          {"teacher_seed", teacher.seed},
          {"teacher_id", ds.teacher_id},
          {"distribution", to_json(dist)},
          {"m", ds.m()},
          {"n", ds.n()},
          {"seed", ds.seed}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_dataset(const std::string& csv_path, const Dataset& ds, const Teacher& teacher,
                          const DistributionSpec& dist) {
  write_text_file(csv_path, dataset_csv(ds));
  write_text_file(csv_path + ".json", dataset_sidecar(ds, teacher, dist).dump(2) + "\n");
}

inline Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("idx,provenance,label", 0) != 0)
    throw InputError("dataset csv: missing header");
  Dataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw InputError("dataset csv: short row");
    Example e;
    e.provenance = cells[1] == "clean" ? Provenance::clean : Provenance::corrupted;
    if (cells[1] != "clean" && cells[1] != "corrupted")
      throw InputError("dataset csv: bad provenance '" + cells[1] + "'");
    e.label = parse_double(cells[2]);
    if (e.label != 1.0 && e.label != -1.0) throw InputError("dataset csv: label must be 1 or -1");
    for (std::size_t k = 3; k < cells.size(); ++k) e.x.push_back(parse_double(cells[k]));
    (e.provenance == Provenance::clean ? ds.clean : ds.corrupted).push_back(std::move(e));
  }
  ds.validate();
  return ds;
}

/// Loads a dataset and restores seed / teacher id from the sidecar when present.
inline Dataset read_dataset(const std::string& csv_path) {
  Dataset ds = parse_dataset_csv(read_text_file(csv_path));
  std::ifstream side(csv_path + ".json");
  if (side) {
    const auto j = nlohmann::json::parse(side);
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.teacher_id = j.value("teacher_id", std::string{});
  }
  return ds;
}

}  // namespace noisylab
