#pragma once

// Half-squared-error objectives over clean, corrupted and pooled data, their
// Monte Carlo population counterparts, and stochastic / full gradients.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisylab/core.hpp"
#include "noisylab/models.hpp"
#include "noisylab/synthgen.hpp"

namespace noisylab {

enum class LossKind {
  empirical_clean,
  empirical_noisy,
  empirical_mixed,
  population_clean,
  population_noisy,
  population_mixed
};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::empirical_clean: return "empirical-clean";
    case LossKind::empirical_noisy: return "empirical-noisy";
    case LossKind::empirical_mixed: return "empirical-mixed";
    case LossKind::population_clean: return "population-clean";
    case LossKind::population_noisy: return "population-noisy";
    case LossKind::population_mixed: return "population-mixed";
  }
  return "?";
}

struct LossReport {
  double value = 0.0;
  std::size_t n_points = 0;
  double std_error = 0.0;  // Monte Carlo kinds only
  LossKind kind = LossKind::empirical_mixed;
};

inline nlohmann::json to_json(const LossReport& r) {
  return {{"kind", to_string(r.kind)},
          {"value", r.value},
          {"n_points", r.n_points},
          {"std_error", r.std_error}};
}

enum class DataPart { clean, noisy, mixed };

// ---------------------------------------------------------------------------
// Encoded data: feature rows computed once so training loops avoid repeated
// feature-map evaluation.
// ---------------------------------------------------------------------------

struct EncodedData {
  std::size_t dim = 0;
  std::size_t m = 0;  // clean rows come first
  std::size_t n = 0;
  Vector z;
  Vector y;

  std::size_t size() const { return m + n; }
  std::span<const double> row(std::size_t i) const { return {z.data() + i * dim, dim}; }

  std::size_t begin_of(DataPart part) const { return part == DataPart::noisy ? m : 0; }
  std::size_t end_of(DataPart part) const { return part == DataPart::clean ? m : m + n; }
};

inline EncodedData encode_dataset(const Model& model, const Dataset& ds) {
  EncodedData e;
  e.dim = model.feature_dim();
  e.m = ds.m();
  e.n = ds.n();
  e.z.resize(ds.size() * e.dim);
  e.y.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Example& ex = ds.at(i);
    if (ex.x.size() != model.input_dim()) throw InputError("encode: input dimension mismatch");
    model.features.apply(ex.x, std::span<double>(e.z.data() + i * e.dim, e.dim));
    e.y[i] = ex.label;
  }
  return e;
}

/// Clean-labelled sample drawn from the population, encoded for `model`.
/// Used as a fixed test set so repeated evaluations share random numbers.
inline EncodedData encode_population_sample(const Model& model, const Teacher& teacher,
                                            const DistributionSpec& dist, std::size_t count,
                                            std::uint64_t seed) {
  Rng rng(seed);
  EncodedData e;
  e.dim = model.feature_dim();
  e.m = count;
  e.z.resize(count * e.dim);
  e.y.resize(count);
  Vector x(dist.input_dim);
  for (std::size_t i = 0; i < count; ++i) {
    dist.draw(rng, x);
    model.features.apply(x, std::span<double>(e.z.data() + i * e.dim, e.dim));
    e.y[i] = teacher.label(x);
  }
  return e;
}

/// Sum of 1/2 (f - y)^2 over rows [begin, end).
inline double sum_half_sq(const Model& model, const EncodedData& d, std::size_t begin,
                          std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double r = model.predict_encoded(d.row(i)) - d.y[i];
    s += 0.5 * r * r;
  }
  return s;
}

inline double mean_half_sq(const Model& model, const EncodedData& d, DataPart part) {
  const std::size_t b = d.begin_of(part), e = d.end_of(part);
  if (e == b) throw InputError("loss: selected part is empty");
  return sum_half_sq(model, d, b, e) / static_cast<double>(e - b);
}

/// Mean of (f - y) grad f over the selected rows.
inline Vector mean_grad(const Model& model, const EncodedData& d, DataPart part) {
  const std::size_t b = d.begin_of(part), e = d.end_of(part);
  if (e == b) throw InputError("full_grad: selected part is empty");
  Vector g(model.param_dim(), 0.0), gi(model.param_dim());
  for (std::size_t i = b; i < e; ++i) {
    const double f = model.value_and_grad_encoded(d.row(i), gi);
    axpy(f - d.y[i], gi, g);
  }
  const double inv = 1.0 / static_cast<double>(e - b);
  for (auto& v : g) v *= inv;
  return g;
}

/// Monte Carlo mean of 1/2 (f - y)^2 over an encoded sample, with standard error.
inline LossReport sample_loss(const Model& model, const EncodedData& sample, LossKind kind) {
  const std::size_t count = sample.size();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double r = model.predict_encoded(sample.row(i)) - sample.y[i];
    const double v = 0.5 * r * r;
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  const double var = count > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, count, std::sqrt(var / n), kind};
}

/// Fraction of rows with sign(f) != y.
inline double sample_zero_one(const Model& model, const EncodedData& sample) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = model.predict_encoded(sample.row(i));
    if ((f >= 0.0 ? 1.0 : -1.0) != sample.y[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(sample.size());
}

// ---------------------------------------------------------------------------
// Empirical losses on raw examples.
// ---------------------------------------------------------------------------

namespace detail {
inline double mean_half_sq(const Model& model, std::span<const Example> examples) {
  double s = 0.0;
  for (const auto& e : examples) {
    const double r = model.predict(e.x) - e.label;
    s += 0.5 * r * r;
  }
  return s / static_cast<double>(examples.size());
}
}  // namespace detail

/// (1/2m) sum |f(x_i^a) - y_i^a|^2
inline LossReport empirical_loss_clean(const Model& model, std::span<const Example> clean) {
  if (clean.empty()) throw InputError("empirical_loss_clean: empty sequence");
  for (const auto& e : clean)
    if (e.provenance != Provenance::clean) throw InputError("empirical_loss_clean: corrupted example");
  return {detail::mean_half_sq(model, clean), clean.size(), 0.0, LossKind::empirical_clean};
}

/// (1/2n) sum |f(x_i^b) - y_i^b|^2
inline LossReport empirical_loss_noisy(const Model& model, std::span<const Example> corrupted) {
  if (corrupted.empty()) throw InputError("empirical_loss_noisy: empty sequence");
  return {detail::mean_half_sq(model, corrupted), corrupted.size(), 0.0,
          LossKind::empirical_noisy};
}

/// (1 - gamma) L_a + gamma L_b with gamma = n / (m + n).
inline LossReport empirical_loss_mixed(const Model& model, const Dataset& ds) {
  ds.validate();
  const double g = gamma(ds);
  const double la = empirical_loss_clean(model, ds.clean).value;
  const double lb = ds.n() > 0 ? empirical_loss_noisy(model, ds.corrupted).value : 0.0;
  return {(1.0 - g) * la + g * lb, ds.size(), 0.0, LossKind::empirical_mixed};
}

// ---------------------------------------------------------------------------
// Population losses (seeded Monte Carlo).
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMinMonteCarlo = 100;
inline constexpr std::size_t kDefaultMonteCarlo = 100000;

/// E_x[1/2 |f(x) - y(x)|^2]
inline LossReport population_loss_clean(const Model& model, const Teacher& teacher,
                                        const DistributionSpec& dist, std::size_t n_mc,
                                        std::uint64_t seed) {
  if (n_mc < kMinMonteCarlo) throw ConfigError("population loss: n_mc must be >= 100");
  const auto sample = encode_population_sample(model, teacher, dist, n_mc, seed);
  return sample_loss(model, sample, LossKind::population_clean);
}

/// E_x[sign(f(x)) != y(x)]
inline double population_zero_one(const Model& model, const Teacher& teacher,
                                  const DistributionSpec& dist, std::size_t n_mc,
                                  std::uint64_t seed) {
  if (n_mc < kMinMonteCarlo) throw ConfigError("population loss: n_mc must be >= 100");
  return sample_zero_one(model, encode_population_sample(model, teacher, dist, n_mc, seed));
}

/// E_x[1/2 f(x)^2]
inline LossReport population_loss_noisy(const Model& model, const DistributionSpec& dist,
                                        std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < kMinMonteCarlo) throw ConfigError("population loss: n_mc must be >= 100");
  Rng rng(seed);
  Vector x(dist.input_dim);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    dist.draw(rng, x);
    const double f = model.predict(x);
    const double v = 0.5 * f * f;
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_mc);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, n_mc, std::sqrt(var / n), LossKind::population_noisy};
}

// ---------------------------------------------------------------------------
// Gradients.
// ---------------------------------------------------------------------------

/// g = (f(x; theta) - y) grad_theta f(x; theta)
inline Vector per_example_grad(const Model& model, const Example& example) {
  Vector g(model.param_dim());
  const double f = model.value_and_grad_encoded(model.encode(example.x), g);
  const double r = f - example.label;
  for (auto& v : g) v *= r;
  return g;
}

/// Mean per-example gradient over the selected part; `mixed` pools D_a and D_b.
inline Vector full_grad(const Model& model, const Dataset& ds, DataPart part) {
  const std::size_t b = part == DataPart::noisy ? ds.m() : 0;
  const std::size_t e = part == DataPart::clean ? ds.m() : ds.size();
  if (e == b) throw InputError("full_grad: selected part is empty");
  Vector g(model.param_dim(), 0.0);
  for (std::size_t i = b; i < e; ++i) axpy(1.0, per_example_grad(model, ds.at(i)), g);
  const double inv = 1.0 / static_cast<double>(e - b);
  for (auto& v : g) v *= inv;
  return g;
}

}  // namespace noisylab
