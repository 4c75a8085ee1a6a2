#pragma once

// Predictor families f(x; theta) with hand-derived parameter gradients.
//
//   linear-features : f = theta^T z(x)
//   two-layer-tanh  : f = sum_j a_j tanh(v_j^T z(x) + c_j),
//                     theta = [V (hidden x p, row-major) | c (hidden) | a (hidden)]
//
// z(x) is a FeatureMap (identity or random Fourier). An optional output squash
// replaces the raw output r by F_cap * tanh(r / F_cap), so |f| <= F_cap.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "noisylab/core.hpp"
#include "noisylab/synthgen.hpp"

namespace noisylab {

enum class ModelFamily { linear_features, two_layer_tanh };

inline std::string to_string(ModelFamily f) {
  return f == ModelFamily::linear_features ? "linear-features" : "two-layer-tanh";
}

inline ModelFamily parse_model_family(const std::string& s) {
  if (s == "linear-features") return ModelFamily::linear_features;
  if (s == "two-layer-tanh") return ModelFamily::two_layer_tanh;
  throw ConfigError("unknown model family '" + s + "'");
}

struct Model {
  ModelFamily family = ModelFamily::linear_features;
  FeatureMap features;
  std::size_t hidden = 32;  // two_layer_tanh only
  double squash_cap = 0.0;  // <= 0 disables the squash
  std::uint64_t seed = 0;
  Vector theta;

  std::size_t input_dim() const { return features.input_dim; }
  std::size_t feature_dim() const { return features.output_dim(); }

  static std::size_t param_dim_for(ModelFamily family, std::size_t p, std::size_t hidden) {
    return family == ModelFamily::linear_features ? p : hidden * p + 2 * hidden;
  }
  std::size_t param_dim() const { return param_dim_for(family, feature_dim(), hidden); }

  bool squashed() const { return squash_cap > 0.0; }

  Vector encode(std::span<const double> x) const {
    if (x.size() != input_dim()) throw InputError("model: input dimension mismatch");
    return features(x);
  }

  /// Output for an already-encoded input z = features(x).
  double predict_encoded(std::span<const double> z) const {
    const double raw = raw_output(z);
    return squashed() ? squash_cap * std::tanh(raw / squash_cap) : raw;
  }

  /// Output for an encoded input; writes grad_theta f into `grad`.
  double value_and_grad_encoded(std::span<const double> z, std::span<double> grad) const {
    const std::size_t p = z.size();
    double raw = 0.0;
    if (family == ModelFamily::linear_features) {
      raw = dot(theta, z);
      std::copy(z.begin(), z.end(), grad.begin());
    } else {
      const std::size_t h = hidden;
      const double* c = theta.data() + h * p;
      const double* a = c + h;
      for (std::size_t j = 0; j < h; ++j) {
        const std::span<const double> row(theta.data() + j * p, p);
        const double act = std::tanh(dot(row, z) + c[j]);
        raw += a[j] * act;
        const double back = a[j] * (1.0 - act * act);
        for (std::size_t k = 0; k < p; ++k) grad[j * p + k] = back * z[k];
        grad[h * p + j] = back;
        grad[h * p + h + j] = act;
      }
    }
    if (!squashed()) return raw;
    const double t = std::tanh(raw / squash_cap);
    const double chain = 1.0 - t * t;
    for (auto& g : grad) g *= chain;
    return squash_cap * t;
  }

  double predict(std::span<const double> x) const { return predict_encoded(encode(x)); }

  Vector grad_theta(std::span<const double> x) const {
    Vector g(param_dim());
    value_and_grad_encoded(encode(x), g);
    return g;
  }

 private:
  double raw_output(std::span<const double> z) const {
    if (family == ModelFamily::linear_features) return dot(theta, z);
    const std::size_t p = z.size();
    const std::size_t h = hidden;
    const double* c = theta.data() + h * p;
    const double* a = c + h;
    double raw = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const std::span<const double> row(theta.data() + j * p, p);
      raw += a[j] * std::tanh(dot(row, z) + c[j]);
    }
    return raw;
  }
};

struct ModelSpec {
  ModelFamily family = ModelFamily::linear_features;
  std::size_t hidden = 32;
  double squash_cap = 0.0;
};

/// theta_0 with N(0, (0.1 / sqrt(fan_in))^2) entries.
inline Model make_model(const ModelSpec& spec, FeatureMap features, std::uint64_t seed) {
  if (spec.family == ModelFamily::two_layer_tanh && spec.hidden == 0)
    throw ConfigError("model: two-layer-tanh needs hidden >= 1");
  Model m;
  m.family = spec.family;
  m.features = std::move(features);
  m.hidden = spec.hidden;
  m.squash_cap = spec.squash_cap;
  m.seed = seed;
  m.theta.assign(m.param_dim(), 0.0);
  Rng rng(seed);
  const std::size_t p = m.feature_dim();
  const double first = 0.1 / std::sqrt(static_cast<double>(p));
  if (m.family == ModelFamily::linear_features) {
    for (auto& v : m.theta) v = first * rng.normal();
  } else {
    const std::size_t h = m.hidden;
    const double second = 0.1 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < h * p + h; ++i) m.theta[i] = first * rng.normal();
    for (std::size_t i = h * p + h; i < m.theta.size(); ++i) m.theta[i] = second * rng.normal();
  }
  return m;
}

inline Model with_theta(Model m, Vector theta) {
  if (theta.size() != m.param_dim()) throw InputError("model: parameter length mismatch");
  m.theta = std::move(theta);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header plus parameters, either inline or as a binary
// sidecar of little-endian float64 values.
// ---------------------------------------------------------------------------

inline nlohmann::json feature_map_json(const FeatureMap& f) {
  nlohmann::json j = {{"kind", to_string(f.kind)}, {"input_dim", f.input_dim}};
  if (f.kind == FeatureKind::random_fourier) {
    j["num_features"] = f.num_features;
    j["bandwidth"] = f.bandwidth;
    j["frequencies"] = f.frequencies;
    j["phases"] = f.phases;
  }
  return j;
}

inline FeatureMap feature_map_from_json(const nlohmann::json& j) {
  FeatureMap f;
  f.kind = parse_feature_kind(j.at("kind").get<std::string>());
  f.input_dim = j.at("input_dim").get<std::size_t>();
  if (f.kind == FeatureKind::random_fourier) {
    f.num_features = j.at("num_features").get<std::size_t>();
    f.bandwidth = j.at("bandwidth").get<double>();
    f.frequencies = j.at("frequencies").get<Vector>();
    f.phases = j.at("phases").get<Vector>();
    if (f.frequencies.size() != f.num_features * f.input_dim || f.phases.size() != f.num_features)
      throw InputError("checkpoint: inconsistent feature map arrays");
  }
  return f;
}

inline nlohmann::json checkpoint_header(const Model& m) {
  return {{"family", to_string(m.family)},
          {"input_dim", m.input_dim()},
          {"feature_dim", m.feature_dim()},
          {"hidden", m.hidden},
          {"param_dim", m.param_dim()},
          {"squash_cap", m.squash_cap},
          {"seed", m.seed},
          {"features", feature_map_json(m.features)}};
}

inline std::string encode_le_doubles(std::span<const double> values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

inline Vector decode_le_doubles(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw InputError("checkpoint: binary payload not a multiple of 8 bytes");
  Vector out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

/// Writes `<path>` (JSON). Parameters go inline unless `binary` is set, in
/// which case they go to `<path>.bin`.
inline void write_checkpoint(const std::string& path, const Model& m, bool binary = false) {
  nlohmann::json j = checkpoint_header(m);
  if (binary) {
    j["params_file"] = path + ".bin";
    write_text_file(path + ".bin", encode_le_doubles(m.theta));
  } else {
    j["params"] = m.theta;
  }
  write_text_file(path, j.dump(2) + "\n");
}

inline Model read_checkpoint(const std::string& path) {
  const auto j = nlohmann::json::parse(read_text_file(path));
  Model m;
  m.family = parse_model_family(j.at("family").get<std::string>());
  m.hidden = j.at("hidden").get<std::size_t>();
  m.squash_cap = j.at("squash_cap").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.features = feature_map_from_json(j.at("features"));
  Vector theta = j.contains("params") ? j.at("params").get<Vector>()
                                      : decode_le_doubles(read_text_file(j.at("params_file")));
  return with_theta(std::move(m), std::move(theta));
}

}  // namespace noisylab
