#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "noisylab/models.hpp"

using namespace noisylab;

namespace {

Model linear_identity(Vector theta) {
  Model m = make_model({}, FeatureMap::identity(theta.size()), 0);
  return with_theta(std::move(m), std::move(theta));
}

Model random_model(Rng& rng, bool two_layer, bool squash) {
  const std::size_t d = 1 + rng.below(5);
  FeatureMap f = rng.below(2) ? FeatureMap::identity(d)
                              : FeatureMap::random_fourier(d, 3 + rng.below(8), 0.8, rng.next());
  ModelSpec spec;
  spec.family = two_layer ? ModelFamily::two_layer_tanh : ModelFamily::linear_features;
  spec.hidden = 2 + rng.below(6);
  spec.squash_cap = squash ? 1.5 : 0.0;
  Model m = make_model(spec, std::move(f), rng.next());
  for (auto& v : m.theta) v = rng.normal();
  return m;
}

Vector fd_grad(const Model& model, const Vector& x, double h) {
  Model probe = model;
  Vector g(model.param_dim());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double keep = probe.theta[k];
    probe.theta[k] = keep + h;
    const double up = probe.predict(x);
    probe.theta[k] = keep - h;
    const double down = probe.predict(x);
    probe.theta[k] = keep;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Predict, ZeroParametersGiveZero) {
  const Model m = linear_identity({0.0, 0.0, 0.0});
  Rng r(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(m.predict(Vector{r.normal(), r.normal(), r.normal()}), 0.0);
}

TEST(Predict, LinearDotProduct) { EXPECT_EQ(linear_identity({1, 2}).predict(Vector{3, 4}), 11.0); }

TEST(Predict, DimensionMismatch) {
  const Model m = linear_identity({1, 2});
  EXPECT_THROW(m.predict(Vector{1, 2, 3}), InputError);
  EXPECT_THROW(m.grad_theta(Vector{1}), InputError);
}

TEST(Predict, SquashSaturates) {
  Model m = linear_identity({1e6});
  m.squash_cap = 2.0;
  const double f = m.predict(Vector{1.0});
  EXPECT_GT(f, 1.999999);
  EXPECT_LE(f, 2.0);
}

TEST(Predict, SquashBoundHolds) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    Model m = random_model(r, r.below(2), true);
    for (auto& v : m.theta) v *= 50.0;
    Vector x(m.input_dim());
    for (auto& v : x) v = 10.0 * r.normal();
    EXPECT_LE(std::abs(m.predict(x)), m.squash_cap);
  }
}

TEST(Predict, ParamDims) {
  ModelSpec s;
  s.family = ModelFamily::two_layer_tanh;
  s.hidden = 4;
  EXPECT_EQ(make_model(s, FeatureMap::identity(3), 0).theta.size(), 4u * 3 + 8);
  EXPECT_EQ(make_model({}, FeatureMap::random_fourier(3, 10, 1.0, 1), 0).theta.size(), 10u);
  s.hidden = 0;
  EXPECT_THROW(make_model(s, FeatureMap::identity(3), 0), ConfigError);
  EXPECT_THROW(with_theta(make_model({}, FeatureMap::identity(3), 0), {1.0}), InputError);
}

TEST(Predict, InitScale) {
  const Model m = make_model({}, FeatureMap::identity(400), 9);
  double s2 = 0;
  for (double v : m.theta) s2 += v * v;
  // per-entry std 0.1 / sqrt(400) = 0.005
  EXPECT_NEAR(std::sqrt(s2 / 400), 0.005, 0.0006);
}

TEST(GradTheta, LinearIsInput) {
  const Model m = linear_identity({0.3, -2});
  EXPECT_EQ(m.grad_theta(Vector{1.5, -4}), (Vector{1.5, -4}));
}

TEST(GradTheta, ZeroSecondLayerKillsFirstLayer) {
  ModelSpec s;
  s.family = ModelFamily::two_layer_tanh;
  s.hidden = 3;
  Model m = make_model(s, FeatureMap::identity(2), 0);
  m.theta.assign(m.param_dim(), 0.0);
  const Vector g = m.grad_theta(Vector{0.7, -1.1});
  for (std::size_t k = 0; k < 3 * 2 + 3; ++k) EXPECT_EQ(g[k], 0.0);
}

TEST(GradTheta, MatchesFiniteDifferences) {
  Rng r(11);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const Model m = random_model(r, i % 2, i % 3 == 0);
    Vector x(m.input_dim());
    for (auto& v : x) v = r.normal();
    worst = std::max(worst, relative_error(m.grad_theta(x), fd_grad(m, x, 1e-5)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(GradTheta, Pure) {
  Rng r(5);
  const Model m = random_model(r, true, true);
  Vector x(m.input_dim(), 0.4);
  EXPECT_EQ(m.predict(x), m.predict(x));
  EXPECT_EQ(m.grad_theta(x), m.grad_theta(x));
}

TEST(GradTheta, EncodedPathAgrees) {
  Rng r(6);
  const Model m = random_model(r, true, false);
  Vector x(m.input_dim(), -0.3), g(m.param_dim());
  const double f = m.value_and_grad_encoded(m.encode(x), g);
  EXPECT_EQ(f, m.predict(x));
  EXPECT_EQ(g, m.grad_theta(x));
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "noisylab_ckpt";
  std::filesystem::create_directories(dir);
  Rng r(8);
  for (bool binary : {false, true}) {
    ModelSpec s;
    s.family = ModelFamily::two_layer_tanh;
    s.hidden = 5;
    s.squash_cap = 4.0;
    Model m = make_model(s, FeatureMap::random_fourier(3, 7, 0.6, 4), 12);
    for (auto& v : m.theta) v = r.normal() / 3.0;
    const std::string path = (dir / (binary ? "b.json" : "t.json")).string();
    write_checkpoint(path, m, binary);
    const Model back = read_checkpoint(path);
    EXPECT_EQ(back.theta, m.theta);
    EXPECT_EQ(back.family, m.family);
    EXPECT_EQ(back.hidden, 5u);
    EXPECT_EQ(back.squash_cap, 4.0);
    EXPECT_EQ(back.seed, 12u);
    const Vector x{0.1, -0.2, 0.9};
    EXPECT_EQ(back.predict(x), m.predict(x));
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, LittleEndianBytes) {
  const std::string b = encode_le_doubles(Vector{1.0});
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(b[7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 0xF0);
  EXPECT_EQ(b[0], 0);
  EXPECT_THROW(decode_le_doubles("abc"), InputError);
}

TEST(Family, ParseNames) {
  EXPECT_EQ(parse_model_family("two-layer-tanh"), ModelFamily::two_layer_tanh);
  EXPECT_EQ(to_string(parse_model_family("linear-features")), "linear-features");
  EXPECT_THROW(parse_model_family("cnn"), ConfigError);
}
