#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "noisylab/metrology.hpp"

using namespace noisylab;

namespace {

Model linear_identity(Vector theta) {
  Model m = make_model({}, FeatureMap::identity(theta.size()), 0);
  return with_theta(std::move(m), std::move(theta));
}

DistributionSpec gaussian(std::size_t d) { return {DistributionKind::standard_gaussian, d}; }

Teacher linear_teacher(std::size_t d, std::uint64_t seed) {
  TeacherSpec t;
  t.input_dim = d;
  return make_teacher(t, seed);
}

// Under a 1-D identity model with theta = 0 the residual is -y.
std::vector<Example> with_residuals(const Vector& residuals) {
  std::vector<Example> out;
  for (double r : residuals) out.push_back({{1.0}, -r, Provenance::clean});
  return out;
}

GradientFn quadratic(Vector diag) {
  return [diag](const Vector& th) {
    Vector g(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) g[i] = diag[i] * th[i];
    return g;
  };
}

}  // namespace

TEST(SupConstants, SquashedBound) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 30, 20, 2);
  ModelSpec s;
  s.squash_cap = 4.0;
  Model m = make_model(s, FeatureMap::identity(3), 1);
  TrainConfig c;
  c.eta = 0.5;
  c.snapshot_stride = 1;
  const auto tr = run_first_epoch(m, ds, c).trace;
  SupProbeOptions o;
  o.extra_probes = 50;
  o.probe_scale = 10.0;
  const auto rep = estimate_sup_constants(tr, m, ds, o);
  EXPECT_LE(rep.F_hat, 5.0);
  EXPECT_LE(rep.sigma2_hat, 4 * rep.G_hat * rep.G_hat);
  EXPECT_EQ(rep.n_probes, tr.snapshots.size() + 50);
}

TEST(SupConstants, ZeroModelOnSphere) {
  const Teacher t = linear_teacher(4, 1);
  const Dataset ds = build_dataset(t, {DistributionKind::uniform_sphere, 4}, 40, 10, 2);
  const Model m = linear_identity(Vector(4, 0.0));
  TrainTrace tr;
  tr.snapshots.push_back({});
  tr.snapshots.back().theta = m.theta;
  const auto rep = estimate_sup_constants(tr, m, ds);
  // G also takes ||f grad f|| + ||grad f|| = ||x|| = 1
  EXPECT_NEAR(rep.G_hat, 1.0, 1e-12);
  EXPECT_NEAR(rep.F_hat, 1.0, 1e-12);
  EXPECT_THROW(estimate_sup_constants(TrainTrace{}, m, ds), InputError);
}

TEST(SupConstants, MonotoneInProbes) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 20, 10, 2);
  const Model m = make_model({}, FeatureMap::identity(3), 1);
  TrainConfig c;
  c.eta = 0.1;
  const auto tr = run_first_epoch(m, ds, c).trace;
  SupProbeOptions a, b;
  a.extra_probes = 1000;
  b.extra_probes = 2000;  // same seed: the first 1000 probes coincide
  const auto ra = estimate_sup_constants(tr, m, ds, a), rb = estimate_sup_constants(tr, m, ds, b);
  EXPECT_LE(ra.G_hat, rb.G_hat);
  EXPECT_LE(ra.F_hat, rb.F_hat);
  EXPECT_LE(ra.sigma2_hat, rb.sigma2_hat);
}

TEST(Smoothness, DiagonalQuadratic) {
  SmoothnessOptions o;
  o.probes = 1000;
  const std::vector<Vector> anchors{{0.3, -0.2}};
  EXPECT_NEAR(estimate_smoothness(quadratic({1, 4}), anchors, o).L_hat, 4.0, 0.2);
  EXPECT_NEAR(estimate_smoothness(quadratic({1, 1}), anchors, o).L_hat, 1.0, 0.05);
}

TEST(Smoothness, RandomDirectionsOnly) {
  SmoothnessOptions o;
  o.probes = 1000;
  o.power_steps = 0;
  const std::vector<Vector> anchors{{0.0, 0.0}};
  EXPECT_NEAR(estimate_smoothness(quadratic({1, 4}), anchors, o).L_hat, 4.0, 0.2);
}

TEST(Smoothness, StepInvariantForQuadratics) {
  SmoothnessOptions a, b;
  a.probes = b.probes = 50;
  a.step = 1e-2;
  b.step = 1e-4;
  const std::vector<Vector> anchors{{1.0, 2.0, -1.0}};
  const auto ea = estimate_smoothness(quadratic({0.5, 2, 3}), anchors, a);
  const auto eb = estimate_smoothness(quadratic({0.5, 2, 3}), anchors, b);
  EXPECT_NEAR(ea.L_hat, eb.L_hat, 1e-6);
  EXPECT_NEAR(ea.L_hat, ea.L_hat_fine, 1e-6);
}

TEST(Smoothness, LinearModelMatchesDesignSpectrum) {
  // mixed loss of a linear identity model: Hessian = (1/N) X^T X
  const Teacher t = linear_teacher(3, 2);
  const Dataset ds = build_dataset(t, gaussian(3), 40, 20, 3);
  double M[3][3] = {};
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) M[a][b] += ds.at(i).x[a] * ds.at(i).x[b] / ds.size();
  Vector v{1, 1, 1};  // power iteration oracle
  double lambda = 0;
  for (int k = 0; k < 500; ++k) {
    Vector w(3, 0.0);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) w[a] += M[a][b] * v[b];
    lambda = norm(w);
    for (auto& x : w) x /= lambda;
    v = w;
  }
  SmoothnessOptions o;
  o.probes = 200;
  const Model m = make_model({}, FeatureMap::identity(3), 1);
  EXPECT_NEAR(estimate_smoothness(m, ds, {}, o).L_hat, lambda, 0.05 * lambda);
}

TEST(Smoothness, BadOptions) {
  SmoothnessOptions o;
  o.probes = 0;
  const std::vector<Vector> anchors{{1.0}};
  EXPECT_THROW(estimate_smoothness(quadratic({1}), anchors, o), InputError);
  o.probes = 1;
  o.step = 0;
  EXPECT_THROW(estimate_smoothness(quadratic({1}), anchors, o), InputError);
}

TEST(Pl, OneDimensionalQuadratic) {
  std::vector<double> l, g;
  for (double th : {-2.0, -0.5, 0.1, 3.0}) {
    l.push_back(0.5 * th * th);
    g.push_back(std::abs(th));
  }
  EXPECT_NEAR(estimate_pl(l, g), 1.0, 1e-15);
}

TEST(Pl, SinglePoint) {
  const std::vector<double> l{2.0}, g{2.0};
  EXPECT_EQ(estimate_pl(l, g), 1.0);
}

TEST(Pl, LeastSquaresSmallestEigenvalue) {
  // A = diag(1, 2), b = A theta*, A^T A = diag(1, 4)
  Rng r(4);
  std::vector<double> l, g;
  for (int k = 0; k < 1000; ++k) {
    const double e0 = r.normal(), e1 = r.normal();
    l.push_back(0.5 * (e0 * e0 + 4 * e1 * e1));
    g.push_back(std::hypot(e0, 4 * e1));
  }
  EXPECT_NEAR(estimate_pl(l, g), 1.0, 0.1);
  EXPECT_GE(estimate_pl(l, g), 1.0 - 1e-12);
}

TEST(Pl, Errors) {
  const std::vector<double> l{0.0, 1e-13}, g{1.0, 1.0}, g1{1.0};
  EXPECT_THROW(estimate_pl(l, g), EstimationUndefined);
  EXPECT_THROW(estimate_pl(l, g1), InputError);
}

TEST(Omega, SparseResiduals) {
  const auto o = compute_omega_spec(linear_identity({0.0}), with_residuals({1, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(o.r_hat, 0.5);
  EXPECT_DOUBLE_EQ(o.s, 0.25);
  EXPECT_DOUBLE_EQ(o.k_eff, 1.0);
  EXPECT_EQ(o.m, 4u);
}

TEST(Omega, DenseResiduals) {
  const auto o = compute_omega_spec(linear_identity({0.0}), with_residuals({1, -1, 1, 1}));
  EXPECT_DOUBLE_EQ(o.r_hat, 1.0);
  EXPECT_DOUBLE_EQ(o.s, 1.0);
  EXPECT_DOUBLE_EQ(o.k_eff, 4.0);
}

TEST(Omega, Degenerate) {
  EXPECT_THROW(compute_omega_spec(linear_identity({0.0}), with_residuals({0, 0})), DegenerateOmega);
  EXPECT_THROW(omega_membership(linear_identity({0.0}), with_residuals({1}), OmegaSpec{}), DegenerateOmega);
}

TEST(Omega, SIsAtMostOne) {
  Rng r(2);
  for (int k = 0; k < 200; ++k) {
    Vector res(1 + r.below(30));
    for (auto& v : res) v = r.below(3) ? 0.0 : r.normal();
    res[0] = 1.0;
    const auto o = compute_omega_spec(linear_identity({0.0}), with_residuals(res));
    EXPECT_LE(o.s, 1.0 + 1e-15);
    EXPECT_GT(o.k_eff, 0.0);
    EXPECT_LE(o.k_eff, static_cast<double>(res.size()) + 1e-12);
  }
}

TEST(Omega, Membership) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 50, 0, 2);
  Rng r(3);
  const Model m1 = linear_identity({r.normal(), r.normal(), r.normal()});
  const OmegaSpec spec = compute_omega_spec(m1, ds.clean);
  EXPECT_TRUE(omega_membership(m1, ds.clean, spec));
  EXPECT_TRUE(omega_membership(m1, encode_dataset(m1, ds), spec));
  // doubled residuals: f' - y = 2 (f - y)  <=>  f' = 2 f - y
  std::vector<Example> shifted = ds.clean;
  for (auto& e : shifted) e.label = 2 * e.label - m1.predict(e.x);
  EXPECT_FALSE(omega_membership(m1, shifted, spec));
  const Model perfect = linear_identity(t.weights);
  std::vector<Example> exact = ds.clean;
  for (auto& e : exact) e.label = perfect.predict(e.x);
  EXPECT_TRUE(omega_membership(perfect, exact, spec));
}

TEST(Gap, SameSampleIsZero) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 60, 30, 2);
  Rng r(3);
  const Model m = linear_identity({r.normal(), r.normal(), r.normal()});
  const EncodedData clean_only = [&] {
    EncodedData e = encode_dataset(m, ds);
    e.n = 0;
    e.z.resize(e.m * e.dim);
    e.y.resize(e.m);
    return e;
  }();
  const std::vector<Model> ms{m};
  const auto rep = gradient_gap_on_sample(ms, ds, DataPart::clean, clean_only, compute_omega_spec(m, ds.clean));
  EXPECT_LE(rep.max_gap, 1e-13);
}

TEST(Gap, LinearGaussianClosedForm) {
  // E[(theta^T x - sign(w^T x)) x] = theta - sqrt(2/pi) w for unit w
  const Teacher t = linear_teacher(4, 5);
  const Dataset ds = build_dataset(t, gaussian(4), 200, 0, 6);
  Rng r(7);
  Model m = linear_identity({0, 0, 0, 0});
  for (auto& v : m.theta) v = 0.3 * r.normal();
  Vector pop = m.theta;
  axpy(-std::sqrt(2 / std::numbers::pi), t.weights, pop);
  const Vector emp = full_grad(m, ds, DataPart::clean);
  const double oracle = norm(difference(pop, emp));
  const std::vector<Model> ms{m};
  const auto rep = gradient_gap(ms, ds, DataPart::clean, t, gaussian(4), 200000, 9, compute_omega_spec(m, ds.clean));
  EXPECT_LE(std::abs(rep.max_gap - oracle), 3 * rep.std_error);
  EXPECT_GT(rep.std_error, 0.0);
}

TEST(Gap, NoisySideGaussian) {
  // E[f grad f] = E[x x^T] theta = theta under the standard Gaussian
  const Teacher t = linear_teacher(3, 5);
  const Dataset ds = build_dataset(t, gaussian(3), 10, 150, 6);
  Model m = linear_identity({0.5, -0.2, 0.1});
  const Vector emp = full_grad(m, ds, DataPart::noisy);
  const double oracle = norm(difference(m.theta, emp));
  const std::vector<Model> ms{m};
  const auto rep = gradient_gap(ms, ds, DataPart::noisy, t, gaussian(3), 200000, 9);
  EXPECT_LE(std::abs(rep.max_gap - oracle), 3 * rep.std_error);
}

TEST(Gap, MaxMonotone) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 80, 0, 2);
  const Model a = linear_identity({0.2, 0.1, 0.3});
  const OmegaSpec spec = compute_omega_spec(a, ds.clean);
  Model b = a;  // a short clean-gradient step shrinks the residuals
  axpy(-0.01, full_grad(a, ds, DataPart::clean), b.theta);
  ASSERT_TRUE(omega_membership(b, ds.clean, spec));
  const std::vector<Model> one{a}, two{a, b};
  const auto r1 = gradient_gap(one, ds, DataPart::clean, t, gaussian(3), 10000, 4, spec);
  const auto r2 = gradient_gap(two, ds, DataPart::clean, t, gaussian(3), 10000, 4, spec);
  EXPECT_LE(r1.max_gap, r2.max_gap);
  EXPECT_EQ(r2.gaps.size(), 2u);
}

TEST(Gap, Preconditions) {
  const Teacher t = linear_teacher(3, 1);
  const Dataset ds = build_dataset(t, gaussian(3), 40, 0, 2);
  const Model a = linear_identity({0.2, 0.1, 0.3});
  const OmegaSpec spec = compute_omega_spec(a, ds.clean);
  Model far = a;
  for (auto& v : far.theta) v *= 10;
  const std::vector<Model> ms{far}, ok{a};
  EXPECT_THROW(gradient_gap(ms, ds, DataPart::clean, t, gaussian(3), 10000, 1, spec), PreconditionError);
  EXPECT_THROW(gradient_gap(ok, ds, DataPart::clean, t, gaussian(3), 10000, 1), PreconditionError);
  EXPECT_THROW(gradient_gap(ok, ds, DataPart::clean, t, gaussian(3), 9999, 1, spec), ConfigError);
  EXPECT_THROW(gradient_gap(ok, ds, DataPart::mixed, t, gaussian(3), 10000, 1, spec), InputError);
}

TEST(MeasureConstants, ConsistentReport) {
  const Teacher t = linear_teacher(5, 1);
  const Dataset ds = build_dataset(t, gaussian(5), 200, 100, 2);
  const Model m = make_model({}, FeatureMap::identity(5), 3);
  TrainConfig c;
  c.eta = 0.02;
  c.epochs = 2;
  c.snapshot_stride = 25;
  const auto tr = train(m, ds, c);
  MeasureOptions o;
  o.max_snapshots = 8;
  const auto rep = measure_constants(tr, m, ds, o);
  EXPECT_EQ(rep.tau, std::min(2 * rep.mu_a, 2 * rep.mu_b));
  EXPECT_GE(rep.mu_a, 0.0);
  EXPECT_GE(rep.mu_b, 0.0);
  EXPECT_LE(rep.sigma2_hat, 4 * rep.G_hat * rep.G_hat);
  EXPECT_EQ(rep.loss_at_theta0, tr.snapshots.front().emp_mixed);
  EXPECT_GT(rep.loss_at_theta1, 0.0);
  EXPECT_GT(rep.L_hat, 0.0);
  const auto back = constants_from_json(to_json(rep));
  EXPECT_EQ(back.tau, rep.tau);
  EXPECT_EQ(back.G_hat, rep.G_hat);
}
