#pragma once

// Empirical estimation of the regularity constants (F, G, L, mu, sigma^2),
// the residual region Omega(r_hat, s) fixed at theta_1, and the gap between
// population and empirical gradients.
//
// Every estimate is probe-based and restricted to what training visited; the
// reports record probe counts so callers can tighten them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisylab/constants.hpp"
#include "noisylab/core.hpp"
#include "noisylab/objective.hpp"
#include "noisylab/trainer.hpp"

namespace noisylab {

// ---------------------------------------------------------------------------
// Sup-norm constants over (theta, example) pairs.
// ---------------------------------------------------------------------------

struct SupProbeOptions {
  std::size_t extra_probes = 0;
  double probe_scale = 0.05;  // per-coordinate std of the perturbation
  std::uint64_t seed = 0;
};

namespace detail {

struct SupAccumulator {
  double F = 0.0, G = 0.0, sigma2 = 0.0;

  void visit(const Model& model, const EncodedData& data) {
    const std::size_t P = model.param_dim();
    Vector grad(P), mean(P, 0.0);
    // pass 1: value bounds and the full mixed gradient
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double f = model.value_and_grad_encoded(data.row(i), grad);
      const double r = f - data.y[i];
      const double gn = norm(grad);
      F = std::max({F, std::abs(f), std::abs(r)});
      G = std::max({G, std::abs(r) * gn, std::abs(f) * gn + gn});
      axpy(r, grad, mean);
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& v : mean) v *= inv;
    const double mean_sq = dot(mean, mean);
    // pass 2: ||g_i - mean||^2
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double f = model.value_and_grad_encoded(data.row(i), grad);
      const double r = f - data.y[i];
      const double d2 = r * r * dot(grad, grad) - 2.0 * r * dot(grad, mean) + mean_sq;
      sigma2 = std::max(sigma2, d2);
    }
  }
};

}  // namespace detail

/// F_hat, G_hat and sigma2_hat over every snapshot theta of `trace` plus
/// `extra_probes` Gaussian perturbations of randomly chosen snapshots.
/// `model` supplies the architecture; its own theta is not used.
inline ConstantsReport estimate_sup_constants(const TrainTrace& trace, const Model& model,
                                              const Dataset& ds, const SupProbeOptions& opt = {}) {
  if (trace.snapshots.empty()) throw InputError("estimate_sup_constants: empty trace");
  const EncodedData data = encode_dataset(model, ds);
  detail::SupAccumulator acc;
  Model probe = model;
  for (const auto& s : trace.snapshots) {
    probe.theta = s.theta;
    acc.visit(probe, data);
  }
  Rng rng(derive_seed(opt.seed, {0x5C9}));
  for (std::size_t k = 0; k < opt.extra_probes; ++k) {
    probe.theta = trace.snapshots[rng.below(trace.snapshots.size())].theta;
    for (auto& v : probe.theta) v += opt.probe_scale * rng.normal();
    acc.visit(probe, data);
  }
  ConstantsReport c;
  c.F_hat = acc.F;
  c.G_hat = acc.G;
  c.sigma2_hat = acc.sigma2;
  c.n_probes = trace.snapshots.size() + opt.extra_probes;
  return c;
}

// ---------------------------------------------------------------------------
// Smoothness.
// ---------------------------------------------------------------------------

using GradientFn = std::function<Vector(const Vector&)>;

struct SmoothnessOptions {
  std::size_t probes = 32;
  double step = 1e-3;
  // Each random direction is refined by this many power-iteration probes
  // u <- (grad(theta + eps u) - grad(theta)) / ||...||, which converges to the
  // top curvature direction. 0 gives purely random directions.
  std::size_t power_steps = 4;
  double anchor_jitter = 0.0;  // per-coordinate std added to each anchor
  std::uint64_t seed = 0;
};

struct SmoothnessEstimate {
  double L_hat = 0.0;
  double L_hat_fine = 0.0;  // same best direction at step / 10 (Richardson cross-check)
  std::size_t probes = 0;
};

inline nlohmann::json to_json(const SmoothnessEstimate& s) {
  return {{"L_hat", s.L_hat}, {"L_hat_fine", s.L_hat_fine}, {"probes", s.probes}};
}

/// max over probes of ||grad(theta + eps u) - grad(theta)|| / eps, unit u,
/// theta drawn from `anchors`.
inline SmoothnessEstimate estimate_smoothness(const GradientFn& grad, std::span<const Vector> anchors,
                                              const SmoothnessOptions& opt) {
  if (opt.probes == 0) throw InputError("estimate_smoothness: probes must be >= 1");
  if (!(opt.step > 0.0)) throw InputError("estimate_smoothness: step must be > 0");
  if (anchors.empty()) throw InputError("estimate_smoothness: no anchor points");
  Rng rng(derive_seed(opt.seed, {0x5300}));
  const std::size_t P = anchors.front().size();
  SmoothnessEstimate est;
  Vector theta, base, u(P), best_theta, best_u;
  for (std::size_t k = 0; k < opt.probes; ++k) {
    if (k % (opt.power_steps + 1) == 0) {
      theta = anchors[rng.below(anchors.size())];
      for (auto& v : theta) v += opt.anchor_jitter * rng.normal();
      base = grad(theta);
      for (auto& v : u) v = rng.normal();
      const double r = norm(u);
      for (auto& v : u) v /= r;
    }
    Vector moved = theta;
    axpy(opt.step, u, moved);
    Vector diff = difference(grad(moved), base);
    const double dn = norm(diff);
    const double ratio = dn / opt.step;
    if (ratio > est.L_hat || best_u.empty()) {
      est.L_hat = ratio;
      best_theta = theta;
      best_u = u;
    }
    if (dn > 0.0) {
      for (std::size_t i = 0; i < P; ++i) u[i] = diff[i] / dn;
    }
  }
  est.probes = opt.probes;
  const double fine = opt.step / 10.0;
  Vector moved = best_theta;
  axpy(fine, best_u, moved);
  est.L_hat_fine = norm(difference(grad(moved), grad(best_theta))) / fine;
  return est;
}

/// Smoothness of the empirical mixed loss around the given parameter vectors.
inline SmoothnessEstimate estimate_smoothness(const Model& model, const Dataset& ds,
                                              std::span<const Vector> anchors,
                                              const SmoothnessOptions& opt) {
  const EncodedData data = encode_dataset(model, ds);
  Model probe = model;
  const GradientFn grad = [&](const Vector& theta) {
    probe.theta = theta;
    return mean_grad(probe, data, DataPart::mixed);
  };
  if (anchors.empty()) {
    const std::vector<Vector> own{model.theta};
    return estimate_smoothness(grad, own, opt);
  }
  return estimate_smoothness(grad, anchors, opt);
}

// ---------------------------------------------------------------------------
// Polyak-Lojasiewicz constant along a trajectory.
// ---------------------------------------------------------------------------

/// min over points of ||grad||^2 / (2 (loss - loss_min)); points within 1e-12
/// of the minimum are skipped.
inline double estimate_pl(std::span<const double> loss_values, std::span<const double> grad_norms,
                          double loss_min = 0.0) {
  if (loss_values.size() != grad_norms.size())
    throw InputError("estimate_pl: loss and gradient sequences differ in length");
  double mu = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < loss_values.size(); ++i) {
    const double gap = loss_values[i] - loss_min;
    if (!(gap > 1e-12) || !std::isfinite(grad_norms[i])) continue;
    mu = std::min(mu, grad_norms[i] * grad_norms[i] / (2.0 * gap));
    any = true;
  }
  if (!any) throw EstimationUndefined("estimate_pl: no point strictly above the minimum");
  return mu;
}

// ---------------------------------------------------------------------------
// Omega(r_hat, s).
// ---------------------------------------------------------------------------

struct ResidualMoments {
  double mean_sq = 0.0;
  double mean_abs = 0.0;
};

inline ResidualMoments clean_residual_moments(const Model& model, const EncodedData& data) {
  if (data.m == 0) throw InputError("omega: no clean examples");
  ResidualMoments r;
  for (std::size_t i = 0; i < data.m; ++i) {
    const double e = model.predict_encoded(data.row(i)) - data.y[i];
    r.mean_sq += e * e;
    r.mean_abs += std::abs(e);
  }
  r.mean_sq /= static_cast<double>(data.m);
  r.mean_abs /= static_cast<double>(data.m);
  return r;
}

inline ResidualMoments clean_residual_moments(const Model& model, std::span<const Example> clean) {
  if (clean.empty()) throw InputError("omega: no clean examples");
  ResidualMoments r;
  for (const auto& ex : clean) {
    const double e = model.predict(ex.x) - ex.label;
    r.mean_sq += e * e;
    r.mean_abs += std::abs(e);
  }
  r.mean_sq /= static_cast<double>(clean.size());
  r.mean_abs /= static_cast<double>(clean.size());
  return r;
}

inline OmegaSpec omega_from_moments(const ResidualMoments& r, std::size_t m) {
  if (!(r.mean_sq > 0.0)) throw DegenerateOmega("omega: all clean residuals are zero");
  OmegaSpec o;
  o.r_hat = std::sqrt(r.mean_sq);
  const double root_s = r.mean_abs / o.r_hat;
  o.s = root_s * root_s;
  o.m = m;
  o.k_eff = static_cast<double>(m) * o.s;
  return o;
}

inline OmegaSpec compute_omega_spec(const Model& theta1_model, std::span<const Example> clean) {
  return omega_from_moments(clean_residual_moments(theta1_model, clean), clean.size());
}

inline OmegaSpec compute_omega_spec(const Model& theta1_model, const EncodedData& data) {
  return omega_from_moments(clean_residual_moments(theta1_model, data), data.m);
}

inline bool omega_contains(const ResidualMoments& r, const OmegaSpec& spec) {
  if (!(spec.r_hat > 0.0)) throw DegenerateOmega("omega_membership: degenerate spec");
  const auto le = [](double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); };
  return le(r.mean_sq, spec.r_hat * spec.r_hat) && le(r.mean_abs, spec.mean_abs_radius());
}

inline bool omega_membership(const Model& model, std::span<const Example> clean, const OmegaSpec& spec) {
  return omega_contains(clean_residual_moments(model, clean), spec);
}

inline bool omega_membership(const Model& model, const EncodedData& data, const OmegaSpec& spec) {
  return omega_contains(clean_residual_moments(model, data), spec);
}

// ---------------------------------------------------------------------------
// Population-vs-empirical gradient gap.
// ---------------------------------------------------------------------------

struct PopulationGradient {
  Vector mean;
  Vector std_error;  // per component
};

/// Monte Carlo estimate of grad L_a (clean: E[(f - y(x)) grad f]) or grad L_b
/// (noisy: E[f grad f]) over an encoded population sample.
inline PopulationGradient population_grad(const Model& model, const EncodedData& sample, DataPart part) {
  if (part == DataPart::mixed) throw InputError("population_grad: choose clean or noisy");
  const std::size_t P = model.param_dim();
  Vector grad(P), sum(P, 0.0), sum_sq(P, 0.0);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = model.value_and_grad_encoded(sample.row(i), grad);
    const double w = part == DataPart::clean ? f - sample.y[i] : f;
    for (std::size_t k = 0; k < P; ++k) {
      const double v = w * grad[k];
      sum[k] += v;
      sum_sq[k] += v * v;
    }
  }
  const double n = static_cast<double>(sample.size());
  PopulationGradient out{Vector(P), Vector(P)};
  for (std::size_t k = 0; k < P; ++k) {
    out.mean[k] = sum[k] / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq[k] - n * out.mean[k] * out.mean[k]) / (n - 1.0)) : 0.0;
    out.std_error[k] = std::sqrt(var / n);
  }
  return out;
}

struct GapReport {
  double max_gap = 0.0;
  double std_error = 0.0;  // delta-method MC error of the maximizing gap
  double mc_noise = 0.0;   // sqrt(sum of squared per-component MC errors)
  std::size_t argmax = 0;
  std::vector<double> gaps;
};

inline nlohmann::json to_json(const GapReport& g) {
  return {{"max_gap", g.max_gap}, {"std_error", g.std_error}, {"mc_noise", g.mc_noise},
          {"argmax", g.argmax}, {"gaps", g.gaps}};
}

/// Gap against an explicit population sample (encoded with the models' feature map).
/// Passing the clean training data itself as the sample gives a zero clean gap.
inline GapReport gradient_gap_on_sample(std::span<const Model> models, const Dataset& ds, DataPart part,
                                        const EncodedData& sample,
                                        const std::optional<OmegaSpec>& omega = std::nullopt) {
  if (models.empty()) throw InputError("gradient_gap: no models");
  if (part == DataPart::mixed) throw InputError("gradient_gap: choose clean or noisy");
  const EncodedData data = encode_dataset(models.front(), ds);
  if (part == DataPart::clean) {
    if (!omega) throw PreconditionError("gradient_gap: clean gap needs the Omega spec");
    for (const auto& m : models)
      if (!omega_membership(m, data, *omega))
        throw PreconditionError("gradient_gap: a model lies outside Omega(r_hat, s)");
  }
  GapReport rep;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const PopulationGradient pop = population_grad(models[k], sample, part);
    const Vector emp = mean_grad(models[k], data, part);
    const Vector diff = difference(pop.mean, emp);
    const double gap = norm(diff);
    rep.gaps.push_back(gap);
    if (k == 0 || gap > rep.max_gap) {
      rep.max_gap = gap;
      rep.argmax = k;
      double se2 = 0.0, noise2 = 0.0;
      for (std::size_t i = 0; i < diff.size(); ++i) {
        noise2 += pop.std_error[i] * pop.std_error[i];
        if (gap > 0.0) se2 += (diff[i] / gap) * (diff[i] / gap) * pop.std_error[i] * pop.std_error[i];
      }
      rep.std_error = std::sqrt(se2);
      rep.mc_noise = std::sqrt(noise2);
    }
  }
  return rep;
}

inline constexpr std::size_t kMinGapMonteCarlo = 10000;

/// max over models of ||grad L_part - grad L_hat_part||, population gradient by
/// Monte Carlo on n_mc fresh draws.
inline GapReport gradient_gap(std::span<const Model> models, const Dataset& ds, DataPart part,
                              const Teacher& teacher, const DistributionSpec& dist, std::size_t n_mc,
                              std::uint64_t seed, const std::optional<OmegaSpec>& omega = std::nullopt) {
  if (n_mc < kMinGapMonteCarlo) throw ConfigError("gradient_gap: n_mc must be >= 10^4");
  if (models.empty()) throw InputError("gradient_gap: no models");
  const EncodedData sample = encode_population_sample(models.front(), teacher, dist, n_mc, seed);
  return gradient_gap_on_sample(models, ds, part, sample, omega);
}

// ---------------------------------------------------------------------------
// Convenience: everything the bounds need, from one training trace.
// ---------------------------------------------------------------------------

struct MeasureOptions {
  SupProbeOptions sup;
  SmoothnessOptions smooth;
  std::size_t max_snapshots = 64;  // thinning for the O(N P) per-theta passes
};

/// PL estimates from the empirical clean / noisy losses along the trace
/// (minimum values taken as 0), sup constants, smoothness and L(theta_0), L(theta_1).
inline ConstantsReport measure_constants(const TrainTrace& trace, const Model& model, const Dataset& ds,
                                         const MeasureOptions& opt = {}) {
  if (trace.snapshots.empty()) throw InputError("measure_constants: empty trace");
  TrainTrace thin;
  thin.config = trace.config;
  const std::size_t stride = std::max<std::size_t>(1, (trace.snapshots.size() + opt.max_snapshots - 1) /
                                                          std::max<std::size_t>(1, opt.max_snapshots));
  for (std::size_t i = 0; i < trace.snapshots.size(); i += stride) thin.snapshots.push_back(trace.snapshots[i]);
  if (thin.snapshots.back().iteration != trace.snapshots.back().iteration)
    thin.snapshots.push_back(trace.snapshots.back());

  ConstantsReport c = estimate_sup_constants(thin, model, ds, opt.sup);
  std::vector<Vector> anchors;
  for (const auto& s : thin.snapshots) anchors.push_back(s.theta);
  c.L_hat = estimate_smoothness(model, ds, anchors, opt.smooth).L_hat;

  std::vector<double> la, ga, lb, gb;
  for (const auto& s : trace.snapshots) {
    la.push_back(s.emp_clean);
    ga.push_back(s.grad_norm_clean);
    lb.push_back(s.emp_noisy);
    gb.push_back(s.grad_norm_noisy);
  }
  const auto pl_or_nan = [](std::span<const double> l, std::span<const double> g) {
    try {
      return estimate_pl(l, g, 0.0);
    } catch (const EstimationUndefined&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  c.set_pl(pl_or_nan(la, ga), ds.n() > 0 ? pl_or_nan(lb, gb) : std::numeric_limits<double>::quiet_NaN());
  c.loss_at_theta0 = trace.snapshots.front().emp_mixed;
  const std::size_t total = ds.size();
  for (const auto& s : trace.snapshots)
    if (s.iteration == total) c.loss_at_theta1 = s.emp_mixed;
  return c;
}

}  // namespace noisylab
