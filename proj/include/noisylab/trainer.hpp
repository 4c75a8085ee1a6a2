#pragma once

// Batch-size-one SGD, theta <- theta - eta (f(x_i) - y_i) grad f(x_i).
//
// Epoch 1 visits every pooled example exactly once in a seeded random order,
// so the model at step t is independent of the example it is about to see.
// Later epochs reuse data, either sampling uniformly with replacement or
// reshuffling a full permutation per epoch.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noisylab/constants.hpp"
#include "noisylab/core.hpp"
#include "noisylab/format.hpp"
#include "noisylab/objective.hpp"

namespace noisylab {

enum class LaterPolicy { with_replacement, reshuffled_epochs };

inline std::string to_string(LaterPolicy p) {
  return p == LaterPolicy::with_replacement ? "with-replacement" : "reshuffled-epochs";
}

inline LaterPolicy parse_later_policy(const std::string& s) {
  if (s == "with-replacement") return LaterPolicy::with_replacement;
  if (s == "reshuffled-epochs") return LaterPolicy::reshuffled_epochs;
  throw ConfigError("unknown sampling policy '" + s + "'");
}

struct TrainConfig {
  double eta = 0.01;
  LaterPolicy later_policy = LaterPolicy::with_replacement;
  std::size_t epochs = 1;  // epochs after the first one (run_later_epochs)
  std::size_t snapshot_stride = 0;  // 0: epoch boundaries only
  std::uint64_t seed = 0;
  bool measure_snapshots = true;  // empirical losses / gradient norms per snapshot

  void validate() const {
    // eta = 0 is accepted as a degenerate no-movement run.
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("train: eta must be finite and >= 0");
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  }
};

struct Snapshot {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  Vector theta;
  double emp_clean = 0.0;
  double emp_noisy = std::numeric_limits<double>::quiet_NaN();  // NaN when n = 0
  double emp_mixed = 0.0;
  double grad_norm_mixed = 0.0;
  double grad_norm_clean = 0.0;
  double grad_norm_noisy = std::numeric_limits<double>::quiet_NaN();
  std::optional<LossReport> pop_clean;
  std::optional<LossReport> pop_noisy;
  std::optional<bool> omega_member;
};

/// Called for every snapshot so callers can attach population or region measurements.
using SnapshotHook = std::function<void(Snapshot&, const Model&)>;

struct TrainTrace {
  TrainConfig config;
  std::vector<Snapshot> snapshots;
  Vector theta1;  // end of epoch 1 (empty for a later-epochs-only trace)
  std::size_t first_iteration = 0;
  std::vector<std::uint32_t> visits;  // pooled index used at iteration first_iteration + k

  std::size_t example_at(std::size_t iteration) const { return visits.at(iteration - first_iteration); }
};

namespace detail {

inline Snapshot take_snapshot(const Model& model, const EncodedData& data, std::size_t iteration,
                              std::size_t epoch, bool measure, const SnapshotHook& hook) {
  Snapshot s;
  s.iteration = iteration;
  s.epoch = epoch;
  s.theta = model.theta;
  if (measure) {
    const double m = static_cast<double>(data.m), n = static_cast<double>(data.n);
    const double clean_sum = sum_half_sq(model, data, 0, data.m);
    s.emp_clean = clean_sum / m;
    double noisy_sum = 0.0;
    if (data.n > 0) {
      noisy_sum = sum_half_sq(model, data, data.m, data.size());
      s.emp_noisy = noisy_sum / n;
    }
    s.emp_mixed = (clean_sum + noisy_sum) / (m + n);
    const Vector gc = mean_grad(model, data, DataPart::clean);
    s.grad_norm_clean = norm(gc);
    Vector gm = gc;
    for (auto& v : gm) v *= m / (m + n);
    if (data.n > 0) {
      const Vector gn = mean_grad(model, data, DataPart::noisy);
      s.grad_norm_noisy = norm(gn);
      axpy(n / (m + n), gn, gm);
    }
    s.grad_norm_mixed = norm(gm);
  }
  if (hook) hook(s, model);
  return s;
}

inline void sgd_step(Model& model, const EncodedData& data, std::size_t i, double eta, Vector& grad) {
  const double f = model.value_and_grad_encoded(data.row(i), grad);
  axpy(-eta * (f - data.y[i]), grad, model.theta);
}

}  // namespace detail

struct FirstEpochResult {
  Model model;  // at theta_1
  TrainTrace trace;
};

/// One pass over D_a u D_b without replacement: exactly m + n updates.
inline FirstEpochResult run_first_epoch(const Model& model0, const Dataset& ds,
                                        const TrainConfig& config, const SnapshotHook& hook = {}) {
  config.validate();
  ds.validate();
  const EncodedData data = encode_dataset(model0, ds);
  FirstEpochResult out{model0, {}};
  TrainTrace& trace = out.trace;
  trace.config = config;
  trace.first_iteration = 0;
  Rng rng(derive_seed(config.seed, {0xE1}));
  trace.visits = rng.permutation(data.size());

  Model& model = out.model;
  Vector grad(model.param_dim());
  const std::size_t total = data.size();
  const auto on_stride = [&](std::size_t t) {
    return config.snapshot_stride > 0 && t % config.snapshot_stride == 0;
  };
  trace.snapshots.push_back(detail::take_snapshot(model, data, 0, 1, config.measure_snapshots, hook));
  for (std::size_t t = 0; t < total; ++t) {
    detail::sgd_step(model, data, trace.visits[t], config.eta, grad);
    if (t + 1 == total || on_stride(t + 1))
      trace.snapshots.push_back(
          detail::take_snapshot(model, data, t + 1, 1, config.measure_snapshots, hook));
  }
  trace.theta1 = model.theta;
  return out;
}

/// Continues SGD with data reuse for config.epochs epochs of m + n draws each.
/// Iterations are numbered from `start_iteration` (m + n after a first epoch)
/// and epochs from 2.
inline TrainTrace run_later_epochs(const Model& model1, const Dataset& ds,
                                   const TrainConfig& config, const SnapshotHook& hook = {},
                                   std::optional<std::size_t> start_iteration = std::nullopt) {
  config.validate();
  ds.validate();
  const EncodedData data = encode_dataset(model1, ds);
  const std::size_t total = data.size();
  TrainTrace trace;
  trace.config = config;
  trace.first_iteration = start_iteration.value_or(total);
  trace.visits.reserve(total * config.epochs);
  Rng rng(derive_seed(config.seed, {0xE2}));

  Model model = model1;
  Vector grad(model.param_dim());
  std::size_t t = trace.first_iteration;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const std::size_t epoch = e + 2;
    std::vector<std::uint32_t> order;
    if (config.later_policy == LaterPolicy::reshuffled_epochs) order = rng.permutation(total);
    for (std::size_t k = 0; k < total; ++k) {
      const auto i = config.later_policy == LaterPolicy::reshuffled_epochs
                         ? order[k]
                         : static_cast<std::uint32_t>(rng.below(total));
      trace.visits.push_back(i);
      detail::sgd_step(model, data, i, config.eta, grad);
      ++t;
      const bool boundary = k + 1 == total;
      if (boundary || (config.snapshot_stride > 0 && (t - trace.first_iteration) % config.snapshot_stride == 0))
        trace.snapshots.push_back(
            detail::take_snapshot(model, data, t, epoch, config.measure_snapshots, hook));
    }
  }
  return trace;
}

/// First epoch followed by config.epochs later epochs, as one trace.
inline TrainTrace train(const Model& model0, const Dataset& ds, const TrainConfig& config,
                        const SnapshotHook& hook = {}) {
  auto first = run_first_epoch(model0, ds, config, hook);
  TrainTrace later = run_later_epochs(first.model, ds, config, hook);
  TrainTrace& trace = first.trace;
  trace.snapshots.insert(trace.snapshots.end(), std::make_move_iterator(later.snapshots.begin()),
                         std::make_move_iterator(later.snapshots.end()));
  trace.visits.insert(trace.visits.end(), later.visits.begin(), later.visits.end());
  return std::move(trace);
}

// ---------------------------------------------------------------------------
// Learning rates prescribed by the convergence analysis.
// ---------------------------------------------------------------------------

enum class LrMode { thm1_cap, thm3_schedule, omega_stay };

inline LrMode parse_lr_mode(const std::string& s) {
  if (s == "thm1-cap") return LrMode::thm1_cap;
  if (s == "thm3-schedule") return LrMode::thm3_schedule;
  if (s == "omega-stay") return LrMode::omega_stay;
  throw ConfigError("unknown learning-rate mode '" + s + "'");
}

inline std::string to_string(LrMode m) {
  switch (m) {
    case LrMode::thm1_cap: return "thm1-cap";
    case LrMode::thm3_schedule: return "thm3-schedule";
    case LrMode::omega_stay: return "omega-stay";
  }
  return "?";
}

///   thm1-cap      : 1 / L
///   thm3-schedule : 2 / (tau m) * log(m tau^2 L(theta_0) / (8 G^2 L))
///   omega-stay    : tau r_hat^2 (1 - gamma) / (16 G^2 L)
inline double lr_from_theory(const ConstantsReport& c, std::size_t m, LrMode mode) {
  if (m == 0) throw InputError("lr_from_theory: m must be >= 1");
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InputError(std::string("lr_from_theory: ") + what + " must be finite and > 0");
  };
  positive(c.L_hat, "L");
  if (mode == LrMode::thm1_cap) return 1.0 / c.L_hat;
  positive(c.tau, "tau");
  positive(c.G_hat, "G");
  const double G2 = c.G_hat * c.G_hat;
  if (mode == LrMode::thm3_schedule) {
    positive(c.loss_at_theta0, "L(theta_0)");
    const double md = static_cast<double>(m);
    const double arg = md * c.tau * c.tau * c.loss_at_theta0 / (8.0 * G2 * c.L_hat);
    if (!(arg > 1.0))
      throw TheoryInapplicable("thm3-schedule: log argument " + std::to_string(arg) +
                               " <= 1 (m below the sample-size threshold)");
    return 2.0 / (c.tau * md) * std::log(arg);
  }
  if (!c.r_hat || !c.gamma) throw InputError("omega-stay: needs r_hat and gamma");
  if (!(*c.gamma >= 0.0 && *c.gamma < 1.0)) throw InputError("omega-stay: gamma must be in [0, 1)");
  positive(*c.r_hat, "r_hat");
  return c.tau * (*c.r_hat) * (*c.r_hat) * (1.0 - *c.gamma) / (16.0 * G2 * c.L_hat);
}

// ---------------------------------------------------------------------------
// Trace export.
// ---------------------------------------------------------------------------

inline std::string trace_csv(const TrainTrace& trace) {
  std::ostringstream out;
  const auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  out << "iteration,epoch,emp_clean,emp_noisy,emp_mixed,grad_norm,omega_member\n";
  for (const auto& s : trace.snapshots) {
    out << s.iteration << ',' << s.epoch << ',' << cell(s.emp_clean) << ',' << cell(s.emp_noisy) << ','
        << cell(s.emp_mixed) << ',' << cell(s.grad_norm_mixed) << ','
        << (s.omega_member ? (*s.omega_member ? "1" : "0") : "") << '\n';
  }
  return out.str();
}

}  // namespace noisylab
