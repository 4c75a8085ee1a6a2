#pragma once

// Closed-form bound expressions of the convergence / generalization analysis:
// the first-epoch clean-loss bound, the gradient-gap bounds over Omega, the
// phase-transition condition and its inversion for the critical corruption
// rate. All functions are pure arithmetic.

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "noisylab/constants.hpp"
#include "noisylab/core.hpp"

namespace noisylab {

struct BoundInputs {
  ConstantsReport constants;
  OmegaSpec omega;
  std::size_t m = 1;
  std::size_t n = 0;
  double gamma = 0.0;
  double delta = 0.05;
  double t = 1.0;     // iterations after the first epoch
  double C = 1.0;     // universal constant of the gradient-gap bounds
  double C_dd = 1.0;  // universal constant of the phase condition

  void validate() const {
    if (m == 0) throw InputError("bounds: m must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("bounds: gamma must be in [0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw InputError("bounds: delta must be in (0, 1)");
    if (!(C > 0.0) || !(C_dd > 0.0)) throw InputError("bounds: universal constants must be > 0");
  }
};

inline nlohmann::json to_json(const BoundInputs& b) {
  return {{"constants", to_json(b.constants)},
          {"omega", to_json(b.omega)},
          {"m", b.m},
          {"n", b.n},
          {"gamma", b.gamma},
          {"delta", b.delta},
          {"t", b.t},
          {"C", b.C},
          {"C_dd", b.C_dd}};
}

inline BoundInputs bound_inputs_from_json(const nlohmann::json& j) {
  BoundInputs b;
  if (j.contains("constants")) b.constants = constants_from_json(j.at("constants"));
  if (j.contains("omega")) b.omega = omega_from_json(j.at("omega"));
  b.m = j.value("m", std::size_t{1});
  b.n = j.value("n", std::size_t{0});
  b.gamma = j.value("gamma", 0.0);
  b.delta = j.value("delta", 0.05);
  b.t = j.value("t", 1.0);
  b.C = j.value("C", 1.0);
  b.C_dd = j.value("C_dd", 1.0);
  return b;
}

// ---------------------------------------------------------------------------
// First epoch.
// ---------------------------------------------------------------------------

/// exact: 8 G^2 L / (m tau^2 (1 - gamma)) * (1 + log(m tau^2 L(theta_0) / (8 G^2 L)))
/// order: 4 G^2 L log(m) / ((1 - gamma) tau^2 m)
inline double thm1_bound(const BoundInputs& in, bool exact = true) {
  in.validate();
  const auto& c = in.constants;
  const double G2 = c.G_hat * c.G_hat;
  const double md = static_cast<double>(in.m);
  const double tau2 = c.tau * c.tau;
  if (!(tau2 > 0.0)) throw InputError("thm1_bound: tau must be > 0");
  if (!exact) return 4.0 * G2 * c.L_hat * std::log(md) / ((1.0 - in.gamma) * tau2 * md);
  const double scale = 8.0 * G2 * c.L_hat;
  const double arg = md * tau2 * c.loss_at_theta0 / scale;
  if (!(arg > 1.0))
    throw TheoryInapplicable("thm1_bound: log argument " + std::to_string(arg) + " <= 1");
  return scale / (md * tau2 * (1.0 - in.gamma)) * (1.0 + std::log(arg));
}

/// ceil(4 G^2 L / (tau^2 L(theta_0)))
inline std::size_t thm1_sample_threshold(const ConstantsReport& c, double tau) {
  if (!(tau > 0.0) || !(c.loss_at_theta0 > 0.0))
    throw InputError("thm1_sample_threshold: tau and L(theta_0) must be > 0");
  const double v = 4.0 * c.G_hat * c.G_hat * c.L_hat / (tau * tau * c.loss_at_theta0);
  return static_cast<std::size_t>(std::ceil(v));
}

// ---------------------------------------------------------------------------
// Gradient gap over Omega.
// ---------------------------------------------------------------------------

enum class GapSide { clean, noisy };

struct Thm2Result {
  double value = 0.0;
  bool assumption_met = true;  // m >= 64 F^2 log(2 / delta), clean side only
  double r_hat_term = 0.0;     // the part multiplied by G * r_hat (or G * F)
};

/// clean: C (G F log(1/d) / m + G r [sqrt(log(1/d) / m) + sqrt(s/m log(2m/s)) (1 + log m)])
/// noisy: the same with n for m and F for r.
inline Thm2Result thm2_bound(GapSide side, const BoundInputs& in) {
  in.validate();
  const double s = in.omega.s;
  const std::size_t count = side == GapSide::clean ? in.m : in.n;
  if (count == 0) throw InputError("thm2_bound: empty side");
  const double k = static_cast<double>(count);
  if (!(s > 0.0) || s > k) throw InputError("thm2_bound: s must lie in (0, count]");
  const double G = in.constants.G_hat, F = in.constants.F_hat;
  const double radius = side == GapSide::clean ? in.omega.r_hat : F;
  const double log_inv_delta = std::log(1.0 / in.delta);
  Thm2Result r;
  r.r_hat_term = G * radius *
                 (std::sqrt(log_inv_delta / k) + std::sqrt(s / k * std::log(2.0 * k / s)) * (1.0 + std::log(k)));
  r.value = in.C * (G * F * log_inv_delta / k + r.r_hat_term);
  r.r_hat_term *= in.C;
  if (side == GapSide::clean) r.assumption_met = k >= 64.0 * F * F * std::log(2.0 / in.delta);
  return r;
}

// ---------------------------------------------------------------------------
// Phase-transition condition.
// ---------------------------------------------------------------------------

/// log(6 / delta) + s log(2 max(m, n) / s) log(max(m, n))
inline double delta_term(const BoundInputs& in) {
  const double M = static_cast<double>(std::max(in.m, in.n));
  const double s = in.omega.s;
  if (!(s > 0.0) || s > M) throw InputError("delta_term: s must lie in (0, max(m, n)]");
  if (!(in.delta > 0.0 && in.delta < 1.0)) throw InputError("delta_term: delta must be in (0, 1)");
  return std::log(6.0 / in.delta) + s * std::log(2.0 * M / s) * std::log(M);
}

struct PhaseVerdict {
  bool holds = false;
  double term_sample = 0.0;
  double term_iteration = 0.0;
  double lhs = 0.0;  // 1 - gamma
};

inline nlohmann::json to_json(const PhaseVerdict& v) {
  return {{"holds", v.holds},
          {"term_sample", v.term_sample},
          {"term_iteration", v.term_iteration},
          {"lhs", v.lhs}};
}

/// 1 - gamma >= max(C'' G^2 Delta (r^2 + F^2) / (8 tau r^2 (n + m)),
///                  16 G^2 L log(L(theta_1) / (r^2 (1 - gamma))) / (tau^2 r^2 t)).
/// The iteration term is clamped to 0 when its log argument is <= 1.
inline PhaseVerdict phase_condition(const BoundInputs& in) {
  in.validate();
  const double r = in.omega.r_hat;
  if (!(r > 0.0)) throw DegenerateOmega("phase_condition: r_hat must be > 0");
  if (!(in.t >= 1.0)) throw InputError("phase_condition: t must be >= 1");
  const auto& c = in.constants;
  if (!(c.tau > 0.0)) throw InputError("phase_condition: tau must be > 0");
  const double G2 = c.G_hat * c.G_hat;
  const double r2 = r * r;
  const double total = static_cast<double>(in.n + in.m);
  PhaseVerdict v;
  v.lhs = 1.0 - in.gamma;
  v.term_sample = in.C_dd * G2 * delta_term(in) * (r2 + c.F_hat * c.F_hat) / (8.0 * c.tau * r2 * total);
  const double arg = c.loss_at_theta1 / (r2 * (1.0 - in.gamma));
  v.term_iteration = arg > 1.0 ? 16.0 * G2 * c.L_hat * std::log(arg) / (c.tau * c.tau * r2 * in.t) : 0.0;
  v.holds = v.lhs >= std::max(v.term_sample, v.term_iteration);
  return v;
}

struct CriticalGamma {
  double gamma = 0.0;
  bool no_regime = false;  // the condition fails already at gamma = 0
  bool capped = false;     // holds up to 1 - search_tol
};

inline nlohmann::json to_json(const CriticalGamma& g) {
  return {{"gamma", g.gamma}, {"no_regime", g.no_regime}, {"capped", g.capped}};
}

/// Largest gamma in [0, 1) at which phase_condition holds, with m, n and all
/// other inputs held fixed. 1 - gamma decreases and the iteration term is
/// nondecreasing in gamma, so the holding set is an interval [0, gamma*]; a
/// coarse scan with `bracket_steps` cells brackets the crossing, then
/// bisection narrows it to `search_tol`.
inline CriticalGamma critical_gamma(BoundInputs in, double search_tol = 1e-6,
                                    std::size_t bracket_steps = 16) {
  if (!(search_tol > 0.0 && search_tol < 0.5)) throw InputError("critical_gamma: search_tol must be in (0, 0.5)");
  if (bracket_steps == 0) throw InputError("critical_gamma: bracket_steps must be >= 1");
  const auto holds = [&](double g) {
    in.gamma = g;
    return phase_condition(in).holds;
  };
  CriticalGamma out;
  if (!holds(0.0)) {
    out.no_regime = true;
    return out;
  }
  const double top = 1.0 - search_tol;
  if (holds(top)) {
    out.gamma = top;
    out.capped = true;
    return out;
  }
  double lo = 0.0, hi = top;
  for (std::size_t k = 1; k < bracket_steps; ++k) {
    const double g = top * static_cast<double>(k) / static_cast<double>(bracket_steps);
    if (holds(g)) {
      lo = g;
    } else {
      hi = g;
      break;
    }
  }
  while (hi - lo > search_tol) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? lo : hi) = mid;
  }
  out.gamma = lo;
  return out;
}

/// Smallest C making `bound_at_unit_C * C >= measured`.
inline double calibrate_constant(double measured, double bound_at_unit_C) {
  if (!(bound_at_unit_C > 0.0)) throw InputError("calibrate_constant: bound must be > 0");
  return measured / bound_at_unit_C;
}

}  // namespace noisylab
