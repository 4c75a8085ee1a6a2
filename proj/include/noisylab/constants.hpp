#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>

#include <nlohmann/json.hpp>

namespace noisylab {

/// Empirical estimates of the regularity constants used by the bounds.
struct ConstantsReport {
  double F_hat = 0.0;       // sup |f|, |f - y|
  double G_hat = 0.0;       // sup ||(f - y) grad f||, ||f grad f|| + ||grad f||
  double L_hat = 0.0;       // smoothness of the empirical mixed loss
  double mu_a = 0.0;        // PL estimate, clean loss
  double mu_b = 0.0;        // PL estimate, noisy loss
  double tau = 0.0;         // min(2 mu_a, 2 mu_b)
  double sigma2_hat = 0.0;  // sup ||g_t - grad L_hat||^2
  double loss_at_theta0 = 0.0;
  double loss_at_theta1 = 0.0;
  std::size_t n_probes = 0;
  // Only needed for the omega-stay learning rate.
  std::optional<double> r_hat;
  std::optional<double> gamma;

  /// tau = min(2 mu_a, 2 mu_b); a NaN estimate (empty part) is ignored.
  void set_pl(double a, double b) {
    mu_a = a;
    mu_b = b;
    tau = std::fmin(2.0 * a, 2.0 * b);
  }
};

inline nlohmann::json to_json(const ConstantsReport& c) {
  nlohmann::json j = {{"F_hat", c.F_hat},
                      {"G_hat", c.G_hat},
                      {"L_hat", c.L_hat},
                      {"mu_a", c.mu_a},
                      {"mu_b", c.mu_b},
                      {"tau", c.tau},
                      {"sigma2_hat", c.sigma2_hat},
                      {"loss_at_theta0", c.loss_at_theta0},
                      {"loss_at_theta1", c.loss_at_theta1},
                      {"n_probes", c.n_probes}};
  if (c.r_hat) j["r_hat"] = *c.r_hat;
  if (c.gamma) j["gamma"] = *c.gamma;
  return j;
}

inline ConstantsReport constants_from_json(const nlohmann::json& j) {
  ConstantsReport c;
  c.F_hat = j.value("F_hat", 0.0);
  c.G_hat = j.value("G_hat", 0.0);
  c.L_hat = j.value("L_hat", 0.0);
  c.mu_a = j.value("mu_a", 0.0);
  c.mu_b = j.value("mu_b", 0.0);
  c.tau = j.contains("tau") ? j.at("tau").get<double>() : std::fmin(2.0 * c.mu_a, 2.0 * c.mu_b);
  c.sigma2_hat = j.value("sigma2_hat", 0.0);
  c.loss_at_theta0 = j.value("loss_at_theta0", 0.0);
  c.loss_at_theta1 = j.value("loss_at_theta1", 0.0);
  c.n_probes = j.value("n_probes", std::size_t{0});
  if (j.contains("r_hat")) c.r_hat = j.at("r_hat").get<double>();
  if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
  return c;
}

/// The residual region fixed at theta_1: r_hat^2 is the mean squared clean
/// residual, sqrt(s) * r_hat the mean absolute clean residual.
struct OmegaSpec {
  double r_hat = 0.0;
  double s = 0.0;
  double k_eff = 0.0;  // m * s
  std::size_t m = 0;

  double mean_abs_radius() const { return std::sqrt(s) * r_hat; }
};

inline nlohmann::json to_json(const OmegaSpec& o) {
  return {{"r_hat", o.r_hat}, {"s", o.s}, {"k_eff", o.k_eff}, {"m", o.m}};
}

inline OmegaSpec omega_from_json(const nlohmann::json& j) {
  OmegaSpec o;
  o.r_hat = j.at("r_hat").get<double>();
  o.s = j.at("s").get<double>();
  o.m = j.value("m", std::size_t{0});
  o.k_eff = j.value("k_eff", o.s * static_cast<double>(o.m));
  return o;
}

}  // namespace noisylab
