// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "noisylab/bounds.hpp"
#include "noisylab/experiments.hpp"
#include "noisylab/metrology.hpp"
#include "noisylab/report.hpp"

using namespace noisylab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, const std::string& name, bool ok, double seconds, double budget, const std::string& detail) {
  const bool in_time = budget <= 0 || seconds < budget;
  const bool pass = ok && in_time;
  if (!pass) ++failures;
  std::printf("criterion %2d %-34s %s  (%.1f s%s)  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", seconds,
              in_time ? "" : ", over budget", detail.c_str());
  std::fflush(stdout);
}

template <class F>
void criterion(int id, const std::string& name, double budget, F body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail += std::string(" exception: ") + e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  verdict(id, name, ok, s, budget, detail);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
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

DistributionSpec gaussian(std::size_t d) { return {DistributionKind::standard_gaussian, d}; }

Teacher linear_teacher(std::size_t d, std::uint64_t seed) {
  TeacherSpec t;
  t.input_dim = d;
  return make_teacher(t, seed);
}

// Least squares 0.5 ||A theta - b||^2 with A^T A = Q diag(spectrum) Q^T.
struct LeastSquares {
  std::size_t d;
  std::vector<Vector> A;  // rows
  Vector b;

  LeastSquares(const Vector& spectrum, std::uint64_t seed) : d(spectrum.size()), A(d, Vector(d)), b(d) {
    Rng r(seed);
    std::vector<Vector> q;  // Gram-Schmidt on Gaussian vectors
    while (q.size() < d) {
      Vector v(d);
      for (auto& x : v) x = r.normal();
      for (const auto& u : q) axpy(-dot(u, v), u, v);
      const double n = norm(v);
      for (auto& x : v) x /= n;
      q.push_back(v);
    }
    // A = diag(sqrt(spectrum)) Q^T, rows of Q^T are q[k]
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) A[k][j] = std::sqrt(spectrum[k]) * q[k][j];
    Vector star(d);
    for (auto& x : star) x = r.normal();
    for (std::size_t k = 0; k < d; ++k) b[k] = dot(A[k], star);
  }

  Vector residual(const Vector& th) const {
    Vector res(d);
    for (std::size_t k = 0; k < d; ++k) res[k] = dot(A[k], th) - b[k];
    return res;
  }
  double loss(const Vector& th) const {
    const Vector res = residual(th);
    return 0.5 * dot(res, res);
  }
  Vector grad(const Vector& th) const {
    const Vector res = residual(th);
    Vector g(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) axpy(res[k], A[k], g);
    return g;
  }
};

bool same_files(const fs::path& a, const fs::path& b, std::size_t& count, std::string& detail) {
  bool ok = true;
  for (const auto& e : fs::directory_iterator(a)) {
    ++count;
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || read_text_file(e.path().string()) != read_text_file(other.string())) {
      ok = false;
      detail += " differs:" + e.path().filename().string();
    }
  }
  for (const auto& e : fs::directory_iterator(b))
    if (!fs::exists(a / e.path().filename())) ok = false;
  return ok;
}

}  // namespace

int main() {
  criterion(1, "gradient fidelity", 5, [](std::string& detail) {
    Rng r(101);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
      const Model m = random_model(r, i % 2, i % 3 == 0);
      Vector x(m.input_dim());
      for (auto& v : x) v = r.normal();
      Model probe = m;
      Vector fd(m.param_dim());
      const double h = 1e-5;
      for (std::size_t k = 0; k < fd.size(); ++k) {
        const double keep = probe.theta[k];
        probe.theta[k] = keep + h;
        const double up = probe.predict(x);
        probe.theta[k] = keep - h;
        const double down = probe.predict(x);
        probe.theta[k] = keep;
        fd[k] = (up - down) / (2 * h);
      }
      worst = std::max(worst, relative_error(m.grad_theta(x), fd));
    }
    detail = fmt("worst relative error %.2e over 100 cases (tol 1e-6)", worst);
    return worst <= 1e-6;
  });

  criterion(2, "stochastic-gradient exactness", 5, [](std::string& detail) {
    Rng r(202);
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t d = 2 + r.below(5);
      const Teacher t = linear_teacher(d, 300 + k);
      const Dataset ds = build_dataset(t, gaussian(d), 3 + r.below(30), r.below(30), 400 + k);
      Model m = make_model({}, FeatureMap::identity(d), 0);
      if (k % 2) {
        ModelSpec s;
        s.family = ModelFamily::two_layer_tanh;
        s.hidden = 3;
        m = make_model(s, FeatureMap::identity(d), 0);
      }
      for (auto& v : m.theta) v = r.normal() * 0.5;
      Vector mean(m.param_dim(), 0.0);
      for (std::size_t i = 0; i < ds.size(); ++i)
        axpy(1.0 / static_cast<double>(ds.size()), per_example_grad(m, ds.at(i)), mean);
      worst = std::max(worst, relative_error(mean, full_grad(m, ds, DataPart::mixed)));
    }
    detail = fmt("worst relative error %.2e over 20 instances (tol 1e-12)", worst);
    return worst <= 1e-12;
  });

  criterion(3, "noisy-loss offset", 10, [](std::string& detail) {
    // linear model on standard Gaussian inputs: L_b = ||theta||^2 / 2 exactly
    const std::size_t d = 3, n = 40, reps = 100000;
    const Teacher t = linear_teacher(d, 5);
    const Vector theta{0.4, -0.3, 0.8};
    const Model m = with_theta(make_model({}, FeatureMap::identity(d), 0), theta);
    double s = 0, s2 = 0;
    for (std::size_t k = 0; k < reps; ++k) {
      const Dataset ds = build_dataset(t, gaussian(d), 1, n, derive_seed(33, {k}));
      const double v = empirical_loss_noisy(m, ds.corrupted).value;
      s += v;
      s2 += v * v;
    }
    const double mean = s / reps;
    const double se = std::sqrt((s2 / reps - mean * mean) / (reps - 1));
    const double target = 0.5 * dot(theta, theta) + 0.5;
    detail = "mean " + fmt("%.6f", mean) + " target " + fmt("%.6f", target) + " |diff|/se " +
             fmt("%.2f", std::abs(mean - target) / se);
    return std::abs(mean - target) <= 3 * se;
  });

  criterion(4, "PL and smoothness oracles", 30, [](std::string& detail) {
    bool ok = true;
    Rng r(404);
    for (std::size_t d : {2, 4, 7, 10}) {
      Vector spectrum(d);
      for (auto& v : spectrum) v = std::exp(r.uniform(std::log(0.2), std::log(5.0)));
      const double lmin = *std::min_element(spectrum.begin(), spectrum.end());
      const double lmax = *std::max_element(spectrum.begin(), spectrum.end());
      const LeastSquares q(spectrum, 500 + d);

      // 10 gradient-descent trajectories of 100 steps: 1000 probes
      std::vector<double> losses, grads;
      std::vector<Vector> anchors;
      for (int traj = 0; traj < 10; ++traj) {
        Vector th(d);
        for (auto& v : th) v = 3 * r.normal();
        for (int step = 0; step < 100; ++step) {
          const Vector g = q.grad(th);
          losses.push_back(q.loss(th));
          grads.push_back(norm(g));
          anchors.push_back(th);
          axpy(-0.5 / lmax, g, th);
        }
      }
      const double mu = estimate_pl(losses, grads, 0.0);
      SmoothnessOptions o;
      o.probes = 1000;
      o.seed = d;
      const double L = estimate_smoothness([&](const Vector& th) { return q.grad(th); }, anchors, o).L_hat;
      const double e_mu = std::abs(mu - lmin) / lmin, e_L = std::abs(L - lmax) / lmax;
      detail += " d=" + std::to_string(d) + ":mu " + fmt("%.3g", mu) + "/" + fmt("%.3g", lmin) + " L " +
                fmt("%.3g", L) + "/" + fmt("%.3g", lmax);
      ok = ok && e_mu <= 0.10 && e_L <= 0.05;
    }
    return ok;
  });

  criterion(5, "clean-first log m / m scaling", 180, [](std::string& detail) {
    const ExperimentConfig c = default_config(SweepKind::clean_first);
    const auto res = run_sweep(c);
    if (!res.complete) {
      detail = "sweep aborted: " + res.error;
      return false;
    }
    const auto agg = aggregate_rows(res.runs);
    std::vector<double> x, y;
    bool decreasing = true;
    for (const auto& a : agg) {
      x.push_back(a.sweep_value);
      y.push_back(value_of(a, "pop_la_theta1"));
      if (y.size() > 1) decreasing = decreasing && y.back() < y[y.size() - 2];
    }
    const LineFit fit = loglog_fit(x, y);
    detail = "slope " + fmt("%.3f", fit.slope) + " (want [-1.3, -0.7]) strictly decreasing " +
             (decreasing ? "yes" : "no") + "; mean L_a(theta_1):";
    for (std::size_t i = 0; i < y.size(); ++i) detail += " " + fmt("%.0f", x[i]) + "=" + fmt("%.4g", y[i]);
    detail += "; eta " + fmt("%.3g", value_of(agg.front(), "eta")) + ".." + fmt("%.3g", value_of(agg.back(), "eta"));
    const bool pass = fit.slope >= -1.3 && fit.slope <= -0.7 && decreasing;
    if (!pass) {
      // not part of the verdict: same sweep at a step inside the single-sample
      // stability region
      ExperimentConfig s = c;
      s.eta_mode = EtaMode::fixed;
      s.eta = 0.01;
      const auto sagg = aggregate_rows(run_sweep(s).runs);
      std::vector<double> sy;
      for (const auto& a : sagg) sy.push_back(value_of(a, "pop_la_theta1"));
      detail += "\n    diagnostic only, fixed eta 0.01: slope " + fmt("%.3f", loglog_fit(x, sy).slope) + ";";
      for (std::size_t i = 0; i < sy.size(); ++i) detail += " " + fmt("%.0f", x[i]) + "=" + fmt("%.4g", sy[i]);
    }
    return pass;
  });

  criterion(6, "gamma monotonicity at epoch 1", 120, [](std::string& detail) {
    ExperimentConfig c = default_config(SweepKind::clean_first);
    c.sweep = {4096};
    std::vector<double> mean, se;
    for (double g : {0.0, 0.2, 0.4, 0.6}) {
      c.gamma = g;
      const auto res = run_sweep(c);
      if (!res.complete) {
        detail = "sweep aborted: " + res.error;
        return false;
      }
      const auto agg = aggregate_rows(res.runs);
      mean.push_back(value_of(agg.front(), "pop_la_theta1"));
      se.push_back(value_of(agg.front(), "pop_la_theta1_mean_se"));
    }
    bool ok = true;
    for (std::size_t k = 1; k < mean.size(); ++k)
      ok = ok && mean[k] >= mean[k - 1] - 3 * std::hypot(se[k], se[k - 1]);
    detail = "mean L_a(theta_1) by gamma 0/0.2/0.4/0.6:";
    for (std::size_t k = 0; k < mean.size(); ++k) detail += " " + fmt("%.4g", mean[k]) + "+-" + fmt("%.2g", se[k]);
    if (!ok) {
      detail += "\n    diagnostic only, fixed eta 0.01:";
      c.eta_mode = EtaMode::fixed;
      c.eta = 0.01;
      for (double g : {0.0, 0.2, 0.4, 0.6}) {
        c.gamma = g;
        const auto agg = aggregate_rows(run_sweep(c).runs);
        detail += " " + fmt("%.4g", value_of(agg.front(), "pop_la_theta1")) + "+-" +
                  fmt("%.2g", value_of(agg.front(), "pop_la_theta1_mean_se"));
      }
    }
    return ok;
  });

  criterion(7, "phase-transition existence", 600, [](std::string& detail) {
    const ExperimentConfig c = default_config(SweepKind::phase);
    const auto res = run_sweep(c);
    if (!res.complete) {
      detail = "sweep aborted: " + res.error;
      return false;
    }
    const auto agg = aggregate_rows(res.runs);
    const EmpiricalThreshold th = empirical_threshold(agg, 0.8);
    double agree = 0, k = 0;
    for (const auto& r : res.runs) {
      const double a = value_of(r, "agree");
      if (!std::isnan(a)) agree += a, ++k;
    }
    const double rate = k > 0 ? agree / k : kNaN;
    detail = "degraded rate by gamma:";
    for (const auto& a : agg) detail += " " + fmt("%.1f", a.sweep_value) + "=" + fmt("%.1f", value_of(a, "degraded"));
    detail += th.separating_gamma ? " gamma* " + fmt("%.3g", *th.separating_gamma) +
                                        (th.separating_on_grid ? " (grid value)" : " (midpoint)")
                                  : std::string(" no separating gamma*");
    detail += " agreement " + fmt("%.3f", rate) + " (want >= 0.8)";
    return th.separating_gamma.has_value() && rate >= 0.8;
  });

  criterion(8, "gradient-gap scaling", 180, [](std::string& detail) {
    const ExperimentConfig c = default_config(SweepKind::gap);
    const auto res = run_sweep(c);
    if (!res.complete) {
      detail = "sweep aborted: " + res.error;
      return false;
    }
    const auto agg = aggregate_rows(res.runs);
    std::vector<double> x, y;
    for (const auto& a : agg) {
      x.push_back(a.sweep_value);
      y.push_back(value_of(a, "gap"));
    }
    const LineFit fit = loglog_fit(x, y);
    const GapCalibration cal = calibrate_gap(agg);
    detail = "slope " + fmt("%.3f", fit.slope) + " (want [-0.7, -0.3]) C " + fmt("%.3g", cal.C) + " dominated at all m " +
             (cal.all_dominated ? "yes" : "no") + "; gap:";
    for (std::size_t i = 0; i < y.size(); ++i) detail += " " + fmt("%.0f", x[i]) + "=" + fmt("%.3g", y[i]);
    return fit.slope >= -0.7 && fit.slope <= -0.3 && cal.all_dominated;
  });

  criterion(9, "bound-function properties", 5, [](std::string& detail) {
    BoundInputs in;
    in.constants.G_hat = in.constants.F_hat = in.constants.L_hat = 1;
    in.constants.tau = 1;
    in.constants.loss_at_theta0 = 0.5;
    in.constants.loss_at_theta1 = 1;
    in.omega = {0.5, 0.25, 250, 1000};
    in.m = in.n = 1000;
    bool ok = true;
    double prev = INFINITY;
    for (double m = 100; m <= 1e6; m *= 1.25) {
      in.m = static_cast<std::size_t>(m);
      const double b = thm1_bound(in);
      ok = ok && b < prev;
      prev = b;
    }
    const bool thm1_m = ok;
    in.m = 5000;
    prev = 0;
    for (double g = 0; g < 0.99; g += 0.01) {
      in.gamma = g;
      const double b = thm1_bound(in);
      ok = ok && b > prev;
      prev = b;
    }
    const bool thm1_g = ok;

    BoundInputs p = in;
    p.constants.tau = 0.5;
    p.m = p.n = 1000;
    p.gamma = 0.5;
    // once the condition fails in gamma it stays failed; once it holds in t or
    // size it stays held
    const auto monotone = [](const std::function<bool(double)>& holds, double from, double to, double mult,
                             bool expect_fail_after) {
      bool flipped = false, good = true;
      for (double v = from; v < to; v = mult > 1 ? v * mult : v + mult) {
        const bool h = holds(v);
        if (flipped) good = good && (expect_fail_after ? !h : h);
        flipped = flipped || (expect_fail_after ? !h : h);
      }
      return good && flipped;
    };
    p.t = 1000;
    const bool ph_g = monotone([&](double g) { BoundInputs q = p; q.gamma = g; return phase_condition(q).holds; },
                               0.0, 0.999, 0.001, true);
    p.gamma = 0.9;
    const bool ph_t =
        monotone([&](double t) { BoundInputs q = p; q.t = t; return phase_condition(q).holds; }, 1, 1e9, 2, false);
    p.gamma = 0.95;
    p.t = 1e8;
    const bool ph_s = monotone(
        [&](double k) {
          BoundInputs q = p;
          q.m = q.n = static_cast<std::size_t>(k);
          return phase_condition(q).holds;
        },
        2, 1e8, 2, false);

    // analytic crossing: term_sample = 0.4, iteration term ~ 0 -> gamma* = 0.6
    BoundInputs a = p;
    a.gamma = 0.5;
    a.t = 1e4;
    a.constants.loss_at_theta1 = 1e-9;
    a.C_dd = 0.4 / phase_condition(a).term_sample;
    double worst = 0;
    for (double tol : {1e-3, 1e-6, 1e-9}) {
      const auto g = critical_gamma(a, tol);
      worst = std::max(worst, std::abs(g.gamma - 0.6) / tol);
    }
    detail = std::string("thm1 decreasing in m ") + (thm1_m ? "yes" : "no") + ", increasing in gamma " +
             (thm1_g ? "yes" : "no") + "; phase monotone in gamma/t/size " + (ph_g ? "yes" : "no") + "/" +
             (ph_t ? "yes" : "no") + "/" + (ph_s ? "yes" : "no") + "; critical gamma error / tol " +
             fmt("%.3g", worst);
    return thm1_m && thm1_g && ph_g && ph_t && ph_s && worst <= 1.0;
  });

  criterion(10, "determinism", 0, [](std::string& detail) {
    std::vector<ExperimentConfig> configs;
    ExperimentConfig c = default_config(SweepKind::clean_first);
    c.sweep = {128, 256, 512};
    c.seeds = {0, 1, 2};
    configs.push_back(c);
    c = default_config(SweepKind::phase);
    c.total = 200;
    c.epochs = 5;
    c.sweep = {0.2, 0.5, 0.8};
    c.seeds = {0, 1, 2};
    c.mc_test = 1000;
    configs.push_back(c);
    c = default_config(SweepKind::gap);
    c.sweep = {128, 256, 512};
    c.seeds = {0, 1, 2};
    c.mc_gap = 20000;
    configs.push_back(c);
    bool ok = true;
    std::size_t files = 0;
    for (const auto& cfg : configs) {
      const fs::path root = fs::temp_directory_path() / "noisylab_accept" / to_string(cfg.kind);
      fs::remove_all(root);
      for (const char* sub : {"a", "b"}) {
        const auto res = run_sweep(cfg);
        emit_report(res.runs, res.curves, (root / sub).string(), ReportFormat::both, true, res.complete, res.error);
      }
      ok = same_files(root / "a", root / "b", files, detail) && ok;
      fs::remove_all(root);
    }
    detail = std::to_string(files) + " CSV/JSON/SVG files compared byte for byte" + detail;
    return ok && files > 0;
  });

  std::printf("%s\n", failures == 0 ? "all criteria PASS" : (std::to_string(failures) + " criteria FAIL").c_str());
  return failures == 0 ? 0 : 1;
}
