// labctl: dataset generation, single training runs, constant estimation,
// bound evaluation and the experiment sweeps.
//
// Exit codes: 0 success, 1 sweep aborted (partial results written),
// 2 config or input error, 3 theory not applicable, 4 I/O error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "noisylab/bounds.hpp"
#include "noisylab/config.hpp"
#include "noisylab/experiments.hpp"
#include "noisylab/metrology.hpp"
#include "noisylab/models.hpp"
#include "noisylab/report.hpp"
#include "noisylab/synthgen.hpp"
#include "noisylab/trainer.hpp"

namespace fs = std::filesystem;
using namespace noisylab;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  bool no_plots = false;
};

ExperimentConfig load(const Globals& g, SweepKind fallback) {
  ExperimentConfig c = g.config.empty() ? default_config(fallback) : load_config(g.config);
  if (g.seed) c.seeds = {*g.seed};
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.threads) c.threads = *g.threads;
  if (g.no_plots) c.emit_plots = false;
  c.validate();
  return c;
}

std::string out_path(const ExperimentConfig& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + c.output_dir + "'");
  return (fs::path(c.output_dir) / name).string();
}

struct RunInputs {
  Task task;
  Dataset ds;
  Model model0;
  std::uint64_t seed = 0;
};

// Dataset from --data, or generated from the config with m = first sweep value.
RunInputs run_inputs(const ExperimentConfig& c, const std::string& data_path, std::optional<std::size_t> m_opt,
                     std::optional<std::size_t> n_opt) {
  RunInputs r;
  r.task = make_task(c.task);
  r.seed = c.seeds.front();
  if (!data_path.empty()) {
    r.ds = read_dataset(data_path);
  } else {
    std::size_t m, n;
    if (c.kind == SweepKind::phase) {
      n = static_cast<std::size_t>(std::llround(c.sweep.front() * static_cast<double>(c.total)));
      m = c.total - n;
    } else {
      m = static_cast<std::size_t>(c.sweep.front());
      n = noisy_count_for(m, c.gamma);
    }
    m = m_opt.value_or(m);
    n = n_opt.value_or(n);
    r.ds = build_dataset(r.task.teacher, r.task.dist, m, n, derive_seed(r.seed, {stream::data}));
  }
  r.model0 = make_model(r.task.model, r.task.features, derive_seed(r.seed, {stream::init}));
  return r;
}

TrainConfig train_config(const ExperimentConfig& c, const RunInputs& r) {
  TrainConfig tc;
  tc.eta = c.eta;
  if (c.eta_mode != EtaMode::fixed)
    tc.eta = resolve_eta(c, pilot_constants(c, r.model0, r.ds, r.seed), r.ds.m()).first;
  tc.later_policy = c.policy;
  tc.epochs = std::max<std::size_t>(1, c.epochs - 1);
  tc.snapshot_stride = c.snapshot_stride;
  tc.seed = derive_seed(r.seed, {stream::sgd});
  return tc;
}

int sweep(const ExperimentConfig& c) {
  const SweepResult res = run_sweep(c);
  if (res.runs.empty()) throw InputError("sweep produced no rows: " + res.error);
  write_text_file(out_path(c, res.experiment + "_config.ini"), canonical_config(c));
  const auto files =
      emit_report(res.runs, res.curves, c.output_dir, ReportFormat::both, c.emit_plots, res.complete, res.error);
  for (const auto& f : files.written) std::cout << f << '\n';
  if (!res.complete) {
    std::cerr << "labctl: sweep aborted: " << res.error << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisy-label SGD lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "INI experiment config");
  app.add_option("--seed", g.seed, "single run seed (replaces the seed list)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads for sweeps");
  app.add_flag("--no-plots", g.no_plots, "skip SVG charts");

  std::string data_path;
  std::optional<std::size_t> m_opt, n_opt;
  auto* gen = app.add_subcommand("gen", "generate a dataset (CSV + JSON sidecar)");
  gen->add_option("--m", m_opt, "clean examples");
  gen->add_option("--n", n_opt, "corrupted examples");

  auto* train = app.add_subcommand("train", "single training run");
  train->add_option("--data", data_path, "dataset CSV (generated from the config when omitted)");
  train->add_option("--m", m_opt, "clean examples");
  train->add_option("--n", n_opt, "corrupted examples");
  bool binary = false;
  train->add_flag("--binary", binary, "store parameters in a .bin sidecar");

  auto* estimate = app.add_subcommand("estimate", "train, then estimate constants and Omega");
  estimate->add_option("--data", data_path, "dataset CSV");
  estimate->add_option("--m", m_opt, "clean examples");
  estimate->add_option("--n", n_opt, "corrupted examples");

  std::string inputs_path;
  bool critical = false;
  double search_tol = 1e-6;
  auto* bounds = app.add_subcommand("bounds", "evaluate bounds from a BoundInputs JSON");
  bounds->add_option("--inputs", inputs_path, "BoundInputs JSON (as written by estimate)")->required();
  bounds->add_flag("--critical-gamma", critical, "also solve for the critical corruption rate");
  bounds->add_option("--search-tol", search_tol, "bisection tolerance");

  auto* sweep_clean = app.add_subcommand("sweep-clean-first", "first-epoch clean loss vs m");
  auto* sweep_phase = app.add_subcommand("sweep-phase", "multi-epoch runs vs gamma");
  auto* sweep_gap = app.add_subcommand("sweep-gap", "clean gradient gap at theta_1 vs m");

  std::string csv_path, curves_path;
  auto* report = app.add_subcommand("report", "re-render summary and charts from a sweep CSV");
  report->add_option("--csv", csv_path, "sweep CSV")->required();
  report->add_option("--curves", curves_path, "epoch curves CSV (phase sweeps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const ExperimentConfig c = load(g, SweepKind::clean_first);
      const RunInputs r = run_inputs(c, "", m_opt, n_opt);
      const std::string path = out_path(c, "dataset.csv");
      write_dataset(path, r.ds, r.task.teacher, r.task.dist);
      std::cout << path << '\n';
      return 0;
    }
    if (*train || *estimate) {
      const ExperimentConfig c = load(g, SweepKind::clean_first);
      const RunInputs r = run_inputs(c, data_path, m_opt, n_opt);
      const TrainConfig tc = train_config(c, r);
      auto first = run_first_epoch(r.model0, r.ds, tc);
      const Model theta1 = first.model;
      TrainTrace trace = std::move(first.trace);
      Model final_model = theta1;
      if (c.epochs > 1) {
        TrainTrace rest = run_later_epochs(theta1, r.ds, tc);
        final_model = with_theta(theta1, rest.snapshots.back().theta);
        trace.snapshots.insert(trace.snapshots.end(), rest.snapshots.begin(), rest.snapshots.end());
      }
      if (*train) {
        write_text_file(out_path(c, "trace.csv"), trace_csv(trace));
        write_checkpoint(out_path(c, "theta1.json"), theta1, binary);
        write_checkpoint(out_path(c, "final.json"), final_model, binary);
        const nlohmann::json j = {{"eta", tc.eta},
                                  {"m", r.ds.m()},
                                  {"n", r.ds.n()},
                                  {"epochs", c.epochs},
                                  {"theta1", to_json(empirical_loss_mixed(theta1, r.ds))},
                                  {"final", to_json(empirical_loss_mixed(final_model, r.ds))}};
        std::cout << j.dump(2) << '\n';
        return 0;
      }
      BoundInputs in;
      in.constants = measure_constants(trace, r.model0, r.ds, measure_options(c, r.seed));
      in.omega = compute_omega_spec(theta1, r.ds.clean);
      in.m = r.ds.m();
      in.n = r.ds.n();
      in.gamma = gamma(r.ds);
      in.delta = c.delta;
      in.t = std::max(1.0, static_cast<double>((c.epochs - 1) * r.ds.size()));
      in.C = c.C;
      in.C_dd = c.C_dd;
      const nlohmann::json j = to_json(in);
      write_text_file(out_path(c, "bound_inputs.json"), j.dump(2) + "\n");
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*bounds) {
      nlohmann::json src;
      try {
        src = nlohmann::json::parse(read_text_file(inputs_path));
      } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bounds: ") + e.what());
      }
      const BoundInputs in = bound_inputs_from_json(src);
      nlohmann::json j = {{"inputs", to_json(in)}};
      j["thm1_exact"] = thm1_bound(in, true);
      j["thm1_order"] = thm1_bound(in, false);
      j["thm1_sample_threshold"] = thm1_sample_threshold(in.constants, in.constants.tau);
      const Thm2Result clean = thm2_bound(GapSide::clean, in);
      j["thm2_clean"] = {{"value", clean.value}, {"assumption_met", clean.assumption_met}};
      if (in.n > 0) j["thm2_noisy"] = {{"value", thm2_bound(GapSide::noisy, in).value}};
      j["delta_term"] = delta_term(in);
      j["phase_condition"] = to_json(phase_condition(in));
      if (critical) j["critical_gamma"] = to_json(critical_gamma(in, search_tol));
      if (!g.out.empty()) {
        fs::create_directories(g.out);
        write_text_file((fs::path(g.out) / "bounds.json").string(), j.dump(2) + "\n");
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*sweep_clean) return sweep(load(g, SweepKind::clean_first));
    if (*sweep_phase) {
      ExperimentConfig c = load(g, SweepKind::phase);
      if (c.kind != SweepKind::phase) throw ConfigError("sweep-phase: config sweep.kind must be phase");
      return sweep(c);
    }
    if (*sweep_gap) {
      ExperimentConfig c = load(g, SweepKind::gap);
      if (c.kind != SweepKind::gap) throw ConfigError("sweep-gap: config sweep.kind must be gap");
      return sweep(c);
    }
    if (*report) {
      const auto runs = parse_rows_csv(read_text_file(csv_path));
      std::vector<CurvePoint> curves;
      if (!curves_path.empty()) curves = parse_curves_csv(read_text_file(curves_path));
      const std::string dir = g.out.empty() ? fs::path(csv_path).parent_path().string() : g.out;
      const fs::path marker = fs::path(csv_path).replace_extension(".incomplete");
      const bool complete = !fs::exists(marker);
      const std::string error = complete ? "" : read_text_file(marker.string());
      const auto files = emit_report(runs, curves, dir.empty() ? "." : dir, ReportFormat::json, !g.no_plots,
                                     complete, error.empty() ? error : error.substr(0, error.size() - 1));
      for (const auto& f : files.written) std::cout << f << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "labctl: config error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "labctl: input error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "labctl: I/O error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    // theory-inapplicable, degenerate Omega, undefined estimates, violated preconditions
    std::cerr << "labctl: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "labctl: I/O error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
