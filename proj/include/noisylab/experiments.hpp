#pragma once

// Experiment drivers: the clean-data-first sweep over m, the phase-transition
// sweep over gamma, and the gradient-gap sweep over m. Each (sweep value,
// seed) pair is an independent run; runs execute on a bounded worker pool and
// land in a fixed slot, so the result never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "noisylab/bounds.hpp"
#include "noisylab/config.hpp"
#include "noisylab/constants.hpp"
#include "noisylab/metrology.hpp"
#include "noisylab/models.hpp"
#include "noisylab/objective.hpp"
#include "noisylab/synthgen.hpp"
#include "noisylab/trainer.hpp"

namespace noisylab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Rows and schemas.
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string experiment;
  std::string row_kind = "run";  // "run" or "aggregate"
  double sweep_value = 0.0;
  std::optional<std::uint64_t> seed;
  std::string config_hash;
  std::string note;            // ';'-joined flags, empty when nothing to say
  std::vector<double> values;  // aligned with schema_for(experiment).columns
};

struct Schema {
  std::string id;
  std::string sweep_name;  // meaning of sweep_value
  std::vector<std::string> columns;
  std::string key;  // column whose per-sweep standard error is aggregated
};

inline const Schema& schema_for(const std::string& experiment) {
  static const std::map<std::string, Schema> schemas = {
      {"clean-first",
       {"clean-first",
        "m",
        {"m", "n", "gamma", "eta", "pop_la_theta0", "pop_la_theta1", "pop_la_theta1_se", "zero_one_theta1",
         "emp_la_theta1", "r_hat", "s", "k_eff", "F_hat", "G_hat", "L_hat", "mu_a", "mu_b", "tau",
         "loss_theta0", "thm1_exact", "thm1_order", "thm1_threshold", "n_runs", "pop_la_theta1_mean_se"},
        "pop_la_theta1"}},
      {"phase",
       {"phase",
        "gamma",
        {"m", "n", "gamma", "eta", "eta_later", "test_loss_epoch1", "test_loss_epoch1_se", "test_loss_final",
         "zero_one_epoch1", "zero_one_final", "margin", "degraded", "omega_exit_epoch", "omega_exited", "agree",
         "degenerate", "r_hat", "s", "k_eff", "F_hat", "G_hat", "L_hat", "mu_a", "mu_b", "tau", "loss_theta1",
         "t_later", "delta", "C_dd", "term_sample", "term_iteration", "phase_holds", "gamma_star_theory",
         "no_regime", "n_runs", "test_loss_final_mean_se"},
        "test_loss_final"}},
      {"gap",
       {"gap",
        "m",
        {"m", "n", "gamma", "eta", "r_hat", "s", "k_eff", "F_hat", "G_hat", "delta", "gap", "gap_se", "mc_noise",
         "thm2_unit", "thm2_assumption", "n_runs", "gap_mean_se"},
        "gap"}}};
  const auto it = schemas.find(experiment);
  if (it == schemas.end()) throw InputError("unknown experiment '" + experiment + "'");
  return it->second;
}

inline std::size_t column_index(const Schema& s, const std::string& name) {
  for (std::size_t i = 0; i < s.columns.size(); ++i)
    if (s.columns[i] == name) return i;
  throw InputError("schema " + s.id + " has no column '" + name + "'");
}

/// Named access for building rows.
class RowBuilder {
 public:
  RowBuilder(const Schema& s) : schema_(s), values_(s.columns.size(), kNaN) {}
  RowBuilder& set(const std::string& name, double v) {
    values_[column_index(schema_, name)] = v;
    return *this;
  }
  std::vector<double> take() { return std::move(values_); }

 private:
  const Schema& schema_;
  std::vector<double> values_;
};

inline double value_of(const ReportRow& r, const std::string& name) {
  return r.values.at(column_index(schema_for(r.experiment), name));
}

/// Epoch-wise test curve of one phase run.
struct CurvePoint {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double test_loss = 0.0;
  double zero_one = 0.0;
  double omega_member = kNaN;  // 1 / 0, NaN when Omega is degenerate
};

struct SweepResult {
  std::string experiment;
  std::vector<ReportRow> runs;  // ordered by (sweep value, seed)
  std::vector<CurvePoint> curves;
  bool complete = true;
  std::string error;  // first failure when incomplete
};

// ---------------------------------------------------------------------------
// Worker pool.
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, count) on up to `threads` workers. After the first
/// exception no new tasks start; returns the lowest failing index's message.
template <class Fn>
std::optional<std::string> parallel_for(std::size_t count, std::size_t threads, Fn&& fn,
                                        std::vector<bool>* done = nullptr) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t fail_index = count;
  std::string fail_message;
  if (done) done->assign(count, false);
  const auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
        if (done) {
          std::lock_guard<std::mutex> lock(mu);
          (*done)[i] = true;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failed = true;
        if (i < fail_index) {
          fail_index = i;
          fail_message = e.what();
        }
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(threads, count));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fail_index < count) return fail_message;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Shared per-run plumbing.
// ---------------------------------------------------------------------------

struct Task {
  Teacher teacher;
  DistributionSpec dist;
  FeatureMap features;
  ModelSpec model;
};

inline Task make_task(const TaskConfig& t) {
  Task out;
  out.teacher = make_teacher(t.teacher, derive_seed(t.seed, {0x7EAC4E}));
  out.dist = t.dist;
  out.model = t.model;
  const std::size_t d = t.teacher.input_dim;
  out.features = t.model_features == FeatureKind::identity
                     ? FeatureMap::identity(d)
                     : FeatureMap::random_fourier(d, t.num_features, t.bandwidth, derive_seed(t.seed, {0xFEA7}));
  return out;
}

// Child streams of a run seed.
namespace stream {
inline constexpr std::uint64_t data = 0xDA7A;
inline constexpr std::uint64_t init = 0x1417;
inline constexpr std::uint64_t sgd = 0x5D;
inline constexpr std::uint64_t population = 0x3C;
inline constexpr std::uint64_t probes = 0x960BE;
}  // namespace stream

inline MeasureOptions measure_options(const ExperimentConfig& c, std::uint64_t seed) {
  MeasureOptions o;
  o.sup.extra_probes = c.sup_probes;
  o.sup.seed = derive_seed(seed, {stream::probes, 1});
  o.smooth.probes = c.smooth_probes;
  o.smooth.step = c.smooth_step;
  o.smooth.seed = derive_seed(seed, {stream::probes, 2});
  o.max_snapshots = c.max_snapshots;
  return o;
}

/// Constants from the single snapshot at theta_0; the theory step sizes are
/// evaluated on these before any training happens.
inline ConstantsReport pilot_constants(const ExperimentConfig& c, const Model& model0, const Dataset& ds,
                                       std::uint64_t seed) {
  TrainConfig tc;
  tc.eta = 0.0;
  tc.seed = seed;
  const EncodedData data = encode_dataset(model0, ds);
  TrainTrace trace;
  trace.snapshots.push_back(detail::take_snapshot(model0, data, 0, 1, true, {}));
  return measure_constants(trace, model0, ds, measure_options(c, seed));
}

struct EtaChoice {
  double first = 0.0;
  double later = 0.0;  // omega-stay is only known after epoch 1; set by the caller
};

inline EtaChoice resolve_eta(const ExperimentConfig& c, const ConstantsReport& pilot, std::size_t m) {
  switch (c.eta_mode) {
    case EtaMode::fixed: return {c.eta, c.eta};
    case EtaMode::thm1_cap:
    case EtaMode::omega_stay: {
      const double v = c.eta_scale * lr_from_theory(pilot, m, LrMode::thm1_cap);
      return {v, v};
    }
    case EtaMode::thm3_schedule: {
      const double v = c.eta_scale * lr_from_theory(pilot, m, LrMode::thm3_schedule);
      return {v, v};
    }
  }
  return {c.eta, c.eta};
}

inline void add_note(std::string& note, const std::string& flag) {
  if (note.find(flag) != std::string::npos) return;
  note += (note.empty() ? "" : ";") + flag;
}

/// Evaluates fn, turning theory-side failures into NaN plus a note.
template <class Fn>
double guarded(std::string& note, const char* flag, Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    add_note(note, flag);
    return kNaN;
  }
}

inline std::size_t noisy_count_for(std::size_t m, double gamma) {
  return static_cast<std::size_t>(std::llround(gamma * static_cast<double>(m) / (1.0 - gamma)));
}

// ---------------------------------------------------------------------------
// Clean-data-first sweep over m.
// ---------------------------------------------------------------------------

inline ReportRow clean_first_run(const ExperimentConfig& c, const Task& task, std::size_t m, std::uint64_t seed,
                                 const std::string& hash) {
  const Schema& schema = schema_for("clean-first");
  ReportRow row{"clean-first", "run", static_cast<double>(m), seed, hash, "", {}};
  const std::size_t n = noisy_count_for(m, c.gamma);
  const Dataset ds = build_dataset(task.teacher, task.dist, m, n, derive_seed(seed, {stream::data}));
  const Model model0 = make_model(task.model, task.features, derive_seed(seed, {stream::init}));

  const ConstantsReport pilot = pilot_constants(c, model0, ds, seed);
  TrainConfig tc;
  tc.eta = resolve_eta(c, pilot, m).first;
  tc.later_policy = c.policy;
  tc.snapshot_stride = c.snapshot_stride;
  tc.seed = derive_seed(seed, {stream::sgd});
  const auto first = run_first_epoch(model0, ds, tc);

  // Common population sample across m for a given seed, so the m-trend is not
  // masked by Monte Carlo noise.
  const EncodedData pop = encode_population_sample(model0, task.teacher, task.dist, c.mc_population,
                                                   derive_seed(seed, {stream::population}));
  const LossReport la0 = sample_loss(model0, pop, LossKind::population_clean);
  const LossReport la1 = sample_loss(first.model, pop, LossKind::population_clean);

  RowBuilder b(schema);
  b.set("m", static_cast<double>(m))
      .set("n", static_cast<double>(n))
      .set("gamma", gamma(ds))
      .set("eta", tc.eta)
      .set("pop_la_theta0", la0.value)
      .set("pop_la_theta1", la1.value)
      .set("pop_la_theta1_se", la1.std_error)
      .set("zero_one_theta1", sample_zero_one(first.model, pop))
      .set("emp_la_theta1", first.trace.snapshots.back().emp_clean);

  const EncodedData data = encode_dataset(model0, ds);
  try {
    const OmegaSpec om = compute_omega_spec(first.model, data);
    b.set("r_hat", om.r_hat).set("s", om.s).set("k_eff", om.k_eff);
  } catch (const Error&) {
    add_note(row.note, "degenerate-omega");
  }

  ConstantsReport k;
  try {
    k = measure_constants(first.trace, model0, ds, measure_options(c, seed));
  } catch (const Error&) {
    add_note(row.note, "constants-undefined");
  }
  b.set("F_hat", k.F_hat)
      .set("G_hat", k.G_hat)
      .set("L_hat", k.L_hat)
      .set("mu_a", k.mu_a)
      .set("mu_b", k.mu_b)
      .set("tau", k.tau)
      .set("loss_theta0", k.loss_at_theta0);
  BoundInputs in;
  in.constants = k;
  in.m = m;
  in.n = n;
  in.gamma = gamma(ds);
  in.delta = c.delta;
  in.C = c.C;
  in.C_dd = c.C_dd;
  b.set("thm1_exact", guarded(row.note, "thm1-inapplicable", [&] { return thm1_bound(in, true); }))
      .set("thm1_order", guarded(row.note, "thm1-undefined", [&] { return thm1_bound(in, false); }))
      .set("thm1_threshold", guarded(row.note, "threshold-undefined", [&] {
             return static_cast<double>(thm1_sample_threshold(k, k.tau));
           }));
  row.values = b.take();
  return row;
}

// ---------------------------------------------------------------------------
// Phase-transition sweep over gamma at fixed m + n.
// ---------------------------------------------------------------------------

struct PhaseRun {
  ReportRow row;
  std::vector<CurvePoint> curve;
};

inline PhaseRun phase_run(const ExperimentConfig& c, const Task& task, double gamma_target, std::uint64_t seed,
                          const std::string& hash) {
  const Schema& schema = schema_for("phase");
  PhaseRun out;
  ReportRow& row = out.row;
  row = {"phase", "run", gamma_target, seed, hash, "", {}};
  const std::size_t n = static_cast<std::size_t>(std::llround(gamma_target * static_cast<double>(c.total)));
  const std::size_t m = c.total - n;
  const Dataset ds = build_dataset(task.teacher, task.dist, m, n, derive_seed(seed, {stream::data}));
  const Model model0 = make_model(task.model, task.features, derive_seed(seed, {stream::init}));
  const std::size_t total = ds.size();

  EtaChoice eta{c.eta, c.eta};
  if (c.eta_mode != EtaMode::fixed) eta = resolve_eta(c, pilot_constants(c, model0, ds, seed), m);

  TrainConfig tc;
  tc.eta = eta.first;
  tc.later_policy = c.policy;
  tc.epochs = std::max<std::size_t>(1, c.epochs - 1);
  tc.snapshot_stride = c.snapshot_stride;
  tc.seed = derive_seed(seed, {stream::sgd});
  auto first = run_first_epoch(model0, ds, tc);

  // One test sample reused at every epoch so epoch-to-epoch differences are
  // not Monte Carlo noise.
  const EncodedData test = encode_population_sample(model0, task.teacher, task.dist, c.mc_test,
                                                    derive_seed(seed, {stream::population}));
  const EncodedData data = encode_dataset(model0, ds);
  const LossReport l1 = sample_loss(first.model, test, LossKind::population_clean);
  const double z1 = sample_zero_one(first.model, test);

  std::optional<OmegaSpec> omega;
  try {
    omega = compute_omega_spec(first.model, data);
  } catch (const DegenerateOmega&) {
    add_note(row.note, "degenerate-omega");
  }
  if (c.eta_mode == EtaMode::omega_stay && omega) {
    ConstantsReport k = pilot_constants(c, model0, ds, seed);
    k.r_hat = omega->r_hat;
    k.gamma = gamma(ds);
    eta.later = c.eta_scale * lr_from_theory(k, m, LrMode::omega_stay);
  }

  out.curve.push_back({gamma_target, seed, 1, l1.value, z1, omega ? 1.0 : kNaN});
  std::size_t exit_epoch = 0;
  double final_loss = l1.value, final_z = z1;
  TrainTrace trace = std::move(first.trace);
  if (c.epochs > 1) {
    TrainConfig later = tc;
    later.eta = eta.later;
    const SnapshotHook hook = [&](Snapshot& s, const Model& model) {
      if (s.iteration % total != 0) return;
      CurvePoint p{gamma_target, seed, s.epoch, 0.0, 0.0, kNaN};
      p.test_loss = sample_loss(model, test, LossKind::population_clean).value;
      p.zero_one = sample_zero_one(model, test);
      if (omega) {
        const bool member = omega_membership(model, data, *omega);
        s.omega_member = member;
        p.omega_member = member ? 1.0 : 0.0;
        if (!member && exit_epoch == 0) exit_epoch = s.epoch;
      }
      final_loss = p.test_loss;
      final_z = p.zero_one;
      out.curve.push_back(p);
    };
    TrainTrace rest = run_later_epochs(first.model, ds, later, hook);
    trace.snapshots.insert(trace.snapshots.end(), rest.snapshots.begin(), rest.snapshots.end());
  }

  const double margin = c.margin_se * l1.std_error;
  const bool degraded = final_loss > l1.value + margin;
  RowBuilder b(schema);
  b.set("m", static_cast<double>(m))
      .set("n", static_cast<double>(n))
      .set("gamma", gamma(ds))
      .set("eta", eta.first)
      .set("eta_later", eta.later)
      .set("test_loss_epoch1", l1.value)
      .set("test_loss_epoch1_se", l1.std_error)
      .set("test_loss_final", final_loss)
      .set("zero_one_epoch1", z1)
      .set("zero_one_final", final_z)
      .set("margin", margin)
      .set("degenerate", omega ? 0.0 : 1.0);
  if (omega) {
    // Degenerate runs carry no verdicts and are left out of threshold detection.
    b.set("degraded", degraded ? 1.0 : 0.0)
        .set("omega_exit_epoch", static_cast<double>(exit_epoch))
        .set("omega_exited", exit_epoch > 0 ? 1.0 : 0.0)
        .set("agree", degraded == (exit_epoch > 0) ? 1.0 : 0.0)
        .set("r_hat", omega->r_hat)
        .set("s", omega->s)
        .set("k_eff", omega->k_eff);
  }

  ConstantsReport k;
  try {
    k = measure_constants(trace, model0, ds, measure_options(c, seed));
  } catch (const Error&) {
    add_note(row.note, "constants-undefined");
  }
  const double t_later = static_cast<double>((c.epochs - 1) * total);
  b.set("F_hat", k.F_hat)
      .set("G_hat", k.G_hat)
      .set("L_hat", k.L_hat)
      .set("mu_a", k.mu_a)
      .set("mu_b", k.mu_b)
      .set("tau", k.tau)
      .set("loss_theta1", k.loss_at_theta1)
      .set("t_later", t_later)
      .set("delta", c.delta)
      .set("C_dd", c.C_dd);
  if (omega && c.epochs > 1) {
    BoundInputs in;
    in.constants = k;
    in.omega = *omega;
    in.m = m;
    in.n = n;
    in.gamma = gamma(ds);
    in.delta = c.delta;
    in.t = t_later;
    in.C = c.C;
    in.C_dd = c.C_dd;
    try {
      const PhaseVerdict v = phase_condition(in);
      b.set("term_sample", v.term_sample)
          .set("term_iteration", v.term_iteration)
          .set("phase_holds", v.holds ? 1.0 : 0.0);
      const CriticalGamma g = critical_gamma(in, c.search_tol);
      b.set("gamma_star_theory", g.gamma).set("no_regime", g.no_regime ? 1.0 : 0.0);
    } catch (const Error&) {
      add_note(row.note, "phase-condition-undefined");
    }
  }
  row.values = b.take();
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-gap sweep over m.
// ---------------------------------------------------------------------------

inline ReportRow gap_run(const ExperimentConfig& c, const Task& task, std::size_t m, std::uint64_t seed,
                         const std::string& hash) {
  const Schema& schema = schema_for("gap");
  ReportRow row{"gap", "run", static_cast<double>(m), seed, hash, "", {}};
  const std::size_t n = noisy_count_for(m, c.gamma);
  const Dataset ds = build_dataset(task.teacher, task.dist, m, n, derive_seed(seed, {stream::data}));
  const Model model0 = make_model(task.model, task.features, derive_seed(seed, {stream::init}));

  EtaChoice eta{c.eta, c.eta};
  if (c.eta_mode != EtaMode::fixed) eta = resolve_eta(c, pilot_constants(c, model0, ds, seed), m);
  TrainConfig tc;
  tc.eta = eta.first;
  tc.seed = derive_seed(seed, {stream::sgd});
  const auto first = run_first_epoch(model0, ds, tc);

  RowBuilder b(schema);
  b.set("m", static_cast<double>(m))
      .set("n", static_cast<double>(n))
      .set("gamma", gamma(ds))
      .set("eta", eta.first)
      .set("delta", c.delta);
  const EncodedData data = encode_dataset(model0, ds);
  const OmegaSpec omega = compute_omega_spec(first.model, data);
  b.set("r_hat", omega.r_hat).set("s", omega.s).set("k_eff", omega.k_eff);

  SupProbeOptions sup;
  sup.extra_probes = c.sup_probes;
  sup.seed = derive_seed(seed, {stream::probes, 1});
  const ConstantsReport k = estimate_sup_constants(first.trace, model0, ds, sup);
  b.set("F_hat", k.F_hat).set("G_hat", k.G_hat);

  // Same population sample for every m at a given seed.
  const std::vector<Model> probes{first.model};
  const GapReport gap = gradient_gap(probes, ds, DataPart::clean, task.teacher, task.dist, c.mc_gap,
                                     derive_seed(seed, {stream::population}), omega);
  b.set("gap", gap.max_gap).set("gap_se", gap.std_error).set("mc_noise", gap.mc_noise);

  BoundInputs in;
  in.constants = k;
  in.omega = omega;
  in.m = m;
  in.n = n;
  in.gamma = gamma(ds);
  in.delta = c.delta;
  in.C = 1.0;
  try {
    const Thm2Result t2 = thm2_bound(GapSide::clean, in);
    b.set("thm2_unit", t2.value).set("thm2_assumption", t2.assumption_met ? 1.0 : 0.0);
    if (!t2.assumption_met) add_note(row.note, "thm2-assumption-violated");
  } catch (const Error&) {
    add_note(row.note, "thm2-undefined");
  }
  row.values = b.take();
  return row;
}

// ---------------------------------------------------------------------------
// Sweeps.
// ---------------------------------------------------------------------------

inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Task task = make_task(cfg.task);
  const std::string hash = config_hash(cfg);
  SweepResult result;
  result.experiment = to_string(cfg.kind);

  std::vector<double> values = cfg.sweep;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());

  const std::size_t count = values.size() * seeds.size();
  std::vector<ReportRow> rows(count);
  std::vector<std::vector<CurvePoint>> curves(count);
  std::vector<bool> done;
  const auto error = parallel_for(
      count, cfg.threads,
      [&](std::size_t i) {
        const double v = values[i / seeds.size()];
        const std::uint64_t seed = seeds[i % seeds.size()];
        switch (cfg.kind) {
          case SweepKind::clean_first:
            rows[i] = clean_first_run(cfg, task, static_cast<std::size_t>(v), seed, hash);
            break;
          case SweepKind::phase: {
            PhaseRun r = phase_run(cfg, task, v, seed, hash);
            rows[i] = std::move(r.row);
            curves[i] = std::move(r.curve);
            break;
          }
          case SweepKind::gap:
            rows[i] = gap_run(cfg, task, static_cast<std::size_t>(v), seed, hash);
            break;
        }
      },
      &done);
  for (std::size_t i = 0; i < count; ++i) {
    if (!done[i]) continue;
    result.runs.push_back(std::move(rows[i]));
    result.curves.insert(result.curves.end(), curves[i].begin(), curves[i].end());
  }
  if (error) {
    result.complete = false;
    result.error = *error;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation: exact functions of the run rows.
// ---------------------------------------------------------------------------

/// Per sweep value: the NaN-skipping mean of every column, n_runs, and the
/// standard error of the schema's key column across seeds.
inline std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& runs) {
  std::vector<ReportRow> out;
  if (runs.empty()) return out;
  const Schema& schema = schema_for(runs.front().experiment);
  const std::size_t key = column_index(schema, schema.key);
  std::map<double, std::vector<const ReportRow*>> groups;
  for (const auto& r : runs) {
    if (r.experiment != schema.id) throw InputError("aggregate: mixed experiments");
    if (r.row_kind == "run") groups[r.sweep_value].push_back(&r);
  }
  for (const auto& [value, members] : groups) {
    ReportRow agg{schema.id, "aggregate", value, std::nullopt, members.front()->config_hash, "", {}};
    agg.values.assign(schema.columns.size(), kNaN);
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      double sum = 0.0;
      std::size_t k = 0;
      for (const auto* r : members)
        if (!std::isnan(r->values[j])) {
          sum += r->values[j];
          ++k;
        }
      if (k > 0) agg.values[j] = sum / static_cast<double>(k);
    }
    double sum = 0.0, sum_sq = 0.0;
    std::size_t k = 0;
    for (const auto* r : members)
      if (!std::isnan(r->values[key])) {
        sum += r->values[key];
        sum_sq += r->values[key] * r->values[key];
        ++k;
      }
    agg.values[column_index(schema, "n_runs")] = static_cast<double>(members.size());
    if (k > 1) {
      const double mean = sum / static_cast<double>(k);
      const double var = std::max(0.0, (sum_sq - static_cast<double>(k) * mean * mean) / static_cast<double>(k - 1));
      agg.values[column_index(schema, schema.key + "_mean_se")] = std::sqrt(var / static_cast<double>(k));
    }
    for (const auto* r : members) {
      if (r->note.empty()) continue;
      std::string rest = r->note;
      for (std::size_t pos; (pos = rest.find(';')) != std::string::npos; rest.erase(0, pos + 1))
        add_note(agg.note, rest.substr(0, pos));
      add_note(agg.note, rest);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

struct LineFit {
  double slope = kNaN;
  double intercept = kNaN;
};

/// Least squares of log y on log x over the finite positive pairs.
inline LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++k;
  }
  LineFit f;
  if (k < 2) return f;
  const double kd = static_cast<double>(k);
  const double den = kd * sxx - sx * sx;
  if (den == 0.0) return f;
  f.slope = (kd * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / kd;
  return f;
}

/// Empirical threshold from per-gamma degradation rates (aggregate rows in
/// ascending gamma). `gamma` is the midpoint between the largest non-degrading
/// value below the smallest degrading one and that degrading value; a value
/// degrades when at least half its valid runs do.
struct EmpiricalThreshold {
  std::optional<double> gamma;
  double lower = kNaN, upper = kNaN, resolution = kNaN;
  bool consistent = true;  // no non-degrading value above the threshold
  // gamma* with every value strictly below non-degrading in >= `level` of
  // runs and every value strictly above degrading in >= `level` of runs, both
  // sides nonempty. Midpoints between grid values are tried first; failing
  // that, a grid value itself, which then belongs to neither side.
  std::optional<double> separating_gamma;
  bool separating_on_grid = false;
};

inline EmpiricalThreshold empirical_threshold(const std::vector<ReportRow>& aggregates, double level = 0.8) {
  EmpiricalThreshold th;
  std::vector<double> g, rate;
  for (const auto& a : aggregates) {
    const double r = value_of(a, "degraded");
    if (std::isnan(r)) continue;
    g.push_back(a.sweep_value);
    rate.push_back(r);
  }
  if (g.size() >= 2) {
    double step = g[1] - g[0];
    for (std::size_t i = 2; i < g.size(); ++i) step = std::max(step, g[i] - g[i - 1]);
    th.resolution = step;
  }
  std::size_t first_bad = g.size();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (rate[i] >= 0.5) {
      first_bad = i;
      break;
    }
  if (first_bad < g.size() && first_bad > 0) {
    th.lower = g[first_bad - 1];
    th.upper = g[first_bad];
    th.gamma = 0.5 * (th.lower + th.upper);
  }
  for (std::size_t i = first_bad; i < g.size(); ++i)
    if (rate[i] < 0.5) th.consistent = false;
  // values [0, below) must hold, [above, size) must degrade
  const auto separates = [&](std::size_t below, std::size_t above) {
    for (std::size_t i = 0; i < below; ++i)
      if (1.0 - rate[i] < level) return false;
    for (std::size_t i = above; i < g.size(); ++i)
      if (rate[i] < level) return false;
    return true;
  };
  for (std::size_t split = 1; split < g.size(); ++split)
    if (separates(split, split)) {
      th.separating_gamma = 0.5 * (g[split - 1] + g[split]);
      return th;
    }
  for (std::size_t mid = 1; mid + 1 < g.size(); ++mid)
    if (separates(mid, mid + 1)) {
      th.separating_gamma = g[mid];
      th.separating_on_grid = true;
      break;
    }
  return th;
}

// ---------------------------------------------------------------------------
// Built-in presets (the shipped configs/*.ini files spell out the same values).
// ---------------------------------------------------------------------------

/// Linear-sign teacher on d = 20 standard Gaussian inputs, linear student on
/// the raw inputs.
inline TaskConfig linear_task() {
  TaskConfig t;
  t.teacher.kind = TeacherKind::linear_sign;
  t.teacher.input_dim = 20;
  t.dist.input_dim = 20;
  t.model.family = ModelFamily::linear_features;
  t.model_features = FeatureKind::identity;
  return t;
}

inline ExperimentConfig default_config(SweepKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.task = linear_task();
  c.seeds.clear();
  switch (kind) {
    case SweepKind::clean_first:
      c.sweep = {256, 512, 1024, 2048, 4096, 8192, 16384};
      c.gamma = 0.4;
      for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
      c.eta_mode = EtaMode::thm1_cap;
      c.eta_scale = 0.25;
      c.epochs = 1;
      break;
    case SweepKind::phase:
      // Linear-sign teacher in d = 5, student linear on 150 random Fourier
      // features: too few features to interpolate 2000 points, enough to fit
      // corrupted labels locally once data is reused. Step size picked on
      // seeds 100..129, not on the reported seeds.
      c.task.teacher.input_dim = 5;
      c.task.dist.input_dim = 5;
      c.task.model_features = FeatureKind::random_fourier;
      c.task.num_features = 150;
      c.task.bandwidth = 0.7;
      c.sweep = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      c.total = 2000;
      for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
      c.eta = 0.03;
      c.epochs = 200;
      c.mc_test = 10000;
      c.smooth_probes = 8;
      c.max_snapshots = 16;
      break;
    case SweepKind::gap:
      c.sweep = {256, 512, 1024, 2048, 4096, 8192};
      c.gamma = 0.4;
      for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
      c.eta = 0.01;
      c.epochs = 1;
      c.mc_gap = 400000;
      break;
  }
  return c;
}

}  // namespace noisylab
