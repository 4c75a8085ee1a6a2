#pragma once

// Experiment configuration: a flat INI file with sections, parsed with
// boost::property_tree. Every key is optional; unknown sections or keys are
// rejected so typos surface as config errors instead of silent defaults.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "noisylab/bounds.hpp"
#include "noisylab/core.hpp"
#include "noisylab/format.hpp"
#include "noisylab/models.hpp"
#include "noisylab/synthgen.hpp"
#include "noisylab/trainer.hpp"

namespace noisylab {

enum class SweepKind { clean_first, phase, gap };

inline std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::clean_first: return "clean-first";
    case SweepKind::phase: return "phase";
    case SweepKind::gap: return "gap";
  }
  return "?";
}

inline SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "clean-first") return SweepKind::clean_first;
  if (s == "phase") return SweepKind::phase;
  if (s == "gap") return SweepKind::gap;
  throw ConfigError("unknown sweep kind '" + s + "'");
}

/// How the step size is chosen. `fixed` uses train.eta; the theory modes are
/// evaluated on pilot constants measured at theta_0 and multiplied by eta_scale.
enum class EtaMode { fixed, thm1_cap, thm3_schedule, omega_stay };

inline std::string to_string(EtaMode m) {
  switch (m) {
    case EtaMode::fixed: return "fixed";
    case EtaMode::thm1_cap: return "thm1-cap";
    case EtaMode::thm3_schedule: return "thm3-schedule";
    case EtaMode::omega_stay: return "omega-stay";
  }
  return "?";
}

inline EtaMode parse_eta_mode(const std::string& s) {
  if (s == "fixed") return EtaMode::fixed;
  if (s == "thm1-cap") return EtaMode::thm1_cap;
  if (s == "thm3-schedule") return EtaMode::thm3_schedule;
  if (s == "omega-stay") return EtaMode::omega_stay;
  throw ConfigError("unknown eta_mode '" + s + "'");
}

struct TaskConfig {
  TeacherSpec teacher;
  DistributionSpec dist;
  ModelSpec model;
  FeatureKind model_features = FeatureKind::identity;
  std::size_t num_features = 0;
  double bandwidth = 1.0;
  // Teacher and student feature map come from this seed, so the task stays
  // fixed while run seeds vary the data, initialization and SGD order.
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  TaskConfig task;
  SweepKind kind = SweepKind::clean_first;
  std::vector<double> sweep;  // m values, or gamma values for the phase sweep
  double gamma = 0.0;         // m sweeps
  std::size_t total = 2000;   // phase sweep: m + n
  std::vector<std::uint64_t> seeds{0};

  double eta = 0.01;
  EtaMode eta_mode = EtaMode::fixed;
  double eta_scale = 1.0;
  LaterPolicy policy = LaterPolicy::with_replacement;
  std::size_t epochs = 1;  // total, first epoch included
  std::size_t snapshot_stride = 0;

  std::size_t mc_population = 100000;
  std::size_t mc_test = 10000;
  std::size_t mc_gap = 100000;

  std::size_t sup_probes = 0;
  std::size_t smooth_probes = 32;
  double smooth_step = 1e-3;
  std::size_t max_snapshots = 64;

  double delta = 0.05;
  double C = 1.0;
  double C_dd = 1.0;
  double search_tol = 1e-6;

  double margin_se = 2.0;  // degradation margin in standard errors of the epoch-1 test loss

  std::string output_dir = "out";
  bool emit_plots = true;
  std::size_t threads = 1;

  void validate() const {
    if (task.teacher.input_dim != task.dist.input_dim)
      throw ConfigError("task: teacher and distribution input_dim differ");
    task.dist.validate();
    if (sweep.empty()) throw ConfigError("sweep: values must be nonempty");
    if (seeds.empty()) throw ConfigError("seeds: list must be nonempty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw ConfigError("seeds: values must be distinct");
    for (double v : sweep) {
      if (kind == SweepKind::phase) {
        if (!(v >= 0.0 && v < 1.0)) throw ConfigError("sweep: gamma values must lie in [0, 1)");
      } else if (!(v >= 1.0) || v != std::floor(v)) {
        throw ConfigError("sweep: m values must be positive integers");
      }
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("sweep: gamma must lie in [0, 1)");
    if (kind == SweepKind::phase && total < 2) throw ConfigError("sweep: total must be >= 2");
    if (!(eta >= 0.0) || !(eta_scale > 0.0)) throw ConfigError("train: eta >= 0 and eta_scale > 0 required");
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (mc_population < kMinMonteCarlo || mc_test < kMinMonteCarlo)
      throw ConfigError("mc: sizes must be >= 100");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bounds: delta must be in (0, 1)");
    if (!(C > 0.0 && C_dd > 0.0)) throw ConfigError("bounds: C and C_dd must be > 0");
    if (!(margin_se >= 0.0)) throw ConfigError("phase: margin_se must be >= 0");
    if (threads == 0) throw ConfigError("output: threads must be >= 1");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

}  // namespace detail

/// Seeds as a comma list; an item "a:b" expands to a, a+1, ..., b-1.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : detail::split_list(s)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(parse_u64(item));
      continue;
    }
    const auto a = parse_u64(item.substr(0, colon)), b = parse_u64(item.substr(colon + 1));
    if (b <= a) throw ConfigError("seeds: empty range '" + item + "'");
    for (auto v = a; v < b; ++v) out.push_back(v);
  }
  return out;
}

inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  static const std::map<std::string, std::set<std::string>> known = {
      {"task", {"teacher", "input_dim", "teacher_hidden", "teacher_features", "teacher_num_features",
                "teacher_bandwidth", "distribution", "model", "features", "num_features", "bandwidth",
                "hidden", "squash_cap", "seed"}},
      {"sweep", {"kind", "values", "gamma", "total"}},
      {"seeds", {"values"}},
      {"train", {"eta", "eta_mode", "eta_scale", "policy", "epochs", "snapshot_stride"}},
      {"mc", {"population", "test", "gap"}},
      {"estimate", {"sup_probes", "smooth_probes", "smooth_step", "max_snapshots"}},
      {"bounds", {"delta", "C", "C_dd", "search_tol"}},
      {"phase", {"margin_se"}},
      {"output", {"dir", "plots", "threads"}}};
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& kv : body)
      if (!it->second.count(kv.first)) throw ConfigError("config: unknown key " + section + "." + kv.first);
  }

  const auto str = [&](const char* key, const std::string& def) { return tree.get<std::string>(key, def); };
  const auto num = [&](const char* key, double def) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return def;
    try {
      return parse_double(*v);
    } catch (const InputError&) {
      throw ConfigError(std::string("config: ") + key + " is not a number");
    }
  };
  const auto count = [&](const char* key, std::size_t def) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return def;
    try {
      return static_cast<std::size_t>(parse_u64(*v));
    } catch (const InputError&) {
      throw ConfigError(std::string("config: ") + key + " is not a nonnegative integer");
    }
  };
  const auto flag = [&](const char* key, bool def) {
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(std::string("config: ") + key + " is not a boolean");
  };

  ExperimentConfig c;
  TaskConfig& t = c.task;
  t.teacher.kind = parse_teacher_kind(str("task.teacher", "linear-sign"));
  t.teacher.input_dim = count("task.input_dim", 20);
  t.teacher.hidden = count("task.teacher_hidden", 16);
  t.teacher.feature_kind = parse_feature_kind(str("task.teacher_features", "identity"));
  t.teacher.num_features = count("task.teacher_num_features", 0);
  t.teacher.bandwidth = num("task.teacher_bandwidth", 1.0);
  t.dist.kind = parse_distribution_kind(str("task.distribution", "standard-gaussian"));
  t.dist.input_dim = t.teacher.input_dim;
  t.model.family = parse_model_family(str("task.model", "linear-features"));
  t.model_features = parse_feature_kind(str("task.features", "identity"));
  t.num_features = count("task.num_features", 0);
  t.bandwidth = num("task.bandwidth", 1.0);
  t.model.hidden = count("task.hidden", 32);
  t.model.squash_cap = num("task.squash_cap", 0.0);
  t.seed = count("task.seed", 0);

  c.kind = parse_sweep_kind(str("sweep.kind", "clean-first"));
  for (const auto& v : detail::split_list(str("sweep.values", ""))) {
    try {
      c.sweep.push_back(parse_double(v));
    } catch (const InputError&) {
      throw ConfigError("config: sweep.values item '" + v + "' is not a number");
    }
  }
  c.gamma = num("sweep.gamma", 0.0);
  c.total = count("sweep.total", 2000);
  try {
    if (const auto s = tree.get_optional<std::string>("seeds.values")) c.seeds = parse_seed_list(*s);
  } catch (const InputError& e) {
    throw ConfigError(std::string("config: seeds.values: ") + e.what());
  }

  c.eta = num("train.eta", 0.01);
  c.eta_mode = parse_eta_mode(str("train.eta_mode", "fixed"));
  c.eta_scale = num("train.eta_scale", 1.0);
  c.policy = parse_later_policy(str("train.policy", "with-replacement"));
  c.epochs = count("train.epochs", 1);
  c.snapshot_stride = count("train.snapshot_stride", 0);

  c.mc_population = count("mc.population", 100000);
  c.mc_test = count("mc.test", 10000);
  c.mc_gap = count("mc.gap", 100000);

  c.sup_probes = count("estimate.sup_probes", 0);
  c.smooth_probes = count("estimate.smooth_probes", 32);
  c.smooth_step = num("estimate.smooth_step", 1e-3);
  c.max_snapshots = count("estimate.max_snapshots", 64);

  c.delta = num("bounds.delta", 0.05);
  c.C = num("bounds.C", 1.0);
  c.C_dd = num("bounds.C_dd", 1.0);
  c.search_tol = num("bounds.search_tol", 1e-6);

  c.margin_se = num("phase.margin_se", 2.0);

  c.output_dir = str("output.dir", "out");
  c.emit_plots = flag("output.plots", true);
  c.threads = count("output.threads", 1);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError("config: cannot read '" + path + "'");
  }
  return parse_config(text);
}

/// Canonical INI text of everything that influences results. Output
/// location, plotting and thread count are left out, so the hash of this
/// text identifies a run independently of where and how fast it was produced.
inline std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& t = c.task;
  o << "[task]\n"
    << "teacher=" << to_string(t.teacher.kind) << "\ninput_dim=" << t.teacher.input_dim
    << "\nteacher_hidden=" << t.teacher.hidden << "\nteacher_features=" << to_string(t.teacher.feature_kind)
    << "\nteacher_num_features=" << t.teacher.num_features
    << "\nteacher_bandwidth=" << format_double(t.teacher.bandwidth)
    << "\ndistribution=" << to_string(t.dist.kind) << "\nmodel=" << to_string(t.model.family)
    << "\nfeatures=" << to_string(t.model_features) << "\nnum_features=" << t.num_features
    << "\nbandwidth=" << format_double(t.bandwidth) << "\nhidden=" << t.model.hidden
    << "\nsquash_cap=" << format_double(t.model.squash_cap) << "\nseed=" << t.seed << "\n";
  o << "[sweep]\nkind=" << to_string(c.kind) << "\nvalues=" << detail::join_doubles(c.sweep)
    << "\ngamma=" << format_double(c.gamma) << "\ntotal=" << c.total << "\n";
  o << "[seeds]\nvalues=";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : "") << c.seeds[i];
  o << "\n[train]\neta=" << format_double(c.eta) << "\neta_mode=" << to_string(c.eta_mode)
    << "\neta_scale=" << format_double(c.eta_scale) << "\npolicy=" << to_string(c.policy)
    << "\nepochs=" << c.epochs << "\nsnapshot_stride=" << c.snapshot_stride << "\n";
  o << "[mc]\npopulation=" << c.mc_population << "\ntest=" << c.mc_test << "\ngap=" << c.mc_gap << "\n";
  o << "[estimate]\nsup_probes=" << c.sup_probes << "\nsmooth_probes=" << c.smooth_probes
    << "\nsmooth_step=" << format_double(c.smooth_step) << "\nmax_snapshots=" << c.max_snapshots << "\n";
  o << "[bounds]\ndelta=" << format_double(c.delta) << "\nC=" << format_double(c.C)
    << "\nC_dd=" << format_double(c.C_dd) << "\nsearch_tol=" << format_double(c.search_tol) << "\n";
  o << "[phase]\nmargin_se=" << format_double(c.margin_se) << "\n";
  return o.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(canonical_config(c))); }

}  // namespace noisylab
