#include "mixflow/config.hpp"

#include <fstream>

namespace mixflow {

namespace {

// Throws ConfigError with the offending field name on bad/missing keys.
template <class T>
T field(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for field '" + key + "'");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("unknown field '" + it.key() + "' in " + where);
  }
}

}  // namespace

Dataset dataset_from_json(const json& j) {
  reject_unknown(j, {"name", "mu"}, "dataset");
  const std::string name = field<std::string>(j, "name", "eight_gaussians");
  switch (dataset_from_name(name)) {
    case DatasetKind::EightGaussians: return Dataset::eight_gaussians();
    case DatasetKind::TwoMoons: return Dataset::two_moons();
    case DatasetKind::Checkerboard: return Dataset::checkerboard();
    case DatasetKind::GaussianShift: {
      std::vector<double> mu = field<std::vector<double>>(j, "mu", {4.0});
      if (mu.empty()) throw ConfigError("gaussian_shift dataset needs a non-empty mu");
      return Dataset::gaussian_shift(std::move(mu));
    }
  }
  throw ConfigError("unknown dataset: " + name);
}

json dataset_to_json(const Dataset& ds) {
  json j;
  j["name"] = dataset_name(ds.kind);
  if (ds.kind == DatasetKind::GaussianShift) j["mu"] = ds.shift_mu;
  return j;
}

SolverSpec solver_from_json(const json& j) {
  reject_unknown(j, {"name", "steps", "rtol", "atol", "max_nfe"}, "solver");
  SolverSpec s;
  s.kind = solver_from_name(field<std::string>(j, "name", "euler"));
  s.steps = field<int>(j, "steps", 128);
  s.rtol = field<double>(j, "rtol", 1e-5);
  s.atol = field<double>(j, "atol", 1e-5);
  s.max_nfe = field<int>(j, "max_nfe", 1000000);
  s.validate();
  return s;
}

json solver_to_json(const SolverSpec& s) {
  json j;
  j["name"] = solver_name(s.kind);
  if (s.kind == SolverKind::Rk45) {
    j["rtol"] = s.rtol;
    j["atol"] = s.atol;
    j["max_nfe"] = s.max_nfe;
  } else {
    j["steps"] = s.steps;
  }
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"regime", "kappa", "beta", "iterations", "batch_size", "lr", "warmup_steps",
                  "ema_decay", "seed", "kl_target", "clip_grad_norm", "log_interval",
                  "checkpoint_interval", "deterministic", "model"},
                 "train");
  TrainConfig t;
  t.regime = regime_from_name(field<std::string>(j, "regime", "mixflow"));
  t.kappa_kind = kappa_from_name(field<std::string>(j, "kappa", "sample"));
  t.beta = field<double>(j, "beta", 1e-5);
  t.iterations = field<int64_t>(j, "iterations", 20000);
  t.batch_size = field<int>(j, "batch_size", 256);
  t.lr = field<double>(j, "lr", 2e-4);
  t.warmup_steps = field<int64_t>(j, "warmup_steps", 500);
  t.ema_decay = field<double>(j, "ema_decay", 0.999);
  t.seed = field<uint64_t>(j, "seed", 0);
  t.kl_target = kl_target_from_name(field<std::string>(j, "kl_target", "unmixed_base"));
  t.clip_grad_norm = field<double>(j, "clip_grad_norm", 10.0);
  t.log_interval = field<int64_t>(j, "log_interval", 100);
  t.checkpoint_interval = field<int64_t>(j, "checkpoint_interval", 5000);
  t.exec = field<bool>(j, "deterministic", false) ? Exec::Serial : Exec::Parallel;
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"v_hidden", "time_embed_dim", "src_hidden", "activation", "label_embed_dim",
                    "kappa_noise_dim"},
                   "train.model");
    t.v_hidden = field<std::vector<int>>(m, "v_hidden", t.v_hidden);
    t.time_embed_dim = field<int>(m, "time_embed_dim", t.time_embed_dim);
    t.src_hidden = field<std::vector<int>>(m, "src_hidden", t.src_hidden);
    t.activation = activation_from_name(field<std::string>(m, "activation", "silu"));
    t.label_embed_dim = field<int>(m, "label_embed_dim", 0);
    t.kappa_noise_dim = field<int>(m, "kappa_noise_dim", 0);
  }
  t.validate();
  return t;
}

json train_config_to_json(const TrainConfig& t) {
  json j;
  j["regime"] = regime_name(t.regime);
  j["kappa"] = kappa_name(t.kappa_kind);
  j["beta"] = t.beta;
  j["iterations"] = t.iterations;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["warmup_steps"] = t.warmup_steps;
  j["ema_decay"] = t.ema_decay;
  j["seed"] = t.seed;
  j["kl_target"] = kl_target_name(t.kl_target);
  j["clip_grad_norm"] = t.clip_grad_norm;
  j["log_interval"] = t.log_interval;
  j["checkpoint_interval"] = t.checkpoint_interval;
  j["deterministic"] = t.exec == Exec::Serial;
  j["model"] = {{"v_hidden", t.v_hidden},
                {"time_embed_dim", t.time_embed_dim},
                {"src_hidden", t.src_hidden},
                {"activation", activation_name(t.activation)},
                {"label_embed_dim", t.label_embed_dim},
                {"kappa_noise_dim", t.kappa_noise_dim}};
  return j;
}

namespace {

EvalSpec eval_from_json(const json& j) {
  reject_unknown(j,
                 {"metric", "solver", "n", "w", "t_grid", "w2_method", "n_projections",
                  "use_ema", "seeds"},
                 "eval");
  EvalSpec e;
  e.metric = field<std::string>(j, "metric", "curvature");
  if (e.metric != "curvature" && e.metric != "doi" && e.metric != "w2" &&
      e.metric != "straightness")
    throw ConfigError("unknown metric: " + e.metric);
  if (j.contains("solver")) e.solver = solver_from_json(j.at("solver"));
  e.n = field<int>(j, "n", e.metric == "w2" ? 2048 : 10000);
  e.w = field<double>(j, "w", 0.0);
  e.t_grid = field<int>(j, "t_grid", 128);
  e.w2_method = field<std::string>(j, "w2_method", "exact");
  if (e.w2_method != "exact" && e.w2_method != "sliced")
    throw ConfigError("w2_method must be 'exact' or 'sliced'");
  e.n_projections = field<int>(j, "n_projections", 256);
  e.use_ema = field<bool>(j, "use_ema", true);
  e.seeds = field<std::vector<uint64_t>>(j, "seeds", {0});
  return e;
}

json eval_to_json(const EvalSpec& e) {
  json j;
  j["metric"] = e.metric;
  j["solver"] = solver_to_json(e.solver);
  j["n"] = e.n;
  j["w"] = e.w;
  j["t_grid"] = e.t_grid;
  j["w2_method"] = e.w2_method;
  j["n_projections"] = e.n_projections;
  j["use_ema"] = e.use_ema;
  j["seeds"] = e.seeds;
  return j;
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, {"dataset", "train", "eval", "output_dir"}, "experiment config");
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("eval"))
    for (const auto& e : j.at("eval")) c.evals.push_back(eval_from_json(e));
  c.output_dir = field<std::string>(j, "output_dir", "runs");
  return c;
}

json experiment_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = dataset_to_json(c.dataset);
  j["train"] = train_config_to_json(c.train);
  json evals = json::array();
  for (const auto& e : c.evals) evals.push_back(eval_to_json(e));
  j["eval"] = evals;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

std::string config_hash(const json& canonical) {
  const std::string s = canonical.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string config_hash(const ExperimentConfig& c) { return config_hash(experiment_to_json(c)); }

}  // namespace mixflow
