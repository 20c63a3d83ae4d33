#include "mixflow/cli_lib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mixflow/checkpoint.hpp"
#include "mixflow/metrics.hpp"

namespace fs = std::filesystem;

namespace mixflow {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << content;
}

std::string history_csv(const std::vector<HistoryRow>& rows, bool deterministic) {
  std::string out = "iter,recon_loss,kl_loss,beta,lr,wall_clock_s\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter) + "," + fmt_g(r.recon) + "," + fmt_g(r.kl) + "," +
           fmt_g(r.beta) + "," + fmt_g(r.lr) + "," +
           (deterministic ? std::string("0") : fmt_g(r.wall_s)) + "\n";
  }
  return out;
}

std::string ckpt_name(int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08lld", static_cast<long long>(iter));
  return buf;
}

json run_meta(const std::string& hash, const ExperimentConfig& cfg) {
  json meta;
  meta["config_hash"] = hash;
  meta["dataset"] = dataset_to_json(cfg.dataset);
  meta["beta"] = cfg.train.beta;
  meta["kl_target"] = kl_target_name(cfg.train.kl_target);
  return meta;
}

FlowModel ema_as_raw(const FlowModel& model) {
  FlowModel out = model;
  for (auto& e : out.params.entries()) {
    auto sh = model.ema.shadow_of(model.params.at(e.name));
    std::copy(sh.begin(), sh.end(), e.value.begin());
  }
  return out;
}

// Shared by run_train_cmd and the sweep's training cache.
int run_train_config(const ExperimentConfig& cfg, bool force, bool quiet, bool export_json,
                     int export_dataset, std::string* run_dir_out) {
  const json canonical = experiment_to_json(cfg);
  const std::string hash = config_hash(canonical);
  const fs::path run_dir = fs::path(cfg.output_dir) / hash;
  if (run_dir_out) *run_dir_out = run_dir.string();

  if (fs::exists(run_dir / "DONE") && !force) {
    if (!quiet) std::cout << "run " << hash << " already complete: " << run_dir.string() << "\n";
    return kExitOk;
  }
  fs::create_directories(run_dir);
  write_text(run_dir / "config.resolved", canonical.dump(2) + "\n");
  const std::string meta = run_meta(hash, cfg).dump();

  TrainCallbacks cb;
  cb.on_checkpoint = [&](const FlowModel& m, int64_t iter) {
    save_checkpoint((run_dir / ckpt_name(iter)).string(), m, meta);
  };
  TrainResult res = train(cfg.train, cfg.dataset, cb);

  const bool det = cfg.train.exec == Exec::Serial;
  write_text(run_dir / "history.csv", history_csv(res.history, det));
  save_checkpoint((run_dir / "ckpt_final").string(), res.model, meta);
  save_checkpoint((run_dir / "ckpt_ema").string(), ema_as_raw(res.model), meta);
  if (export_json)
    export_checkpoint_json((run_dir / "ckpt_final.json").string(), res.model, meta);
  if (export_dataset > 0) {
    Rng rng(mix_seed(cfg.train.seed, stream::kData, 0));
    std::vector<double> xs;
    std::vector<int> labels;
    cfg.dataset.draw_batch(rng, export_dataset, xs, labels);
    std::string csv;
    for (int c = 0; c < cfg.dataset.d; ++c) csv += (c ? ",x" : "x") + std::to_string(c + 1);
    csv += ",label\n";
    for (int i = 0; i < export_dataset; ++i) {
      for (int c = 0; c < cfg.dataset.d; ++c)
        csv += (c ? "," : "") + fmt_g(xs[int64_t(i) * cfg.dataset.d + c]);
      csv += "," + std::to_string(labels[i]) + "\n";
    }
    write_text(run_dir / "dataset.csv", csv);
  }

  if (res.diverged) {
    if (!quiet)
      std::cout << "training diverged at iteration " << res.diverged_at
                << "; partial artifacts kept in " << run_dir.string() << "\n";
    return kExitDivergence;
  }
  write_text(run_dir / "DONE", hash + "\n");
  if (!quiet) std::cout << "run " << hash << " complete: " << run_dir.string() << "\n";
  return kExitOk;
}

struct LoadedModel {
  FlowModel model;
  json meta;
  Dataset dataset;
  bool has_dataset = false;
};

LoadedModel load_model(const std::string& ckpt_path) {
  LoadedModel lm;
  std::string meta;
  lm.model = load_checkpoint(ckpt_path, &meta);
  lm.meta = meta.empty() ? json::object() : json::parse(meta, nullptr, false);
  if (lm.meta.is_discarded()) lm.meta = json::object();
  if (lm.meta.contains("dataset")) {
    lm.dataset = dataset_from_json(lm.meta.at("dataset"));
    lm.has_dataset = true;
  }
  return lm;
}

std::vector<double> heldout_samples(const Dataset& ds, int n, uint64_t seed) {
  Rng rng(mix_seed(seed, stream::kData, 0x6e1d));
  std::vector<double> xs;
  std::vector<int> labels;
  ds.draw_batch(rng, n, xs, labels);
  return xs;
}

// Pair sampler matching the model's own coupling; used by the doi metric.
PairSampler model_pair_sampler(const FlowModel& model, const Dataset& ds) {
  return [&model, ds](Rng& rng, std::span<double> x0, std::span<double> x1) {
    int label = 0;
    ds.draw(rng, x1, label);
    if (model.spec.regime == Regime::Independent) {
      rng.normal_fill(x0);
      return;
    }
    double w = 1.0;
    if (model.spec.regime == Regime::MixFlow) w = rng.uniform();
    std::vector<double> kappa = build_kappa(
        model.spec.kappa, model.params, x1,
        model.spec.kappa.kind == KappaKind::ClassLabel ? std::optional<int>(label) : std::nullopt,
        rng);
    DiagGaussian g = predict_source(model.params, model.spec.src_spec, kappa);
    if (model.spec.regime == Regime::MixFlow) g = mix(g, w);
    std::vector<double> draw = sample(g, rng);
    std::copy(draw.begin(), draw.end(), x0.begin());
  };
}

W2Method w2_method_from_name(const std::string& name) {
  if (name == "exact") return W2Method::ExactAssignment;
  if (name == "sliced") return W2Method::Sliced;
  throw ConfigError("w2 method must be 'exact' or 'sliced'");
}

}  // namespace

SolverSpec make_solver_spec(const std::string& name, int steps, double rtol, double atol,
                            int max_nfe) {
  switch (solver_from_name(name)) {
    case SolverKind::Euler: return SolverSpec::euler(steps);
    case SolverKind::Heun2: return SolverSpec::heun2(steps);
    case SolverKind::Rk45: return SolverSpec::rk45(rtol, atol, max_nfe);
  }
  throw ConfigError("unknown solver: " + name);
}

void write_samples_csv(const std::string& path, std::span<const double> samples, int n, int d) {
  std::string out;
  for (int c = 0; c < d; ++c) out += (c ? ",x" : "x") + std::to_string(c + 1);
  out += "\n";
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c)
      out += (c ? "," : "") + fmt_g(samples[static_cast<int64_t>(i) * d + c]);
    out += "\n";
  }
  write_text(path, out);
}

std::vector<double> read_samples_csv(const std::string& path, int* d_out) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open samples file: " + path);
  std::vector<double> out;
  std::string line;
  int d = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (pos == 0) numeric = false;
      } catch (...) {
        numeric = false;
      }
    }
    if (!numeric) continue;  // header
    if (d == 0) d = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != d)
      throw InputError("ragged row in samples file: " + path);
    out.insert(out.end(), row.begin(), row.end());
  }
  if (d == 0) throw InputError("no numeric rows in samples file: " + path);
  if (d_out) *d_out = d;
  return out;
}

int run_train_cmd(const TrainCmdOptions& opt, std::string* run_dir_out) {
  ExperimentConfig cfg = load_experiment_config(opt.config_path);
  if (opt.seed_override) cfg.train.seed = *opt.seed_override;
  if (!opt.out_override.empty()) cfg.output_dir = opt.out_override;
  if (opt.deterministic) cfg.train.exec = Exec::Serial;
  return run_train_config(cfg, opt.force, opt.quiet, /*export_json=*/false, opt.export_dataset,
                          run_dir_out);
}

int run_sample_cmd(const SampleCmdOptions& opt) {
  LoadedModel lm = load_model(opt.ckpt);
  SampleConfig sc;
  sc.n = opt.n;
  sc.w = opt.w;
  sc.solver = make_solver_spec(opt.solver, opt.steps, opt.rtol, opt.atol, opt.max_nfe);
  sc.seed = opt.seed;
  sc.use_ema = !opt.raw_weights;
  sc.exec = opt.deterministic ? Exec::Serial : Exec::Parallel;

  std::vector<double> file_kappa;
  std::vector<int> file_labels;
  if (opt.kappa_from == "none") {
    sc.kappa_source = KappaSource::None;
  } else if (opt.kappa_from == "dataset") {
    sc.kappa_source = KappaSource::Dataset;
    if (!lm.has_dataset)
      throw ConfigError("checkpoint carries no dataset; use --kappa-from file or none");
  } else if (opt.kappa_from.rfind("file:", 0) == 0) {
    sc.kappa_source = KappaSource::File;
    const std::string path = opt.kappa_from.substr(5);
    int d = 0;
    std::vector<double> rows = read_samples_csv(path, &d);
    if (lm.model.spec.kappa.kind == KappaKind::ClassLabel) {
      for (double v : rows) file_labels.push_back(static_cast<int>(v));
    } else {
      file_kappa = std::move(rows);
    }
  } else {
    throw ConfigError("--kappa-from must be none, dataset, or file:<path>");
  }

  SampleBatch sb = sample_batch(lm.model, sc, lm.dataset, file_kappa, file_labels);
  write_samples_csv(opt.out, sb.samples, sb.n, sb.d);

  json side;
  side["solver"] = solver_to_json(sc.solver);
  side["n"] = sb.n;
  side["w"] = sc.w;
  side["seed"] = opt.seed;
  side["kappa_from"] = opt.kappa_from;
  side["nfe_total"] = sb.total_nfe;
  side["nfe_per_sample"] = sb.n > 0 ? static_cast<double>(sb.total_nfe) / sb.n : 0.0;
  side["wall_clock_s"] = opt.deterministic ? 0.0 : sb.wall_s;
  side["use_ema"] = sc.use_ema;
  if (lm.meta.contains("config_hash")) side["config_hash"] = lm.meta["config_hash"];
  write_text(opt.out + ".meta.json", side.dump(2) + "\n");
  if (!opt.quiet)
    std::cout << "wrote " << sb.n << " samples to " << opt.out << " (nfe/sample "
              << side["nfe_per_sample"] << ")\n";
  return kExitOk;
}

int run_eval_cmd(const EvalCmdOptions& opt) {
  if (opt.metric != "curvature" && opt.metric != "doi" && opt.metric != "w2" &&
      opt.metric != "straightness")
    throw ConfigError("unknown metric: " + opt.metric);
  const Exec exec = opt.deterministic ? Exec::Serial : Exec::Parallel;
  const SolverSpec solver =
      make_solver_spec(opt.solver, opt.steps, opt.rtol, opt.atol, opt.max_nfe);

  json report;
  double value = 0.0;
  int n_used = 0;

  // w2 on two existing sample files needs no model at all.
  if (opt.metric == "w2" && !opt.samples_a.empty() && !opt.samples_b.empty()) {
    int da = 0, db = 0;
    std::vector<double> a = read_samples_csv(opt.samples_a, &da);
    std::vector<double> b = read_samples_csv(opt.samples_b, &db);
    if (da != db) throw InputError("sample files have different dimensions");
    value = wasserstein2(a, b, da, w2_method_from_name(opt.method), opt.n_projections, opt.seed);
    n_used = static_cast<int>(a.size()) / da;
    report["config_hash"] = nullptr;
  } else {
    LoadedModel lm = load_model(opt.ckpt);
    const bool use_ema = !opt.raw_weights;
    MlpVelocity v(lm.model, use_ema);
    if (opt.metric == "curvature") {
      n_used = opt.n > 0 ? opt.n : 10000;
      CurvatureReport rep = curvature(v, n_used, solver, opt.seed, exec);
      value = rep.mean_curvature;
      report["per_t_profile"] = rep.per_t_profile;
    } else if (opt.metric == "doi") {
      if (!lm.has_dataset) throw ConfigError("checkpoint carries no dataset for doi");
      n_used = opt.n > 0 ? opt.n : 10000;
      value = degree_of_intersection(v, model_pair_sampler(lm.model, lm.dataset),
                                     lm.model.spec.d, n_used, opt.t_grid, opt.seed, exec);
    } else if (opt.metric == "w2") {
      if (!lm.has_dataset) throw ConfigError("checkpoint carries no dataset for w2");
      n_used = opt.n > 0 ? opt.n : 2048;
      SampleConfig sc;
      sc.n = n_used;
      sc.w = opt.w;
      sc.kappa_source = opt.w > 0.0 ? KappaSource::Dataset : KappaSource::None;
      sc.solver = solver;
      sc.seed = opt.seed;
      sc.use_ema = use_ema;
      sc.exec = exec;
      SampleBatch sb = sample_batch(lm.model, sc, lm.dataset);
      std::vector<double> held = heldout_samples(lm.dataset, n_used, opt.seed);
      value = wasserstein2(sb.samples, held, lm.model.spec.d,
                           w2_method_from_name(opt.method), opt.n_projections, opt.seed);
    } else {  // straightness
      n_used = opt.n > 0 ? opt.n : 100;
      const int d = lm.model.spec.d;
      std::vector<double> acc(n_used, 0.0);
      for (int i = 0; i < n_used; ++i) {
        Rng rng(mix_seed(opt.seed, stream::kMetric, static_cast<uint64_t>(i)));
        std::vector<double> x0(static_cast<size_t>(d));
        rng.normal_fill(x0);
        acc[i] = straightness_profile(solve(v, x0, solver));
      }
      double s = 0.0;
      for (double a : acc) s += a;
      value = s / n_used;
    }
    if (lm.meta.contains("config_hash")) report["config_hash"] = lm.meta["config_hash"];
  }

  report["metric"] = opt.metric;
  report["value"] = value;
  report["n"] = n_used;
  report["solver"] = solver_to_json(solver);
  report["seed"] = opt.seed;
  if (opt.metric == "w2") {
    report["w"] = opt.w;
    report["method"] = opt.method;
  }
  if (opt.metric == "doi") report["t_grid"] = opt.t_grid;
  write_text(opt.out, report.dump(2) + "\n");
  if (!opt.quiet) std::cout << opt.metric << " = " << fmt_g(value) << " (n=" << n_used << ")\n";
  return kExitOk;
}

namespace {

struct SweepAxes {
  std::vector<double> beta;
  std::vector<std::string> kappa;
  std::vector<uint64_t> seed;
  std::vector<double> w;
  std::vector<int> nfe;
  std::vector<std::string> solver;
  std::vector<int64_t> checkpoint_iteration;
};

struct SweepCell {
  // resolved axis values
  double beta = 0.0;
  std::string kappa;
  uint64_t seed = 0;
  double w = 0.0;
  int nfe = 0;
  std::string solver;
  int64_t ckpt_iter = -1;  // -1 = final
  // result
  double value = 0.0;
  bool ok = false;
  std::string error;
};

SolverSpec cell_solver(const std::string& name, int nfe) {
  SolverKind kind = solver_from_name(name);
  switch (kind) {
    case SolverKind::Euler:
      return SolverSpec::euler(nfe);
    case SolverKind::Heun2: {
      if (nfe % 2 == 0) throw ConfigError("heun2 NFE must be odd (2*steps - 1)");
      return SolverSpec::heun2((nfe + 1) / 2);
    }
    case SolverKind::Rk45:
      return SolverSpec::rk45();
  }
  throw ConfigError("unknown solver: " + name);
}

}  // namespace

int run_sweep_cmd(const SweepCmdOptions& opt) {
  std::ifstream is(opt.config_path);
  if (!is) throw ConfigError("cannot open sweep config: " + opt.config_path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON in sweep config: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key();
    if (k != "base" && k != "axes" && k != "metric" && k != "eval" && k != "output")
      throw ConfigError("unknown field '" + k + "' in sweep config");
  }
  if (!j.contains("base")) throw ConfigError("sweep config needs a 'base' experiment");
  ExperimentConfig base = experiment_from_json(j.at("base"));
  if (!opt.out_override.empty()) base.output_dir = opt.out_override;
  if (opt.deterministic) base.train.exec = Exec::Serial;

  const std::string metric = j.value("metric", std::string("w2"));
  if (metric != "w2" && metric != "curvature" && metric != "doi" && metric != "straightness")
    throw ConfigError("unknown sweep metric: " + metric);
  const json ev = j.value("eval", json::object());
  const int eval_n = ev.value("n", metric == "w2" ? 2048 : 10000);
  const std::string w2_method = ev.value("w2_method", std::string("sliced"));
  const int n_projections = ev.value("n_projections", 256);
  const int t_grid = ev.value("t_grid", 128);
  const bool use_ema = ev.value("use_ema", true);
  const std::string out_name = j.value("output", std::string("sweep.csv"));

  SweepAxes axes;
  if (j.contains("axes")) {
    const json& a = j.at("axes");
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string k = it.key();
      if (k == "beta")
        axes.beta = it.value().get<std::vector<double>>();
      else if (k == "kappa")
        axes.kappa = it.value().get<std::vector<std::string>>();
      else if (k == "seed")
        axes.seed = it.value().get<std::vector<uint64_t>>();
      else if (k == "w")
        axes.w = it.value().get<std::vector<double>>();
      else if (k == "nfe")
        axes.nfe = it.value().get<std::vector<int>>();
      else if (k == "solver")
        axes.solver = it.value().get<std::vector<std::string>>();
      else if (k == "checkpoint_iteration")
        axes.checkpoint_iteration = it.value().get<std::vector<int64_t>>();
      else
        throw ConfigError("unknown sweep axis: " + k);
    }
  }
  // Absent axes collapse to the base value.
  if (axes.beta.empty()) axes.beta = {base.train.beta};
  if (axes.kappa.empty()) axes.kappa = {kappa_name(base.train.kappa_kind)};
  if (axes.seed.empty()) axes.seed = {base.train.seed};
  if (axes.w.empty()) axes.w = {0.0};
  if (axes.nfe.empty()) axes.nfe = {128};
  if (axes.solver.empty()) axes.solver = {"euler"};
  if (axes.checkpoint_iteration.empty()) axes.checkpoint_iteration = {-1};
  for (const auto& k : axes.kappa) kappa_from_name(k);  // validate early
  for (const auto& s : axes.solver) solver_from_name(s);

  // Unique training jobs over (beta, kappa, seed).
  struct TrainJob {
    ExperimentConfig cfg;
    std::string run_dir;
    bool ok = false;
    std::string error;
  };
  std::vector<TrainJob> jobs;
  std::vector<std::array<size_t, 3>> job_key;
  for (size_t bi = 0; bi < axes.beta.size(); ++bi)
    for (size_t ki = 0; ki < axes.kappa.size(); ++ki)
      for (size_t si = 0; si < axes.seed.size(); ++si) {
        TrainJob job;
        job.cfg = base;
        job.cfg.evals.clear();
        job.cfg.train.beta = axes.beta[bi];
        job.cfg.train.kappa_kind = kappa_from_name(axes.kappa[ki]);
        job.cfg.train.seed = axes.seed[si];
        jobs.push_back(std::move(job));
        job_key.push_back({bi, ki, si});
      }

  const int n_jobs = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic) if (!opt.deterministic)
  for (int i = 0; i < n_jobs; ++i) {
    try {
      const int rc = run_train_config(jobs[i].cfg, opt.force, /*quiet=*/true,
                                      /*export_json=*/false, 0, &jobs[i].run_dir);
      jobs[i].ok = rc == kExitOk;
      if (!jobs[i].ok) jobs[i].error = "training diverged";
    } catch (const std::exception& e) {
      jobs[i].ok = false;
      jobs[i].error = e.what();
    }
  }
  auto find_job = [&](size_t bi, size_t ki, size_t si) -> TrainJob& {
    for (size_t t = 0; t < job_key.size(); ++t)
      if (job_key[t][0] == bi && job_key[t][1] == ki && job_key[t][2] == si)
        return jobs[t];
    throw UsageError("sweep job lookup failed");
  };

  // Full cell grid.
  std::vector<SweepCell> cells;
  std::vector<std::array<size_t, 3>> cell_job;
  for (size_t bi = 0; bi < axes.beta.size(); ++bi)
    for (size_t ki = 0; ki < axes.kappa.size(); ++ki)
      for (size_t si = 0; si < axes.seed.size(); ++si)
        for (double w : axes.w)
          for (int nfe : axes.nfe)
            for (const auto& sol : axes.solver)
              for (int64_t ci : axes.checkpoint_iteration) {
                SweepCell c;
                c.beta = axes.beta[bi];
                c.kappa = axes.kappa[ki];
                c.seed = axes.seed[si];
                c.w = w;
                c.nfe = nfe;
                c.solver = sol;
                c.ckpt_iter = ci;
                cells.push_back(c);
                cell_job.push_back({bi, ki, si});
              }

  const int n_cells = static_cast<int>(cells.size());
#pragma omp parallel for schedule(dynamic) if (!opt.deterministic)
  for (int i = 0; i < n_cells; ++i) {
    SweepCell& c = cells[i];
    TrainJob& job = find_job(cell_job[i][0], cell_job[i][1], cell_job[i][2]);
    try {
      if (!job.ok) throw InputError(job.error.empty() ? "training failed" : job.error);
      const std::string ckpt =
          c.ckpt_iter < 0 ? job.run_dir + "/ckpt_final" : job.run_dir + "/" + ckpt_name(c.ckpt_iter);
      if (!fs::exists(ckpt)) throw InputError("missing checkpoint: " + ckpt);
      LoadedModel lm = load_model(ckpt);
      const SolverSpec solver = cell_solver(c.solver, c.nfe);
      const Exec exec = Exec::Serial;  // cells already run in parallel
      MlpVelocity v(lm.model, use_ema);
      if (metric == "curvature") {
        c.value = curvature(v, eval_n, solver, c.seed, exec).mean_curvature;
      } else if (metric == "doi") {
        c.value = degree_of_intersection(v, model_pair_sampler(lm.model, lm.dataset),
                                         lm.model.spec.d, eval_n, t_grid, c.seed, exec);
      } else if (metric == "straightness") {
        double s = 0.0;
        for (int k = 0; k < eval_n; ++k) {
          Rng rng(mix_seed(c.seed, stream::kMetric, static_cast<uint64_t>(k)));
          std::vector<double> x0(static_cast<size_t>(lm.model.spec.d));
          rng.normal_fill(x0);
          s += straightness_profile(solve(v, x0, solver));
        }
        c.value = s / eval_n;
      } else {  // w2
        SampleConfig sc;
        sc.n = eval_n;
        sc.w = c.w;
        sc.kappa_source = c.w > 0.0 ? KappaSource::Dataset : KappaSource::None;
        sc.solver = solver;
        sc.seed = c.seed;
        sc.use_ema = use_ema;
        sc.exec = exec;
        SampleBatch sb = sample_batch(lm.model, sc, lm.dataset);
        std::vector<double> held = heldout_samples(lm.dataset, eval_n, c.seed);
        c.value = wasserstein2(sb.samples, held, lm.model.spec.d,
                               w2_method_from_name(w2_method), n_projections, c.seed);
      }
      c.ok = true;
    } catch (const std::exception& e) {
      c.ok = false;
      c.error = e.what();
    }
  }

  // Aggregate mean/std over the seed axis; one row per remaining cell.
  std::string csv =
      "beta,kappa,w,nfe,solver,checkpoint_iteration,metric,mean,std,n_seeds,error\n";
  for (size_t bi = 0; bi < axes.beta.size(); ++bi)
    for (size_t ki = 0; ki < axes.kappa.size(); ++ki)
      for (double w : axes.w)
        for (int nfe : axes.nfe)
          for (const auto& sol : axes.solver)
            for (int64_t ci : axes.checkpoint_iteration) {
              std::vector<double> vals;
              std::string err;
              for (size_t si = 0; si < axes.seed.size(); ++si) {
                for (size_t t = 0; t < cells.size(); ++t) {
                  const SweepCell& c = cells[t];
                  if (cell_job[t][0] == bi && cell_job[t][1] == ki && cell_job[t][2] == si &&
                      c.w == w && c.nfe == nfe && c.solver == sol && c.ckpt_iter == ci) {
                    if (c.ok)
                      vals.push_back(c.value);
                    else if (err.empty())
                      err = c.error;
                  }
                }
              }
              double mean = 0.0, stddev = 0.0;
              for (double v : vals) mean += v;
              if (!vals.empty()) mean /= vals.size();
              for (double v : vals) stddev += (v - mean) * (v - mean);
              stddev = vals.size() > 1 ? std::sqrt(stddev / (vals.size() - 1)) : 0.0;
              std::replace(err.begin(), err.end(), ',', ';');
              csv += fmt_g(axes.beta[bi]) + "," + axes.kappa[ki] + "," + fmt_g(w) + "," +
                     std::to_string(nfe) + "," + sol + "," + std::to_string(ci) + "," + metric +
                     "," + (vals.empty() ? "" : fmt_g(mean)) + "," +
                     (vals.empty() ? "" : fmt_g(stddev)) + "," + std::to_string(vals.size()) +
                     "," + err + "\n";
            }

  fs::create_directories(base.output_dir);
  const fs::path out_path = fs::path(base.output_dir) / out_name;
  write_text(out_path, csv);
  if (!opt.quiet) std::cout << "sweep written to " << out_path.string() << "\n";
  return kExitOk;
}

}  // namespace mixflow
