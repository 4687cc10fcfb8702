// bayes_icp: command-line driver for generation, registration, sampling,
// baseline construction and posterior analysis.
//
// Data files are deterministic given flags and seeds; wall-clock timestamps
// and timings only ever go into the manifest written next to the outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "bayes_icp/bayes_icp.hpp"
#include "bayes_icp/serialization.hpp"

namespace fs = std::filesystem;
using namespace bayes_icp;

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    j_["tool"] = "bayes_icp";
    j_["version"] = kVersion;
    j_["command"] = command;
    j_["argv"] = argv;
    j_["started_at"] = utc_now();
    j_["timings_s"] = Json::object();
  }

  Json& operator[](const char* key) { return j_[key]; }

  template <class F>
  auto timed(const std::string& phase, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&] {
      j_["timings_s"][phase] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
      f();
      record();
    } else {
      auto r = f();
      record();
      return r;
    }
  }

  void add_output(const fs::path& p) { j_["outputs"].push_back(p.string()); }

  void write(const fs::path& path) {
    j_["finished_at"] = utc_now();
    write_json_file(path, j_);
  }

 private:
  Json j_;
};

Pose6 pose_from_list(const std::vector<double>& v, const char* what) {
  if (v.empty()) return Pose6{};
  if (v.size() != 6)
    throw InvalidArgument(std::string(what) + " needs 6 comma-separated values x,y,z,roll,pitch,yaw");
  return Pose6(v[0], v[1], v[2], v[3], v[4], v[5]);
}

fs::path sibling_manifest(const fs::path& out) {
  fs::path m = out;
  m.replace_extension(".manifest.json");
  return m;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw CloudIoError("cannot create output directory '" + dir.string() + "'");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << std::showpos << std::scientific << v;
  return s.str();
}

void print_stats(std::ostream& out, const EnsembleDistribution& e) {
  const auto st = ensemble_stats(e);
  out << "param      mean            std             circ_mean       circ_std\n";
  for (int k = 0; k < 6; ++k) {
    out << std::left << std::setw(10) << kParamNames[k] << ' ' << fmt(st[k].mean) << "  "
        << fmt(st[k].std);
    if (st[k].circular_mean) out << "  " << fmt(*st[k].circular_mean) << "  " << fmt(*st[k].circular_std);
    out << '\n';
  }
}

// --- gen -------------------------------------------------------------------

struct GenOptions {
  std::string shape;
  std::size_t points = 2000;
  double noise = 0.001;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_gen(const GenOptions& o, const std::vector<std::string>& argv) {
  Manifest m("gen", argv);
  SyntheticSpec spec;
  spec.shape = parse_shape(o.shape);
  spec.point_count = o.points;
  spec.noise_sigma = o.noise;
  spec.seed = o.seed;
  const PointCloud cloud = m.timed("generate", [&] { return generate_synthetic(spec); });
  const fs::path out(o.out);
  m.timed("write", [&] { save_cloud(cloud, out); });
  m["config"] = {{"shape", o.shape}, {"points", o.points}, {"noise", o.noise}};
  m["seeds"] = {{"master", o.seed}};
  m.add_output(out);
  m.write(sibling_manifest(out));
}

// --- register ----------------------------------------------------------------

struct RegisterOptions {
  std::string source, reference, out_dir, solver = "sgd";
  std::vector<double> init;
  SgdIcpConfig sgd;
  std::size_t max_iters = 0;  // 0: solver default
  double tol = -1.0;          // < 0: solver default
  double max_dist = 0.0;      // 0: no rejection
};

void cmd_register(RegisterOptions o, const std::vector<std::string>& argv) {
  Manifest m("register", argv);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  const Pose6 init = pose_from_list(o.init, "--init");
  const std::optional<double> max_dist =
      o.max_dist > 0.0 ? std::optional<double>(o.max_dist) : std::nullopt;

  const PointCloud src = m.timed("load", [&] { return load_cloud(o.source); });
  const PointCloud ref = load_cloud(o.reference);
  const NeighborIndex index = m.timed("index", [&] { return NeighborIndex(ref); });

  Json result;
  std::vector<TraceEntry> trace;
  Json config;
  if (o.solver == "sgd") {
    o.sgd.max_dist = max_dist;
    if (o.max_iters) o.sgd.max_iterations = o.max_iters;
    if (o.tol >= 0.0) o.sgd.tolerance = o.tol;
    const auto r = m.timed("solve", [&] { return sgd_icp(src, index, init, o.sgd); });
    trace = r.trace;
    result["converged"] = r.converged;
    result["iterations"] = r.trace.size();
    result["pose"] = pose_to_json(r.pose);
    result["pose_normalized"] = pose_to_json(normalize_angles(r.pose));
    config = {{"alpha", o.sgd.alpha},         {"batch", o.sgd.batch_size},
              {"max_iters", o.sgd.max_iterations}, {"tol", o.sgd.tolerance},
              {"window", o.sgd.window},       {"lambda", o.sgd.lambda},
              {"beta", o.sgd.beta}};
    m["seeds"] = {{"master", o.sgd.seed}, {"batch", derive_seed(o.sgd.seed, kBatchStream)}};
  } else if (o.solver == "standard") {
    const std::size_t iters = o.max_iters ? o.max_iters : 100;
    const double tol = o.tol >= 0.0 ? o.tol : 1e-6;
    const auto r =
        m.timed("solve", [&] { return standard_icp(src, index, init, iters, tol, max_dist); });
    trace = r.trace;
    result["converged"] = r.converged;
    result["iterations"] = r.iterations;
    result["final_loss"] = r.final_loss;
    result["pose"] = pose_to_json(r.pose);
    result["pose_normalized"] = pose_to_json(normalize_angles(r.pose));
    config = {{"max_iters", iters}, {"tol", tol}};
  } else {
    throw InvalidArgument("unknown solver '" + o.solver + "' (sgd, standard)");
  }
  config["solver"] = o.solver;
  config["max_dist"] = max_dist ? Json(*max_dist) : Json(nullptr);
  result["solver"] = o.solver;
  result["init"] = pose_to_json(init);

  std::ostringstream csv;
  write_trace_csv(csv, trace);
  m.timed("write", [&] {
    write_json_file(dir / "pose.json", result);
    write_text_file(dir / "trace.csv", csv.str());
  });
  m["config"] = config;
  m["inputs"] = {{"source", o.source}, {"reference", o.reference}};
  m.add_output(dir / "pose.json");
  m.add_output(dir / "trace.csv");
  m.write(dir / "manifest.json");
  std::cout << "pose " << result["pose"].dump() << "\n";
}

// --- sample ----------------------------------------------------------------

struct SampleOptions {
  std::string source, reference, out_dir;
  std::vector<double> init, prior_mean;
  double prior_trans_var = 0.125;
  double prior_rot_var = 0.125;
  bool flat_prior = false;
  bool no_noise = false;
  double max_dist = 0.0;
  SamplerConfig cfg;
  std::size_t chains = 1;
  std::size_t threads = 0;
};

void cmd_sample(SampleOptions o, const std::vector<std::string>& argv) {
  Manifest m("sample", argv);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  const Pose6 init = pose_from_list(o.init, "--init");
  PriorSpec prior = o.flat_prior
                        ? PriorSpec::flat()
                        : PriorSpec::from_variances(Pose6{}, o.prior_trans_var, o.prior_rot_var);
  prior.mean = pose_from_list(o.prior_mean, "--prior-mean");
  o.cfg.noise_enabled = !o.no_noise;
  if (o.max_dist > 0.0) o.cfg.max_dist = o.max_dist;
  o.cfg.validate();
  prior.validate();

  const PointCloud src = m.timed("load", [&] { return load_cloud(o.source); });
  const PointCloud ref = load_cloud(o.reference);
  const NeighborIndex index = m.timed("index", [&] { return NeighborIndex(ref); });
  const auto chains = m.timed(
      "sample", [&] { return run_chains(src, index, init, prior, o.cfg, o.chains, o.threads); });

  Json seeds = {{"master", o.cfg.seed}, {"chains", Json::array()}};
  m.timed("write", [&] {
    for (std::size_t i = 0; i < chains.size(); ++i) {
      const std::string stem = "chain_" + std::to_string(i);
      write_json_file(dir / (stem + ".json"), chain_to_json(chains[i]));
      std::ostringstream csv;
      write_chain_csv(csv, chains[i]);
      write_text_file(dir / (stem + ".csv"), csv.str());
      m.add_output(dir / (stem + ".json"));
      m.add_output(dir / (stem + ".csv"));
      seeds["chains"].push_back(chains[i].config.seed);
    }
  });

  std::vector<Pose6> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.retained().begin(), c.retained().end());
  const auto e = EnsembleDistribution::from_poses(pooled, EnsembleSource::kBayesian);

  m["config"] = sampler_config_to_json(o.cfg);
  m["config"]["chains"] = o.chains;
  m["config"]["threads"] = o.threads;
  m["prior"] = prior_to_json(prior);
  m["init"] = pose_to_json(init);
  m["seeds"] = seeds;
  m["inputs"] = {{"source", o.source}, {"reference", o.reference}};
  m.write(dir / "manifest.json");

  std::cout << chains.size() << " chain(s), " << pooled.size() << " retained samples\n";
  if (pooled.size() >= 2) print_stats(std::cout, e);
  else std::cout << "posterior mean " << pose_to_json(pooled.front()).dump() << "\n";
}

// --- baseline --------------------------------------------------------------

struct BaselineCliOptions {
  std::string source, reference, out;
  std::vector<double> center;
  BaselineOptions opt;
};

void cmd_baseline(BaselineCliOptions o, const std::vector<std::string>& argv) {
  Manifest m("baseline", argv);
  if (o.opt.n_runs < 2) throw InvalidArgument("--runs must be >= 2 (an ensemble needs two poses)");
  o.opt.center = pose_from_list(o.center, "--center");
  const PointCloud src = m.timed("load", [&] { return load_cloud(o.source); });
  const PointCloud ref = load_cloud(o.reference);
  const NeighborIndex index = m.timed("index", [&] { return NeighborIndex(ref); });
  const auto e = m.timed("solve", [&] { return build_baseline(src, index, o.opt); });
  const fs::path out(o.out);
  m.timed("write", [&] { write_json_file(out, ensemble_to_json(e)); });
  m["config"] = {{"runs", o.opt.n_runs},         {"trans_range", o.opt.trans_range},
                 {"rot_range", o.opt.rot_range}, {"max_iters", o.opt.max_iters},
                 {"tol", o.opt.tol},             {"threads", o.opt.threads},
                 {"center", pose_to_json(o.opt.center)}};
  m["seeds"] = {{"master", o.opt.seed}};
  m["inputs"] = {{"source", o.source}, {"reference", o.reference}};
  m["dropped_runs"] = e.dropped_runs;
  m.add_output(out);
  m.write(sibling_manifest(out));
  std::cout << e.size() << " baseline poses (" << e.dropped_runs << " runs dropped)\n";
  print_stats(std::cout, e);
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeOptions {
  std::vector<std::string> chains;
  std::string baseline, out_dir, method = "gaussian";
  std::vector<std::size_t> sweep_samples, sweep_burn_in;
  std::size_t window = 2000;
  std::size_t kde_grid = 512;
};

std::string kde_csv(std::span<const double> samples, int param, std::size_t grid) {
  std::ostringstream s;
  const KdeCurve c = kde_1d(samples, grid, param);
  if (c.point_mass) {
    s << "param,x,density\n" << std::setprecision(17) << kParamNames[param] << ','
      << c.point_mass_location << ",inf\n";
  } else {
    write_kde_csv(s, c);
  }
  return s.str();
}

void cmd_analyze(const AnalyzeOptions& o, const std::vector<std::string>& argv) {
  Manifest m("analyze", argv);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  const KlMethod method = parse_kl_method(o.method);

  std::vector<SampleChain> chains;
  const EnsembleDistribution baseline = m.timed("load", [&] {
    for (const auto& p : o.chains) chains.push_back(load_chain(p));
    return load_ensemble(o.baseline);
  });
  baseline.validate();

  std::vector<Pose6> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.retained().begin(), c.retained().end());
  const auto bayes = EnsembleDistribution::from_poses(pooled, EnsembleSource::kBayesian);
  bayes.validate();

  const KlReport kl = m.timed("kl", [&] { return kl_divergence(baseline, bayes, method); });
  std::ostringstream kl_csv;
  write_kl_csv(kl_csv, kl);
  write_text_file(dir / "kl.csv", kl_csv.str());
  m.add_output(dir / "kl.csv");

  m.timed("kde", [&] {
    for (int k = 0; k < 6; ++k) {
      const std::string name(kParamNames[k]);
      write_text_file(dir / ("kde_" + name + ".csv"), kde_csv(bayes.param(k), k, o.kde_grid));
      write_text_file(dir / ("baseline_kde_" + name + ".csv"),
                      kde_csv(baseline.param(k), k, o.kde_grid));
      m.add_output(dir / ("kde_" + name + ".csv"));
      m.add_output(dir / ("baseline_kde_" + name + ".csv"));
    }
  });

  // Sweeps follow a single chain, as in the per-run curves they reproduce.
  if (!o.sweep_samples.empty()) {
    const auto rows = m.timed(
        "sweep_samples", [&] { return sweep_sample_count(chains.front(), baseline, o.sweep_samples, method); });
    std::ostringstream s;
    write_sweep_csv(s, "samples", rows);
    write_text_file(dir / "sweep_samples.csv", s.str());
    m.add_output(dir / "sweep_samples.csv");
  }
  if (!o.sweep_burn_in.empty()) {
    const auto rows = m.timed("sweep_burn_in", [&] {
      return sweep_burn_in(chains.front(), baseline, o.sweep_burn_in, o.window, method);
    });
    std::ostringstream s;
    write_sweep_csv(s, "burn_in", rows);
    write_text_file(dir / "sweep_burn_in.csv", s.str());
    m.add_output(dir / "sweep_burn_in.csv");
  }

  m["config"] = {{"method", o.method},
                 {"sweep_samples", o.sweep_samples},
                 {"sweep_burn_in", o.sweep_burn_in},
                 {"window", o.window},
                 {"kde_grid", o.kde_grid}};
  m["inputs"] = {{"chains", o.chains}, {"baseline", o.baseline}};
  m.write(dir / "manifest.json");

  std::cout << "KL(baseline || chains), " << method_name(method) << ":\n";
  for (int k = 0; k < 6; ++k) {
    std::cout << "  " << std::left << std::setw(6) << kParamNames[k] << ' ';
    if (kl.degenerate[k]) std::cout << "degenerate\n";
    else std::cout << kl.values[k] << '\n';
  }
}

// --- option wiring ---------------------------------------------------------

void add_pose_option(CLI::App* app, const std::string& name, std::vector<double>& target,
                     const std::string& help) {
  app->add_option(name, target, help + " (x,y,z,roll,pitch,yaw)")->delimiter(',')->expected(6);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Bayesian ICP: pose posteriors for point-cloud registration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic object cloud");
  g->add_option("--shape", gen.shape, "one of: " + valid_shape_list())->required();
  g->add_option("--points", gen.points, "point count")->capture_default_str();
  g->add_option("--noise", gen.noise, "Gaussian noise std [m]")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out, ".ply, .xyz or .txt output path")->required();

  RegisterOptions reg;
  auto* r = app.add_subcommand("register", "point-estimate registration (SGD-ICP or standard ICP)");
  r->add_option("--source", reg.source)->required();
  r->add_option("--reference", reg.reference)->required();
  r->add_option("--out-dir", reg.out_dir)->required();
  r->add_option("--solver", reg.solver, "sgd or standard")->capture_default_str();
  add_pose_option(r, "--init", reg.init, "initial pose");
  r->add_option("--alpha", reg.sgd.alpha)->capture_default_str();
  r->add_option("--batch", reg.sgd.batch_size)->capture_default_str();
  r->add_option("--max-iters", reg.max_iters, "iteration cap (sgd 5000, standard 100)");
  r->add_option("--tol", reg.tol, "convergence tolerance (sgd 1e-5, standard 1e-6)");
  r->add_option("--window", reg.sgd.window, "sgd convergence window")->capture_default_str();
  r->add_option("--lambda", reg.sgd.lambda)->capture_default_str();
  r->add_option("--beta", reg.sgd.beta)->capture_default_str();
  r->add_option("--max-dist", reg.max_dist, "reject pairs farther than this [m]; 0 keeps all");
  r->add_option("--seed", reg.sgd.seed)->capture_default_str();

  SampleOptions smp;
  auto* s = app.add_subcommand("sample", "draw posterior samples with Bayesian ICP");
  s->add_option("--source", smp.source)->required();
  s->add_option("--reference", smp.reference)->required();
  s->add_option("--out-dir", smp.out_dir)->required();
  add_pose_option(s, "--init", smp.init, "initial pose");
  add_pose_option(s, "--prior-mean", smp.prior_mean, "prior mean");
  s->add_option("--prior-trans-var", smp.prior_trans_var, "translation prior variance [m^2]")
      ->capture_default_str();
  s->add_option("--prior-rot-var", smp.prior_rot_var, "rotation prior variance; kappa = 1/var")
      ->capture_default_str();
  s->add_flag("--flat-prior", smp.flat_prior, "use a flat prior on all parameters");
  s->add_option("--alpha", smp.cfg.alpha)->capture_default_str();
  s->add_option("--batch", smp.cfg.batch_size)->capture_default_str();
  s->add_option("--n-scale", smp.cfg.n_scale, "gradient scale N")->capture_default_str();
  s->add_option("--lambda", smp.cfg.lambda)->capture_default_str();
  s->add_option("--beta", smp.cfg.beta)->capture_default_str();
  s->add_option("--decay-factor", smp.cfg.decay_factor)->capture_default_str();
  s->add_option("--decay-period", smp.cfg.decay_period)->capture_default_str();
  s->add_option("--decay-start-frac", smp.cfg.decay_start_fraction)->capture_default_str();
  s->add_option("--samples", smp.cfg.samples, "iterations T per chain")->capture_default_str();
  s->add_option("--burn-in", smp.cfg.burn_in)->capture_default_str();
  s->add_option("--chains", smp.chains)->capture_default_str();
  s->add_option("--threads", smp.threads, "0 = all cores")->capture_default_str();
  s->add_option("--max-dist", smp.max_dist, "reject pairs farther than this [m]; 0 keeps all");
  s->add_option("--seed", smp.cfg.seed)->capture_default_str();
  s->add_flag("--no-noise", smp.no_noise, "disable the injected Langevin noise");

  BaselineCliOptions base;
  auto* b = app.add_subcommand("baseline", "Monte-Carlo ensemble of standard ICP runs");
  b->add_option("--source", base.source)->required();
  b->add_option("--reference", base.reference)->required();
  b->add_option("--out", base.out, "ensemble JSON path")->required();
  b->add_option("--runs", base.opt.n_runs)->capture_default_str();
  b->add_option("--trans-range", base.opt.trans_range, "init translation half-range [m]")
      ->capture_default_str();
  b->add_option("--rot-range", base.opt.rot_range, "init angle half-range [rad]")
      ->capture_default_str();
  add_pose_option(b, "--center", base.center, "center of the init box");
  b->add_option("--max-iters", base.opt.max_iters)->capture_default_str();
  b->add_option("--tol", base.opt.tol)->capture_default_str();
  b->add_option("--threads", base.opt.threads, "0 = all cores")->capture_default_str();
  b->add_option("--seed", base.opt.seed)->capture_default_str();

  AnalyzeOptions ana;
  auto* a = app.add_subcommand("analyze", "KL, KDE and sweep reports against a baseline");
  a->add_option("--chains", ana.chains, "chain files (.json or .csv); pooled for KL/KDE")
      ->required();
  a->add_option("--baseline", ana.baseline, "ensemble or chain file")->required();
  a->add_option("--out-dir", ana.out_dir)->required();
  a->add_option("--method", ana.method, "gaussian or kde-grid")->capture_default_str();
  a->add_option("--sweep-samples", ana.sweep_samples, "prefix lengths, e.g. 500,1000,2000")
      ->delimiter(',');
  a->add_option("--sweep-burn-in", ana.sweep_burn_in, "burn-in offsets, e.g. 0,500,1000")
      ->delimiter(',');
  a->add_option("--window", ana.window, "burn-in sweep window")->capture_default_str();
  a->add_option("--kde-grid", ana.kde_grid)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*g) cmd_gen(gen, args);
    else if (*r) cmd_register(reg, args);
    else if (*s) cmd_sample(smp, args);
    else if (*b) cmd_baseline(base, args);
    else if (*a) cmd_analyze(ana, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
