#pragma once

// Posterior evaluation: Monte-Carlo baseline ensembles from repeated standard
// ICP, per-parameter kernel density estimates and KL divergences, moment
// statistics, and the sample-count / burn-in sweeps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/icp.hpp"
#include "bayes_icp/kdtree.hpp"
#include "bayes_icp/parallel.hpp"
#include "bayes_icp/random.hpp"
#include "bayes_icp/sampler.hpp"

namespace bayes_icp {

enum class EnsembleSource { kBaseline, kBayesian, kExternal };

inline std::string_view source_name(EnsembleSource s) {
  switch (s) {
    case EnsembleSource::kBaseline: return "baseline";
    case EnsembleSource::kBayesian: return "bayesian";
    case EnsembleSource::kExternal: return "external";
  }
  return "external";
}

inline EnsembleSource parse_source(std::string_view s) {
  if (s == "baseline") return EnsembleSource::kBaseline;
  if (s == "bayesian") return EnsembleSource::kBayesian;
  if (s == "external") return EnsembleSource::kExternal;
  throw InvalidArgument("unknown ensemble source '" + std::string(s) + "'");
}

struct BaselineOptions {
  std::size_t n_runs = 200;
  double trans_range = 1.0;  // initial translations uniform in center +- range
  double rot_range = 1.0;    // initial angles uniform in center +- range
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t threads = 0;
  Pose6 center;
};

/// Per-parameter sample arrays, plus provenance for baselines.
struct EnsembleDistribution {
  std::array<std::vector<double>, 6> values;
  EnsembleSource source = EnsembleSource::kExternal;
  std::optional<BaselineOptions> baseline;  // set by build_baseline
  std::size_t dropped_runs = 0;

  std::size_t size() const { return values[0].size(); }

  std::span<const double> param(int k) const { return values[k]; }

  Pose6 pose(std::size_t i) const {
    Pose6 p;
    for (int k = 0; k < 6; ++k) p[k] = values[k][i];
    return p;
  }

  static EnsembleDistribution from_poses(std::span<const Pose6> poses, EnsembleSource source) {
    EnsembleDistribution e;
    e.source = source;
    for (auto& v : e.values) v.reserve(poses.size());
    for (const auto& p : poses)
      for (int k = 0; k < 6; ++k) e.values[k].push_back(p[k]);
    return e;
  }

  static EnsembleDistribution from_chain(const SampleChain& chain) {
    return from_poses(chain.retained(), EnsembleSource::kBayesian);
  }

  void validate() const {
    for (const auto& v : values) {
      if (v.size() != values[0].size()) throw InvalidArgument("ragged ensemble");
      for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument("non-finite ensemble entry");
    }
    if (size() < 2) throw InvalidArgument("an ensemble needs at least 2 poses");
  }
};

/// Runs standard ICP from `n_runs` random initial poses and collects the
/// converged poses. Runs that throw are dropped; more than 10% dropped is an
/// error. Each run draws its initial pose from its own derived seed, so the
/// result does not depend on the thread count.
inline EnsembleDistribution build_baseline(const PointCloud& src, const NeighborIndex& index,
                                           const BaselineOptions& opt) {
  if (opt.n_runs < 2) throw InvalidArgument("baseline needs n_runs >= 2");
  if (!(opt.trans_range >= 0.0) || !(opt.rot_range >= 0.0))
    throw InvalidArgument("initialization ranges must be >= 0");

  std::vector<std::optional<Pose6>> finals(opt.n_runs);
  parallel_for(opt.n_runs, opt.threads, [&](std::size_t run) {
    Rng rng(derive_seed(opt.seed, run));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Pose6 init = opt.center;
    for (int k = 0; k < 6; ++k) init[k] += unit(rng) * (is_angle(k) ? opt.rot_range : opt.trans_range);
    try {
      finals[run] = standard_icp(src, index, init, opt.max_iters, opt.tol).pose;
    } catch (const Error&) {
      finals[run].reset();
    }
  });

  std::vector<Pose6> kept;
  for (const auto& f : finals)
    if (f) kept.push_back(*f);
  const std::size_t dropped = opt.n_runs - kept.size();
  if (double(dropped) > 0.1 * double(opt.n_runs))
    throw SolverFailure(std::to_string(dropped) + " of " + std::to_string(opt.n_runs) +
                        " baseline runs failed");

  auto e = EnsembleDistribution::from_poses(kept, EnsembleSource::kBaseline);
  e.baseline = opt;
  e.dropped_runs = dropped;
  return e;
}

inline EnsembleDistribution build_baseline(const PointCloud& src, const PointCloud& ref,
                                           const BaselineOptions& opt) {
  return build_baseline(src, NeighborIndex(ref), opt);
}

// --- moments -------------------------------------------------------------

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Sample standard deviation (n - 1 denominator), two-pass.
inline double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1));
}

}  // namespace detail

struct ParamStats {
  double mean = 0.0;
  double std = 0.0;
  std::optional<double> circular_mean;  // angles only
  std::optional<double> circular_std;   // sqrt(-2 ln R)
};

inline ParamStats param_stats(std::span<const double> v, bool angle) {
  if (v.empty()) throw InvalidArgument("statistics of an empty sample");
  ParamStats s;
  s.mean = detail::mean_of(v);
  s.std = detail::std_of(v);
  if (angle) {
    double sn = 0.0, cs = 0.0;
    for (double x : v) {
      sn += std::sin(x);
      cs += std::cos(x);
    }
    sn /= double(v.size());
    cs /= double(v.size());
    s.circular_mean = std::atan2(sn, cs);
    const double r = std::min(1.0, std::hypot(sn, cs));
    s.circular_std = r > 0.0 ? std::sqrt(std::max(0.0, -2.0 * std::log(r)))
                             : std::numeric_limits<double>::infinity();
  }
  return s;
}

inline std::array<ParamStats, 6> ensemble_stats(const EnsembleDistribution& e) {
  std::array<ParamStats, 6> out;
  for (int k = 0; k < 6; ++k) out[k] = param_stats(e.param(k), is_angle(k));
  return out;
}

// --- kernel density estimation ---------------------------------------------

struct KdeCurve {
  int param = -1;  // index into kParamNames, -1 if not tied to a parameter
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  bool point_mass = false;  // degenerate input: all samples equal
  double point_mass_location = 0.0;
};

inline double silverman_bandwidth(std::span<const double> samples) {
  return 1.06 * detail::std_of(samples) * std::pow(double(samples.size()), -0.2);
}

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  const double step = n > 1 ? (hi - lo) / double(n - 1) : 0.0;
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + step * double(i);
  return g;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

/// Gaussian-kernel density on a grid, renormalized so the trapezoidal
/// integral over the grid is exactly one.
inline std::vector<double> kde_on_grid(std::span<const double> samples, double h,
                                       std::span<const double> grid) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double cutoff = 9.0 * h;
  const double norm = 1.0 / (double(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> d(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), grid[i] - cutoff);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), grid[i] + cutoff);
    double s = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double z = (grid[i] - *it) / h;
      s += std::exp(-0.5 * z * z);
    }
    d[i] = s * norm;
  }
  const double area = trapezoid(grid, d);
  if (area > 0.0)
    for (auto& x : d) x /= area;
  return d;
}

}  // namespace detail

inline KdeCurve kde_1d(std::span<const double> samples, std::size_t grid_size = 512,
                       int param = -1) {
  if (samples.size() < 2) throw InvalidArgument("KDE needs at least 2 samples");
  if (grid_size < 2) throw InvalidArgument("KDE grid needs at least 2 points");
  KdeCurve c;
  c.param = param;
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  c.bandwidth = silverman_bandwidth(samples);
  if (*mn == *mx || !(c.bandwidth > 0.0)) {
    c.point_mass = true;
    c.point_mass_location = *mn;
    return c;
  }
  c.grid = detail::linspace(*mn - 3.0 * c.bandwidth, *mx + 3.0 * c.bandwidth, grid_size);
  c.density = detail::kde_on_grid(samples, c.bandwidth, c.grid);
  return c;
}

inline void write_kde_csv(std::ostream& out, const KdeCurve& c, bool header = true) {
  if (header) out << "param,x,density\n";
  out.precision(17);
  const std::string_view name = c.param >= 0 ? kParamNames[c.param] : "value";
  for (std::size_t i = 0; i < c.grid.size(); ++i)
    out << name << ',' << c.grid[i] << ',' << c.density[i] << '\n';
}

// --- KL divergence -------------------------------------------------------

enum class KlMethod { kGaussian, kKdeGrid };

inline std::string_view method_name(KlMethod m) {
  return m == KlMethod::kGaussian ? "gaussian" : "kde-grid";
}

inline KlMethod parse_kl_method(std::string_view s) {
  if (s == "gaussian") return KlMethod::kGaussian;
  if (s == "kde-grid") return KlMethod::kKdeGrid;
  throw InvalidArgument("unknown KL method '" + std::string(s) + "' (gaussian, kde-grid)");
}

struct KlReport {
  std::array<double, 6> values{};
  std::array<bool, 6> degenerate{};
  KlMethod method = KlMethod::kGaussian;

  bool any_degenerate() const {
    return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
  }
};

inline constexpr double kKlDensityFloor = 1e-12;
inline constexpr std::size_t kKlGridSize = 2048;

/// KL(N(mp, sp^2) || N(mq, sq^2)).
inline double gaussian_kl(double mp, double sp, double mq, double sq) {
  return std::log(sq / sp) + (sp * sp + (mp - mq) * (mp - mq)) / (2.0 * sq * sq) - 0.5;
}

/// KL(p || q) for one parameter. Returns nullopt when either side has fewer
/// than two samples or zero spread.
inline std::optional<double> kl_1d(std::span<const double> p, std::span<const double> q,
                                   KlMethod method, std::size_t grid_size = kKlGridSize) {
  if (p.size() < 2 || q.size() < 2) return std::nullopt;
  const double sp = detail::std_of(p), sq = detail::std_of(q);
  if (!(sp > 0.0) || !(sq > 0.0)) return std::nullopt;

  double kl = 0.0;
  if (method == KlMethod::kGaussian) {
    kl = gaussian_kl(detail::mean_of(p), sp, detail::mean_of(q), sq);
  } else {
    const double hp = silverman_bandwidth(p), hq = silverman_bandwidth(q);
    const auto [pmn, pmx] = std::minmax_element(p.begin(), p.end());
    const auto [qmn, qmx] = std::minmax_element(q.begin(), q.end());
    const double pad = 3.0 * std::max(hp, hq);
    const auto grid = detail::linspace(std::min(*pmn, *qmn) - pad, std::max(*pmx, *qmx) + pad,
                                       grid_size);
    const auto dp = detail::kde_on_grid(p, hp, grid);
    const auto dq = detail::kde_on_grid(q, hq, grid);
    std::vector<double> integrand(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double a = std::max(dp[i], kKlDensityFloor);
      const double b = std::max(dq[i], kKlDensityFloor);
      integrand[i] = dp[i] * std::log(a / b);
    }
    kl = detail::trapezoid(grid, integrand);
  }
  return std::max(kl, 0.0);
}

/// Per-parameter KL(p || q); p is the reference (baseline) ensemble.
inline KlReport kl_divergence(const EnsembleDistribution& p, const EnsembleDistribution& q,
                              KlMethod method = KlMethod::kGaussian,
                              std::size_t grid_size = kKlGridSize) {
  if (p.size() == 0 || q.size() == 0) throw InvalidArgument("KL of an empty ensemble");
  KlReport r;
  r.method = method;
  for (int k = 0; k < 6; ++k) {
    const auto v = kl_1d(p.param(k), q.param(k), method, grid_size);
    r.degenerate[k] = !v;
    r.values[k] = v ? *v : std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

inline void write_kl_csv(std::ostream& out, const KlReport& r) {
  out << "param,kl,method\n";
  out.precision(17);
  for (int k = 0; k < 6; ++k) {
    out << kParamNames[k] << ',';
    if (r.degenerate[k]) out << "nan";
    else out << r.values[k];
    out << ',' << method_name(r.method) << '\n';
  }
}

// --- sweeps ----------------------------------------------------------------

struct SweepRow {
  std::size_t count = 0;  // prefix length or burn-in offset
  KlReport report;
};

namespace detail {

inline EnsembleDistribution slice(std::span<const Pose6> s) {
  return EnsembleDistribution::from_poses(s, EnsembleSource::kBayesian);
}

}  // namespace detail

/// KL of each retained-sample prefix against the baseline.
inline std::vector<SweepRow> sweep_sample_count(const SampleChain& chain,
                                                const EnsembleDistribution& baseline,
                                                std::span<const std::size_t> checkpoints,
                                                KlMethod method = KlMethod::kGaussian) {
  const auto kept = chain.retained();
  std::vector<SweepRow> rows;
  for (std::size_t n : checkpoints) {
    if (n < 1 || n > kept.size())
      throw InvalidArgument("checkpoint " + std::to_string(n) + " outside [1, " +
                            std::to_string(kept.size()) + "]");
    rows.push_back({n, kl_divergence(baseline, detail::slice(kept.first(n)), method)});
  }
  return rows;
}

/// KL of samples[b, b + window) against the baseline for each offset b.
inline std::vector<SweepRow> sweep_burn_in(const SampleChain& chain,
                                           const EnsembleDistribution& baseline,
                                           std::span<const std::size_t> burn_ins,
                                           std::size_t window = 2000,
                                           KlMethod method = KlMethod::kGaussian) {
  const std::span<const Pose6> all(chain.samples);
  std::vector<SweepRow> rows;
  for (std::size_t b : burn_ins) {
    if (window < 1 || b + window > all.size())
      throw InvalidArgument("burn-in " + std::to_string(b) + " + window " +
                            std::to_string(window) + " exceeds chain length " +
                            std::to_string(all.size()));
    rows.push_back({b, kl_divergence(baseline, detail::slice(all.subspan(b, window)), method)});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, std::string_view count_label,
                            const std::vector<SweepRow>& rows) {
  out << count_label << ",method,x,y,z,roll,pitch,yaw\n";
  out.precision(17);
  for (const auto& row : rows) {
    out << row.count << ',' << method_name(row.report.method);
    for (int k = 0; k < 6; ++k) {
      out << ',';
      if (row.report.degenerate[k]) out << "nan";
      else out << row.report.values[k];
    }
    out << '\n';
  }
}

}  // namespace bayes_icp
