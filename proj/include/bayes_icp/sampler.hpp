#pragma once

// Bayesian ICP: preconditioned stochastic-gradient Langevin dynamics over the
// six pose parameters.
//
// Each iteration draws a mini-batch, associates it under the current pose and
// applies
//
//   theta' = theta - (alpha_t / 2) A (prior_grad(theta) + N g(theta)) + eta,
//   eta_k  ~ Normal(0, alpha_t A_k),
//
// where g is the mini-batch ICP gradient, N a fixed gradient scale and A the
// RMSProp-style diagonal preconditioner, refreshed from g before it is used.

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "bayes_icp/correspondence.hpp"
#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/icp.hpp"
#include "bayes_icp/kdtree.hpp"
#include "bayes_icp/parallel.hpp"
#include "bayes_icp/random.hpp"

namespace bayes_icp {

/// Gaussian prior on translations (variances) and von Mises prior on angles
/// (concentrations). An infinite variance or zero concentration is flat.
struct PriorSpec {
  Pose6 mean;
  Eigen::Vector3d trans_variance = Eigen::Vector3d::Constant(0.125);
  Eigen::Vector3d rot_concentration = Eigen::Vector3d::Constant(8.0);

  /// Rotation concentrations are kappa = 1 / variance.
  static PriorSpec from_variances(const Pose6& mean, double trans_var, double rot_var) {
    PriorSpec p;
    p.mean = mean;
    p.trans_variance.setConstant(trans_var);
    p.rot_concentration.setConstant(std::isinf(rot_var) ? 0.0 : 1.0 / rot_var);
    return p;
  }

  static PriorSpec flat() {
    PriorSpec p;
    p.trans_variance.setConstant(std::numeric_limits<double>::infinity());
    p.rot_concentration.setZero();
    return p;
  }

  void validate() const {
    if (!mean.is_finite()) throw InvalidArgument("prior mean must be finite");
    for (int k = 0; k < 3; ++k) {
      if (!(trans_variance[k] > 0.0)) throw InvalidArgument("prior variances must be > 0");
      if (!(rot_concentration[k] >= 0.0) || std::isinf(rot_concentration[k]))
        throw InvalidArgument("prior concentrations must be finite and >= 0");
    }
  }
};

/// Negative gradient of the log prior: (theta - mu) / sigma for translations
/// and kappa sin(theta - mu) for angles (unwrapped difference).
inline Vector6d prior_gradient(const Pose6& pose, const PriorSpec& prior) {
  Vector6d g;
  for (int k = 0; k < 3; ++k) g[k] = (pose[k] - prior.mean[k]) / prior.trans_variance[k];
  for (int k = 0; k < 3; ++k)
    g[3 + k] = prior.rot_concentration[k] * std::sin(pose[3 + k] - prior.mean[3 + k]);
  return g;
}

struct SamplerConfig {
  double alpha = 1e-4;
  std::size_t batch_size = 160;
  double n_scale = 6000.0;
  std::size_t samples = 2000;  // total iterations T, one sample each
  std::size_t burn_in = 0;
  double decay_factor = 0.8;
  std::size_t decay_period = 10;
  double decay_start_fraction = 0.8;
  double lambda = 1e-8;
  double beta = 0.9;
  std::uint64_t seed = 0;
  bool noise_enabled = true;
  std::optional<double> max_dist;
  std::size_t max_degenerate_batches = 100;
  /// When set, A is held at this diagonal instead of being adapted.
  std::optional<Vector6d> fixed_preconditioner;

  void validate() const {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be > 0");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(n_scale > 0.0)) throw InvalidArgument("n_scale must be > 0");
    if (samples < 1) throw InvalidArgument("sample count must be >= 1");
    if (burn_in >= samples) throw InvalidArgument("burn-in must be smaller than the sample count");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw InvalidArgument("decay factor must lie in (0, 1]");
    if (decay_period < 1) throw InvalidArgument("decay period must be >= 1");
    if (!(decay_start_fraction >= 0.0 && decay_start_fraction <= 1.0))
      throw InvalidArgument("decay start fraction must lie in [0, 1]");
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
    if (fixed_preconditioner && !(fixed_preconditioner->array() > 0.0).all())
      throw InvalidArgument("fixed preconditioner entries must be > 0");
  }

  /// First iteration at which the step size starts decaying.
  std::size_t decay_start() const {
    return static_cast<std::size_t>(std::ceil(decay_start_fraction * double(samples)));
  }

  /// Step size in effect at iteration t (0-based): alpha is multiplied by the
  /// decay factor at t = start, start + period, start + 2 period, ...
  double step_size_at(std::size_t t) const {
    const std::size_t start = decay_start();
    if (t < start || decay_factor == 1.0) return alpha;
    const std::size_t decays = (t - start) / decay_period + 1;
    double a = alpha;
    for (std::size_t i = 0; i < decays; ++i) a *= decay_factor;
    return a;
  }
};

struct SgldStepResult {
  Pose6 pose;
  PreconditionerState preconditioner;
  Vector6d scaling;  // A used for this step
};

/// One Langevin update given the mini-batch gradient. `noise_rng` is only
/// drawn from when noise is enabled.
inline SgldStepResult sgld_step(const Pose6& pose, const Vector6d& data_gradient,
                                const PriorSpec& prior, const PreconditionerState& precond,
                                const SamplerConfig& cfg, double alpha_t, Rng& noise_rng) {
  SgldStepResult out;
  if (cfg.fixed_preconditioner) {
    out.preconditioner = precond;
    out.scaling = *cfg.fixed_preconditioner;
  } else {
    const auto upd = precondition_update(precond, data_gradient);
    out.preconditioner = upd.state;
    out.scaling = upd.scaling;
  }

  // The data term goes through preconditioned_step with rate alpha N / 2, the
  // same arithmetic SGD-ICP uses with that learning rate.
  const Vector6d prior_drift = preconditioned_step(out.scaling, 0.5 * alpha_t,
                                                   prior_gradient(pose, prior));
  const Vector6d data_drift =
      preconditioned_step(out.scaling, 0.5 * alpha_t * cfg.n_scale, data_gradient);

  out.pose = pose;
  for (int k = 0; k < 6; ++k) out.pose[k] -= prior_drift[k] + data_drift[k];
  if (cfg.noise_enabled) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < 6; ++k) out.pose[k] += std::sqrt(alpha_t * out.scaling[k]) * normal(noise_rng);
  }
  return out;
}

inline SgldStepResult sgld_step(const Pose6& pose, const CorrespondenceSet& pairs,
                                const PriorSpec& prior, const PreconditionerState& precond,
                                const SamplerConfig& cfg, double alpha_t, Rng& noise_rng) {
  if (pairs.empty()) throw DegenerateAssociation("empty correspondence set; redraw the batch");
  return sgld_step(pose, batch_gradient(pose, pairs), prior, precond, cfg, alpha_t, noise_rng);
}

/// Supplies the mean mini-batch gradient at a pose, drawing any randomness it
/// needs from the given stream.
template <class M>
concept GradientModel = requires(const M& m, const Pose6& p, Rng& rng) {
  { m.gradient(p, rng) } -> std::convertible_to<Vector6d>;
};

/// Mini-batch ICP gradient over a source cloud and an indexed reference.
struct IcpGradientModel {
  const PointCloud& source;
  const NeighborIndex& index;
  std::size_t batch_size = 160;
  std::optional<double> max_dist;
  std::size_t max_degenerate_batches = 100;

  Vector6d gradient(const Pose6& pose, Rng& rng) const {
    const CorrespondenceSet pairs = draw_associated_batch(source, index, pose, batch_size,
                                                          max_dist, rng, max_degenerate_batches);
    return batch_gradient(pose, pairs);
  }
};

struct SampleChain {
  std::vector<Pose6> samples;     // theta after each of the T updates
  std::vector<double> step_sizes;  // alpha_t used to produce samples[t]
  std::size_t burn_in = 0;
  SamplerConfig config;

  std::span<const Pose6> retained() const {
    return std::span<const Pose6>(samples).subspan(std::min(burn_in, samples.size()));
  }
};

template <GradientModel Model>
SampleChain run_chain(const Model& model, const Pose6& init, const PriorSpec& prior,
                      const SamplerConfig& cfg) {
  cfg.validate();
  prior.validate();
  if (!init.is_finite()) throw InvalidArgument("initial pose must be finite");

  Rng batch_rng(derive_seed(cfg.seed, kBatchStream));
  Rng noise_rng(derive_seed(cfg.seed, kNoiseStream));
  PreconditionerState precond{Vector6d::Zero(), cfg.beta, cfg.lambda};

  SampleChain chain;
  chain.config = cfg;
  chain.burn_in = cfg.burn_in;
  chain.samples.reserve(cfg.samples);
  chain.step_sizes.reserve(cfg.samples);

  Pose6 theta = init;
  for (std::size_t t = 0; t < cfg.samples; ++t) {
    const double alpha_t = cfg.step_size_at(t);
    const Vector6d g = model.gradient(theta, batch_rng);
    auto step = sgld_step(theta, g, prior, precond, cfg, alpha_t, noise_rng);
    if (!step.pose.is_finite())
      throw SolverFailure("chain diverged at iteration " + std::to_string(t));
    theta = step.pose;
    precond = step.preconditioner;
    chain.samples.push_back(theta);
    chain.step_sizes.push_back(alpha_t);
  }
  return chain;
}

inline SampleChain run_chain(const PointCloud& src, const NeighborIndex& index, const Pose6& init,
                             const PriorSpec& prior, const SamplerConfig& cfg) {
  if (src.empty()) throw InvalidArgument("empty source cloud");
  const IcpGradientModel model{src, index, cfg.batch_size, cfg.max_dist,
                               cfg.max_degenerate_batches};
  return run_chain(model, init, prior, cfg);
}

inline SampleChain run_chain(const PointCloud& src, const PointCloud& ref, const Pose6& init,
                             const PriorSpec& prior, const SamplerConfig& cfg) {
  return run_chain(src, NeighborIndex(ref), init, prior, cfg);
}

/// Seed of chain `i` under master seed `master`.
inline std::uint64_t chain_seed(std::uint64_t master, std::size_t i) {
  return derive_seed(master, 0x1000 + i);
}

/// Independent chains, chain i seeded with chain_seed(cfg.seed, i). Output is
/// independent of `threads`.
template <GradientModel Model>
std::vector<SampleChain> run_chains(const Model& model, const Pose6& init, const PriorSpec& prior,
                                    const SamplerConfig& cfg, std::size_t n_chains,
                                    std::size_t threads = 0) {
  if (n_chains < 1) throw InvalidArgument("need at least one chain");
  std::vector<SampleChain> chains(n_chains);
  parallel_for(n_chains, threads, [&](std::size_t i) {
    SamplerConfig c = cfg;
    c.seed = chain_seed(cfg.seed, i);
    chains[i] = run_chain(model, init, prior, c);
  });
  return chains;
}

inline std::vector<SampleChain> run_chains(const PointCloud& src, const NeighborIndex& index,
                                           const Pose6& init, const PriorSpec& prior,
                                           const SamplerConfig& cfg, std::size_t n_chains,
                                           std::size_t threads = 0) {
  const IcpGradientModel model{src, index, cfg.batch_size, cfg.max_dist,
                               cfg.max_degenerate_batches};
  return run_chains(model, init, prior, cfg, n_chains, threads);
}

/// Linear average of the retained samples (angles included).
inline Pose6 posterior_mean(const SampleChain& chain) {
  const auto kept = chain.retained();
  if (kept.empty()) throw InvalidArgument("chain has no retained samples");
  Vector6d sum = Vector6d::Zero();
  for (const auto& p : kept) sum += p.values;
  return Pose6(Vector6d(sum / double(kept.size())));
}

inline void write_chain_csv(std::ostream& out, const SampleChain& chain) {
  out << "t,x,y,z,roll,pitch,yaw,alpha_t\n";
  out.precision(17);
  for (std::size_t t = 0; t < chain.samples.size(); ++t) {
    out << t;
    for (int k = 0; k < 6; ++k) out << ',' << chain.samples[t][k];
    out << ',' << chain.step_sizes[t] << '\n';
  }
}

}  // namespace bayes_icp
