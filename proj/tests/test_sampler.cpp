#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bayes_icp/analysis.hpp"
#include "bayes_icp/sampler.hpp"
#include "bayes_icp/synthetic.hpp"
#include "support.hpp"

using namespace bayes_icp;
using bayes_icp::testing::default_prior;
using bayes_icp::testing::metric_config;
using bayes_icp::testing::synthetic_pair;

namespace {

constexpr double kPi = std::numbers::pi;

struct ConstantGradient {
  Vector6d g = Vector6d::Zero();
  Vector6d gradient(const Pose6&, Rng&) const { return g; }
};

SamplerConfig plain_config(std::size_t samples) {
  SamplerConfig c;
  c.samples = samples;
  c.decay_factor = 1.0;
  c.fixed_preconditioner = Vector6d::Ones();
  return c;
}

double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

}  // namespace

TEST(PriorGradient, GaussianTranslation) {
  const Vector6d g = prior_gradient(Pose6(0.5, 0, 0, 0, 0, 0), default_prior());
  EXPECT_DOUBLE_EQ(g[kX], 4.0);
  EXPECT_EQ(g[kY], 0.0);
}

TEST(PriorGradient, VonMisesRotation) {
  const Vector6d g = prior_gradient(Pose6(0, 0, 0, kPi / 2, 0, 0), default_prior());
  EXPECT_DOUBLE_EQ(g[kRoll], 8.0);
}

TEST(PriorGradient, ZeroAtMean) {
  const Pose6 mu(0.1, -0.2, 0.3, 0.4, -0.5, 0.6);
  EXPECT_TRUE(prior_gradient(mu, PriorSpec::from_variances(mu, 0.125, 0.125)).isZero(0.0));
}

TEST(PriorGradient, AnglesArePeriodic) {
  const auto prior = default_prior();
  const Pose6 a(0, 0, 0, 0.3, -1.2, 2.5);
  Pose6 b = a;
  for (int k = 3; k < 6; ++k) b[k] += 2 * kPi;
  EXPECT_LT((prior_gradient(a, prior) - prior_gradient(b, prior)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PriorGradient, FlatPriorIsZero) {
  EXPECT_TRUE(prior_gradient(Pose6(3, 2, 1, 1, 2, 3), PriorSpec::flat()).isZero(0.0));
}

TEST(SgldStep, NoiselessStepIsPreconditionedGradientDescent) {
  SamplerConfig cfg = plain_config(10);
  cfg.noise_enabled = false;
  cfg.alpha = 0.01;
  cfg.n_scale = 100.0;
  Vector6d g;
  g << 1, -2, 3, -4, 5, -6;
  Rng rng(0);
  const auto out = sgld_step(Pose6{}, g, PriorSpec::flat(), PreconditionerState{}, cfg, cfg.alpha, rng);
  for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(out.pose[k], -0.5 * 0.01 * 100.0 * g[k]);
}

TEST(SgldStep, AddsPriorDrift) {
  SamplerConfig cfg = plain_config(10);
  cfg.noise_enabled = false;
  cfg.alpha = 0.01;
  Rng rng(0);
  const auto out = sgld_step(Pose6(0.5, 0, 0, 0, 0, 0), Vector6d::Zero(), default_prior(),
                             PreconditionerState{}, cfg, cfg.alpha, rng);
  EXPECT_DOUBLE_EQ(out.pose.x(), 0.5 - 0.5 * 0.01 * 4.0);
}

TEST(SgldStep, FixedPointWithoutNoiseOrGradient) {
  SamplerConfig cfg;
  cfg.noise_enabled = false;
  Rng rng(0);
  const Pose6 p(0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
  const auto out = sgld_step(p, Vector6d::Zero(), PriorSpec::flat(), PreconditionerState{}, cfg, cfg.alpha, rng);
  EXPECT_EQ(out.pose.values, p.values);
}

TEST(SgldStep, AdaptivePreconditionerUsesCurrentGradient) {
  SamplerConfig cfg;
  cfg.noise_enabled = false;
  Vector6d g = Vector6d::Constant(2.0);
  Rng rng(0);
  const auto out = sgld_step(Pose6{}, g, PriorSpec::flat(), PreconditionerState{}, cfg, cfg.alpha, rng);
  const double a = 1.0 / (1e-8 + std::sqrt(0.1 * 4.0));
  EXPECT_DOUBLE_EQ(out.scaling[0], a);
  EXPECT_NEAR(out.pose[0], -0.5 * cfg.alpha * cfg.n_scale * a * 2.0, 1e-15);
}

TEST(SgldStep, NoiseVarianceIsAlphaTimesScaling) {
  SamplerConfig cfg = plain_config(100000);
  cfg.alpha = 1e-3;
  Vector6d a;
  a << 1, 2, 3, 0.5, 4, 0.25;
  cfg.fixed_preconditioner = a;
  Rng rng(42);
  std::array<std::vector<double>, 6> inc;
  for (int i = 0; i < 100000; ++i) {
    const auto out = sgld_step(Pose6{}, Vector6d::Zero(), PriorSpec::flat(), PreconditionerState{}, cfg, cfg.alpha, rng);
    for (int k = 0; k < 6; ++k) inc[k].push_back(out.pose[k]);
  }
  // Sample variance of 1e5 normals has relative SE ~0.45%.
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(variance(inc[k]) / (cfg.alpha * a[k]), 1.0, 0.02) << k;
}

TEST(StepSchedule, DecaysFromStartEveryPeriod) {
  SamplerConfig cfg;
  cfg.samples = 100;
  cfg.alpha = 1.0;
  EXPECT_EQ(cfg.decay_start(), 80u);
  EXPECT_EQ(cfg.step_size_at(0), 1.0);
  EXPECT_EQ(cfg.step_size_at(79), 1.0);
  EXPECT_DOUBLE_EQ(cfg.step_size_at(80), 0.8);
  EXPECT_DOUBLE_EQ(cfg.step_size_at(89), 0.8);
  EXPECT_DOUBLE_EQ(cfg.step_size_at(90), 0.64);
  EXPECT_DOUBLE_EQ(cfg.step_size_at(99), 0.64);
  cfg.decay_factor = 1.0;
  EXPECT_EQ(cfg.step_size_at(99), 1.0);
}

TEST(RunChain, RecordsScheduleAndLength) {
  SamplerConfig cfg = plain_config(100);
  cfg.decay_factor = 0.5;
  const auto chain = run_chain(ConstantGradient{}, Pose6{}, PriorSpec::flat(), cfg);
  ASSERT_EQ(chain.samples.size(), 100u);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_EQ(chain.step_sizes[t], cfg.step_size_at(t));
}

TEST(RunChain, BurnInOnlyAffectsRetainedView) {
  SamplerConfig cfg = plain_config(50);
  cfg.burn_in = 20;
  const auto chain = run_chain(ConstantGradient{}, Pose6{}, PriorSpec::flat(), cfg);
  EXPECT_EQ(chain.samples.size(), 50u);
  EXPECT_EQ(chain.retained().size(), 30u);
  EXPECT_EQ(chain.retained().front().values, chain.samples[20].values);
}

TEST(RunChain, ValidatesInputs) {
  const ConstantGradient m;
  SamplerConfig cfg = plain_config(10);
  cfg.burn_in = 10;
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::flat(), cfg), InvalidArgument);
  cfg = plain_config(10);
  cfg.alpha = -1;
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::flat(), cfg), InvalidArgument);
  cfg = plain_config(10);
  cfg.decay_factor = 1.5;
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::flat(), cfg), InvalidArgument);
  cfg = plain_config(10);
  cfg.samples = 0;
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::flat(), cfg), InvalidArgument);
  cfg = plain_config(10);
  EXPECT_THROW(run_chain(m, Pose6(NAN, 0, 0, 0, 0, 0), PriorSpec::flat(), cfg), InvalidArgument);
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::from_variances(Pose6{}, 0.0, 1.0), cfg), InvalidArgument);
  EXPECT_THROW(run_chain(PointCloud{}, NeighborIndex(synthetic_pair(Shape::kTable, 10).reference),
                         Pose6{}, PriorSpec::flat(), cfg),
               InvalidArgument);
}

TEST(RunChain, DivergenceIsReported) {
  ConstantGradient m;
  m.g.setConstant(1e308);
  SamplerConfig cfg = plain_config(10);
  cfg.n_scale = 1e10;
  EXPECT_THROW(run_chain(m, Pose6{}, PriorSpec::flat(), cfg), SolverFailure);
}

TEST(RunChains, DeterministicAndThreadIndependent) {
  const auto pair = synthetic_pair(Shape::kCan, 500);
  const NeighborIndex idx(pair.reference);
  SamplerConfig cfg = metric_config(9, 200);
  const auto one = run_chains(pair.source, idx, Pose6{}, default_prior(), cfg, 3, 1);
  const auto many = run_chains(pair.source, idx, Pose6{}, default_prior(), cfg, 3, 3);
  const auto again = run_chains(pair.source, idx, Pose6{}, default_prior(), cfg, 3, 1);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 200; ++t) {
      EXPECT_EQ(one[c].samples[t].values, many[c].samples[t].values);
      EXPECT_EQ(one[c].samples[t].values, again[c].samples[t].values);
    }
  EXPECT_NE(one[0].samples.back().values, one[1].samples.back().values);
}

TEST(RunChains, ChainIUsesDerivedSeed) {
  const auto pair = synthetic_pair(Shape::kCan, 500);
  const NeighborIndex idx(pair.reference);
  SamplerConfig cfg = metric_config(4, 100);
  const auto chains = run_chains(pair.source, idx, Pose6{}, default_prior(), cfg, 2, 1);
  SamplerConfig c1 = cfg;
  c1.seed = chain_seed(4, 1);
  const auto direct = run_chain(pair.source, idx, Pose6{}, default_prior(), c1);
  EXPECT_EQ(chains[1].config.seed, chain_seed(4, 1));
  for (std::size_t t = 0; t < 100; ++t) EXPECT_EQ(chains[1].samples[t].values, direct.samples[t].values);
  EXPECT_THROW(run_chains(pair.source, idx, Pose6{}, default_prior(), cfg, 0), InvalidArgument);
}

TEST(PosteriorMean, AveragesRetainedSamples) {
  SampleChain c;
  c.samples = {Pose6(1, 0, 0, 0, 0, 0), Pose6(2, 0, 0, 0, 0, 0), Pose6(4, 0, 0, 0, 0, 1)};
  c.step_sizes = {1, 1, 1};
  EXPECT_DOUBLE_EQ(posterior_mean(c).x(), 7.0 / 3.0);
  c.burn_in = 1;
  EXPECT_DOUBLE_EQ(posterior_mean(c).x(), 3.0);
  EXPECT_DOUBLE_EQ(posterior_mean(c).yaw(), 0.5);
  c.burn_in = 3;
  EXPECT_THROW(posterior_mean(c), InvalidArgument);
}

TEST(Posterior, TightPriorKeepsSamplesNearPriorMean) {
  // Identical clouds: the likelihood and prior agree on the identity pose.
  const auto ref = generate_synthetic({Shape::kTable, 2000, 0.001, 2});
  SamplerConfig cfg = metric_config(3, 2000);
  cfg.burn_in = 100;
  const auto chain = run_chain(ref, ref, Pose6{}, PriorSpec::from_variances(Pose6{}, 0.01, 0.01), cfg);
  const double bound = 3.0 * std::sqrt(0.01);
  for (const auto& p : chain.retained())
    for (int k = 0; k < 6; ++k) ASSERT_LT(std::abs(p[k]), bound) << kParamNames[k];
}

TEST(Posterior, CanYawSpreadsMoreThanMugYaw) {
  const auto can = synthetic_pair(Shape::kCan, 2000, 0.0);
  const auto mug = synthetic_pair(Shape::kMugWithHandle, 2000, 0.0);
  const SamplerConfig cfg = metric_config(0, 2000);
  const auto cs = ensemble_stats(EnsembleDistribution::from_chain(
      run_chain(can.source, can.reference, Pose6{}, default_prior(), cfg)));
  const auto ms = ensemble_stats(EnsembleDistribution::from_chain(
      run_chain(mug.source, mug.reference, Pose6{}, default_prior(), cfg)));
  EXPECT_GE(cs[kYaw].std, 5.0 * cs[kRoll].std);
  EXPECT_GE(cs[kYaw].std, 5.0 * ms[kYaw].std);
}
