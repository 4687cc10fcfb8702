#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <vector>

#include "bayes_icp/correspondence.hpp"
#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/kdtree.hpp"
#include "bayes_icp/random.hpp"

namespace bayes_icp {

/// Mean squared point-to-point distance (R s + u - r) over fixed pairs.
inline double loss(const Pose6& pose, const CorrespondenceSet& pairs) {
  if (pairs.empty()) throw InvalidArgument("loss of an empty correspondence set");
  const RigidTransform t = pose_to_transform(pose);
  double sum = 0.0;
  for (const auto& c : pairs.pairs) sum += ((t * c.source) - c.reference).squaredNorm();
  return sum / double(pairs.size());
}

/// Mini-batch gradient with the pairing held fixed:
///   translation: mean(residual)
///   rotation k:  mean(residual . dR/dangle_k * s)
/// This is the gradient of half the mean squared residual.
inline Vector6d batch_gradient(const Pose6& pose, const CorrespondenceSet& pairs) {
  if (pairs.empty()) throw InvalidArgument("gradient of an empty correspondence set");
  const RigidTransform t = pose_to_transform(pose);
  const RotationJacobian jac = rotation_jacobian(pose);
  Vector6d g = Vector6d::Zero();
  for (const auto& c : pairs.pairs) {
    const Eigen::Vector3d residual = (t * c.source) - c.reference;
    g.head<3>() += residual;
    for (int k = 0; k < 3; ++k) g[3 + k] += residual.dot(jac.d_angle[k] * c.source);
  }
  return g / double(pairs.size());
}

/// RMSProp-style diagonal preconditioner: V <- beta V + (1 - beta) g*g and
/// A = 1 / (lambda + sqrt(V)).
struct PreconditionerState {
  Vector6d second_moment = Vector6d::Zero();
  double beta = 0.9;
  double lambda = 1e-8;

  Vector6d scaling() const {
    return (second_moment.cwiseSqrt().array() + lambda).inverse().matrix();
  }
};

struct PreconditionerUpdate {
  PreconditionerState state;
  Vector6d scaling;  // diagonal of A
};

inline PreconditionerUpdate precondition_update(const PreconditionerState& state,
                                                const Vector6d& gradient) {
  PreconditionerUpdate out{state, Vector6d::Zero()};
  out.state.second_moment =
      state.beta * state.second_moment +
      (1.0 - state.beta) * gradient.cwiseProduct(gradient);
  out.scaling = out.state.scaling();
  return out;
}

/// Shared by SGD-ICP and the Langevin sampler so the two follow bit-identical
/// arithmetic when the sampler reduces to plain SGD.
inline Vector6d preconditioned_step(const Vector6d& scaling, double rate,
                                    const Vector6d& direction) {
  Vector6d step;
  for (int k = 0; k < 6; ++k) step[k] = (rate * scaling[k]) * direction[k];
  return step;
}

struct TraceEntry {
  std::size_t iteration = 0;
  double loss = 0.0;  // batch loss at the pose before the update
  Pose6 pose;         // pose after the update
};

inline void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  out << "iter,loss,x,y,z,roll,pitch,yaw\n";
  out.precision(17);
  for (const auto& e : trace) {
    out << e.iteration << ',' << e.loss;
    for (int k = 0; k < 6; ++k) out << ',' << e.pose[k];
    out << '\n';
  }
}

struct SgdIcpConfig {
  double alpha = 1e-4;
  std::size_t batch_size = 160;
  std::size_t max_iterations = 5000;
  double tolerance = 1e-5;          // on windowed mean |delta theta|
  std::size_t window = 30;
  std::optional<double> max_dist;
  std::uint64_t seed = 0;
  double beta = 0.9;
  double lambda = 1e-8;
  std::size_t max_degenerate_batches = 100;

  void validate() const {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be > 0");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (window < 1) throw InvalidArgument("convergence window must be >= 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
  }
};

struct SgdIcpResult {
  Pose6 pose;
  std::vector<TraceEntry> trace;
  bool converged = false;
};

/// Draws mini-batches and associates them, skipping batches whose pairs were
/// all rejected. Throws SolverFailure after `budget` consecutive rejections.
inline CorrespondenceSet draw_associated_batch(const PointCloud& src, const NeighborIndex& index,
                                               const Pose6& pose, std::size_t batch_size,
                                               std::optional<double> max_dist, Rng& rng,
                                               std::size_t budget) {
  const RigidTransform t = pose_to_transform(pose);
  for (std::size_t strikes = 0;; ++strikes) {
    const PointCloud batch = sample_minibatch(src, batch_size, rng);
    try {
      return associate(batch, t, index, max_dist);
    } catch (const DegenerateAssociation&) {
      if (strikes + 1 >= budget)
        throw SolverFailure("degenerate association persisted for " +
                            std::to_string(budget) + " consecutive batches");
    }
  }
}

/// Mini-batch SGD-ICP with the diagonal preconditioner:
///   theta <- theta - alpha * A(theta) * g(theta, batch)
inline SgdIcpResult sgd_icp(const PointCloud& src, const NeighborIndex& index, const Pose6& init,
                            const SgdIcpConfig& cfg) {
  cfg.validate();
  if (src.empty()) throw InvalidArgument("empty source cloud");

  Rng batch_rng(derive_seed(cfg.seed, kBatchStream));
  PreconditionerState precond{Vector6d::Zero(), cfg.beta, cfg.lambda};
  SgdIcpResult result;
  result.pose = init;
  result.trace.reserve(cfg.max_iterations);

  std::deque<double> recent_change;
  double change_sum = 0.0;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const CorrespondenceSet pairs =
        draw_associated_batch(src, index, result.pose, cfg.batch_size, cfg.max_dist, batch_rng,
                              cfg.max_degenerate_batches);
    const Vector6d g = batch_gradient(result.pose, pairs);
    const auto upd = precondition_update(precond, g);
    precond = upd.state;
    const Vector6d step = preconditioned_step(upd.scaling, cfg.alpha, g);
    const double batch_loss = loss(result.pose, pairs);
    result.pose.values -= step;
    result.trace.push_back({it, batch_loss, result.pose});

    const double change = step.cwiseAbs().mean();
    recent_change.push_back(change);
    change_sum += change;
    if (recent_change.size() > cfg.window) {
      change_sum -= recent_change.front();
      recent_change.pop_front();
    }
    if (recent_change.size() == cfg.window && change_sum / double(cfg.window) < cfg.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

inline SgdIcpResult sgd_icp(const PointCloud& src, const PointCloud& ref, const Pose6& init,
                            const SgdIcpConfig& cfg) {
  return sgd_icp(src, NeighborIndex(ref), init, cfg);
}

/// Closed-form least-squares rigid alignment of pair sources onto their
/// references (cross-covariance SVD, reflection corrected).
inline RigidTransform kabsch_align(const std::vector<Eigen::Vector3d>& source,
                                   const std::vector<Eigen::Vector3d>& target) {
  if (source.size() != target.size()) throw InvalidArgument("pair lists differ in length");
  if (source.size() < 3) throw RankDeficient("closed-form alignment needs >= 3 pairs");
  const double n = double(source.size());
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    cs += source[i];
    ct += target[i];
  }
  cs /= n;
  ct /= n;

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Eigen::Vector3d a = source[i] - cs;
    cross += a * (target[i] - ct).transpose();
    spread += a * a.transpose();
  }

  // Collinear (or coincident) sources leave a rotation about the line free.
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(spread).eigenvalues();
  if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300)) || ev[2] <= 0.0)
    throw RankDeficient("closed-form alignment needs >= 3 non-collinear pairs");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ct - t.rotation * cs;
  return t;
}

inline RigidTransform kabsch_align(const CorrespondenceSet& pairs) {
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& c : pairs.pairs) {
    src.push_back(c.source);
    dst.push_back(c.reference);
  }
  return kabsch_align(src, dst);
}

/// Distance between poses used for convergence tests: max over translation
/// components and wrapped angle differences.
inline double pose_change(const Pose6& a, const Pose6& b) {
  double m = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double d = is_angle(k) ? wrap_angle(a[k] - b[k]) : a[k] - b[k];
    m = std::max(m, std::abs(d));
  }
  return m;
}

struct StandardIcpResult {
  Pose6 pose;
  std::vector<TraceEntry> trace;  // full-cloud loss before each update
  std::size_t iterations = 0;
  bool converged = false;
  double final_loss = 0.0;
};

/// Classic full-batch ICP: associate every source point, then solve the
/// closed-form alignment, until the pose change drops below `tol`.
inline StandardIcpResult standard_icp(const PointCloud& src, const NeighborIndex& index,
                                      const Pose6& init, std::size_t max_iters, double tol,
                                      std::optional<double> max_dist = std::nullopt) {
  if (src.empty()) throw InvalidArgument("empty source cloud");
  StandardIcpResult result;
  result.pose = init;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const CorrespondenceSet pairs = associate(src, result.pose, index, max_dist);
    const Pose6 next = transform_to_pose(kabsch_align(pairs));
    const double change = pose_change(next, result.pose);
    result.trace.push_back({it, loss(result.pose, pairs), next});
    result.pose = next;
    result.iterations = it + 1;
    if (change < tol) {
      result.converged = true;
      break;
    }
  }
  result.final_loss = loss(result.pose, associate(src, result.pose, index, max_dist));
  return result;
}

inline StandardIcpResult standard_icp(const PointCloud& src, const PointCloud& ref,
                                      const Pose6& init, std::size_t max_iters, double tol) {
  return standard_icp(src, NeighborIndex(ref), init, max_iters, tol);
}

}  // namespace bayes_icp
