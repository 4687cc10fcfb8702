#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "bayes_icp/bayes_icp.hpp"

namespace bayes_icp::testing {

// Sampler settings for metre-scale synthetic objects. The preconditioner makes
// the per-step move roughly alpha * N / 2 in parameter units, so the
// reproduction defaults (alpha 1e-4, N 6000) take 0.3 m / 0.3 rad steps on
// objects a few centimetres across. These keep that move at ~0.015.
inline constexpr double kMetricAlpha = 3e-10;
inline constexpr double kMetricNScale = 1e8;

inline SamplerConfig metric_config(std::uint64_t seed, std::size_t samples = 2000) {
  SamplerConfig c;
  c.alpha = kMetricAlpha;
  c.n_scale = kMetricNScale;
  c.samples = samples;
  c.seed = seed;
  return c;
}

inline PriorSpec default_prior() { return PriorSpec::from_variances(Pose6{}, 0.125, 0.125); }

/// Source and reference drawn independently from the same surface.
struct CloudPair {
  PointCloud source;
  PointCloud reference;
};

inline CloudPair synthetic_pair(Shape shape, std::size_t points = 2000, double noise = 0.001) {
  return {generate_synthetic({shape, points, noise, 1}),
          generate_synthetic({shape, points, noise, 2})};
}

inline Pose6 random_pose(std::mt19937_64& rng, double trans, double rot) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Pose6 p;
  for (int k = 0; k < 6; ++k) p[k] = u(rng) * (is_angle(k) ? rot : trans);
  return p;
}

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double half_extent = 1.0) {
  std::uniform_real_distribution<double> u(-half_extent, half_extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bayes_icp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace bayes_icp::testing
