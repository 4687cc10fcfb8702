#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "bayes_icp/bayes_icp.hpp"
#include "bayes_icp/serialization.hpp"
#include "support.hpp"

using namespace bayes_icp;
using bayes_icp::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const TempDir& dir, const std::string& args) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(BAYES_ICP_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(log)};
}

std::string p(const TempDir& dir, const std::string& name) { return "'" + (dir / name).string() + "'"; }

// Generates the source/reference pair used by the registration tests.
void make_pair(const TempDir& dir, const std::string& shape) {
  ASSERT_EQ(cli(dir, "gen --shape " + shape + " --seed 1 --out " + p(dir, "src.ply")).status, 0);
  ASSERT_EQ(cli(dir, "gen --shape " + shape + " --seed 2 --out " + p(dir, "ref.ply")).status, 0);
}

}  // namespace

TEST(Cli, GenWritesRequestedPointCountDeterministically) {
  TempDir dir;
  const auto r = cli(dir, "gen --shape mug-with-handle --points 2000 --seed 3 --out " + p(dir, "a.ply"));
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_EQ(cli(dir, "gen --shape mug-with-handle --points 2000 --seed 3 --out " + p(dir, "b.ply")).status, 0);
  EXPECT_EQ(load_cloud(dir / "a.ply").size(), 2000u);
  EXPECT_EQ(slurp(dir / "a.ply"), slurp(dir / "b.ply"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.manifest.json"));
}

TEST(Cli, GenUnknownShapeListsValidShapes) {
  TempDir dir;
  const auto r = cli(dir, "gen --shape teapot --out " + p(dir, "t.ply"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("can"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mug"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("table"), std::string::npos) << r.out;
}

TEST(Cli, RegisterCloudToItselfIsIdentity) {
  TempDir dir;
  make_pair(dir, "table");
  const auto r = cli(dir, "register --solver standard --source " + p(dir, "ref.ply") + " --reference " +
                              p(dir, "ref.ply") + " --out-dir " + p(dir, "out"));
  ASSERT_EQ(r.status, 0) << r.out;
  const Pose6 pose = pose_from_json(read_json_file(dir / "out" / "pose.json").at("pose"));
  EXPECT_LT(pose.values.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "trace.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, RegisterRecoversKnownOffset) {
  TempDir dir;
  make_pair(dir, "mug-with-handle");
  const auto ref = load_cloud(dir / "ref.ply");
  const Pose6 truth(0.01, -0.005, 0.0, 0.0, 0.0, 0.05);
  save_cloud(apply_transform(pose_to_transform(truth).inverse(), ref), dir / "moved.ply");
  const auto r = cli(dir, "register --source " + p(dir, "moved.ply") + " --reference " + p(dir, "ref.ply") +
                              " --out-dir " + p(dir, "out") + " --seed 4");
  ASSERT_EQ(r.status, 0) << r.out;
  const Pose6 pose = pose_from_json(read_json_file(dir / "out" / "pose.json").at("pose"));
  EXPECT_LT((pose.translation() - truth.translation()).norm(), 0.005);
  for (int k = 3; k < 6; ++k) EXPECT_LT(std::abs(wrap_angle(pose[k] - truth[k])), 0.01) << kParamNames[k];
}

TEST(Cli, SampleWritesOneFilePerChainReproducibly) {
  TempDir dir;
  make_pair(dir, "can");
  const std::string args = "sample --source " + p(dir, "src.ply") + " --reference " + p(dir, "ref.ply") +
                           " --chains 4 --threads 2 --samples 150 --alpha 3e-10 --n-scale 1e8 --seed 5 --out-dir ";
  ASSERT_EQ(cli(dir, args + p(dir, "a")).status, 0);
  ASSERT_EQ(cli(dir, args + p(dir, "b")).status, 0);
  for (int i = 0; i < 4; ++i) {
    const std::string name = "chain_" + std::to_string(i) + ".json";
    ASSERT_TRUE(std::filesystem::exists(dir / "a" / name));
    const auto chain = load_chain(dir / "a" / name);
    EXPECT_EQ(chain.samples.size(), 150u);
    EXPECT_EQ(chain.config.seed, chain_seed(5, i));
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name));
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "manifest.json"));
}

TEST(Cli, BaselineNeedsTwoRuns) {
  TempDir dir;
  make_pair(dir, "table");
  const auto r = cli(dir, "baseline --runs 1 --source " + p(dir, "src.ply") + " --reference " +
                              p(dir, "ref.ply") + " --out " + p(dir, "b.json"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("error"), std::string::npos) << r.out;
}

TEST(Cli, AnalyzeChainAgainstItself) {
  TempDir dir;
  make_pair(dir, "can");
  ASSERT_EQ(cli(dir, "sample --source " + p(dir, "src.ply") + " --reference " + p(dir, "ref.ply") +
                         " --samples 400 --alpha 3e-10 --n-scale 1e8 --out-dir " + p(dir, "s"))
                .status,
            0);
  const auto r = cli(dir, "analyze --chains " + p(dir, "s/chain_0.json") + " --baseline " +
                              p(dir, "s/chain_0.json") + " --sweep-samples 100,200,400 --out-dir " +
                              p(dir, "a"));
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream kl(dir / "a" / "kl.csv");
  std::string line;
  std::getline(kl, line);
  int rows = 0;
  while (std::getline(kl, line)) {
    ++rows;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    EXPECT_NEAR(std::stod(line.substr(c1 + 1, c2 - c1 - 1)), 0.0, 1e-12) << line;
  }
  EXPECT_EQ(rows, 6);
  for (const char* n : {"x", "y", "z", "roll", "pitch", "yaw"})
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / ("kde_" + std::string(n) + ".csv"))) << n;
  std::ifstream sweep(dir / "a" / "sweep_samples.csv");
  rows = 0;
  while (std::getline(sweep, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "manifest.json"));
}

TEST(Cli, MissingInputFileIsAnError) {
  TempDir dir;
  const auto r = cli(dir, "register --source " + p(dir, "nope.ply") + " --reference " + p(dir, "nope.ply") +
                              " --out-dir " + p(dir, "o"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
}
