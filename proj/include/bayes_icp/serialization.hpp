#pragma once

// JSON and CSV persistence for poses, sample chains and ensembles.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bayes_icp/analysis.hpp"
#include "bayes_icp/cloud_io.hpp"
#include "bayes_icp/error.hpp"
#include "bayes_icp/geometry.hpp"
#include "bayes_icp/sampler.hpp"

namespace bayes_icp {

using Json = nlohmann::ordered_json;

inline Json pose_to_json(const Pose6& p) {
  Json j;
  for (int k = 0; k < 6; ++k) j[std::string(kParamNames[k])] = p[k];
  return j;
}

inline Pose6 pose_from_json(const Json& j) {
  Pose6 p;
  if (j.is_array()) {
    if (j.size() != 6) throw InvalidArgument("pose array must have 6 entries");
    for (int k = 0; k < 6; ++k) p[k] = j[k].get<double>();
    return p;
  }
  for (int k = 0; k < 6; ++k) p[k] = j.at(std::string(kParamNames[k])).get<double>();
  return p;
}

inline Json sampler_config_to_json(const SamplerConfig& c) {
  Json j;
  j["alpha"] = c.alpha;
  j["batch_size"] = c.batch_size;
  j["n_scale"] = c.n_scale;
  j["samples"] = c.samples;
  j["burn_in"] = c.burn_in;
  j["decay_factor"] = c.decay_factor;
  j["decay_period"] = c.decay_period;
  j["decay_start_fraction"] = c.decay_start_fraction;
  j["lambda"] = c.lambda;
  j["beta"] = c.beta;
  j["seed"] = c.seed;
  j["noise_enabled"] = c.noise_enabled;
  j["max_dist"] = c.max_dist ? Json(*c.max_dist) : Json(nullptr);
  j["max_degenerate_batches"] = c.max_degenerate_batches;
  return j;
}

inline SamplerConfig sampler_config_from_json(const Json& j) {
  SamplerConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n_scale = j.value("n_scale", c.n_scale);
  c.samples = j.value("samples", c.samples);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.decay_period = j.value("decay_period", c.decay_period);
  c.decay_start_fraction = j.value("decay_start_fraction", c.decay_start_fraction);
  c.lambda = j.value("lambda", c.lambda);
  c.beta = j.value("beta", c.beta);
  c.seed = j.value("seed", c.seed);
  c.noise_enabled = j.value("noise_enabled", c.noise_enabled);
  if (j.contains("max_dist") && !j["max_dist"].is_null()) c.max_dist = j["max_dist"].get<double>();
  c.max_degenerate_batches = j.value("max_degenerate_batches", c.max_degenerate_batches);
  return c;
}

inline Json prior_to_json(const PriorSpec& p) {
  Json j;
  j["mean"] = pose_to_json(p.mean);
  j["trans_variance"] = {p.trans_variance.x(), p.trans_variance.y(), p.trans_variance.z()};
  j["rot_concentration"] = {p.rot_concentration.x(), p.rot_concentration.y(),
                            p.rot_concentration.z()};
  return j;
}

inline Json chain_to_json(const SampleChain& chain) {
  Json j;
  j["kind"] = "sample_chain";
  j["config"] = sampler_config_to_json(chain.config);
  j["seed"] = chain.config.seed;
  j["burn_in"] = chain.burn_in;
  Json samples = Json::array();
  for (const auto& p : chain.samples) {
    Json row = Json::array();
    for (int k = 0; k < 6; ++k) row.push_back(p[k]);
    samples.push_back(std::move(row));
  }
  j["samples"] = std::move(samples);
  j["step_sizes"] = chain.step_sizes;
  return j;
}

inline SampleChain chain_from_json(const Json& j) {
  if (j.value("kind", std::string()) != "sample_chain")
    throw InvalidArgument("JSON document is not a sample chain");
  SampleChain c;
  c.config = sampler_config_from_json(j.at("config"));
  c.burn_in = j.at("burn_in").get<std::size_t>();
  for (const auto& row : j.at("samples")) c.samples.push_back(pose_from_json(row));
  c.step_sizes = j.at("step_sizes").get<std::vector<double>>();
  if (c.step_sizes.size() != c.samples.size())
    throw InvalidArgument("chain step sizes and samples differ in length");
  return c;
}

/// Reads the `t,x,y,z,roll,pitch,yaw,alpha_t` format written by
/// write_chain_csv. The burn-in is not recorded in CSV and is set to zero.
inline SampleChain chain_from_csv(std::istream& in) {
  SampleChain c;
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x,y,z,roll,pitch,yaw", 0) != 0)
    throw InvalidArgument("chain CSV header missing");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      if (!detail::parse_double(cell, v))
        throw InvalidArgument("chain CSV line " + std::to_string(line_no) + ": bad value '" +
                              cell + "'");
      vals.push_back(v);
    }
    if (vals.size() != 8)
      throw InvalidArgument("chain CSV line " + std::to_string(line_no) + ": expected 8 columns");
    c.samples.emplace_back(vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]);
    c.step_sizes.push_back(vals[7]);
  }
  c.config.samples = std::max<std::size_t>(1, c.samples.size());
  return c;
}

inline Json ensemble_to_json(const EnsembleDistribution& e) {
  Json j;
  j["kind"] = "ensemble";
  j["source"] = std::string(source_name(e.source));
  if (e.baseline) {
    const auto& b = *e.baseline;
    j["provenance"] = {{"seed", b.seed},           {"n_runs", b.n_runs},
                       {"trans_range", b.trans_range}, {"rot_range", b.rot_range},
                       {"max_iters", b.max_iters}, {"tol", b.tol},
                       {"center", pose_to_json(b.center)}, {"dropped_runs", e.dropped_runs}};
  }
  Json poses = Json::array();
  for (std::size_t i = 0; i < e.size(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < 6; ++k) row.push_back(e.values[k][i]);
    poses.push_back(std::move(row));
  }
  j["poses"] = std::move(poses);
  return j;
}

inline EnsembleDistribution ensemble_from_json(const Json& j) {
  const std::string kind = j.value("kind", std::string());
  if (kind == "sample_chain") return EnsembleDistribution::from_chain(chain_from_json(j));
  if (kind != "ensemble") throw InvalidArgument("JSON document is not an ensemble");
  std::vector<Pose6> poses;
  for (const auto& row : j.at("poses")) poses.push_back(pose_from_json(row));
  auto e = EnsembleDistribution::from_poses(poses, parse_source(j.value("source", "external")));
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    BaselineOptions b;
    b.seed = p.value("seed", b.seed);
    b.n_runs = p.value("n_runs", b.n_runs);
    b.trans_range = p.value("trans_range", b.trans_range);
    b.rot_range = p.value("rot_range", b.rot_range);
    b.max_iters = p.value("max_iters", b.max_iters);
    b.tol = p.value("tol", b.tol);
    if (p.contains("center")) b.center = pose_from_json(p["center"]);
    e.baseline = b;
    e.dropped_runs = p.value("dropped_runs", std::size_t{0});
  }
  return e;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CloudIoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CloudIoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw CloudIoError("write failed for '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

/// Loads a chain from .json or .csv.
inline SampleChain load_chain(const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    std::ifstream in(path);
    if (!in) throw CloudIoError("cannot open '" + path.string() + "'");
    return chain_from_csv(in);
  }
  return chain_from_json(read_json_file(path));
}

/// Loads an ensemble from ensemble JSON, or the retained samples of a chain
/// (.json or .csv).
inline EnsembleDistribution load_ensemble(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return EnsembleDistribution::from_chain(load_chain(path));
  return ensemble_from_json(read_json_file(path));
}

}  // namespace bayes_icp
