#pragma once

// ASCII XYZ and PLY readers/writers.
//
// XYZ: one "x y z" triple per line, whitespace separated, '#' comment lines
// and blank lines skipped, extra columns ignored.
// PLY: "format ascii 1.0" only; the vertex element must declare x, y and z
// properties. Other vertex properties and other elements are skipped.

#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bayes_icp/error.hpp"
#include "bayes_icp/point_cloud.hpp"

namespace bayes_icp {

enum class CloudFormat { kXyz, kPly };

inline CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".ply") return CloudFormat::kPly;
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::kXyz;
  throw CloudIoError("cannot infer cloud format from extension '" + ext +
                     "' (expected .xyz or .ply)");
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

[[noreturn]] inline void parse_fail(const std::filesystem::path& path,
                                    std::size_t line_no, const std::string& what) {
  throw CloudIoError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

inline PointCloud load_xyz(std::istream& in, const std::filesystem::path& path) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    if (toks.size() < 3) parse_fail(path, line_no, "expected three coordinates");
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k)
      if (!parse_double(toks[k], p[k]))
        parse_fail(path, line_no, "malformed coordinate '" + std::string(toks[k]) + "'");
    cloud.points.push_back(p);
  }
  return cloud;
}

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

inline PointCloud load_ply(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || split_ws(line) != std::vector<std::string_view>{"ply"})
    parse_fail(path, line_no, "missing 'ply' magic");

  std::vector<PlyElement> elements;
  bool saw_format = false;
  while (true) {
    if (!next_line()) parse_fail(path, line_no, "unterminated header");
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "end_header") break;
    if (toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii")
        parse_fail(path, line_no, "only ASCII PLY is supported (got '" +
                                      std::string(toks.size() > 1 ? toks[1] : "") + "')");
      saw_format = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) parse_fail(path, line_no, "malformed element line");
      PlyElement e;
      e.name = std::string(toks[1]);
      if (std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(), e.count).ec !=
          std::errc())
        parse_fail(path, line_no, "malformed element count");
      elements.push_back(std::move(e));
    } else if (toks[0] == "property") {
      if (elements.empty()) parse_fail(path, line_no, "property before element");
      if (toks.size() >= 2 && toks[1] == "list") {
        elements.back().has_list = true;
        elements.back().properties.emplace_back(toks.back());
      } else if (toks.size() == 3) {
        elements.back().properties.emplace_back(toks[2]);
      } else {
        parse_fail(path, line_no, "malformed property line");
      }
    } else {
      parse_fail(path, line_no, "unknown header keyword '" + std::string(toks[0]) + "'");
    }
  }
  if (!saw_format) parse_fail(path, line_no, "missing format line");

  PointCloud cloud;
  bool found_vertex = false;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i)
        if (!next_line()) parse_fail(path, line_no, "truncated element '" + e.name + "'");
      continue;
    }
    found_vertex = true;
    if (e.has_list) parse_fail(path, line_no, "list properties on vertex are not supported");
    int ix = -1, iy = -1, iz = -1;
    for (int k = 0; k < int(e.properties.size()); ++k) {
      if (e.properties[k] == "x") ix = k;
      if (e.properties[k] == "y") iy = k;
      if (e.properties[k] == "z") iz = k;
    }
    if (ix < 0 || iy < 0 || iz < 0)
      parse_fail(path, line_no, "vertex element lacks x/y/z properties");
    cloud.points.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next_line()) parse_fail(path, line_no, "truncated vertex list");
      const auto toks = split_ws(line);
      if (toks.size() != e.properties.size())
        parse_fail(path, line_no, "expected " + std::to_string(e.properties.size()) +
                                      " values, got " + std::to_string(toks.size()));
      Eigen::Vector3d p;
      const int idx[3] = {ix, iy, iz};
      for (int k = 0; k < 3; ++k)
        if (!parse_double(toks[idx[k]], p[k]))
          parse_fail(path, line_no, "malformed coordinate '" + std::string(toks[idx[k]]) + "'");
      cloud.points.push_back(p);
    }
  }
  if (!found_vertex) parse_fail(path, line_no, "no vertex element");
  return cloud;
}

}  // namespace detail

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw CloudIoError("cannot open '" + path.string() + "'");
  PointCloud cloud = format == CloudFormat::kPly ? detail::load_ply(in, path)
                                                 : detail::load_xyz(in, path);
  if (cloud.empty()) throw CloudIoError("'" + path.string() + "' contains no points");
  cloud.name = path.stem().string();
  return cloud;
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
  return load_cloud(path, format_from_path(path));
}

/// Coordinates are written in shortest round-trip form, so reloading a saved
/// cloud reproduces every coordinate bit for bit.
inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                       CloudFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CloudIoError("cannot open '" + path.string() + "' for writing");
  if (format == CloudFormat::kPly) {
    out << "ply\nformat ascii 1.0\n";
    if (!cloud.name.empty()) out << "comment name " << cloud.name << "\n";
    out << "element vertex " << cloud.size() << "\n"
        << "property float x\nproperty float y\nproperty float z\nend_header\n";
  } else if (!cloud.name.empty()) {
    out << "# " << cloud.name << "\n";
  }
  for (const auto& p : cloud.points)
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
  out.flush();
  if (!out) throw CloudIoError("write failed for '" + path.string() + "'");
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  save_cloud(cloud, path, format_from_path(path));
}

}  // namespace bayes_icp
