#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "mfsmp/adjoint.hpp"
#include "mfsmp/forward.hpp"

namespace mfsmp {

inline constexpr const char* kToolVersion = "1.0.0";

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  if (s == "inf" || s == "+inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("not a number: '" + s + "'");
  return v;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << content;
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

namespace detail {

inline void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

inline void append_vec(std::vector<std::string>& cells, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) cells.push_back(format_double(v(i)));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

}  // namespace detail

/// time,node_id,parent_id,prob,x_1..x_n,u_1..u_r (controls blank at the last level)
inline std::string trajectory_csv(const ProblemSpec& spec, const ScenarioTree& tree, const StateTrajectory& traj,
                                  const ControlProcess& u) {
  std::string out;
  std::vector<std::string> head{"time", "node_id", "parent_id", "prob"};
  for (int i = 1; i <= spec.n; ++i) head.push_back("x_" + std::to_string(i));
  for (int i = 1; i <= spec.r; ++i) head.push_back("u_" + std::to_string(i));
  detail::append_row(out, head);
  for (int k = 0; k <= tree.last_level(); ++k) {
    const auto nodes = tree.level(k);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      std::vector<std::string> cells{format_double(spec.grid.time(k)), std::to_string(tree.global_id(k, i)),
                                     k == 0 ? "-1" : std::to_string(tree.global_id(k - 1, static_cast<std::size_t>(nodes[i].parent))),
                                     format_double(nodes[i].prob)};
      detail::append_vec(cells, traj.x.at(k, i));
      if (k <= spec.grid.N) detail::append_vec(cells, u.at(k, i));
      else cells.resize(cells.size() + static_cast<std::size_t>(spec.r));
      detail::append_row(out, cells);
    }
  }
  return out;
}

/// time,node_id,p_1..p_n,q1_1..qd_n (q blank at the last level)
inline std::string adjoint_csv(const ProblemSpec& spec, const ScenarioTree& tree, const AdjointSolution& adj) {
  std::string out;
  std::vector<std::string> head{"time", "node_id"};
  for (int i = 1; i <= spec.n; ++i) head.push_back("p_" + std::to_string(i));
  for (int j = 1; j <= spec.d; ++j) {
    for (int i = 1; i <= spec.n; ++i) head.push_back("q" + std::to_string(j) + "_" + std::to_string(i));
  }
  detail::append_row(out, head);
  for (int k = 0; k <= tree.last_level(); ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      std::vector<std::string> cells{format_double(spec.grid.time(k)), std::to_string(tree.global_id(k, i))};
      detail::append_vec(cells, adj.p.at(k, i));
      for (int j = 0; j < spec.d; ++j) {
        if (k <= spec.grid.N) detail::append_vec(cells, adj.q[static_cast<std::size_t>(j)].at(k, i));
        else cells.resize(cells.size() + static_cast<std::size_t>(spec.n));
      }
      detail::append_row(out, cells);
    }
  }
  return out;
}

/// time,node_id,u_1..u_r over the control levels.
inline std::string control_csv(const ProblemSpec& spec, const ScenarioTree& tree, const ControlProcess& u) {
  std::string out;
  std::vector<std::string> head{"time", "node_id"};
  for (int i = 1; i <= spec.r; ++i) head.push_back("u_" + std::to_string(i));
  detail::append_row(out, head);
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      std::vector<std::string> cells{format_double(spec.grid.time(k)), std::to_string(tree.global_id(k, i))};
      detail::append_vec(cells, u.at(k, i));
      detail::append_row(out, cells);
    }
  }
  return out;
}

/// Reads a control CSV written by control_csv (rows in any order). Any shape
/// mismatch with the tree is a UsageError.
inline ControlProcess read_control_csv(const ProblemSpec& spec, const ScenarioTree& tree, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("control CSV: empty file");
  const auto head = detail::split_csv_line(line);
  if (head.size() != static_cast<std::size_t>(2 + spec.r) || head[0] != "time" || head[1] != "node_id") {
    throw UsageError("control CSV: expected header time,node_id,u_1..u_" + std::to_string(spec.r));
  }
  std::map<std::size_t, std::pair<int, std::size_t>> where;
  for (int k = 0; k <= spec.grid.N; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) where[tree.global_id(k, i)] = {k, i};
  }
  ControlProcess u(tree, 0, spec.grid.N, VectorXd::Zero(spec.r));
  std::vector<bool> seen(tree.control_node_count(), false);
  std::size_t row = 1, count = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    const std::string at = "control CSV row " + std::to_string(row) + ": ";
    if (cells.size() != head.size()) throw UsageError(at + "wrong number of columns");
    try {
      const double t = parse_double(cells[0]);
      std::size_t id = 0;
      const auto r = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), id);
      if (r.ec != std::errc() || r.ptr != cells[1].data() + cells[1].size()) throw ParseError("bad node_id");
      auto it = where.find(id);
      if (it == where.end()) throw UsageError(at + "node " + cells[1] + " is not a control node of the tree");
      const auto [k, i] = it->second;
      if (std::abs(t - spec.grid.time(k)) > 1e-9 * std::max(1.0, std::abs(t))) {
        throw UsageError(at + "time does not match node " + cells[1]);
      }
      if (seen[id]) throw UsageError(at + "duplicate node " + cells[1]);
      seen[id] = true;
      for (int e = 0; e < spec.r; ++e) u.at(k, i)(e) = parse_double(cells[static_cast<std::size_t>(2 + e)]);
      ++count;
    } catch (const ParseError& e) {
      throw UsageError(at + e.what());
    }
  }
  if (count != tree.control_node_count()) {
    throw UsageError("control CSV: " + std::to_string(count) + " rows, tree has " +
                     std::to_string(tree.control_node_count()) + " control nodes");
  }
  return u;
}

/// Record of one CLI invocation: enough to reproduce its outputs.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::string config_hash;
  nlohmann::ordered_json options = nlohmann::ordered_json::object();
  std::vector<std::string> outputs;

  nlohmann::ordered_json to_json() const {
    return {{"command", command},         {"config", config_path}, {"config_hash", config_hash},
            {"tool_version", kToolVersion}, {"options", options},    {"outputs", outputs}};
  }
};

}  // namespace mfsmp
