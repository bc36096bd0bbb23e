#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mfsmp {

/// One labelled residual. `level`/`node` are -1 when the residual is global.
struct Residual {
  std::string label;
  double value = 0.0;
  double tol = 0.0;
  int level = -1;
  long node = -1;

  /// NaN never passes.
  bool ok() const { return value <= tol; }
};

/// Structured pass/fail record for a verified identity or condition.
struct CheckReport {
  std::string name;
  bool pass = true;
  std::vector<Residual> residuals;
  std::vector<std::string> notes;

  CheckReport() = default;
  explicit CheckReport(std::string report_name) : name(std::move(report_name)) {}

  void add(std::string label, double value, double tol, int level = -1, long node = -1) {
    residuals.push_back({std::move(label), value, tol, level, node});
    if (!residuals.back().ok()) pass = false;
  }

  void note(std::string text) { notes.push_back(std::move(text)); }

  /// Folds a sub-report in, prefixing its labels.
  void merge(const CheckReport& other) {
    for (const auto& r : other.residuals) {
      add(other.name + "/" + r.label, r.value, r.tol, r.level, r.node);
    }
    for (const auto& n : other.notes) notes.push_back(other.name + ": " + n);
    if (!other.pass) pass = false;
  }

  /// Residual with the largest excess over its tolerance.
  std::optional<Residual> worst() const {
    std::optional<Residual> best;
    double best_excess = -INFINITY;
    for (const auto& r : residuals) {
      const double excess = std::isnan(r.value) ? INFINITY : r.value - r.tol;
      if (!best || excess > best_excess) {
        best = r;
        best_excess = excess;
      }
    }
    return best;
  }

  double max_value() const {
    double m = 0.0;
    for (const auto& r : residuals) m = std::max(m, std::isnan(r.value) ? INFINITY : r.value);
    return m;
  }
};

inline void to_json(nlohmann::ordered_json& j, const Residual& r) {
  j = nlohmann::ordered_json{{"label", r.label}, {"value", r.value}, {"tol", r.tol},
                             {"level", r.level}, {"node", r.node}};
}

inline void to_json(nlohmann::ordered_json& j, const CheckReport& report) {
  j = nlohmann::ordered_json::object();
  j["name"] = report.name;
  j["pass"] = report.pass;
  j["residuals"] = report.residuals;
  if (auto w = report.worst()) {
    j["worst"] = {{"label", w->label}, {"level", w->level}, {"node", w->node}};
  }
  if (!report.notes.empty()) j["notes"] = report.notes;
}

}  // namespace mfsmp
