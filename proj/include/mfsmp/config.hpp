#pragma once

// JSON problem configuration. The schema is documented in docs/config_schema.md.
// parse_problem normalizes the document into a canonical form (all defaults
// filled in, matrices spelled out) from which the ProblemSpec is built;
// serialize_problem writes that canonical form back out.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsmp/problem.hpp"

namespace mfsmp {

using ojson = nlohmann::ordered_json;

struct ParsedProblem {
  ojson canonical;
  ProblemSpec spec;
};

namespace detail::cfg {

struct PathElem {
  std::string key;  // empty for array entries
  std::size_t index = 0;
};
using Path = std::vector<PathElem>;

inline Path child(const Path& p, const std::string& key) {
  Path out = p;
  out.push_back({key, 0});
  return out;
}
inline Path child(const Path& p, std::size_t index) {
  Path out = p;
  out.push_back({"", index});
  return out;
}

inline std::string path_string(const Path& p) {
  std::string s;
  for (const auto& e : p) {
    if (e.key.empty()) {
      s += "[" + std::to_string(e.index) + "]";
    } else {
      if (!s.empty()) s += ".";
      s += e.key;
    }
  }
  return s.empty() ? "<root>" : s;
}

/// Best-effort source line of a field: successive key tokens are searched in
/// order through the text.
inline int locate_line(const std::string& text, const Path& p) {
  std::size_t pos = 0;
  bool found_any = false;
  for (const auto& e : p) {
    if (e.key.empty()) continue;
    const std::size_t at = text.find("\"" + e.key + "\"", pos);
    if (at == std::string::npos) break;
    pos = at;
    found_any = true;
  }
  if (!found_any) return 1;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

struct Reader {
  const std::string& text;

  [[noreturn]] void parse_fail(const Path& p, const std::string& msg) const {
    throw ParseError("config line " + std::to_string(locate_line(text, p)) + ": field '" + path_string(p) + "': " + msg);
  }
  [[noreturn]] void invalid(const Path& p, const std::string& msg) const {
    throw ValidationError("config line " + std::to_string(locate_line(text, p)) + ": field '" + path_string(p) +
                          "': " + msg);
  }

  void object(const ojson& j, const Path& p, std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) parse_fail(p, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!ok.count(it.key())) parse_fail(child(p, it.key()), "unknown key");
    }
  }

  const ojson& required(const ojson& j, const Path& p, const std::string& key) const {
    auto it = j.find(key);
    if (it == j.end()) parse_fail(child(p, key), "missing required key");
    return *it;
  }

  double number(const ojson& j, const Path& p) const {
    if (!j.is_number()) parse_fail(p, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) invalid(p, "must be finite");
    return v;
  }

  double number_or(const ojson& parent, const Path& p, const std::string& key, double fallback) const {
    auto it = parent.find(key);
    return it == parent.end() ? fallback : number(*it, child(p, key));
  }

  int integer(const ojson& j, const Path& p) const {
    if (!j.is_number_integer()) parse_fail(p, "expected an integer");
    const auto v = j.get<long long>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) invalid(p, "out of range");
    return static_cast<int>(v);
  }

  /// Bound value: number, "inf", "-inf" or null (null means `unbounded`).
  double bound(const ojson& j, const Path& p, double unbounded) const {
    if (j.is_null()) return unbounded;
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
      parse_fail(p, "expected a number, \"inf\", \"-inf\" or null");
    }
    if (!j.is_number()) parse_fail(p, "expected a number, \"inf\", \"-inf\" or null");
    return j.get<double>();
  }

  /// Length-`size` vector; a bare number is accepted when size == 1.
  VectorXd vector(const ojson& j, const Path& p, int size) const {
    if (j.is_number() && size == 1) return VectorXd::Constant(1, number(j, p));
    if (!j.is_array()) parse_fail(p, "expected an array of numbers");
    if (static_cast<int>(j.size()) != size) {
      invalid(p, "expected length " + std::to_string(size) + ", got " + std::to_string(j.size()));
    }
    VectorXd v(size);
    for (int i = 0; i < size; ++i) v(i) = number(j[static_cast<std::size_t>(i)], child(p, static_cast<std::size_t>(i)));
    return v;
  }

  /// rows x cols matrix as an array of rows; a bare number is accepted for 1x1.
  MatrixXd matrix(const ojson& j, const Path& p, int rows, int cols) const {
    if (j.is_number() && rows == 1 && cols == 1) return MatrixXd::Constant(1, 1, number(j, p));
    if (!j.is_array()) parse_fail(p, "expected an array of rows");
    if (static_cast<int>(j.size()) != rows) {
      invalid(p, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
    }
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      const Path pr = child(p, static_cast<std::size_t>(i));
      const auto& row = j[static_cast<std::size_t>(i)];
      if (!row.is_array()) parse_fail(pr, "expected a row array");
      if (static_cast<int>(row.size()) != cols) {
        invalid(pr, "expected " + std::to_string(cols) + " columns, got " + std::to_string(row.size()));
      }
      for (int c = 0; c < cols; ++c) m(i, c) = number(row[static_cast<std::size_t>(c)], child(pr, static_cast<std::size_t>(c)));
    }
    return m;
  }

  /// d matrices, one per noise component.
  std::vector<MatrixXd> matrices(const ojson& j, const Path& p, int d, int rows, int cols) const {
    if (!j.is_array() || static_cast<int>(j.size()) != d) {
      if (!j.is_array()) parse_fail(p, "expected an array with one entry per noise component");
      invalid(p, "expected " + std::to_string(d) + " entries (one per noise component)");
    }
    std::vector<MatrixXd> out;
    for (int i = 0; i < d; ++i) {
      out.push_back(matrix(j[static_cast<std::size_t>(i)], child(p, static_cast<std::size_t>(i)), rows, cols));
    }
    return out;
  }

  std::vector<VectorXd> vectors(const ojson& j, const Path& p, int d, int size) const {
    if (!j.is_array()) parse_fail(p, "expected an array with one entry per noise component");
    if (static_cast<int>(j.size()) != d) invalid(p, "expected " + std::to_string(d) + " entries (one per noise component)");
    std::vector<VectorXd> out;
    for (int i = 0; i < d; ++i) out.push_back(vector(j[static_cast<std::size_t>(i)], child(p, static_cast<std::size_t>(i)), size));
    return out;
  }
};

inline ojson vec_json(const VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline ojson mat_json(const MatrixXd& m) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline ojson bound_json(double v) {
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  return v;
}

#define MFSMP_LQ_STEP_KEYS "A", "Abar", "B", "c", "C", "Cbar", "D", "e", "Q", "Qbar", "R", "qx", "qy", "ru"
#define MFSMP_LQ_TERMINAL_KEYS "G", "Gbar", "gx", "gy"

inline LqStep read_step(const Reader& rd, const ojson& j, const Path& p, int n, int r, int d) {
  LqStep s = LqStep::zero(n, r, d);
  auto mat = [&](const char* key, MatrixXd& out, int rows, int cols) {
    if (auto it = j.find(key); it != j.end()) out = rd.matrix(*it, child(p, key), rows, cols);
  };
  auto vec = [&](const char* key, VectorXd& out, int size) {
    if (auto it = j.find(key); it != j.end()) out = rd.vector(*it, child(p, key), size);
  };
  auto mats = [&](const char* key, std::vector<MatrixXd>& out, int rows, int cols) {
    if (auto it = j.find(key); it != j.end()) out = rd.matrices(*it, child(p, key), d, rows, cols);
  };
  mat("A", s.A, n, n);
  mat("Abar", s.Abar, n, n);
  mat("B", s.B, n, r);
  vec("c", s.c, n);
  mats("C", s.C, n, n);
  mats("Cbar", s.Cbar, n, n);
  mats("D", s.D, n, r);
  if (auto it = j.find("e"); it != j.end()) s.e = rd.vectors(*it, child(p, "e"), d, n);
  mat("Q", s.Q, n, n);
  mat("Qbar", s.Qbar, n, n);
  mat("R", s.R, r, r);
  vec("qx", s.qx, n);
  vec("qy", s.qy, n);
  vec("ru", s.ru, r);
  return s;
}

inline LqTerminal read_terminal(const Reader& rd, const ojson& j, const Path& p, int n) {
  LqTerminal t = LqTerminal::zero(n);
  if (auto it = j.find("G"); it != j.end()) t.G = rd.matrix(*it, child(p, "G"), n, n);
  if (auto it = j.find("Gbar"); it != j.end()) t.Gbar = rd.matrix(*it, child(p, "Gbar"), n, n);
  if (auto it = j.find("gx"); it != j.end()) t.gx = rd.vector(*it, child(p, "gx"), n);
  if (auto it = j.find("gy"); it != j.end()) t.gy = rd.vector(*it, child(p, "gy"), n);
  return t;
}

inline void write_step(ojson& o, const LqStep& s) {
  auto list = [](const auto& items, auto fn) {
    ojson a = ojson::array();
    for (const auto& x : items) a.push_back(fn(x));
    return a;
  };
  o["A"] = mat_json(s.A);
  o["Abar"] = mat_json(s.Abar);
  o["B"] = mat_json(s.B);
  o["c"] = vec_json(s.c);
  o["C"] = list(s.C, mat_json);
  o["Cbar"] = list(s.Cbar, mat_json);
  o["D"] = list(s.D, mat_json);
  o["e"] = list(s.e, vec_json);
  o["Q"] = mat_json(s.Q);
  o["Qbar"] = mat_json(s.Qbar);
  o["R"] = mat_json(s.R);
  o["qx"] = vec_json(s.qx);
  o["qy"] = vec_json(s.qy);
  o["ru"] = vec_json(s.ru);
}

inline void write_terminal(ojson& o, const LqTerminal& t) {
  o["G"] = mat_json(t.G);
  o["Gbar"] = mat_json(t.Gbar);
  o["gx"] = vec_json(t.gx);
  o["gy"] = vec_json(t.gy);
}

struct Segment {
  double t;
  Box box;
};

}  // namespace detail::cfg

/// Parses and validates a JSON problem configuration. Schema violations raise
/// ParseError, inconsistent sizes or values raise ValidationError; both name
/// the field and its (approximate) line.
inline ParsedProblem parse_problem(const std::string& text) {
  using namespace detail::cfg;
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
    throw ParseError("config line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
  }
  const Reader rd{text};
  const Path root;
  rd.object(doc, root, {"description", "dims", "grid", "noise", "x0", "family", "tables", "admissible", "direction"});
  ojson canon = ojson::object();
  if (auto it = doc.find("description"); it != doc.end()) {
    if (!it->is_string()) rd.parse_fail(child(root, "description"), "expected a string");
    canon["description"] = *it;
  }

  // dims
  const Path pd = child(root, "dims");
  const ojson& jd = rd.required(doc, root, "dims");
  rd.object(jd, pd, {"n", "r", "d"});
  const int n = rd.integer(rd.required(jd, pd, "n"), child(pd, "n"));
  const int r = rd.integer(rd.required(jd, pd, "r"), child(pd, "r"));
  const int d = rd.integer(rd.required(jd, pd, "d"), child(pd, "d"));
  if (n < 1) rd.invalid(child(pd, "n"), "must be >= 1");
  if (r < 1) rd.invalid(child(pd, "r"), "must be >= 1");
  if (d < 1) rd.invalid(child(pd, "d"), "must be >= 1");
  canon["dims"] = {{"n", n}, {"r", r}, {"d", d}};

  // grid
  const Path pg = child(root, "grid");
  const ojson& jg = rd.required(doc, root, "grid");
  rd.object(jg, pg, {"t0", "h", "N"});
  TimeGrid grid;
  grid.t0 = rd.number_or(jg, pg, "t0", 0.0);
  grid.h = rd.number(rd.required(jg, pg, "h"), child(pg, "h"));
  grid.N = rd.integer(rd.required(jg, pg, "N"), child(pg, "N"));
  if (!(grid.h > 0.0)) rd.invalid(child(pg, "h"), "must be > 0");
  if (grid.N < 0) rd.invalid(child(pg, "N"), "must be >= 0");
  canon["grid"] = {{"t0", grid.t0}, {"h", grid.h}, {"N", grid.N}};

  // noise
  const Path pn = child(root, "noise");
  const ojson& jn = rd.required(doc, root, "noise");
  rd.object(jn, pn, {"kind", "params"});
  const ojson& jkind = rd.required(jn, pn, "kind");
  if (!jkind.is_string()) rd.parse_fail(child(pn, "kind"), "expected a string");
  const std::string kind = jkind.get<std::string>();
  const Path pnp = child(pn, "params");
  const ojson empty = ojson::object();
  const ojson& jnp = jn.contains("params") ? jn["params"] : empty;
  NoiseModel noise;
  ojson noise_canon = {{"kind", kind}};
  try {
    if (kind == "binary") {
      rd.object(jnp, pnp, {});
      noise = NoiseModel::binary(d, grid.h);
    } else if (kind == "trinomial") {
      rd.object(jnp, pnp, {"p"});
      const double p = rd.number_or(jnp, pnp, "p", 1.0 / 6.0);
      if (!(p > 0.0 && p < 0.5)) rd.invalid(child(pnp, "p"), "must lie in (0, 1/2)");
      noise = NoiseModel::trinomial(d, grid.h, p);
      noise_canon["params"] = {{"p", p}};
    } else if (kind == "custom") {
      rd.object(jnp, pnp, {"support"});
      const Path ps = child(pnp, "support");
      const ojson& js = rd.required(jnp, pnp, "support");
      if (!js.is_array()) rd.parse_fail(ps, "expected an array with one support list per noise component");
      if (static_cast<int>(js.size()) != d) rd.invalid(ps, "expected " + std::to_string(d) + " components");
      std::vector<std::vector<SupportPoint>> comps;
      ojson sc = ojson::array();
      for (std::size_t j = 0; j < js.size(); ++j) {
        const Path pj = child(ps, j);
        if (!js[j].is_array() || js[j].empty()) rd.parse_fail(pj, "expected a nonempty array of {value, prob}");
        std::vector<SupportPoint> comp;
        ojson cc = ojson::array();
        for (std::size_t m = 0; m < js[j].size(); ++m) {
          const Path pm = child(pj, m);
          rd.object(js[j][m], pm, {"value", "prob"});
          SupportPoint sp{rd.number(rd.required(js[j][m], pm, "value"), child(pm, "value")),
                          rd.number(rd.required(js[j][m], pm, "prob"), child(pm, "prob"))};
          if (!(sp.prob > 0.0)) rd.invalid(child(pm, "prob"), "must be > 0");
          comp.push_back(sp);
          cc.push_back({{"value", sp.value}, {"prob", sp.prob}});
        }
        comps.push_back(std::move(comp));
        sc.push_back(std::move(cc));
      }
      noise = NoiseModel::custom(grid.h, std::move(comps));
      noise_canon["params"] = {{"support", sc}};
    } else {
      rd.parse_fail(child(pn, "kind"), "unknown noise kind '" + kind + "' (binary, trinomial, custom)");
    }
  } catch (const InvalidModelError& e) {
    rd.invalid(pn, e.what());
  }
  canon["noise"] = noise_canon;

  // x0
  const VectorXd x0 = rd.vector(rd.required(doc, root, "x0"), child(root, "x0"), n);
  canon["x0"] = vec_json(x0);

  // coefficients
  const bool has_family = doc.contains("family"), has_tables = doc.contains("tables");
  if (has_family == has_tables) rd.parse_fail(root, "exactly one of 'family' or 'tables' is required");
  std::shared_ptr<const Coefficients> coeffs;
  Direction default_direction = Direction::minimize;
  double default_lo = -std::numeric_limits<double>::infinity();
  double default_hi = std::numeric_limits<double>::infinity();
  try {
    if (has_family) {
      const Path pf = child(root, "family");
      const ojson& jf = doc["family"];
      rd.object(jf, pf, {"name", "params"});
      const ojson& jname = rd.required(jf, pf, "name");
      if (!jname.is_string()) rd.parse_fail(child(pf, "name"), "expected a string");
      const std::string name = jname.get<std::string>();
      const Path pp = child(pf, "params");
      const ojson& jp = jf.contains("params") ? jf["params"] : empty;
      ojson params = ojson::object();
      if (name == "lq_meanfield") {
        rd.object(jp, pp, {MFSMP_LQ_STEP_KEYS, MFSMP_LQ_TERMINAL_KEYS});
        const LqStep s = read_step(rd, jp, pp, n, r, d);
        const LqTerminal t = read_terminal(rd, jp, pp, n);
        write_step(params, s);
        write_terminal(params, t);
        coeffs = std::make_shared<LqMeanField>(n, r, d, std::vector<LqStep>{s}, t);
      } else if (name == "prodcons") {
        rd.object(jp, pp, {"delta_util", "depreciation", "volatility"});
        if (n != 1 || r != 1 || d != 1) rd.invalid(pd, "prodcons requires n = r = d = 1");
        ProdconsParams pc;
        pc.delta_util = rd.number_or(jp, pp, "delta_util", pc.delta_util);
        // the depreciation rate follows the utility exponent unless given
        pc.depreciation = rd.number_or(jp, pp, "depreciation", pc.delta_util);
        pc.volatility = rd.number_or(jp, pp, "volatility", pc.volatility);
        if (!(pc.delta_util > 0.0 && pc.delta_util < 1.0)) rd.invalid(child(pp, "delta_util"), "must lie in (0, 1)");
        params = {{"delta_util", pc.delta_util}, {"depreciation", pc.depreciation}, {"volatility", pc.volatility}};
        coeffs = std::make_shared<Prodcons>(pc, grid.h);
        default_direction = Direction::maximize;
        default_lo = 1e-6;
      } else {
        rd.parse_fail(child(pf, "name"), "unknown family '" + name + "' (lq_meanfield, prodcons)");
      }
      canon["family"] = {{"name", name}, {"params", params}};
    } else {
      const Path pt = child(root, "tables");
      const ojson& jt = doc["tables"];
      rd.object(jt, pt, {"steps", "terminal"});
      const Path ps = child(pt, "steps");
      const ojson& js = rd.required(jt, pt, "steps");
      if (!js.is_array()) rd.parse_fail(ps, "expected an array of per-step tables");
      if (js.size() != 1 && js.size() != static_cast<std::size_t>(grid.N + 1)) {
        rd.invalid(ps, "expected 1 or N+1 = " + std::to_string(grid.N + 1) + " entries, got " + std::to_string(js.size()));
      }
      std::vector<LqStep> steps;
      ojson steps_canon = ojson::array();
      for (std::size_t k = 0; k < js.size(); ++k) {
        const Path pk = child(ps, k);
        rd.object(js[k], pk, {MFSMP_LQ_STEP_KEYS});
        steps.push_back(read_step(rd, js[k], pk, n, r, d));
        ojson sc = ojson::object();
        write_step(sc, steps.back());
        steps_canon.push_back(std::move(sc));
      }
      const Path pterm = child(pt, "terminal");
      const ojson& jterm = jt.contains("terminal") ? jt["terminal"] : empty;
      rd.object(jterm, pterm, {MFSMP_LQ_TERMINAL_KEYS});
      const LqTerminal term = read_terminal(rd, jterm, pterm, n);
      ojson tc = ojson::object();
      write_terminal(tc, term);
      canon["tables"] = {{"steps", steps_canon}, {"terminal", tc}};
      coeffs = std::make_shared<LqMeanField>(n, r, d, std::move(steps), term);
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    rd.invalid(has_family ? child(root, "family") : child(root, "tables"), e.what());
  }

  // admissible set: piecewise constant in time, segment i applies from t_i on
  std::vector<Segment> segments;
  const Path pa = child(root, "admissible");
  if (auto it = doc.find("admissible"); it != doc.end()) {
    if (!it->is_array() || it->empty()) rd.parse_fail(pa, "expected a nonempty array of {t, lo, hi}");
    for (std::size_t s = 0; s < it->size(); ++s) {
      const Path ps = child(pa, s);
      const ojson& seg = (*it)[s];
      rd.object(seg, ps, {"t", "lo", "hi"});
      const double t = rd.number_or(seg, ps, "t", grid.t0);
      auto read_bound = [&](const char* key, double unbounded) {
        const Path pb = child(ps, key);
        VectorXd v = VectorXd::Constant(r, unbounded);
        auto b = seg.find(key);
        if (b == seg.end()) return v;
        if (b->is_array()) {
          if (static_cast<int>(b->size()) != r) rd.invalid(pb, "expected length r = " + std::to_string(r));
          for (int e = 0; e < r; ++e) v(e) = rd.bound((*b)[static_cast<std::size_t>(e)], child(pb, static_cast<std::size_t>(e)), unbounded);
        } else {
          v.setConstant(rd.bound(*b, pb, unbounded));
        }
        if (v.hasNaN()) rd.invalid(pb, "NaN bound");
        return v;
      };
      Box box{read_bound("lo", -std::numeric_limits<double>::infinity()),
              read_bound("hi", std::numeric_limits<double>::infinity())};
      for (int e = 0; e < r; ++e) {
        if (box.lo(e) > box.hi(e)) rd.invalid(ps, "lo > hi in component " + std::to_string(e + 1));
      }
      if (!segments.empty() && !(t > segments.back().t)) rd.invalid(child(ps, "t"), "segment times must increase");
      segments.push_back({t, std::move(box)});
    }
  } else {
    segments.push_back({grid.t0, Box{VectorXd::Constant(r, default_lo), VectorXd::Constant(r, default_hi)}});
  }
  const double slack = 1e-9 * grid.h;
  if (segments.front().t > grid.t0 + slack) rd.invalid(child(pa, 0), "first segment must start at or before t0");
  std::vector<Box> boxes;
  for (int k = 0; k <= grid.N; ++k) {
    const double tk = grid.time(k);
    const Segment* use = &segments.front();
    for (const auto& s : segments) {
      if (s.t <= tk + slack) use = &s;
    }
    boxes.push_back(use->box);
  }
  ojson adm = ojson::array();
  for (const auto& s : segments) {
    ojson lo = ojson::array(), hi = ojson::array();
    for (int e = 0; e < r; ++e) {
      lo.push_back(bound_json(s.box.lo(e)));
      hi.push_back(bound_json(s.box.hi(e)));
    }
    adm.push_back({{"t", s.t}, {"lo", lo}, {"hi", hi}});
  }
  canon["admissible"] = adm;

  // direction
  Direction direction = default_direction;
  if (auto it = doc.find("direction"); it != doc.end()) {
    const Path pdir = child(root, "direction");
    if (!it->is_string()) rd.parse_fail(pdir, "expected \"minimize\" or \"maximize\"");
    const auto s = it->get<std::string>();
    if (s == "minimize") direction = Direction::minimize;
    else if (s == "maximize") direction = Direction::maximize;
    else rd.parse_fail(pdir, "expected \"minimize\" or \"maximize\"");
  }
  canon["direction"] = to_string(direction);

  ParsedProblem out;
  out.canonical = std::move(canon);
  try {
    out.spec = make_spec(grid, noise, x0, coeffs, AdmissibleSet(std::move(boxes)), direction);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return out;
}

/// Canonical JSON text of a parsed configuration; parsing it again gives the
/// same problem and the same canonical text.
inline std::string serialize_problem(const ParsedProblem& parsed) { return parsed.canonical.dump(2) + "\n"; }

/// Configuration document of a built-in family.
///   prodcons:     delta_util, depreciation, volatility, h, N, t0, x0, v_min, v_max
///   lq_meanfield: n, r, d, h, N, t0, x0, lo, hi, direction and any matrix key
inline ojson builtin_config(const std::string& name, const ojson& params = ojson::object()) {
  if (!params.is_object()) throw UsageError("builtin: params must be an object");
  auto num = [&](const char* key, double fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    if (!it->is_number()) throw UsageError(std::string("builtin: parameter '") + key + "' must be a number");
    return it->get<double>();
  };
  auto integer = [&](const char* key, int fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    if (!it->is_number_integer()) throw UsageError(std::string("builtin: parameter '") + key + "' must be an integer");
    return it->get<int>();
  };
  if (name == "prodcons") {
    for (auto it = params.begin(); it != params.end(); ++it) {
      static const std::set<std::string> ok{"delta_util", "depreciation", "volatility", "h", "N", "t0", "x0", "v_min", "v_max"};
      if (!ok.count(it.key())) throw UsageError("builtin prodcons: unknown parameter '" + it.key() + "'");
    }
    const double delta = num("delta_util", 0.5);
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("builtin prodcons: delta_util must lie in (0, 1)");
    ojson fam = {{"delta_util", delta}, {"depreciation", num("depreciation", delta)}, {"volatility", num("volatility", 0.5)}};
    return {{"dims", {{"n", 1}, {"r", 1}, {"d", 1}}},
            {"grid", {{"t0", num("t0", 0.0)}, {"h", num("h", 0.5)}, {"N", integer("N", 5)}}},
            {"noise", {{"kind", "binary"}}},
            {"x0", ojson::array({num("x0", 1.0)})},
            {"family", {{"name", "prodcons"}, {"params", fam}}},
            {"admissible", ojson::array({{{"t", num("t0", 0.0)}, {"lo", ojson::array({detail::cfg::bound_json(num("v_min", 1e-6))})},
                                          {"hi", ojson::array({detail::cfg::bound_json(num("v_max", INFINITY))})}}})},
            {"direction", "maximize"}};
  }
  if (name == "lq_meanfield") {
    ojson fam = ojson::object();
    const int n = integer("n", 1), r = integer("r", 1), d = integer("d", 1);
    static const std::set<std::string> plumbing{"n", "r", "d", "h", "N", "t0", "x0", "lo", "hi", "direction"};
    for (auto it = params.begin(); it != params.end(); ++it) {
      if (!plumbing.count(it.key())) fam[it.key()] = it.value();
    }
    ojson x0 = params.contains("x0") ? params["x0"] : detail::cfg::vec_json(VectorXd::Zero(n));
    ojson seg = {{"t", num("t0", 0.0)}};
    if (params.contains("lo")) seg["lo"] = params["lo"];
    if (params.contains("hi")) seg["hi"] = params["hi"];
    return {{"dims", {{"n", n}, {"r", r}, {"d", d}}},
            {"grid", {{"t0", num("t0", 0.0)}, {"h", num("h", 1.0)}, {"N", integer("N", 0)}}},
            {"noise", {{"kind", "binary"}}},
            {"x0", x0},
            {"family", {{"name", "lq_meanfield"}, {"params", fam}}},
            {"admissible", ojson::array({seg})},
            {"direction", params.value("direction", std::string("minimize"))}};
  }
  throw UsageError("builtin: unknown family '" + name + "' (lq_meanfield, prodcons)");
}

inline ParsedProblem builtin(const std::string& name, const ojson& params = ojson::object()) {
  return parse_problem(builtin_config(name, params).dump());
}

#undef MFSMP_LQ_STEP_KEYS
#undef MFSMP_LQ_TERMINAL_KEYS

}  // namespace mfsmp
