#include "yamabe/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "numfmt.hpp"
#include "yamabe/asymptotics.hpp"
#include "yamabe/experiments.hpp"
#include "yamabe/flow.hpp"
#include "yamabe/soliton.hpp"

namespace yamabe {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += sep;
    out += v[k];
  }
  return out;
}

const std::map<std::string, Command, std::less<>>& command_table() {
  static const std::map<std::string, Command, std::less<>> t{
      {"soliton", Command::Soliton},
      {"evolve", Command::Evolve},
      {"converge", Command::Converge},
      {"contraction", Command::Contraction},
      {"barrier", Command::Barrier},
      {"singularity-finite", Command::SingularityFinite},
      {"singularity-infinite", Command::SingularityInfinite},
      {"sweep", Command::Sweep},
  };
  return t;
}

std::string describe(const json& v) {
  std::string s = v.dump();
  return s.size() > 40 ? s.substr(0, 37) + "..." : s;
}

// ---------------------------------------------------------------------------
// Schema reading. Each getter records its key, reports range and type
// problems into the shared error list and copies the value (or the default)
// into `out` in call order, so `out` is the normalized echo.

struct Range {
  double lo = -kInf, hi = kInf;
  bool lo_open = false, hi_open = false;
};
Range positive() { return {0, kInf, true, false}; }
Range at_least(double lo) { return {lo, kInf, false, false}; }
Range above(double lo) { return {lo, kInf, true, false}; }
Range between(double lo, double hi, bool lo_open = false, bool hi_open = false) { return {lo, hi, lo_open, hi_open}; }

std::optional<std::string> range_problem(double x, const Range& r) {
  if (!std::isfinite(x)) return "must be finite";
  if (r.lo_open ? !(x > r.lo) : !(x >= r.lo))
    return std::string("must be ") + (r.lo_open ? "> " : ">= ") + detail::fmt(r.lo) + ", got " + detail::fmt(x);
  if (r.hi_open ? !(x < r.hi) : !(x <= r.hi))
    return std::string("must be ") + (r.hi_open ? "< " : "<= ") + detail::fmt(r.hi) + ", got " + detail::fmt(x);
  return std::nullopt;
}

class Reader {
 public:
  Reader(const json& in, std::string path, std::vector<std::string>& errors)
      : in_(in), path_(std::move(path)), err_(errors) {
    if (!in_.is_object()) fail("", "must be an object");
  }

  std::optional<double> number(const std::string& key, std::optional<double> def, Range r = {}) {
    const json* v = take(key);
    if (!v) return fallback(key, def);
    if (!v->is_number()) return fail(key, "must be a number, got " + describe(*v)), std::nullopt;
    const double x = v->get<double>();
    if (auto p = range_problem(x, r)) return fail(key, *p), std::nullopt;
    out[key] = x;
    return x;
  }

  std::optional<int> integer(const std::string& key, std::optional<int> def, int lo, int hi) {
    const json* v = take(key);
    if (!v) return fallback(key, def);
    if (!v->is_number_integer()) return fail(key, "must be an integer, got " + describe(*v)), std::nullopt;
    const auto x = v->get<long long>();
    if (x < lo || x > hi)
      return fail(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(x)),
             std::nullopt;
    out[key] = static_cast<int>(x);
    return static_cast<int>(x);
  }

  std::optional<bool> boolean(const std::string& key, std::optional<bool> def) {
    const json* v = take(key);
    if (!v) return fallback(key, def);
    if (!v->is_boolean()) return fail(key, "must be true or false, got " + describe(*v)), std::nullopt;
    out[key] = v->get<bool>();
    return v->get<bool>();
  }

  std::optional<std::string> choice(const std::string& key, std::optional<std::string> def,
                                    const std::vector<std::string>& allowed) {
    const json* v = take(key);
    if (!v) return fallback(key, def);
    if (!v->is_string()) return fail(key, "must be a string, got " + describe(*v)), std::nullopt;
    auto s = v->get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end())
      return fail(key, "unknown value '" + s + "' (expected " + join(allowed, "|") + ")"), std::nullopt;
    out[key] = s;
    return s;
  }

  std::optional<std::string> text(const std::string& key) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) return fail(key, "must be a string, got " + describe(*v)), std::nullopt;
    out[key] = v->get<std::string>();
    return v->get<std::string>();
  }

  /// Two increasing numbers inside `r`.
  std::optional<std::pair<double, double>> interval(const std::string& key, std::optional<std::pair<double, double>> def,
                                                    Range r = {}) {
    const json* v = take(key);
    if (!v) {
      if (def) out[key] = {def->first, def->second};
      else fail(key, "missing");
      return def;
    }
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
      return fail(key, "must be [lo, hi], got " + describe(*v)), std::nullopt;
    const double a = (*v)[0].get<double>(), b = (*v)[1].get<double>();
    if (auto p = range_problem(a, r)) return fail(key, *p), std::nullopt;
    if (auto p = range_problem(b, r)) return fail(key, *p), std::nullopt;
    if (!(b > a)) return fail(key, "needs lo < hi"), std::nullopt;
    out[key] = {a, b};
    return std::pair{a, b};
  }

  template <class T>
  std::optional<std::vector<T>> list(const std::string& key, std::optional<std::vector<T>> def, Range r) {
    const json* v = take(key);
    if (!v) {
      if (def) out[key] = *def;
      else fail(key, "missing");
      return def;
    }
    if (!v->is_array() || v->empty()) return fail(key, "must be a non-empty list, got " + describe(*v)), std::nullopt;
    std::vector<T> xs;
    for (const auto& e : *v) {
      const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
      if (!ok) return fail(key, std::string("entries must be ") + (std::is_integral_v<T> ? "integers" : "numbers")),
                      std::nullopt;
      const double x = e.get<double>();
      if (auto p = range_problem(x, r)) return fail(key, "entry " + *p), std::nullopt;
      xs.push_back(e.get<T>());
    }
    out[key] = xs;
    return xs;
  }

  /// A nested object; absent objects read as {} so their defaults apply.
  const json& object(const std::string& key) {
    static const json empty = json::object();
    const json* v = take(key);
    if (!v) return empty;
    if (!v->is_object()) {
      fail(key, "must be an object, got " + describe(*v));
      return empty;
    }
    return *v;
  }

  bool has(const std::string& key) const { return in_.is_object() && in_.contains(key); }
  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void fail(const std::string& key, const std::string& what) {
    const std::string p = key.empty() ? path_ : path(key);
    err_.push_back((p.empty() ? std::string("config") : p) + ": " + what);
  }

  /// Reports keys nobody asked for.
  void finish() {
    if (!in_.is_object()) return;
    for (auto it = in_.begin(); it != in_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
  }

  ojson out = ojson::object();

 private:
  const json* take(const std::string& key) {
    seen_.insert(key);
    if (!in_.is_object() || !in_.contains(key)) return nullptr;
    return &in_.at(key);
  }
  template <class T>
  std::optional<T> fallback(const std::string& key, std::optional<T> def) {
    if (def) out[key] = *def;
    else fail(key, "missing");
    return def;
  }

  const json& in_;
  std::string path_;
  std::vector<std::string>& err_;
  std::set<std::string> seen_;
};

const std::vector<std::string> kDataKinds{"soliton_perturbed", "log_tail", "slow_log_tail", "cylinder_capped",
                                          "cylindrical_end", "cylinder"};


/// One-level overlay of `over` onto `base`; a non-object `over` wins as is.
json overlay(json base, const json& over) {
  if (!over.is_object()) return over;
  for (auto it = over.begin(); it != over.end(); ++it) base[it.key()] = it.value();
  return base;
}

InitialDataSpec data_from(const ojson& j) {
  InitialDataSpec d;
  d.kind = initial_kind_from_string(j.at("kind").get<std::string>());
  d.n = j.at("n").get<int>();
  d.beta = j.at("beta").get<double>();
  d.lambda = j.at("lambda").get<double>();
  d.amplitude = j.at("amplitude").get<double>();
  d.support_radius = j.at("support_radius").get<double>();
  d.end_width = j.at("end_width").get<double>();
  d.T = j.at("T").get<double>();
  d.C = j.at("C").get<double>();
  d.A = j.at("A").get<double>();
  d.K = j.at("K").get<double>();
  d.cap_radius = j.at("cap_radius").get<double>();
  return d;
}

// `defaults` fills keys the user omitted before the struct defaults do.
ojson read_data(const json& in, const std::string& path, const json& defaults, std::vector<std::string>& errs) {
  const json merged = overlay(defaults, in);
  const std::size_t before = errs.size();
  Reader r(merged, path, errs);
  const InitialDataSpec d;
  r.choice("kind", std::nullopt, kDataKinds);
  r.integer("n", d.n, 3, 64);
  r.number("beta", d.beta, positive());
  r.number("lambda", d.lambda, positive());
  r.number("amplitude", d.amplitude, above(-1));
  r.number("support_radius", d.support_radius, positive());
  r.number("end_width", d.end_width, positive());
  r.number("T", d.T, positive());
  r.number("C", d.C, positive());
  r.number("A", d.A, at_least(0));
  r.number("K", d.K);
  r.number("cap_radius", d.cap_radius, positive());
  r.finish();
  if (errs.size() == before) {
    try {
      data_from(r.out).validate();
    } catch (const DomainError& e) {
      errs.push_back(path + ": " + e.what());
    }
  }
  return r.out;
}

ojson read_mesh(const json& in, const std::string& path, const MeshOptions& def, std::vector<std::string>& errs) {
  Reader r(in, path, errs);
  r.number("log_r_max", def.log_r_max, between(0, 700, true));
  r.integer("nodes", def.nodes, 16, 50'000'000);
  r.finish();
  return r.out;
}

struct ControllerDefaults {
  double dt_init = 1e-3, dt_max = 0.05, target_change = 1e-3, extinction_floor = 1e-8;
};

ojson read_controller(const json& in, const std::string& path, const ControllerDefaults& def,
                      std::vector<std::string>& errs) {
  Reader r(in, path, errs);
  r.number("dt_init", def.dt_init, positive());
  r.number("dt_max", def.dt_max, positive());
  r.number("target_change", def.target_change, between(0, 1, true, true));
  r.number("extinction_floor", def.extinction_floor, between(0, 1, false, true));
  r.boolean("fixed_dt", false);
  r.finish();
  return r.out;
}

ojson read_window(const json& in, const std::string& path, std::vector<std::string>& errs) {
  Reader r(in, path, errs);
  const TraceWindowOptions d;
  r.number("floor_margin", d.floor_margin, at_least(1));
  r.number("boundary_margin", d.boundary_margin, at_least(0));
  r.finish();
  return r.out;
}

ojson read_classify(const json& in, const std::string& path, std::vector<std::string>& errs) {
  Reader r(in, path, errs);
  const ClassifyOptions d;
  r.number("growth_factor", d.growth_factor, above(1));
  r.number("bounded_factor", d.bounded_factor, above(1));
  r.integer("samples", d.samples, 3, 100000);
  r.number("transient", d.transient, between(0, 1, false, true));
  r.number("monotone_slack", d.monotone_slack, between(0, 1, false, true));
  r.number("agreement", d.agreement, between(0, 1, true));
  r.finish();
  return r.out;
}

MeshOptions mesh_from(const ojson& j) {
  MeshOptions m;
  m.log_r_max = j.at("log_r_max").get<double>();
  m.nodes = j.at("nodes").get<int>();
  return m;
}

Controller controller_from(const ojson& j) {
  Controller c;
  c.dt_init = j.at("dt_init").get<double>();
  c.dt_max = j.at("dt_max").get<double>();
  c.target_change = j.at("target_change").get<double>();
  c.extinction_floor = j.at("extinction_floor").get<double>();
  c.fixed_dt = j.at("fixed_dt").get<bool>();
  return c;
}

/// Reads a required data object into `top.out[key]`.
std::optional<ojson> data_field(Reader& top, const std::string& key, const json& defaults,
                                std::vector<std::string>& errs, bool required) {
  if (!top.has(key) && required) {
    top.object(key);
    top.fail(key, "missing");
    return std::nullopt;
  }
  const std::size_t before = errs.size();
  auto d = read_data(top.object(key), top.path(key), defaults, errs);
  top.out[key] = d;
  if (errs.size() != before) return std::nullopt;
  return d;
}

void set_path(json& j, const std::string& dotted, const json& value) {
  json* cur = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object()) *cur = json::object();
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

struct SweepJob {
  json config;
  ojson assignment;  ///< grid path -> value
};

/// Cartesian product over the grid keys in sorted order, last key fastest.
std::vector<SweepJob> expand_grid(const json& base, const json& grid) {
  std::vector<std::string> keys;
  std::vector<const json*> values;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    keys.push_back(it.key());
    values.push_back(&it.value());
  }
  std::vector<SweepJob> jobs;
  std::vector<std::size_t> idx(keys.size(), 0);
  for (;;) {
    SweepJob job{base, ojson::object()};
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const json& v = (*values[k])[idx[k]];
      set_path(job.config, keys[k], v);
      job.assignment[keys[k]] = ojson::parse(v.dump());
    }
    jobs.push_back(std::move(job));
    std::size_t k = keys.size();
    while (k > 0) {
      if (++idx[k - 1] < values[k - 1]->size()) break;
      idx[k - 1] = 0;
      --k;
    }
    if (k == 0) break;
  }
  return jobs;
}

ojson parse_body(Command c, const json& doc, std::vector<std::string>& errs) {
  Reader top(doc, "", errs);
  top.text("command");
  top.choice("schema", std::string(kConfigSchema), {std::string(kConfigSchema)});
  top.text("output_dir");

  switch (c) {
    case Command::Soliton: {
      top.integer("n", std::nullopt, 3, 64);
      top.number("beta", std::nullopt, positive());
      top.number("lambda", std::nullopt, positive());
      const auto kind = top.choice("kind", std::string("steady"), {"steady", "shrinker"});
      const bool steady = kind.value_or("steady") == "steady";
      const auto s0 = top.number("s_start", -15.0, between(-700, 0, false, true));
      const auto s1 = top.number("s_end", 200.0, between(0, 2000, true));
      top.number("tol", 1e-12, between(0, 1e-4, true));
      top.number("ds_out", 0.05, between(0, 1, true));
      const auto lr = top.number("log_r_max", 40.0, between(0, 700, true));
      const auto win = top.interval(
          "fit_window", steady ? std::pair{s1.value_or(200.0) / 2, s1.value_or(200.0)} : std::pair{20.0, 30.0});
      if (win && s0 && s1 && lr) {
        const double lo = steady ? *s0 : 0.0, hi = steady ? *s1 : *lr;
        if (win->first < lo || win->second > hi)
          top.fail("fit_window", "must lie inside [" + detail::fmt(lo) + ", " + detail::fmt(hi) + "]");
      }
      break;
    }
    case Command::Evolve: {
      const auto data = data_field(top, "data", json::object(), errs, true);
      top.number("horizon", std::nullopt, positive());
      const auto rescaled = top.boolean("rescaled", false);
      top.number("beta", data ? (*data)["beta"].get<double>() : 1.0, positive());
      top.choice("outer", std::string("drifting"), {"drifting", "frozen"});
      top.out["mesh"] = read_mesh(top.object("mesh"), "mesh", MeshOptions{}, errs);
      top.interval("annulus", std::pair{1.0, 10.0}, positive());
      top.out["controller"] = read_controller(top.object("controller"), "controller", {}, errs);
      top.integer("snapshots", 16, 1, 100000);
      top.number("lemma_slack", rescaled.value_or(false) ? 1e-3 : 1e-9, between(0, 0.5));
      if (data && rescaled.value_or(false) && (*data)["kind"] == "cylinder")
        top.fail("rescaled", "the cylinder runs on an annulus in original variables only");
      break;
    }
    case Command::Converge: {
      const auto data = data_field(top, "data", json::object(), errs, true);
      const auto beta = top.number("beta", data ? (*data)["beta"].get<double>() : 1.0, positive());
      top.number("horizon", 30.0, positive());
      top.out["mesh"] = read_mesh(top.object("mesh"), "mesh", ConvergenceOptions{}.run.mesh, errs);
      top.out["controller"] = read_controller(top.object("controller"), "controller", {}, errs);
      top.integer("snapshots", 15, 2, 100000);
      top.number("ball_radius", 10.0, positive());
      top.interval("tail_window", std::pair{6.0, 11.0}, positive());
      top.number("lemma_slack", 1e-3, between(0, 0.5));
      if (data && beta) {
        const auto d = data_from(*data);
        const double A = (d.n - 1.0) * (d.n - 2.0) / *beta;
        if (d.kind == InitialKind::SlowLogTail || d.kind == InitialKind::CylinderCapped ||
            d.kind == InitialKind::Cylinder)
          top.fail("data.kind", "convergence needs a steady tail (soliton_perturbed, log_tail, cylindrical_end)");
        else if (!(std::abs(d.tail_slope() - A) <= 1e-12 * A))
          top.fail("data", "tail slope " + detail::fmt(d.tail_slope()) + " differs from (n-1)(n-2)/beta = " +
                               detail::fmt(A));
      }
      break;
    }
    case Command::Contraction: {
      const auto a = data_field(top, "data_a", json::object(), errs, true);
      const auto b = data_field(top, "data_b", json::object(), errs, true);
      top.number("beta", a ? (*a)["beta"].get<double>() : 1.0, positive());
      top.number("horizon", 8.0, positive());
      top.out["mesh"] = read_mesh(top.object("mesh"), "mesh", MeshOptions{}, errs);
      ControllerDefaults cd;
      cd.dt_init = 1e-2;
      top.out["controller"] = read_controller(top.object("controller"), "controller", cd, errs);
      top.integer("snapshots", 16, 1, 100000);
      top.number("slack", 0.05, between(0, 10));
      top.number("lemma_slack", 1e-3, between(0, 0.5));
      if (a && b) {
        const auto da = data_from(*a), db = data_from(*b);
        if (da.n != db.n) top.fail("data_b.n", "must equal data_a.n");
        else if (std::abs(da.tail_slope() - db.tail_slope()) > 1e-12 * std::abs(da.tail_slope()))
          top.fail("data_b", "tail slope differs from data_a; the difference would not be integrable");
      }
      break;
    }
    case Command::Barrier: {
      top.integer("n", std::nullopt, 3, 64);
      top.number("beta", std::nullopt, positive());
      top.number("lambda", std::nullopt, positive());
      top.list<double>("h", std::vector<double>{8, 16, 32, 64}, positive());
      top.number("factor", 100.0, above(1));
      top.integer("nodes", 2000, 8, 10'000'000);
      top.boolean("search", true);
      top.interval("search_bracket", std::pair{1.0, 64.0}, positive());
      top.number("rel_tol", 1e-3, between(0, 1, true, true));
      break;
    }
    case Command::SingularityFinite:
    case Command::SingularityInfinite: {
      const bool finite = c == Command::SingularityFinite;
      const json ddef = finite ? json{{"kind", "cylinder_capped"}, {"cap_radius", std::exp(3.0)}}
                               : json{{"kind", "slow_log_tail"}, {"cap_radius", std::exp(8.0)}};
      const auto data = data_field(top, "data", ddef, errs, false);
      const bool cyl = data && (*data)["kind"] == "cylinder";
      const SingularityOptions so;
      top.number("horizon", finite ? 2.0 * (data ? (*data)["T"].get<double>() : 1.0) : 10.0, positive());
      top.list<int>("ladder", cyl ? std::vector<int>{200, 400} : so.ladder, between(8, 5e7));
      top.number("log_r_max", so.log_r_max, between(0, 700, true));
      top.interval("annulus", so.annulus, positive());
      top.number("target_change", cyl ? 1e-3 : so.target_change, between(0, 1, true, true));
      top.number("extinction_floor", cyl ? 1e-8 : so.extinction_floor, between(0, 1, false, true));
      top.integer("snapshots", so.snapshots, 1, 100000);
      top.out["window"] = read_window(top.object("window"), "window", errs);
      top.out["classify"] = read_classify(top.object("classify"), "classify", errs);
      top.number("lemma_slack", so.lemma_slack, between(0, 0.5));
      break;
    }
    case Command::Sweep: {
      if (!top.has("base")) top.fail("base", "missing");
      if (!top.has("grid")) top.fail("grid", "missing");
      const json& base = top.object("base");
      const json& grid = top.object("grid");
      top.out["base"] = ojson::parse(base.dump());
      top.out["grid"] = ojson::parse(grid.dump());
      if (!top.has("base") || !top.has("grid") || !base.is_object() || !grid.is_object()) break;
      if (base.contains("command") && base["command"] == "sweep") {
        top.fail("base.command", "sweeps do not nest");
        break;
      }
      if (grid.empty()) top.fail("grid", "needs at least one key");
      bool grid_ok = !grid.empty();
      for (auto it = grid.begin(); it != grid.end(); ++it)
        if (!it.value().is_array() || it.value().empty()) {
          top.fail("grid." + it.key(), "must be a non-empty list");
          grid_ok = false;
        }
      if (!grid_ok) break;
      const auto jobs = expand_grid(base, grid);
      for (std::size_t k = 0; k < jobs.size(); ++k) {
        try {
          config_from_json(jobs[k].config);
        } catch (const ConfigError& e) {
          for (const auto& m : e.errors) errs.push_back("job " + std::to_string(k) + " " + jobs[k].assignment.dump() + ": " + m);
        }
      }
      break;
    }
  }
  top.finish();
  return top.out;
}

// ---------------------------------------------------------------------------
// Artifacts

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void put(ojson& j, const std::string& key, double v) {
  if (std::isfinite(v)) j[key] = v;
}
void put(ojson& j, const std::string& key, std::optional<double> v) {
  if (v) put(j, key, *v);
}

void assert_finite(const ojson& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) throw std::logic_error("non-finite number at " + where);
  if (j.is_object())
    for (auto it = j.begin(); it != j.end(); ++it) assert_finite(it.value(), where + "." + it.key());
  if (j.is_array())
    for (std::size_t k = 0; k < j.size(); ++k) assert_finite(j[k], where + "[" + std::to_string(k) + "]");
}

std::string dump(const ojson& j) {
  assert_finite(j, "$");
  return j.dump(2) + "\n";
}

class Csv {
 public:
  Csv(std::string_view schema, std::initializer_list<std::string_view> cols) {
    os_ << "# schema=" << schema << '\n';
    bool first = true;
    for (auto c : cols) os_ << (first ? "" : ",") << c, first = false;
    os_ << '\n';
  }
  void row(std::initializer_list<double> xs) {
    bool first = true;
    for (double x : xs) os_ << (first ? "" : ",") << detail::fmt(x), first = false;
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

struct Artifacts {
  fs::path dir;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    f << content;
    f.close();
    if (!f) throw IoFailure("cannot write " + (dir / name).string());
    files.push_back(name);
  }
};

struct Report {
  ojson key = ojson::object(), summary = ojson::object(), checks = ojson::object(), details = ojson::object();
  bool inconclusive = false;

  void check(const std::string& name, bool ok) { checks[name] = ok; }
  std::string status() const {
    if (inconclusive) return "inconclusive";
    for (auto it = checks.begin(); it != checks.end(); ++it)
      if (!it.value().get<bool>()) return "checks_failed";
    return "ok";
  }
};

ojson lemma_json(const LowerBoundReport& l) {
  ojson j;
  j["passed"] = l.passed;
  j["checked"] = l.checked;
  j["violations"] = l.violations;
  put(j, "worst_ratio", l.worst_ratio);
  put(j, "worst_t", l.worst_t);
  put(j, "worst_r", l.worst_r);
  return j;
}

std::string snapshots_csv(const Trajectory& tr) {
  Csv csv("yamabe.snapshots/1", {"t", "r", "u", "R"});
  for (const auto& s : tr.snapshots) {
    const auto R = scalar_curvature(s);
    for (Eigen::Index i = 0; i < s.u.size(); ++i) csv.row({s.t, s.grid->nodes[i], s.u[i], R.values[i]});
  }
  return csv.str();
}

std::string step_trace_csv(const Trajectory& tr) {
  Csv csv("yamabe.trace/1", {"t", "max_R", "argmax_r", "max_u"});
  for (std::size_t k = 0; k < tr.times.size(); ++k) csv.row({tr.times[k], tr.max_R[k], tr.argmax_r[k], tr.max_u[k]});
  return csv.str();
}

Eigen::VectorXd mesh_nodes(const InitialDataSpec& d, const ojson& body) {
  if (d.kind == InitialKind::Cylinder) {
    const auto& a = body.at("annulus");
    return annulus_nodes(a[0].get<double>(), a[1].get<double>(), body.at("mesh").at("nodes").get<int>());
  }
  const auto m = mesh_from(body.at("mesh"));
  return graded_nodes(std::exp(m.log_r_max), m.nodes);
}

// ---------------------------------------------------------------------------
// Commands

void run_soliton(const ojson& b, Artifacts& art, Report& rep) {
  const auto p = derive_params(b.at("n").get<int>(), b.at("beta").get<double>(), b.at("lambda").get<double>(),
                               soliton_kind_from_string(b.at("kind").get<std::string>()));
  const std::pair<double, double> win{b.at("fit_window")[0].get<double>(), b.at("fit_window")[1].get<double>()};
  rep.key["n"] = p.n;
  rep.key["beta"] = p.beta;
  rep.key["lambda"] = p.lambda;
  rep.key["kind"] = std::string(to_string(p.kind));

  ojson fit;
  fit["schema"] = "yamabe.fit/1";
  fit["kind"] = std::string(to_string(p.kind));
  fit["n"] = p.n;
  fit["beta"] = p.beta;
  fit["lambda"] = p.lambda;
  std::ostringstream prof;
  if (p.kind == SolitonKind::Steady) {
    CylindricalOptions o;
    o.s_start = b.at("s_start").get<double>();
    o.s_end = b.at("s_end").get<double>();
    o.rtol = b.at("tol").get<double>();
    o.ds_out = b.at("ds_out").get<double>();
    const auto w = integrate_steady_cylindrical(p, o);
    write_profile_csv(prof, w);
    art.write("profile.csv", prof.str());
    const auto f = fit_steady_asymptotics(w, win);
    const auto sign = check_sign_structure(w);
    put(fit, "A", f.A);
    put(fit, "K", f.K);
    put(fit, "C3", f.C3);
    put(fit, "normalized_K", f.normalized_K());
    put(fit, "hs_limit", f.hs_limit);
    put(fit, "residual", f.residual);
    put(fit, "extrapolation_error", f.extrapolation_error);
    fit["fit_window"] = {f.fit_window.first, f.fit_window.second};
    for (const char* k : {"A", "K", "C3", "residual"})
      if (fit.contains(k)) rep.summary[k] = fit[k];
    if (auto kap = kappa_fixture(p.n)) {
      const double kf = kappa_from_fit(p, f);
      put(fit, "kappa", kf);
      put(rep.summary, "kappa", kf);
      put(rep.details, "kappa_fixture", *kap);
    }
    put(rep.summary, "hs_limit", f.hs_limit);
    ojson s;
    s["passed"] = sign.passed;
    s["violations"] = sign.violations;
    s["sign_changes"] = sign.sign_changes;
    put(s, "s0", sign.s0);
    put(s, "log_hs_slope", sign.log_hs_slope);
    s["message"] = sign.message;
    rep.details["sign_structure"] = s;
    rep.check("sign_structure", sign.passed);
  } else {
    RadialOptions o;
    o.rtol = b.at("tol").get<double>();
    o.ds_out = b.at("ds_out").get<double>();
    const auto u = integrate_radial(p, std::exp(b.at("log_r_max").get<double>()), o);
    write_profile_csv(prof, u);
    art.write("profile.csv", prof.str());
    const auto f = fit_shrinker_tail(u, {std::exp(win.first), std::exp(win.second)});
    put(fit, "B", f.B);
    put(fit, "gamma_decay", f.gamma_decay);
    put(fit, "residual", f.residual);
    put(fit, "linear_decay", shrinker_linear_decay(p.n, p.beta));
    fit["fit_window_log_r"] = {win.first, win.second};
    for (const char* k : {"B", "gamma_decay", "residual"})
      if (fit.contains(k)) rep.summary[k] = fit[k];
  }
  art.write("fit.json", dump(fit));
}

void run_evolve(const ojson& b, Artifacts& art, Report& rep) {
  const auto d = data_from(b.at("data"));
  const bool rescaled = b.at("rescaled").get<bool>();
  const double beta = b.at("beta").get<double>();
  const double horizon = b.at("horizon").get<double>();
  const auto nodes = mesh_nodes(d, b);
  auto s0 = make_initial_data(d, nodes, rescaled ? std::optional<double>(beta) : std::nullopt);
  if (b.at("outer") == "frozen" && s0.grid->outer.kind == OuterKind::DriftingTail) {
    auto g = make_grid(nodes, d.n, InnerBC{}, OuterBC::frozen(s0.grid->outer.A, s0.grid->outer.K0));
    s0 = make_state(g, s0.u, 0.0, rescaled ? std::optional<double>(beta) : std::nullopt);
  }
  Controller ctl = controller_from(b.at("controller"));
  const int S = b.at("snapshots").get<int>();
  for (int k = 1; k <= S; ++k) ctl.snapshot_times.push_back(horizon * k / S);
  std::optional<ExtinctionTracker> tracker;
  if (!rescaled) {
    tracker.emplace(s0);
    ctl.on_step = [&](const FlowState& s, const CurvatureField&) {
      tracker->observe(s);
      return false;
    };
  }
  const auto tr = evolve(s0, horizon, ctl);
  const auto lemma = pointwise_lower_bound_check(tr, b.at("lemma_slack").get<double>());

  rep.key["kind"] = std::string(to_string(d.kind));
  rep.key["n"] = d.n;
  rep.key["beta"] = rescaled ? beta : d.beta;
  rep.key["rescaled"] = rescaled;
  rep.key["horizon"] = horizon;
  rep.key["nodes"] = static_cast<int>(nodes.size());
  rep.summary["termination"] = std::string(to_string(tr.termination));
  rep.summary["steps"] = tr.steps;
  rep.summary["rejected"] = tr.rejected;
  put(rep.summary, "t_final", tr.final_state.t);
  put(rep.summary, "max_R_initial", tr.max_R.front());
  put(rep.summary, "max_R_final", tr.max_R.back());
  put(rep.summary, "extinction_time", tr.extinction_time);
  if (tracker) put(rep.summary, "extinction_estimate", tracker->estimate());
  rep.summary["lemma_passed"] = lemma.passed;
  rep.details["lemma"] = lemma_json(lemma);
  rep.check("lower_bound", lemma.passed);

  art.write("snapshots.csv", snapshots_csv(tr));
  art.write("trace.csv", step_trace_csv(tr));
}

void run_converge(const ojson& b, Artifacts& art, Report& rep) {
  const auto d = data_from(b.at("data"));
  ConvergenceOptions o;
  o.run.mesh = mesh_from(b.at("mesh"));
  o.run.controller = controller_from(b.at("controller"));
  o.run.snapshots = b.at("snapshots").get<int>();
  o.run.lemma_slack = b.at("lemma_slack").get<double>();
  o.ball_radius = b.at("ball_radius").get<double>();
  o.tail_window = {b.at("tail_window")[0].get<double>(), b.at("tail_window")[1].get<double>()};
  const double beta = b.at("beta").get<double>(), horizon = b.at("horizon").get<double>();
  const auto r = run_convergence(d, beta, horizon, o);

  rep.key["kind"] = std::string(to_string(d.kind));
  rep.key["n"] = d.n;
  rep.key["beta"] = beta;
  rep.key["lambda"] = d.lambda;
  rep.key["amplitude"] = d.amplitude;
  rep.key["horizon"] = horizon;
  rep.key["nodes"] = o.run.mesh.nodes;
  put(rep.summary, "lambda_target", r.lambda_target);
  put(rep.summary, "lambda_identified", r.lambda_identified);
  put(rep.summary, "tail_K", r.tail_K);
  put(rep.summary, "tail_K_fitted", r.tail.K);
  put(rep.summary, "l1_initial", r.l1.front());
  put(rep.summary, "l1_final", r.l1.back());
  put(rep.summary, "l1_reduction", r.l1_reduction);
  put(rep.summary, "sup_initial", r.sup.front());
  put(rep.summary, "sup_final", r.sup.back());
  rep.summary["l1_monotone"] = r.l1_monotone;
  rep.summary["sup_monotone"] = r.sup_monotone;
  rep.summary["lemma_passed"] = r.lemma.passed;
  rep.details["lemma"] = lemma_json(r.lemma);
  rep.check("l1_monotone", r.l1_monotone);
  rep.check("sup_monotone", r.sup_monotone);
  rep.check("target_identified", std::abs(r.lambda_identified / r.lambda_target - 1.0) <= 0.05);
  rep.check("lower_bound", r.lemma.passed);

  Csv csv("yamabe.distance/1", {"t", "l1", "sup"});
  for (std::size_t k = 0; k < r.times.size(); ++k) csv.row({r.times[k], r.l1[k], r.sup[k]});
  art.write("snapshots.csv", snapshots_csv(r.trajectory));
  art.write("trace.csv", csv.str());
}

void run_contraction_cmd(const ojson& b, Artifacts& art, Report& rep) {
  const auto da = data_from(b.at("data_a")), db = data_from(b.at("data_b"));
  RunOptions o;
  o.mesh = mesh_from(b.at("mesh"));
  o.controller = controller_from(b.at("controller"));
  o.snapshots = b.at("snapshots").get<int>();
  o.lemma_slack = b.at("lemma_slack").get<double>();
  const double beta = b.at("beta").get<double>(), horizon = b.at("horizon").get<double>();
  const auto r = run_contraction(da, db, beta, horizon, o, b.at("slack").get<double>());

  rep.key["n"] = da.n;
  rep.key["beta"] = beta;
  rep.key["horizon"] = horizon;
  rep.key["nodes"] = o.mesh.nodes;
  double worst = 0;
  for (std::size_t k = 0; k < r.gap.size(); ++k)
    if (r.envelope[k] > 0) worst = std::max(worst, r.gap[k] / r.envelope[k]);
  put(rep.summary, "predicted_rate", r.predicted_rate);
  put(rep.summary, "fitted_rate", r.fitted_rate);
  put(rep.summary, "max_envelope_ratio", worst);
  rep.summary["violations"] = r.violations;
  rep.summary["lemma_passed"] = r.lemma_a.passed && r.lemma_b.passed;
  rep.details["lemma_a"] = lemma_json(r.lemma_a);
  rep.details["lemma_b"] = lemma_json(r.lemma_b);
  rep.check("envelope", r.passed);
  rep.check("lower_bound", r.lemma_a.passed && r.lemma_b.passed);

  Csv csv("yamabe.contraction/1", {"t", "gap", "envelope"});
  for (std::size_t k = 0; k < r.times.size(); ++k) csv.row({r.times[k], r.gap[k], r.envelope[k]});
  art.write("snapshots.csv", snapshots_csv(r.trajectory_a));
  art.write("snapshots_b.csv", snapshots_csv(r.trajectory_b));
  art.write("trace.csv", csv.str());
}

void run_barrier(const ojson& b, Artifacts& art, Report& rep) {
  const auto p = derive_params(b.at("n").get<int>(), b.at("beta").get<double>(), b.at("lambda").get<double>(),
                               SolitonKind::Steady);
  const double factor = b.at("factor").get<double>();
  const int nodes = b.at("nodes").get<int>();
  rep.key["n"] = p.n;
  rep.key["beta"] = p.beta;
  rep.key["lambda"] = p.lambda;

  std::optional<double> th_super, th_sub, th_both;
  if (b.at("search").get<bool>()) {
    const double lo = b.at("search_bracket")[0].get<double>(), hi = b.at("search_bracket")[1].get<double>();
    const double tol = b.at("rel_tol").get<double>();
    auto find = [&](BarrierSide side, const char* name) -> std::optional<double> {
      try {
        const double h = barrier_threshold(p, lo, hi, tol, factor, side);
        put(rep.summary, name, h);
        return h;
      } catch (const FitError& e) {
        rep.details[std::string(name) + "_error"] = e.what();
        return std::nullopt;
      }
    };
    th_super = find(BarrierSide::Super, "threshold_super");
    th_sub = find(BarrierSide::Sub, "threshold_sub");
    th_both = find(BarrierSide::Both, "threshold");
  }

  Csv csv("yamabe.barrier/1", {"h", "r_outer", "nodes", "super_violations", "sub_violations", "max_super", "min_sub",
                               "working_bound_violations"});
  bool super_ok = true, sub_ok = true;
  for (const auto& hj : b.at("h")) {
    const double h = hj.get<double>();
    const auto r = verify_barrier(p, h, factor, nodes);
    csv.row({r.h, r.r_outer, static_cast<double>(r.nodes), static_cast<double>(r.super_violations),
             static_cast<double>(r.sub_violations), r.max_super, r.min_sub,
             static_cast<double>(r.working_bound_violations)});
    if (th_super && h >= *th_super) super_ok = super_ok && r.super_violations == 0;
    if (th_sub && h >= *th_sub) sub_ok = sub_ok && r.sub_violations == 0;
  }
  rep.check("supersolution_certified", th_super.has_value() && super_ok);
  rep.check("subsolution_certified", th_sub.has_value() && sub_ok);
  art.write("barrier.csv", csv.str());
}

void run_singularity_cmd(Command c, const ojson& b, Artifacts& art, Report& rep) {
  const bool finite = c == Command::SingularityFinite;
  const auto d = data_from(b.at("data"));
  SingularityOptions o;
  o.ladder = b.at("ladder").get<std::vector<int>>();
  o.log_r_max = b.at("log_r_max").get<double>();
  o.annulus = {b.at("annulus")[0].get<double>(), b.at("annulus")[1].get<double>()};
  o.target_change = b.at("target_change").get<double>();
  o.extinction_floor = b.at("extinction_floor").get<double>();
  o.snapshots = b.at("snapshots").get<int>();
  o.window.floor_margin = b.at("window").at("floor_margin").get<double>();
  o.window.boundary_margin = b.at("window").at("boundary_margin").get<double>();
  const auto& cj = b.at("classify");
  o.classify.growth_factor = cj.at("growth_factor").get<double>();
  o.classify.bounded_factor = cj.at("bounded_factor").get<double>();
  o.classify.samples = cj.at("samples").get<int>();
  o.classify.transient = cj.at("transient").get<double>();
  o.classify.monotone_slack = cj.at("monotone_slack").get<double>();
  o.classify.agreement = cj.at("agreement").get<double>();
  o.lemma_slack = b.at("lemma_slack").get<double>();
  const double horizon = b.at("horizon").get<double>();
  const auto r = run_singularity(d, finite ? TraceMode::FiniteTime : TraceMode::InfiniteTime, horizon, o);
  const auto& cl = r.classification;

  rep.key["kind"] = std::string(to_string(d.kind));
  rep.key["n"] = d.n;
  if (finite) rep.key["T"] = d.T;
  if (d.kind == InitialKind::CylinderCapped) rep.key["C"] = d.C;
  rep.key["horizon"] = horizon;
  std::string ladder;
  for (int N : o.ladder) ladder += (ladder.empty() ? "" : "/") + std::to_string(N);
  rep.key["ladder"] = ladder;

  rep.summary["verdict"] = std::string(to_string(cl.verdict));
  put(rep.summary, "growth", cl.growth);
  put(rep.summary, "growth_exponent", cl.growth_exponent);
  put(rep.summary, "max_disagreement", cl.max_disagreement);
  put(rep.summary, "window_begin", cl.window_begin);
  put(rep.summary, "window_end", cl.window_end);
  rep.inconclusive = cl.verdict == Verdict::Inconclusive;
  bool lemma_ok = true;
  ojson rungs = ojson::array();
  for (std::size_t k = 0; k < r.runs.size(); ++k) {
    const auto& run = r.runs[k];
    ojson j;
    j["nodes"] = run.trace.resolution;
    if (k < cl.rungs.size()) {
      const auto& ev = cl.rungs[k];
      put(j, "growth", ev.growth);
      put(j, "sup_ratio", ev.sup_ratio);
      put(j, "min_value", ev.min_value);
      put(j, "max_value", ev.max_value);
      j["monotone"] = ev.monotone;
      j["verdict"] = std::string(to_string(ev.verdict));
    }
    put(j, "extinction_estimate", run.extinction_estimate);
    put(j, "floor_crossing", run.floor_crossing);
    j["termination"] = std::string(to_string(run.termination));
    j["steps"] = run.steps;
    put(j, "r_max", run.r_max);
    j["lemma"] = lemma_json(run.lemma);
    lemma_ok = lemma_ok && run.lemma.passed;
    rungs.push_back(j);
  }
  rep.details["rungs"] = rungs;
  rep.details["resolution_sensitive"] = cl.resolution_sensitive;
  rep.details["message"] = cl.message;
  rep.summary["lemma_passed"] = lemma_ok;
  rep.check("lower_bound", lemma_ok);
  if (finite) {
    const auto est = r.runs.back().extinction_estimate;
    put(rep.summary, "extinction_estimate", est);
    rep.check("extinction_near_T", est && std::abs(*est - d.T) <= 0.02 * d.T);
  }

  Csv csv("yamabe.curvature/1", {"nodes", "t", "max_R", "argmax_r", "diagnostic", "trusted"});
  for (const auto& run : r.runs) {
    const auto& t = run.trace;
    for (std::size_t k = 0; k < t.times.size(); ++k)
      csv.row({static_cast<double>(t.resolution), t.times[k], t.max_R[k], t.argmax_r[k], t.diagnostic[k],
               t.times[k] >= cl.window_begin && t.times[k] <= cl.window_end ? 1.0 : 0.0});
  }
  art.write("snapshots.csv", snapshots_csv(r.runs.back().trajectory));
  art.write("trace.csv", csv.str());
}

void apply_resolution_scale(ojson& body, double f) {
  if (f == 1.0) return;
  auto scale = [f](ojson& v) { v = std::max(8, static_cast<int>(std::lround(v.get<double>() * f))); };
  if (body.contains("mesh")) scale(body["mesh"]["nodes"]);
  if (body.contains("ladder"))
    for (auto& v : body["ladder"]) scale(v);
  if (body.contains("nodes")) scale(body["nodes"]);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& files, const ojson& config, Command c,
                    const std::string& status, const ojson& summary, double scale, double wall) {
  ojson m;
  m["schema"] = "yamabe.manifest/1";
  m["tool"] = std::string(kToolName);
  m["version"] = std::string(kToolVersion);
  m["command"] = std::string(to_string(c));
  m["status"] = status;
  m["resolution_scale"] = scale;
  m["config"] = config;
  ojson list = ojson::array();
  for (const auto& name : files) {
    ojson e;
    e["name"] = name;
    e["bytes"] = fs::file_size(dir / name);
    e["sha256"] = sha256_file(dir / name);
    list.push_back(e);
  }
  m["files"] = list;
  m["summary"] = summary;
  m["created_utc"] = utc_now();
  put(m, "wall_seconds", wall);
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f << dump(m);
    f.close();
    if (!f) throw IoFailure("cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / "manifest.json");
}

RunOutcome run_with_keys(const ExperimentConfig& cfg, const RunSettings& st, const ojson& extra_key);

int sweep_exit(const std::vector<RunOutcome>& outs, int merge_code, bool strict) {
  bool solver = false, config = false, soft = false;
  for (const auto& o : outs) {
    solver = solver || o.exit_code == kExitSolver;
    config = config || o.exit_code == kExitConfig;
    soft = soft || o.status != "ok";
  }
  if (solver) return kExitSolver;
  if (config) return kExitConfig;
  if (merge_code != kExitOk) return merge_code;
  return strict && soft ? kExitInconclusive : kExitOk;
}

int run_sweep(const ojson& b, const RunSettings& st, const fs::path& dir, Artifacts& art, Report& rep) {
  const json base = json::parse(b.at("base").dump()), grid = json::parse(b.at("grid").dump());
  const auto jobs = expand_grid(base, grid);
  std::vector<RunOutcome> outs(jobs.size());
  std::vector<fs::path> dirs;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "job_%03zu", k);
    dirs.push_back(dir / name);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < jobs.size();) {
      RunSettings sub = st;
      sub.out = dirs[k];
      sub.parallel = 1;
      try {
        outs[k] = run_with_keys(config_from_json(jobs[k].config), sub, jobs[k].assignment);
      } catch (const ConfigError& e) {
        outs[k] = {kExitConfig, dirs[k], "failed", e.what()};
      }
    }
  };
  {
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, st.parallel)), 1, jobs.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::ostringstream table;
  const auto merged = merge_sweep(dirs, table);
  art.write("summary.csv", table.str());

  ojson list = ojson::array();
  std::size_t ok = 0, failed = 0;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    ojson j;
    j["run"] = dirs[k].filename().string();
    j["assignment"] = jobs[k].assignment;
    j["status"] = outs[k].status;
    j["exit_code"] = outs[k].exit_code;
    if (!outs[k].message.empty()) j["message"] = outs[k].message;
    list.push_back(j);
    ok += outs[k].status == "ok";
    failed += outs[k].status == "failed";
  }
  rep.details["jobs"] = list;
  rep.details["corrupt"] = merged.corrupt;
  rep.details["incomplete"] = merged.incomplete;
  rep.key["grid"] = std::string(grid.dump());
  rep.summary["jobs"] = jobs.size();
  rep.summary["ok"] = ok;
  rep.summary["failed"] = failed;
  rep.summary["merged_rows"] = merged.rows;
  rep.check("all_jobs_completed", failed == 0 && merged.corrupt.empty());
  rep.check("all_jobs_ok", ok == jobs.size());
  return sweep_exit(outs, merged.exit_code, st.strict);
}

RunOutcome run_with_keys(const ExperimentConfig& cfg, const RunSettings& st, const ojson& extra_key) {
  RunOutcome res;
  res.dir = !st.out.empty() ? st.out : cfg.output_dir;
  auto fail = [&](int code, std::string msg) {
    res.exit_code = code;
    res.status = "failed";
    res.message = std::move(msg);
    return res;
  };
  if (res.dir.empty()) return fail(kExitConfig, "no output directory: set output_dir or pass --out");
  if (!(st.resolution_scale > 0) || !std::isfinite(st.resolution_scale))
    return fail(kExitConfig, "resolution scale must be positive");
  std::error_code ec;
  fs::create_directories(res.dir, ec);
  if (ec) return fail(kExitConfig, "cannot create " + res.dir.string() + ": " + ec.message());
  // a stale manifest would mark this run complete before it is
  fs::remove(res.dir / "manifest.json", ec);

  ojson body = cfg.body;
  if (cfg.command != Command::Sweep) apply_resolution_scale(body, st.resolution_scale);
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art{res.dir, {}};
  Report rep;
  std::optional<int> code;
  try {
    switch (cfg.command) {
      case Command::Soliton: run_soliton(body, art, rep); break;
      case Command::Evolve: run_evolve(body, art, rep); break;
      case Command::Converge: run_converge(body, art, rep); break;
      case Command::Contraction: run_contraction_cmd(body, art, rep); break;
      case Command::Barrier: run_barrier(body, art, rep); break;
      case Command::SingularityFinite:
      case Command::SingularityInfinite: run_singularity_cmd(cfg.command, body, art, rep); break;
      case Command::Sweep: code = run_sweep(body, st, res.dir, art, rep); break;
    }
    for (auto it = extra_key.begin(); it != extra_key.end(); ++it) rep.key[it.key()] = it.value();

    ojson report;
    report["schema"] = "yamabe.report/1";
    report["command"] = std::string(to_string(cfg.command));
    report["status"] = rep.status();
    report["key"] = rep.key;
    report["summary"] = rep.summary;
    report["checks"] = rep.checks;
    report["details"] = rep.details;
    art.write("report.json", dump(report));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(res.dir, art.files, body, cfg.command, rep.status(), rep.summary, st.resolution_scale, wall);
  } catch (const std::exception& e) {
    int c = kExitSolver;
    if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const IoFailure*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e))
      c = kExitConfig;
    ojson report;
    report["schema"] = "yamabe.report/1";
    report["command"] = std::string(to_string(cfg.command));
    report["status"] = "failed";
    report["error"] = e.what();
    std::ofstream f(res.dir / "report.json", std::ios::binary | std::ios::trunc);
    f << report.dump(2) << '\n';
    return fail(c, e.what());
  }
  res.status = rep.status();
  res.exit_code = code.value_or(st.strict && res.status != "ok" ? kExitInconclusive : kExitOk);
  res.message = res.status;
  return res;
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return detail::fmt(v.get<double>());
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Command c) {
  for (const auto& [name, cmd] : command_table())
    if (cmd == c) return name;
  return "unknown";
}

ConfigError::ConfigError(std::vector<std::string> errs)
    : std::runtime_error(join(errs, "; ")), errors(std::move(errs)) {}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError({"config: must be a JSON object"});
  std::vector<std::string> errs;
  std::vector<std::string> names;
  for (const auto& [name, cmd] : command_table()) names.push_back(name);
  if (!doc.contains("command")) throw ConfigError({"command: missing (expected " + join(names, "|") + ")"});
  const json& c = doc["command"];
  if (!c.is_string() || !command_table().count(c.get<std::string>()))
    throw ConfigError({"command: unknown value " + describe(c) + " (expected " + join(names, "|") + ")"});
  ExperimentConfig cfg;
  cfg.command = command_table().find(c.get<std::string>())->second;
  cfg.body = parse_body(cfg.command, doc, errs);
  if (!errs.empty()) throw ConfigError(std::move(errs));
  if (cfg.body.contains("output_dir")) cfg.output_dir = cfg.body["output_dir"].get<std::string>();
  return cfg;
}

ExperimentConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: malformed JSON: ") + e.what()});
  }
  return config_from_json(doc);
}

RunOutcome run(const ExperimentConfig& config, const RunSettings& settings) {
  return run_with_keys(config, settings, ojson::object());
}

std::string sha256_file(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoFailure("cannot read " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned k = 0; k < len; ++k) out += hex[md[k] >> 4], out += hex[md[k] & 15];
  return out;
}

ManifestCheck verify_run_dir(const fs::path& dir) {
  ManifestCheck c;
  const fs::path mpath = dir / "manifest.json";
  if (!fs::is_regular_file(mpath)) {
    c.problem = "no manifest";
    return c;
  }
  c.present = true;
  json m;
  try {
    std::ifstream f(mpath, std::ios::binary);
    m = json::parse(f);
  } catch (const json::exception&) {
    c.problem = "manifest is not valid JSON";
    return c;
  }
  if (!m.is_object() || !m.contains("schema") || !m["schema"].is_string() ||
      m["schema"].get<std::string>().rfind("yamabe.manifest/", 0) != 0) {
    c.problem = "manifest has no recognised schema";
    return c;
  }
  if (!m.contains("files") || !m["files"].is_array()) {
    c.problem = "manifest lists no files";
    return c;
  }
  for (const auto& e : m["files"]) {
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("sha256")) {
      c.problem = "malformed file entry";
      return c;
    }
    const std::string name = e["name"].get<std::string>();
    if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
      c.problem = "file entry escapes the run directory: " + name;
      return c;
    }
    const fs::path p = dir / name;
    if (!fs::is_regular_file(p)) {
      c.problem = "missing file " + name;
      return c;
    }
    if (sha256_file(p) != e["sha256"]) {
      c.problem = "digest mismatch for " + name;
      return c;
    }
  }
  c.valid = true;
  return c;
}

MergeResult merge_sweep(const std::vector<fs::path>& dirs_in, std::ostream& csv) {
  MergeResult res;
  auto dirs = dirs_in;
  std::sort(dirs.begin(), dirs.end());
  struct Row {
    std::string run;
    std::map<std::string, json> cells;
  };
  std::vector<Row> rows;
  std::vector<std::string> key_cols, sum_cols;
  auto note = [](std::vector<std::string>& cols, const std::string& name) {
    if (std::find(cols.begin(), cols.end(), name) == cols.end()) cols.push_back(name);
  };
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) {
      res.incomplete.push_back(d.string());
      res.warnings.push_back(d.string() + ": not a directory");
      continue;
    }
    const auto chk = verify_run_dir(d);
    if (!chk.present) {
      res.incomplete.push_back(d.string());
      continue;
    }
    if (!chk.valid) {
      res.corrupt.push_back(d.string() + ": " + chk.problem);
      continue;
    }
    json report;
    try {
      std::ifstream mf(d / "manifest.json", std::ios::binary);
      const json m = json::parse(mf);
      bool listed = false;
      for (const auto& e : m["files"]) listed = listed || e["name"] == "report.json";
      if (!listed) throw std::runtime_error("report.json not covered by the manifest");
      std::ifstream rf(d / "report.json", std::ios::binary);
      report = json::parse(rf);
      if (!report.is_object() || !report.contains("key") || !report.contains("summary"))
        throw std::runtime_error("report.json lacks key or summary");
    } catch (const std::exception& e) {
      res.corrupt.push_back(d.string() + ": " + e.what());
      continue;
    }
    Row row;
    row.run = d.filename().string();
    if (row.run.empty()) row.run = d.parent_path().filename().string();
    row.cells["command"] = report.value("command", "");
    row.cells["status"] = report.value("status", "");
    for (auto it = report["key"].begin(); it != report["key"].end(); ++it) {
      row.cells[it.key()] = it.value();
      note(key_cols, it.key());
    }
    for (auto it = report["summary"].begin(); it != report["summary"].end(); ++it) {
      if (row.cells.count(it.key())) continue;
      row.cells[it.key()] = it.value();
      note(sum_cols, it.key());
    }
    rows.push_back(std::move(row));
  }
  std::sort(key_cols.begin(), key_cols.end());
  std::sort(sum_cols.begin(), sum_cols.end());
  std::vector<std::string> cols{"command", "status"};
  for (const auto& k : key_cols) cols.push_back(k);
  for (const auto& k : sum_cols)
    if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);

  csv << "# schema=yamabe.summary/1\n";
  csv << "run";
  for (const auto& c : cols) csv << ',' << csv_cell(c);
  csv << '\n';
  for (const auto& r : rows) {
    csv << csv_cell(r.run);
    for (const auto& c : cols) {
      auto it = r.cells.find(c);
      csv << ',' << (it == r.cells.end() ? std::string() : csv_cell(it->second));
    }
    csv << '\n';
  }
  res.rows = rows.size();
  if (rows.empty()) res.warnings.push_back("no completed runs to merge");
  if (!res.corrupt.empty()) res.exit_code = kExitCorrupt;
  return res;
}

}  // namespace yamabe
