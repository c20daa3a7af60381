#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "cah.hpp"
#include "version.hpp"
#include "zoo.hpp"

namespace symspace {

using Json = nlohmann::ordered_json;

// Schema-level problems: exit code 2. Engine failures keep exit code 3.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct Report {
  Json scenario;
  std::vector<CheckResult> checks;
  Json extra = Json::object();
  bool pass = false;
  long duration_ms = 0;

  Json to_json(bool include_duration = true) const {
    Json j;
    j["scenario"] = scenario;
    j["engine_version"] = engine_version;
    Json cs = Json::array();
    for (const auto& c : checks)
      cs.push_back(Json{{"name", c.name},
                        {"residual", c.residual},
                        {"threshold", c.threshold},
                        {"pass", c.pass}});
    j["checks"] = cs;
    j["pass"] = pass;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    if (include_duration) j["duration_ms"] = duration_ms;
    return j;
  }
};

namespace scenario_detail {

inline void require_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& ctx) {
  if (!j.is_object()) throw ScenarioError(ctx + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ScenarioError("unknown field '" + it.key() + "' in " + ctx);
}

inline Vec parse_vec(const Json& j, const std::string& ctx) {
  if (!j.is_array()) throw ScenarioError(ctx + " must be an array of numbers");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ScenarioError(ctx + " must contain only numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline Mat parse_mat(const Json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ScenarioError(ctx + " must be a nonempty array of rows");
  size_t cols = 0;
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array()) throw ScenarioError(ctx + " rows must be arrays");
    if (r == 0)
      cols = j[r].size();
    else if (j[r].size() != cols)
      throw ScenarioError(ctx + " rows have inconsistent lengths");
  }
  Mat m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r)
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ScenarioError(ctx + " must contain only numbers");
      m(r, c) = j[r][c].get<double>();
    }
  return m;
}

inline ModelSpec parse_model_spec(const Json& j, const std::string& ctx) {
  require_keys(j, {"kind", "n", "J", "a", "k", "seed"}, ctx);
  if (!j.contains("kind") || !j["kind"].is_string())
    throw ScenarioError(ctx + " needs a string 'kind'");
  ModelSpec s;
  s.kind = j["kind"].get<std::string>();
  if (j.contains("n")) s.n = j["n"].get<int>();
  if (j.contains("J")) s.J = parse_mat(j["J"], ctx + ".J");
  if (j.contains("a")) s.a = j["a"].get<double>();
  if (j.contains("k")) s.k = j["k"].get<int>();
  if (j.contains("seed")) s.seed = j["seed"].get<long>();
  if (s.kind != "flat" && s.kind != "quadric" && s.kind != "matrix-group" &&
      s.kind != "involutions")
    throw ScenarioError(ctx + ": unknown kind '" + s.kind + "'");
  if (s.J.size() > 0 && s.n == 0) s.n = static_cast<int>(s.J.rows());
  if (s.n <= 0) throw ScenarioError(ctx + " needs a positive 'n'");
  return s;
}

inline double tol_of(const Json& scenario, const std::string& name, double dflt) {
  if (scenario.contains("tolerances") && scenario["tolerances"].contains(name))
    return scenario["tolerances"][name].get<double>();
  return dflt;
}

inline void add_check(Report& rep, const std::string& name, double residual, double threshold) {
  rep.checks.push_back(CheckResult{name, residual, threshold, residual < threshold});
}

inline Point resolve_base(const SymmetricSpaceModel& m, const Json& scenario,
                          const std::string& key) {
  if (!scenario.contains(key)) return m.base;
  Vec amb = parse_vec(scenario[key], key);
  if (amb.size() != m.charted->ambient_dim)
    throw ScenarioError(key + " has wrong ambient dimension");
  if (membership_residual(*m.charted, amb) > 1e3 * m.charted->tolerance)
    throw ScenarioError(key + " is not a point of the model");
  return Point{m.charted->id, amb};
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw EngineError("cannot open output file " + tmp);
    os << text;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw EngineError("cannot rename output file to " + path);
}

// CSV rows: t, then ambient point coordinates, then vector coordinates.
inline std::string csv_of(const std::vector<double>& ts, const std::vector<Vec>& points,
                          const std::vector<Vec>& vectors) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (size_t i = 0; i < ts.size(); ++i) {
    os << ts[i];
    for (int k = 0; k < points[i].size(); ++k) os << "," << points[i][k];
    for (int k = 0; k < vectors[i].size(); ++k) os << "," << vectors[i][k];
    os << "\n";
  }
  return os.str();
}

}  // namespace scenario_detail

// ---------------------------------------------------------------------------
// Command handlers
// ---------------------------------------------------------------------------

namespace scenario_detail {

inline void run_axioms(Report& rep, const Json& sc, int samples, uint64_t seed) {
  ModelSpec spec = parse_model_spec(sc.at("model"), "model");
  SymmetricSpaceModel m = build_model(spec);
  AxiomReport r = check_axioms(m, samples, seed);
  const bool flat = spec.kind == "flat";
  double dflt = flat ? 1e-12 : 1e-7;
  add_check(rep, "s1", r.s1, tol_of(sc, "s1", dflt));
  add_check(rep, "s2", r.s2, tol_of(sc, "s2", dflt));
  add_check(rep, "s3", r.s3, tol_of(sc, "s3", dflt));
  add_check(rep, "s4", r.s4, tol_of(sc, "s4", flat ? 1e-9 : 1e-7));
  add_check(rep, "closure", r.closure, tol_of(sc, "closure", 1e-9));
}

inline void run_connection_suite(Report& rep, const Json& sc, int samples, uint64_t seed,
                                 int steps) {
  SymmetricSpaceModel m = build_model(parse_model_spec(sc.at("model"), "model"));
  ConnectionModel conn = canonical_connection(m);
  const ChartedModel& cm = *m.charted;

  double torsion_max = 0.0, nabla_max = 0.0, roundtrip_max = 0.0, explog_max = 0.0;
  double r = normal_radius(conn, m.base, seed);
  for (int i = 0; i < samples; ++i) {
    Point x = sample_point(cm, i, seed);
    TangentVector v = sample_tangent(cm, x, 3 * i, seed + 1);
    TangentVector w = sample_tangent(cm, x, 3 * i + 1, seed + 1);
    torsion_max =
        std::max(torsion_max, torsion(conn, x, v, w).ambient.lpNorm<Eigen::Infinity>());
    nabla_max = std::max(nabla_max, nabla_R_residual(conn, x, v));

    Geodesic geo = shoot(conn, x, v, 1.0, steps);
    TangentVector there = transport_along(conn, geo, 0.0, 1.0, w);
    TangentVector back = transport_along(conn, geo, 1.0, 0.0, there);
    roundtrip_max = std::max(roundtrip_max, (back.ambient - w.ambient).norm());
  }
  for (int i = 0; i < std::min(samples, 8); ++i) {
    TangentVector d = sample_tangent(cm, m.base, 100 + i, seed + 2);
    TangentVector v{m.base, (0.45 * r) * d.ambient};
    Point p = exp_map(conn, m.base, v, steps);
    TangentVector back = log_map(conn, m.base, p, steps);
    explog_max = std::max(explog_max, (back.ambient - v.ambient).norm());
  }
  add_check(rep, "torsion", torsion_max, tol_of(sc, "torsion", 1e-7));
  add_check(rep, "nabla_r", nabla_max, tol_of(sc, "nabla_r", 1e-4));
  add_check(rep, "transport_roundtrip", roundtrip_max, tol_of(sc, "transport_roundtrip", 1e-7));
  add_check(rep, "explog", explog_max, tol_of(sc, "explog", 1e-6));
  rep.extra["normal_radius"] = r;
}

inline void run_cartan_verify(Report& rep, const Json& sc, int samples, uint64_t seed,
                              int steps) {
  SymmetricSpaceModel m = build_model(parse_model_spec(sc.at("model"), "model"));
  ConnectionModel conn = canonical_connection(m);
  const ChartedModel& cm = *m.charted;
  Mat frame = tangent_frame(cm, m.base);
  double r = normal_radius(conn, m.base, seed);

  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    TangentVector v = sample_tangent(cm, m.base, 7 * i, seed);
    double t = (0.15 + 0.35 * radical_inverse(i + 1, 3)) * r;  // |tv| <= r/2
    CartanState ode = cartan_ode_solve(conn, m.base, v, t, steps);
    int j = i % cm.dim;
    TangentVector vp{m.base, frame.col(j)};
    Vec direct = cartan_direct(conn, m.base, v, t, vp, steps);
    worst = std::max(worst, (ode.theta.col(j) - direct).lpNorm<Eigen::Infinity>());
  }
  add_check(rep, "cartan_theta", worst, tol_of(sc, "cartan_theta", 1e-4));
  rep.extra["normal_radius"] = r;
}

inline void run_lts(Report& rep, const Json& sc, int samples, uint64_t seed) {
  SymmetricSpaceModel m = build_model(parse_model_spec(sc.at("model"), "model"));
  ConnectionModel conn = canonical_connection(m);
  LieTripleSystem sys = lts(m, conn);
  LtsAxiomResiduals res = lts_axiom_residuals(sys, samples, seed);
  add_check(rep, "antisymmetry", res.antisymmetry, tol_of(sc, "antisymmetry", 1e-10));
  add_check(rep, "cyclic", res.cyclic, tol_of(sc, "cyclic", 1e-4));
  add_check(rep, "derivation", res.derivation, tol_of(sc, "derivation", 1e-4));

  Json basis = Json::array();
  for (int i = 0; i < sys.dim; ++i) {
    Json col = Json::array();
    for (int k = 0; k < sys.basis.rows(); ++k) col.push_back(sys.basis(k, i));
    basis.push_back(col);
  }
  Json table = Json::array();
  for (int i = 0; i < sys.dim; ++i) {
    Json ji = Json::array();
    for (int j = 0; j < sys.dim; ++j) {
      Json jj = Json::array();
      for (int k = 0; k < sys.dim; ++k) {
        Json jk = Json::array();
        const Vec& val = sys.bracket.at(i, j, k);
        for (int o = 0; o < val.size(); ++o) jk.push_back(val[o]);
        jj.push_back(jk);
      }
      ji.push_back(jj);
    }
    table.push_back(ji);
  }
  rep.extra["lts"] = Json{{"dim", sys.dim}, {"basis", basis}, {"bracket", table}};
}

inline void run_transport(Report& rep, const Json& sc, uint64_t seed, int steps,
                          const std::string& trace_path) {
  SymmetricSpaceModel m = build_model(parse_model_spec(sc.at("model"), "model"));
  ConnectionModel conn = canonical_connection(m);
  Point x = resolve_base(m, sc, "base");
  if (!sc.contains("v")) throw ScenarioError("transport needs 'v' (geodesic velocity)");
  Vec v_amb = parse_vec(sc["v"], "v");
  TangentVector v = project_tangent(*m.charted, x, v_amb);
  TangentVector w = sc.contains("w") ? project_tangent(*m.charted, x, parse_vec(sc["w"], "w"))
                                     : sample_tangent(*m.charted, x, 1, seed);
  double t1 = sc.value("t1", 1.0);

  Geodesic geo = shoot(conn, x, v, t1, steps);
  std::vector<double> ts;
  std::vector<Vec> pts, vecs;
  Vec cur = w.ambient;
  int rows = std::min(steps, 256);
  ts.push_back(0.0);
  pts.push_back(x.ambient);
  vecs.push_back(cur);
  for (int i = 1; i <= rows; ++i) {
    double ta = t1 * (i - 1) / rows, tb = t1 * i / rows;
    cur = transport_many(conn, geo, ta, tb, cur).col(0);
    ts.push_back(tb);
    pts.push_back(geo.at(tb).ambient);
    vecs.push_back(cur);
  }
  TangentVector back = transport_along(conn, geo, t1, 0.0, TangentVector{geo.at(t1), cur});
  add_check(rep, "transport_roundtrip", (back.ambient - w.ambient).norm(),
            tol_of(sc, "transport_roundtrip", 1e-7));
  add_check(rep, "tangency", tangency_residual(*m.charted, TangentVector{geo.at(t1), cur}),
            tol_of(sc, "tangency", 1e-6));
  if (!trace_path.empty()) {
    write_text_atomic(trace_path, csv_of(ts, pts, vecs));
    rep.extra["trace_csv"] = trace_path;
  }
}

inline void run_geodesic(Report& rep, const Json& sc, int steps, const std::string& trace_path) {
  SymmetricSpaceModel m = build_model(parse_model_spec(sc.at("model"), "model"));
  ConnectionModel conn = canonical_connection(m);
  Point x = resolve_base(m, sc, "base");
  if (!sc.contains("v")) throw ScenarioError("geodesic needs 'v' (initial velocity)");
  TangentVector v = project_tangent(*m.charted, x, parse_vec(sc["v"], "v"));
  double t1 = sc.value("t1", 1.0);

  Geodesic geo = shoot(conn, x, v, t1, steps);
  double rescale_max = 0.0;
  for (double f : {0.25, 0.5, 0.75}) {
    Point direct = exp_map(conn, x, TangentVector{x, f * t1 * v.ambient}, steps);
    rescale_max = std::max(rescale_max, (direct.ambient - geo.at(f * t1).ambient).norm());
  }
  add_check(rep, "rescaling", rescale_max, tol_of(sc, "rescaling", 1e-8));
  Geodesic fine = shoot(conn, x, v, t1, 2 * std::max(steps, 16));
  add_check(rep, "step_doubling", (geo.endpoint().ambient - fine.endpoint().ambient).norm(),
            tol_of(sc, "step_doubling", 1e-8));

  if (!trace_path.empty()) {
    std::vector<double> ts;
    std::vector<Vec> pts, vels;
    int rows = std::min(steps, 256);
    for (int i = 0; i <= rows; ++i) {
      double t = t1 * i / rows;
      ts.push_back(t);
      pts.push_back(geo.at(t).ambient);
      vels.push_back(geo.velocity(t).ambient);
    }
    write_text_atomic(trace_path, csv_of(ts, pts, vels));
    rep.extra["trace_csv"] = trace_path;
  }
}

inline PiecewiseGeodesic parse_path(const Json& j, const Point& anchor, const std::string& ctx) {
  require_keys(j, {"times", "vels", "d"}, ctx);
  PiecewiseGeodesic pg;
  pg.anchor = anchor;
  pg.d = j.value("d", 0.0);
  if (!j.contains("times") || !j.contains("vels"))
    throw ScenarioError(ctx + " needs 'times' and 'vels'");
  for (const auto& t : j["times"]) pg.times.push_back(t.get<double>());
  for (const auto& vj : j["vels"])
    pg.vels.push_back(TangentVector{anchor, parse_vec(vj, ctx + ".vels")});
  validate_pg(pg);
  return pg;
}

inline void run_integrate(Report& rep, const Json& sc, int samples, uint64_t seed, int steps,
                          bool lts_mode) {
  SymmetricSpaceModel m1 = build_model(parse_model_spec(sc.at("source"), "source"));
  SymmetricSpaceModel m2 = build_model(parse_model_spec(sc.at("target"), "target"));
  Point b1 = resolve_base(m1, sc, "base1");
  Point b2 = resolve_base(m2, sc, "base2");
  if (!sc.contains("A")) throw ScenarioError("integrate needs the tangent map 'A'");
  Mat a_mat = parse_mat(sc["A"], "A");
  if (a_mat.rows() != m2.charted->dim || a_mat.cols() != m1.charted->dim)
    throw ScenarioError("A has wrong dimensions for the chosen models");
  TangentMap a = make_tangent_map(*m1.charted, b1, *m2.charted, b2, a_mat);

  ConnectionModel conn1 = canonical_connection(m1);
  ConnectionModel conn2 = canonical_connection(m2);

  std::function<Point(const Point&)> f;
  if (lts_mode) {
    double bracket_residual = 0.0;
    try {
      LtsIntegration out =
          integrate_lts_morphism(m1, m2, a, tol_of(sc, "bracket", 1e-4), 64, steps);
      bracket_residual = out.bracket_residual;
      f = out.map;
    } catch (const NotAMorphismError& e) {
      add_check(rep, "bracket_morphism", e.residual, tol_of(sc, "bracket", 1e-4));
      return;
    }
    add_check(rep, "bracket_morphism", bracket_residual, tol_of(sc, "bracket", 1e-4));
    add_check(rep, "morphism", verify_morphism(m1, m2, f, std::min(samples, 16), seed),
              tol_of(sc, "morphism", 1e-4));
  } else {
    IntertwineResiduals res = intertwines(conn1, conn2, a);
    add_check(rep, "intertwine_torsion", res.torsion, tol_of(sc, "intertwine_torsion", 1e-3));
    add_check(rep, "intertwine_curvature", res.curvature,
              tol_of(sc, "intertwine_curvature", 1e-3));
    if (res.torsion >= tol_of(sc, "intertwine_torsion", 1e-3) ||
        res.curvature >= tol_of(sc, "intertwine_curvature", 1e-3))
      return;  // rejected: remaining checks are not meaningful
    f = integrate_global(conn1, conn2, a, 64, steps);
  }

  Mat d = map_differential(*m1.charted, *m2.charted, f, b1);
  add_check(rep, "tangency", (d - a.matrix).lpNorm<Eigen::Infinity>(),
            tol_of(sc, "tangency", 1e-5));

  if (sc.contains("targets")) {
    Json images = Json::array();
    for (const auto& tj : sc["targets"]) {
      Vec y = parse_vec(tj, "targets");
      Point py{m1.charted->id, y};
      Point img = f(py);
      Json row = Json::array();
      for (int k = 0; k < img.ambient.size(); ++k) row.push_back(img.ambient[k]);
      images.push_back(row);
    }
    rep.extra["images"] = images;
  }

  if (sc.contains("paths") && sc["paths"].size() >= 1) {
    std::vector<Point> endpoints, images;
    for (const auto& pj : sc["paths"]) {
      PiecewiseGeodesic pg = parse_path(pj, b1, "paths");
      TransportedMap tm = transported_map(conn1, conn2, pg, a, pg.times.back(), steps);
      endpoints.push_back(tm.source_path.at(pg.times.back()));
      images.push_back(tm.map.target);
    }
    double agree = 0.0;
    bool same_endpoint = true;
    for (size_t i = 1; i < endpoints.size(); ++i) {
      if ((endpoints[i].ambient - endpoints[0].ambient).norm() > 1e-6) same_endpoint = false;
      agree = std::max(agree, (images[i].ambient - images[0].ambient).norm());
    }
    if (endpoints.size() >= 2) {
      if (!same_endpoint)
        throw ScenarioError("path endpoints differ; path agreement is undefined");
      add_check(rep, "path_agreement", agree, tol_of(sc, "path_agreement", 1e-5));
    }
    Json ej = Json::array();
    for (const auto& p : images) {
      Json row = Json::array();
      for (int k = 0; k < p.ambient.size(); ++k) row.push_back(p.ambient[k]);
      ej.push_back(row);
    }
    rep.extra["path_images"] = ej;
  }
}

}  // namespace scenario_detail

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

struct RunOverrides {
  std::string out;
  long seed = -1;
  int steps = -1;
};

inline const std::set<std::string>& allowed_keys(const std::string& command) {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"axioms", {"command", "model", "samples", "seed", "steps", "tolerances", "out"}},
      {"connection-suite", {"command", "model", "samples", "seed", "steps", "tolerances", "out"}},
      {"cartan-verify", {"command", "model", "samples", "seed", "steps", "tolerances", "out"}},
      {"lts", {"command", "model", "samples", "seed", "steps", "tolerances", "out"}},
      {"transport",
       {"command", "model", "base", "v", "w", "t1", "samples", "seed", "steps", "tolerances",
        "out", "trace"}},
      {"geodesic",
       {"command", "model", "base", "v", "t1", "samples", "seed", "steps", "tolerances", "out",
        "trace"}},
      {"integrate",
       {"command", "source", "target", "base1", "base2", "A", "targets", "paths", "samples",
        "seed", "steps", "tolerances", "out"}},
      {"integrate-lts",
       {"command", "source", "target", "base1", "base2", "A", "targets", "paths", "samples",
        "seed", "steps", "tolerances", "out"}},
  };
  auto it = keys.find(command);
  if (it == keys.end()) throw ScenarioError("unknown command '" + command + "'");
  return it->second;
}

inline Report run_scenario(const Json& sc, const RunOverrides& ov = {}) {
  auto t_start = std::chrono::steady_clock::now();
  if (!sc.is_object()) throw ScenarioError("scenario must be a JSON object");
  if (!sc.contains("command") || !sc["command"].is_string())
    throw ScenarioError("scenario needs a string 'command'");
  const std::string command = sc["command"].get<std::string>();
  scenario_detail::require_keys(sc, allowed_keys(command), "scenario");
  if (sc.contains("tolerances")) {
    if (!sc["tolerances"].is_object()) throw ScenarioError("tolerances must be an object");
    for (auto it = sc["tolerances"].begin(); it != sc["tolerances"].end(); ++it)
      if (!it.value().is_number())
        throw ScenarioError("tolerance '" + it.key() + "' must be a number");
  }

  Json effective = sc;
  if (ov.seed >= 0) effective["seed"] = ov.seed;
  if (ov.steps > 0) effective["steps"] = ov.steps;
  const uint64_t seed = effective.value("seed", 0);
  const int samples = effective.value("samples", 64);
  const int steps = effective.value("steps", 256);
  if (samples <= 0 || steps <= 0) throw ScenarioError("samples and steps must be positive");

  Report rep;
  rep.scenario = effective;

  std::string trace_path;
  if (effective.contains("trace")) trace_path = effective["trace"].get<std::string>();

  using namespace scenario_detail;
  if (command == "axioms")
    run_axioms(rep, effective, samples, seed);
  else if (command == "connection-suite")
    run_connection_suite(rep, effective, samples, seed, steps);
  else if (command == "cartan-verify")
    run_cartan_verify(rep, effective, samples, seed, steps);
  else if (command == "lts")
    run_lts(rep, effective, samples, seed);
  else if (command == "transport")
    run_transport(rep, effective, seed, steps, trace_path);
  else if (command == "geodesic")
    run_geodesic(rep, effective, steps, trace_path);
  else if (command == "integrate")
    run_integrate(rep, effective, samples, seed, steps, false);
  else if (command == "integrate-lts")
    run_integrate(rep, effective, samples, seed, steps, true);

  rep.pass = !rep.checks.empty();
  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  auto t_end = std::chrono::steady_clock::now();
  rep.duration_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(t_end - t_start).count();
  return rep;
}

// Exit codes: 0 pass, 1 check failure, 2 input error, 3 engine error.
inline int run_scenario_file(const std::string& path, const RunOverrides& ov = {}) {
  Json sc;
  try {
    std::ifstream is(path);
    if (!is) {
      std::fprintf(stderr, "error: cannot read scenario file %s\n", path.c_str());
      return 2;
    }
    sc = Json::parse(is);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: invalid scenario JSON: %s\n", e.what());
    return 2;
  }

  Report rep;
  try {
    rep = run_scenario(sc, ov);
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const EngineError& e) {
    std::fprintf(stderr, "engine error: %s\n", e.what());
    return 3;
  }

  std::string out_path = ov.out;
  if (out_path.empty() && sc.contains("out")) out_path = sc["out"].get<std::string>();
  std::string text = rep.to_json().dump(2) + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    try {
      scenario_detail::write_text_atomic(out_path, text);
    } catch (const EngineError& e) {
      std::fprintf(stderr, "engine error: %s\n", e.what());
      return 3;
    }
  }
  return rep.pass ? 0 : 1;
}

inline std::string schema_text() {
  Json j;
  j["command"] = "axioms | connection-suite | cartan-verify | lts | transport | geodesic | "
                 "integrate | integrate-lts";
  j["model"] = Json{{"kind", "flat | quadric | matrix-group | involutions"},
                    {"n", "dimension (flat, matrix-group ambient n; quadric ambient n; "
                          "involutions matrix size)"},
                    {"J", "quadric form matrix (optional, defaults to identity)"},
                    {"a", "quadric level (nonzero)"},
                    {"k", "involutions signature (0..n)"},
                    {"seed", "optional model seed"}};
  j["source"] = "ModelSpec (integrate commands)";
  j["target"] = "ModelSpec (integrate commands)";
  j["base"] = "ambient coordinates overriding the model base point";
  j["base1"] = "source base point (integrate commands)";
  j["base2"] = "target base point (integrate commands)";
  j["A"] = "tangent map matrix in the deterministic orthonormal frames, dim2 x dim1";
  j["targets"] = "list of ambient source points to map";
  j["paths"] = "list of {d, times, vels}: piecewise geodesics anchored at base1";
  j["v"] = "geodesic velocity / transport direction (ambient, projected to the tangent space)";
  j["w"] = "vector to transport (ambient, projected)";
  j["t1"] = "final curve parameter (default 1.0)";
  j["samples"] = "sample count (default 64)";
  j["seed"] = "sampling seed (default 0)";
  j["steps"] = "RK4 steps per unit parameter (default 256)";
  j["tolerances"] = "per-check threshold overrides, e.g. {\"s1\": 1e-9}";
  j["out"] = "report path (atomic write); stdout when absent";
  j["trace"] = "CSV trace path for transport/geodesic";
  return j.dump(2) + "\n";
}

}  // namespace symspace
