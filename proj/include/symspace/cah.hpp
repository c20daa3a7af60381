#pragma once

#include <functional>
#include <vector>

#include "symmetric.hpp"

namespace symspace {

// Linear map between tangent spaces at two base points, stored in the
// deterministic orthonormal frames of those points.
struct TangentMap {
  Point source, target;
  Mat source_frame, target_frame;
  Mat matrix;  // target_dim x source_dim
};

inline TangentMap make_tangent_map(const ChartedModel& m1, const Point& b1,
                                   const ChartedModel& m2, const Point& b2, const Mat& matrix) {
  if (matrix.rows() != m2.dim || matrix.cols() != m1.dim)
    throw EngineError("tangent map has wrong dimensions");
  TangentMap a;
  a.source = b1;
  a.target = b2;
  a.source_frame = tangent_frame(m1, b1);
  a.target_frame = tangent_frame(m2, b2);
  a.matrix = matrix;
  return a;
}

inline TangentVector apply(const TangentMap& a, const TangentVector& v) {
  Vec coords = a.source_frame.transpose() * v.ambient;
  return TangentVector{a.target, a.target_frame * (a.matrix * coords)};
}

// ---------------------------------------------------------------------------
// Piecewise geodesics
// ---------------------------------------------------------------------------

// Broken geodesic described by (d, alpha(d); t_0 <= ... <= t_n; v_1..v_n),
// all velocity vectors based at the anchor point alpha(d).
struct PiecewiseGeodesic {
  double d = 0.0;
  Point anchor;
  std::vector<double> times;
  std::vector<TangentVector> vels;
};

inline void validate_pg(const PiecewiseGeodesic& pg) {
  if (pg.times.size() < 2 || pg.vels.size() + 1 != pg.times.size())
    throw EngineError("piecewise geodesic needs n+1 times and n vectors");
  for (size_t i = 1; i < pg.times.size(); ++i)
    if (pg.times[i] < pg.times[i - 1]) throw EngineError("piecewise geodesic times must be nondecreasing");
  if (pg.d < pg.times.front() - 1e-12 || pg.d > pg.times.back() + 1e-12)
    throw EngineError("distinguished time outside [t0, tn]");
}

struct DevelopedSegment {
  double lo = 0.0, hi = 0.0;  // global parameter range
  double origin = 0.0;        // global parameter at the shoot's local zero
  Geodesic geo;
};

// A piecewise geodesic reconstructed segment by segment from the anchor
// outward, with the anchored velocities transported across the breakpoints.
struct DevelopedPath {
  ModelPtr model;
  PiecewiseGeodesic pg;
  std::vector<DevelopedSegment> segs;  // ordered by lo

  double tmin() const { return pg.times.front(); }
  double tmax() const { return pg.times.back(); }

  const DevelopedSegment* segment_at(double t) const {
    double slack = 1e-9 * (1.0 + tmax() - tmin());
    for (const auto& s : segs)
      if (t >= s.lo - slack && t <= s.hi + slack) return &s;
    return nullptr;
  }

  Point at(double t) const {
    const DevelopedSegment* s = segment_at(t);
    if (!s) {
      if (segs.empty()) return pg.anchor;  // fully degenerate path
      throw EngineError("parameter outside the developed path");
    }
    return s->geo.at(t - s->origin);
  }

  TangentVector velocity(double t) const {
    const DevelopedSegment* s = segment_at(t);
    if (!s) {
      if (segs.empty()) return TangentVector{pg.anchor, Vec::Zero(pg.anchor.ambient.size())};
      throw EngineError("parameter outside the developed path");
    }
    return s->geo.velocity(t - s->origin);
  }
};

inline DevelopedPath develop(const ConnectionModel& conn, const PiecewiseGeodesic& pg,
                             int steps = -1) {
  validate_pg(pg);
  DevelopedPath dp;
  dp.model = conn.model;
  dp.pg = pg;
  const auto& T = pg.times;
  const int nseg = static_cast<int>(pg.vels.size());

  // anchor segment index: last j with times[j] <= d
  int ja = 0;
  for (int j = 0; j < nseg; ++j)
    if (T[j] <= pg.d) ja = j;

  const int N = static_cast<int>(pg.anchor.ambient.size());
  auto vel_matrix = [&](int from) {
    Mat w(N, nseg - from);
    for (int j = from; j < nseg; ++j) w.col(j - from) = pg.vels[j].ambient;
    return w;
  };

  // forward sweep from the anchor
  {
    Point cur = pg.anchor;
    Mat w(N, nseg);  // velocities transported to cur
    for (int j = 0; j < nseg; ++j) w.col(j) = pg.vels[j].ambient;
    for (int j = ja; j < nseg; ++j) {
      double a = (j == ja) ? pg.d : T[j];
      double len = T[j + 1] - a;
      if (len <= 0.0) continue;
      Geodesic geo = shoot(conn, cur, TangentVector{cur, w.col(j)}, len, steps);
      dp.segs.push_back({a, T[j + 1], a, geo});
      if (j + 1 < nseg) w = transport_many(conn, geo, 0.0, len, w);
      cur = geo.at(len);
    }
  }
  // backward sweep from the anchor
  {
    Point cur = pg.anchor;
    Mat w(N, nseg);
    for (int j = 0; j < nseg; ++j) w.col(j) = pg.vels[j].ambient;
    std::vector<DevelopedSegment> back;
    for (int j = ja; j >= 0; --j) {
      double b = (j == ja) ? pg.d : T[j + 1];
      double len = T[j] - b;  // negative
      if (len >= 0.0) continue;
      Geodesic geo = shoot(conn, cur, TangentVector{cur, w.col(j)}, len, steps);
      back.push_back({T[j], b, b, geo});
      if (j > 0) w = transport_many(conn, geo, 0.0, len, w);
      cur = geo.at(len);
    }
    for (auto it = back.rbegin(); it != back.rend(); ++it) dp.segs.insert(dp.segs.begin(), *it);
  }
  (void)vel_matrix;
  return dp;
}

// Parallel transport of ambient columns along the developed path.
inline Mat dp_transport(const ConnectionModel& conn, const DevelopedPath& dp, double s, double t,
                        const Mat& w) {
  if (s == t || dp.segs.empty()) return w;
  const bool fwd = t > s;
  Mat cur = w;
  if (fwd) {
    for (const auto& seg : dp.segs) {
      double a = std::max(seg.lo, s), b = std::min(seg.hi, t);
      if (a >= b) continue;
      cur = transport_many(conn, seg.geo, a - seg.origin, b - seg.origin, cur);
    }
  } else {
    for (auto it = dp.segs.rbegin(); it != dp.segs.rend(); ++it) {
      double a = std::min(it->hi, s), b = std::max(it->lo, t);
      if (a <= b) continue;
      cur = transport_many(conn, it->geo, a - it->origin, b - it->origin, cur);
    }
  }
  return cur;
}

inline std::pair<Point, TangentVector> pg_evaluate(const ConnectionModel& conn,
                                                   const PiecewiseGeodesic& pg, double t,
                                                   int steps = -1) {
  DevelopedPath dp = develop(conn, pg, steps);
  return {dp.at(t), dp.velocity(t)};
}

// Re-anchors the description at d' (change of data).
inline PiecewiseGeodesic pg_change_data(const ConnectionModel& conn, const PiecewiseGeodesic& pg,
                                        double dprime, int steps = -1) {
  DevelopedPath dp = develop(conn, pg, steps);
  const int N = static_cast<int>(pg.anchor.ambient.size());
  Mat w(N, pg.vels.size());
  for (size_t j = 0; j < pg.vels.size(); ++j) w.col(j) = pg.vels[j].ambient;
  Mat moved = dp_transport(conn, dp, pg.d, dprime, w);
  PiecewiseGeodesic out;
  out.d = dprime;
  out.anchor = dp.at(dprime);
  out.times = pg.times;
  for (size_t j = 0; j < pg.vels.size(); ++j)
    out.vels.push_back(TangentVector{out.anchor, moved.col(j)});
  return out;
}

// (d, A)_* alpha: same times, velocities mapped through A, anchored at the
// target base of A.
inline PiecewiseGeodesic pg_pushforward(const PiecewiseGeodesic& pg, const TangentMap& a) {
  if ((a.source.ambient - pg.anchor.ambient).lpNorm<Eigen::Infinity>() > 1e-8)
    throw EngineError("pushforward map is not based at the path anchor");
  PiecewiseGeodesic out;
  out.d = pg.d;
  out.anchor = a.target;
  out.times = pg.times;
  for (const auto& v : pg.vels) out.vels.push_back(apply(a, v));
  return out;
}

// A_t = P_d^t((A_d)_* alpha) o A_d o P_t^d(alpha), together with the developed
// paths that define it.
struct TransportedMap {
  TangentMap map;             // A_t
  DevelopedPath source_path;  // alpha
  DevelopedPath target_path;  // (A_d)_* alpha
};

inline TransportedMap transported_map(const ConnectionModel& conn1, const ConnectionModel& conn2,
                                      const PiecewiseGeodesic& pg, const TangentMap& a_d, double t,
                                      int steps = -1) {
  TransportedMap out;
  out.source_path = develop(conn1, pg, steps);
  PiecewiseGeodesic pg2 = pg_pushforward(pg, a_d);
  out.target_path = develop(conn2, pg2, steps);

  Point xt = out.source_path.at(t);
  Point yt = out.target_path.at(t);
  Mat f1 = tangent_frame(*conn1.model, xt);
  Mat back = dp_transport(conn1, out.source_path, t, pg.d, f1);  // P_t^d(alpha) columns
  Mat mapped(a_d.target_frame.rows(), f1.cols());
  for (int i = 0; i < f1.cols(); ++i)
    mapped.col(i) = apply(a_d, TangentVector{a_d.source, back.col(i)}).ambient;
  Mat fwd = dp_transport(conn2, out.target_path, pg.d, t, mapped);
  Mat f2 = tangent_frame(*conn2.model, yt);
  out.map = TangentMap{xt, yt, f1, f2, f2.transpose() * fwd};
  return out;
}

// ---------------------------------------------------------------------------
// Intertwining and integration
// ---------------------------------------------------------------------------

struct IntertwineResiduals {
  double torsion = 0.0;
  double curvature = 0.0;
};

inline IntertwineResiduals intertwines(const ConnectionModel& conn1, const ConnectionModel& conn2,
                                       const TangentMap& a) {
  const ChartedModel& m1 = *conn1.model;
  const ChartedModel& m2 = *conn2.model;
  IntertwineResiduals out;

  // torsion tables in frame coordinates
  const int n1 = m1.dim;
  std::vector<Vec> tor1(n1 * n1);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j) {
      TangentVector fi{a.source, a.source_frame.col(i)}, fj{a.source, a.source_frame.col(j)};
      tor1[i * n1 + j] = a.source_frame.transpose() * torsion(conn1, a.source, fi, fj).ambient;
    }
  const int n2 = m2.dim;
  std::vector<Vec> tor2(n2 * n2);
  for (int i = 0; i < n2; ++i)
    for (int j = 0; j < n2; ++j) {
      TangentVector fi{a.target, a.target_frame.col(i)}, fj{a.target, a.target_frame.col(j)};
      tor2[i * n2 + j] = a.target_frame.transpose() * torsion(conn2, a.target, fi, fj).ambient;
    }
  auto tor2_of = [&](const Vec& u, const Vec& v) {
    Vec acc = Vec::Zero(n2);
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < n2; ++j) acc += u[i] * v[j] * tor2[i * n2 + j];
    return acc;
  };

  TriArray r1 = curvature_array(conn1, a.source);
  TriArray r2 = curvature_array(conn2, a.target);

  const Mat& M = a.matrix;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j) {
      Vec lhs = M * tor1[i * n1 + j];
      Vec rhs = tor2_of(M.col(i), M.col(j));
      out.torsion = std::max(out.torsion, (lhs - rhs).lpNorm<Eigen::Infinity>());
      for (int k = 0; k < n1; ++k) {
        Vec lhs_r = M * r1.at(i, j, k);
        Vec rhs_r = r2.apply(M.col(i), M.col(j), M.col(k));
        out.curvature = std::max(out.curvature, (lhs_r - rhs_r).lpNorm<Eigen::Infinity>());
      }
    }
  return out;
}

// f := exp_{b2} o A o log_{b1} on a normal ball around the source base.
inline std::function<Point(const Point&)> integrate_local(const ConnectionModel& conn1,
                                                          const ConnectionModel& conn2,
                                                          const TangentMap& a, double radius,
                                                          int steps = -1) {
  return [conn1, conn2, a, radius, steps](const Point& x) {
    TangentVector u = log_map(conn1, a.source, x, steps);
    if (u.ambient.norm() > radius * (1.0 + 1e-9))
      throw OutOfNormalNeighborhoodError("integrate_local: point outside the given radius");
    return exp_map(conn2, a.target, apply(a, u), steps);
  };
}

// Carries A along a geodesic chain from its source base to y by greedy
// hopping: full log hop when y is inside the (estimated) normal radius, half
// a radius along the log direction otherwise.
inline TangentMap chain_map_to(const ConnectionModel& conn1, const ConnectionModel& conn2,
                               const TangentMap& a, const Point& y, int hop_budget = 64,
                               int steps = -1) {
  double r = normal_radius(conn1, a.source);
  TangentMap cur = a;
  for (int hop = 0; hop < hop_budget; ++hop) {
    if ((cur.source.ambient - y.ambient).lpNorm<Eigen::Infinity>() < 1e-10) return cur;
    TangentVector u;
    try {
      u = log_map(conn1, cur.source, y, steps);
    } catch (const OutOfNormalNeighborhoodError&) {
      throw EngineError("integrate_global: no geodesic chain found toward the target");
    }
    double len = u.ambient.norm();
    TangentVector hopv = u;
    bool final_hop = len <= 0.9 * r;
    if (!final_hop) hopv.ambient *= 0.5 * r / len;
    PiecewiseGeodesic pg{0.0, cur.source, {0.0, 1.0}, {hopv}};
    cur = transported_map(conn1, conn2, pg, cur, 1.0, steps).map;
    if (final_hop) return cur;
  }
  throw EngineError("integrate_global: hop budget exhausted");
}

inline std::function<Point(const Point&)> integrate_global(const ConnectionModel& conn1,
                                                           const ConnectionModel& conn2,
                                                           const TangentMap& a, int hop_budget = 64,
                                                           int steps = -1) {
  return [conn1, conn2, a, hop_budget, steps](const Point& y) {
    return chain_map_to(conn1, conn2, a, y, hop_budget, steps).target;
  };
}

// Max residual of f(x.y) = f(x).f(y) over seeded sample pairs.
inline double verify_morphism(const SymmetricSpaceModel& m1, const SymmetricSpaceModel& m2,
                              const std::function<Point(const Point&)>& f, int samples,
                              uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    Point x = sample_point(*m1.charted, 2 * i, seed);
    Point y = sample_point(*m1.charted, 2 * i + 1, seed);
    Point lhs = f(multiply(m1, x, y));
    Point rhs = multiply(m2, f(x), f(y));
    worst = std::max(worst, (lhs.ambient - rhs.ambient).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

struct LtsIntegration {
  std::function<Point(const Point&)> map;
  double bracket_residual = 0.0;
  ConnectionModel conn1, conn2;
};

// Integrates an LTS morphism to a morphism of the symmetric spaces through
// the canonical connections. Rejects inputs whose bracket residual exceeds
// the tolerance.
inline LtsIntegration integrate_lts_morphism(const SymmetricSpaceModel& m1,
                                             const SymmetricSpaceModel& m2, const TangentMap& a,
                                             double tol = 1e-4, int hop_budget = 64,
                                             int steps = -1) {
  LtsIntegration out;
  out.conn1 = canonical_connection(m1);
  out.conn2 = canonical_connection(m2);
  LieTripleSystem l1 = lts(m1, out.conn1);
  LieTripleSystem l2 = lts(m2, out.conn2);
  const Mat& M = a.matrix;
  for (int i = 0; i < l1.dim; ++i)
    for (int j = 0; j < l1.dim; ++j)
      for (int k = 0; k < l1.dim; ++k) {
        Vec lhs = M * l1.bracket.at(i, j, k);
        Vec rhs = l2.bracket.apply(M.col(i), M.col(j), M.col(k));
        out.bracket_residual = std::max(out.bracket_residual, (lhs - rhs).lpNorm<Eigen::Infinity>());
      }
  if (out.bracket_residual > tol)
    throw NotAMorphismError("input map is not an LTS morphism (bracket residual " +
                                std::to_string(out.bracket_residual) + ")",
                            out.bracket_residual);
  out.map = integrate_global(out.conn1, out.conn2, a, hop_budget, steps);
  return out;
}

}  // namespace symspace
