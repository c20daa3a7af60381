#pragma once

#include <functional>
#include <future>
#include <vector>

#include "connection.hpp"

namespace symspace {

// A symmetric space given by its ambient multiplication map mu(x,y) = x.y
// together with a distinguished base point.
struct SymmetricSpaceModel {
  ModelPtr charted;
  SmoothMap mu;  // ambient pair (2N) -> ambient (N)
  Point base;
};

inline Vec mu_eval(const SymmetricSpaceModel& m, const Vec& x, const Vec& y) {
  Vec z(x.size() + y.size());
  z << x, y;
  Vec out = m.mu.eval(z);
  if (!out.allFinite()) throw EvaluationError("mu evaluation not finite");
  return out;
}

inline Point multiply(const SymmetricSpaceModel& m, const Point& x, const Point& y) {
  Vec out = mu_eval(m, x.ambient, y.ambient);
  double res = membership_residual(*m.charted, out);
  if (res > 1e4 * m.charted->tolerance)
    throw EngineError("multiplication left the model (membership residual " +
                      std::to_string(res) + ")");
  return Point{m.charted->id, out};
}

inline std::function<Point(const Point&)> symmetry(const SymmetricSpaceModel& m, const Point& x) {
  return [m, x](const Point& y) { return multiply(m, x, y); };
}

// ---------------------------------------------------------------------------
// Axiom checking
// ---------------------------------------------------------------------------

struct AxiomReport {
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  double closure = 0.0;
  int samples = 0;
};

// T_x mu_x in the chart at x, as a matrix on chart coordinates.
inline Mat symmetry_differential(const SymmetricSpaceModel& m, const Point& x) {
  const Chart& c = chart_at(*m.charted, x);
  SmoothMap g{c.dim, c.dim,
              [&m, &c, amb = x.ambient](const Vec& u) {
                return c.forward.eval(mu_eval(m, amb, c.inverse.eval(u)));
              },
              1.0};
  return jet(g, c.forward.eval(x.ambient), 1).d1;
}

// Residuals of (S1)-(S3) and the differential form (S4') over seeded
// low-discrepancy samples. Sampling is deterministic; the sweep is chunked
// over workers and merged by max, so the result does not depend on the
// worker count.
inline AxiomReport check_axioms(const SymmetricSpaceModel& m, int samples, uint64_t seed) {
  const ChartedModel& cm = *m.charted;
  auto chunk = [&](int begin, int end) {
    AxiomReport r;
    for (int i = begin; i < end; ++i) {
      Point x = sample_point(cm, 3 * i, seed);
      Point y = sample_point(cm, 3 * i + 1, seed);
      Point z = sample_point(cm, 3 * i + 2, seed);
      Vec xy = mu_eval(m, x.ambient, y.ambient);
      r.closure = std::max(r.closure, membership_residual(cm, xy));
      r.s1 = std::max(r.s1,
                      (mu_eval(m, x.ambient, x.ambient) - x.ambient).lpNorm<Eigen::Infinity>());
      r.s2 = std::max(r.s2, (mu_eval(m, x.ambient, xy) - y.ambient).lpNorm<Eigen::Infinity>());
      Vec yz = mu_eval(m, y.ambient, z.ambient);
      Vec lhs = mu_eval(m, x.ambient, yz);
      Vec rhs = mu_eval(m, xy, mu_eval(m, x.ambient, z.ambient));
      r.s3 = std::max(r.s3, (lhs - rhs).lpNorm<Eigen::Infinity>());
      Mat d = symmetry_differential(m, x);
      r.s4 = std::max(r.s4, op_norm(d + Mat::Identity(d.rows(), d.cols())));
    }
    return r;
  };

  int workers = std::min(worker_count(), std::max(1, samples / 8));
  std::vector<std::future<AxiomReport>> futs;
  int per = (samples + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int b = w * per, e = std::min(samples, (w + 1) * per);
    if (b >= e) break;
    futs.push_back(std::async(std::launch::async, chunk, b, e));
  }
  AxiomReport out;
  out.samples = samples;
  for (auto& f : futs) {
    AxiomReport r = f.get();
    out.s1 = std::max(out.s1, r.s1);
    out.s2 = std::max(out.s2, r.s2);
    out.s3 = std::max(out.s3, r.s3);
    out.s4 = std::max(out.s4, r.s4);
    out.closure = std::max(out.closure, r.closure);
  }
  return out;
}

// Fiberwise product on T_x M: residual of T mu(v,w) = 2v - w over the frame.
inline double tangent_square_residual(const SymmetricSpaceModel& m, const Point& x) {
  const ChartedModel& cm = *m.charted;
  const Chart& c = chart_at(cm, x);
  Vec u0 = c.forward.eval(x.ambient);
  const int n = cm.dim;
  Mat frame = tangent_frame(cm, x);
  SmoothMap pair_map{2 * n, n,
                     [&m, &c, n](const Vec& z) {
                       Vec p = c.inverse.eval(z.head(n));
                       Vec q = c.inverse.eval(z.tail(n));
                       return c.forward.eval(mu_eval(m, p, q));
                     },
                     1.0};
  Vec z0(2 * n);
  z0 << u0, u0;
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec vc = to_chart(c, TangentVector{x, frame.col(i)});
      Vec wc = to_chart(c, TangentVector{x, frame.col(j)});
      Vec dir(2 * n);
      dir << vc, wc;
      Vec got = directional_derivative(pair_map, z0, {dir});
      worst = std::max(worst, (got - (2.0 * vc - wc)).lpNorm<Eigen::Infinity>());
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Canonical connection
// ---------------------------------------------------------------------------

// B^c_x(v,w) = 1/2 d^2 mu^c(x,x)((0,v),(0,w)). Only the second slot moves,
// so the stencil reduces to one-slot second differences of mu^c(x,.), and
// symmetry in (v,w) is exact by polarization. dB is taken from the third
// derivative of mu^c with diagonal direction (d,d), which keeps the
// curvature path one differencing level above the exact map instead of two.
inline ConnectionModel canonical_connection(const SymmetricSpaceModel& m) {
  ConnectionModel conn;
  conn.model = m.charted;
  SmoothMap mu = m.mu;

  conn.coeff = [mu](const Chart& c, const Vec& x, const Vec& u, const Vec& v) -> Vec {
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return Vec::Zero(c.dim);
    Vec ud = u / nu, vd = v / nv;
    Vec first = c.inverse.eval(x);
    auto g = [&](const Vec& q) -> Vec {
      Vec amb = c.inverse.eval(q);
      Vec z(first.size() + amb.size());
      z << first, amb;
      Vec out = mu.eval(z);
      if (!out.allFinite()) throw EvaluationError("canonical connection: mu not finite");
      return c.forward.eval(out);
    };
    Vec g0 = g(x);
    const double h = detail::step_order2(mu.scale);
    auto pure2 = [&](const Vec& w) -> Vec {
      if (w.norm() == 0.0) return Vec::Zero(c.dim);
      auto d2 = [&](double hh) {
        return Vec((g(x + hh * w) - 2.0 * g0 + g(x - hh * w)) / (hh * hh));
      };
      return Vec((4.0 * d2(0.5 * h) - d2(h)) / 3.0);
    };
    return Vec(0.5 * nu * nv * 0.25 * (pure2(ud + vd) - pure2(ud - vd)));
  };

  conn.dcoeff = [mu](const Chart& c, const Vec& x, const Vec& d, const Vec& u, const Vec& v) -> Vec {
    const int n = c.dim;
    SmoothMap pair_map{2 * n, n,
                       [&c, &mu, n](const Vec& z) {
                         Vec p = c.inverse.eval(z.head(n));
                         Vec q = c.inverse.eval(z.tail(n));
                         Vec zz(p.size() + q.size());
                         zz << p, q;
                         return Vec(c.forward.eval(mu.eval(zz)));
                       },
                       mu.scale};
    Vec z0(2 * n);
    z0 << x, x;
    Vec dd(2 * n), uu = Vec::Zero(2 * n), vv = Vec::Zero(2 * n);
    dd << d, d;
    uu.tail(n) = u;
    vv.tail(n) = v;
    return Vec(0.5 * directional_derivative(pair_map, z0, {dd, uu, vv}));
  };
  return conn;
}

// ---------------------------------------------------------------------------
// Symmetries, translations and derivation fields along geodesics
// ---------------------------------------------------------------------------

// Residual of T_{a(t+s)} mu_{a(t)} = -P_{t+s}^{t-s}(a) over the frame at a(t+s).
inline double symmetry_transport_check(const SymmetricSpaceModel& m, const ConnectionModel& conn,
                                       const Geodesic& geo, double t, double s) {
  const ChartedModel& cm = *m.charted;
  Point xt = geo.at(t), xp = geo.at(t + s);
  Mat fp = tangent_frame(cm, xp);
  auto f = [&](const Point& q) { return multiply(m, xt, q); };
  Mat d = map_differential(cm, cm, f, xp);
  Mat f2 = tangent_frame(cm, f(xp));
  Mat transported = transport_many(conn, geo, t + s, t - s, fp);
  double worst = 0.0;
  for (int i = 0; i < cm.dim; ++i)
    worst = std::max(worst, (f2 * d.col(i) + transported.col(i)).lpNorm<Eigen::Infinity>());
  return worst;
}

// tau_{alpha,s} = mu_{alpha(s/2)} o mu_{alpha(0)}.
inline std::function<Point(const Point&)> translation(const SymmetricSpaceModel& m,
                                                      const Geodesic& geo, double s) {
  Point half = geo.at(0.5 * s);
  Point start = geo.at(0.0);
  return [m, half, start](const Point& x) { return multiply(m, half, multiply(m, start, x)); };
}

// xi_v(x) = 1/2 Tmu(v, Tmu(0_b, 0_x)); the inner term is the zero vector at
// b.x, so the outer tangent map collapses to the first-slot derivative of mu
// at (b, b.x) along v.
inline std::function<TangentVector(const Point&)> derivation_field(const SymmetricSpaceModel& m,
                                                                   const TangentVector& v) {
  SymmetricSpaceModel mm = m;
  Point b = v.base;
  Vec vamb = v.ambient;
  return [mm, b, vamb](const Point& x) -> TangentVector {
    double nv = vamb.norm();
    if (nv == 0.0) return TangentVector{x, Vec::Zero(vamb.size())};
    Vec vd = vamb / nv;
    Vec inner = mu_eval(mm, b.ambient, x.ambient);  // base point of the zero vector, b.x
    auto central = [&](double hh) {
      return Vec((mu_eval(mm, b.ambient + hh * vd, inner) -
                  mu_eval(mm, b.ambient - hh * vd, inner)) /
                 (2.0 * hh));
    };
    const double h = detail::step_order1(mm.mu.scale);
    Vec d = (4.0 * central(0.5 * h) - central(h)) / 3.0;
    return TangentVector{x, 0.5 * nv * d};
  };
}

// RK4 flow of a vector field in ambient coordinates.
inline Point flow(const std::function<TangentVector(const Point&)>& field, const Point& x0,
                  double T, int steps = 256) {
  Vec x = x0.ambient;
  const double dt = T / steps;
  auto rhs = [&](const Vec& p) { return field(Point{x0.model, p}).ambient; };
  for (int s = 0; s < steps; ++s) {
    Vec k1 = rhs(x);
    Vec k2 = rhs(x + 0.5 * dt * k1);
    Vec k3 = rhs(x + 0.5 * dt * k2);
    Vec k4 = rhs(x + dt * k3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!x.allFinite()) throw NonFiniteStateError("vector field flow");
  }
  return Point{x0.model, x};
}

// Derivation residual xi(x.y) - Tmu(xi(x), xi(y)) at one sample pair.
inline double derivation_residual(const SymmetricSpaceModel& m,
                                  const std::function<TangentVector(const Point&)>& xi,
                                  const Point& x, const Point& y) {
  Point xy = multiply(m, x, y);
  Vec lhs = xi(xy).ambient;
  Vec vx = xi(x).ambient, vy = xi(y).ambient;
  Vec pair_dir(2 * vx.size());
  pair_dir << vx, vy;
  SmoothMap mu = m.mu;
  Vec z0(2 * vx.size());
  z0 << x.ambient, y.ambient;
  Vec rhs = directional_derivative(mu, z0, {pair_dir});
  return (lhs - rhs).lpNorm<Eigen::Infinity>();
}

// ---------------------------------------------------------------------------
// Lie triple systems
// ---------------------------------------------------------------------------

struct LieTripleSystem {
  int dim = 0;
  Mat basis;         // host_dim x dim, orthonormal columns
  TriArray bracket;  // values as coordinate vectors in `basis`
};

// [v,w,z] = -R_b(v,w,z) over the orthonormal tangent frame at the base point.
inline LieTripleSystem lts(const SymmetricSpaceModel& m, const ConnectionModel& conn) {
  const ChartedModel& cm = *m.charted;
  LieTripleSystem sys;
  sys.dim = cm.dim;
  sys.basis = tangent_frame(cm, m.base);
  TriArray r = curvature_array(conn, m.base);
  sys.bracket = TriArray(cm.dim, cm.dim);
  for (int i = 0; i < cm.dim; ++i)
    for (int j = 0; j < cm.dim; ++j)
      for (int k = 0; k < cm.dim; ++k) sys.bracket.at(i, j, k) = -r.at(i, j, k);
  return sys;
}

struct LtsAxiomResiduals {
  double antisymmetry = 0.0;
  double cyclic = 0.0;
  double derivation = 0.0;
};

inline LtsAxiomResiduals lts_axiom_residuals(const LieTripleSystem& sys, int samples,
                                             uint64_t seed) {
  LtsAxiomResiduals out;
  const int n = sys.dim;
  auto br = [&](const Vec& a, const Vec& b, const Vec& c) { return sys.bracket.apply(a, b, c); };
  for (int i = 0; i < samples; ++i) {
    Vec x = halton_direction(6 * i, n, seed);
    Vec y = halton_direction(6 * i + 1, n, seed);
    Vec z = halton_direction(6 * i + 2, n, seed);
    Vec u = halton_direction(6 * i + 3, n, seed);
    Vec v = halton_direction(6 * i + 4, n, seed);
    Vec w = halton_direction(6 * i + 5, n, seed);
    out.antisymmetry = std::max(out.antisymmetry, br(x, x, y).lpNorm<Eigen::Infinity>());
    out.cyclic = std::max(
        out.cyclic, (br(x, y, z) + br(y, z, x) + br(z, x, y)).lpNorm<Eigen::Infinity>());
    Vec lhs = br(x, y, br(u, v, w));
    Vec rhs = br(br(x, y, u), v, w) + br(u, br(x, y, v), w) + br(u, v, br(x, y, w));
    out.derivation = std::max(out.derivation, (lhs - rhs).lpNorm<Eigen::Infinity>());
  }
  return out;
}

struct InvolutionSplit {
  LieTripleSystem lts;        // triple system on the (-1)-eigenspace
  Mat plus_basis;             // orthonormal basis of the (+1)-eigenspace
  double bracket_rule_residual = 0.0;  // worst violation of [g_e, g_f] rules
};

namespace detail {

inline Mat eigenspace_basis(const Mat& projector, int expected) {
  const int n = static_cast<int>(projector.rows());
  Mat basis(n, expected);
  int have = 0;
  for (int i = 0; i < n && have < expected; ++i) {
    Vec t = projector.col(i);
    for (int k = 0; k < have; ++k) t -= basis.col(k).dot(t) * basis.col(k);
    double nn = t.norm();
    if (nn > 1e-8) basis.col(have++) = t / nn;
  }
  if (have != expected) throw EngineError("eigenspace basis construction failed");
  return basis;
}

}  // namespace detail

// Triple system [x,y,z] := [[x,y],z] on the (-1)-eigenspace of an involutive
// Lie algebra automorphism. Exact linear algebra, no differencing.
inline InvolutionSplit lts_from_involution(const Bilinear& bracket, const Mat& sigma) {
  const int n = static_cast<int>(sigma.rows());
  if ((sigma * sigma - Mat::Identity(n, n)).lpNorm<Eigen::Infinity>() > 1e-10)
    throw EngineError("lts_from_involution: sigma is not involutive");

  auto br = [&](const Vec& a, const Vec& b) { return bracket.apply(a, b); };
  double auto_res = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec ei = Vec::Zero(n), ej = Vec::Zero(n);
      ei[i] = 1.0;
      ej[j] = 1.0;
      auto_res = std::max(auto_res,
                          (sigma * br(ei, ej) - br(sigma * ei, sigma * ej)).lpNorm<Eigen::Infinity>());
    }
  if (auto_res > 1e-9)
    throw EngineError("lts_from_involution: sigma is not a bracket automorphism (residual " +
                      std::to_string(auto_res) + ")");

  Mat pplus = 0.5 * (Mat::Identity(n, n) + sigma);
  Mat pminus = 0.5 * (Mat::Identity(n, n) - sigma);
  int dim_minus = static_cast<int>(std::lround((n - sigma.trace()) / 2.0));
  int dim_plus = n - dim_minus;

  InvolutionSplit out;
  out.plus_basis = dim_plus > 0 ? detail::eigenspace_basis(pplus, dim_plus) : Mat::Zero(n, 0);
  Mat minus = dim_minus > 0 ? detail::eigenspace_basis(pminus, dim_minus) : Mat::Zero(n, 0);

  // grading rules
  for (int i = 0; i < dim_plus; ++i)
    for (int j = 0; j < dim_plus; ++j)
      out.bracket_rule_residual =
          std::max(out.bracket_rule_residual,
                   (pminus * br(out.plus_basis.col(i), out.plus_basis.col(j))).lpNorm<Eigen::Infinity>());
  for (int i = 0; i < dim_plus; ++i)
    for (int j = 0; j < dim_minus; ++j)
      out.bracket_rule_residual =
          std::max(out.bracket_rule_residual,
                   (pplus * br(out.plus_basis.col(i), minus.col(j))).lpNorm<Eigen::Infinity>());
  for (int i = 0; i < dim_minus; ++i)
    for (int j = 0; j < dim_minus; ++j)
      out.bracket_rule_residual =
          std::max(out.bracket_rule_residual,
                   (pminus * br(minus.col(i), minus.col(j))).lpNorm<Eigen::Infinity>());

  out.lts.dim = dim_minus;
  out.lts.basis = minus;
  out.lts.bracket = TriArray(dim_minus, dim_minus);
  for (int i = 0; i < dim_minus; ++i)
    for (int j = 0; j < dim_minus; ++j)
      for (int k = 0; k < dim_minus; ++k) {
        Vec t = br(br(minus.col(i), minus.col(j)), minus.col(k));
        Vec coords = minus.transpose() * t;
        out.bracket_rule_residual = std::max(
            out.bracket_rule_residual, (t - minus * coords).lpNorm<Eigen::Infinity>());
        out.lts.bracket.at(i, j, k) = coords;
      }
  return out;
}

}  // namespace symspace
