#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numjet.hpp"

namespace symspace {

// Points and tangent vectors live in ambient coordinates; charts are views.
struct Point {
  std::string model;
  Vec ambient;
};

struct TangentVector {
  Point base;
  Vec ambient;
};

struct Chart {
  std::string id;
  int dim = 0;
  SmoothMap forward;   // ambient -> chart coordinates
  SmoothMap inverse;   // chart coordinates -> ambient
  std::function<bool(const Vec&)> in_domain;  // on ambient coordinates
  double radius = 0.0;  // bound on valid chart coordinates
};

struct ChartedModel {
  std::string id;
  int dim = 0;
  int ambient_dim = 0;
  SmoothMap membership;  // ambient -> residual vector; codom 0 for open sets
  std::vector<Chart> atlas;
  double tolerance = 1e-9;
  double tangent_tolerance = 1e-8;
  bool geodesically_complete = false;
  double sample_radius = 0.5;  // chart-coordinate ball used by seeded samplers
  std::vector<int> sample_charts;  // atlas indices whose coordinate ball at 0 is valid
};

using ModelPtr = std::shared_ptr<const ChartedModel>;

inline double membership_residual(const ChartedModel& m, const Vec& ambient) {
  if (m.membership.codom == 0) return 0.0;
  Vec r = m.membership.eval(ambient);
  if (!r.allFinite()) return std::numeric_limits<double>::infinity();
  return r.lpNorm<Eigen::Infinity>();
}

inline bool is_member(const ChartedModel& m, const Vec& ambient) {
  return membership_residual(m, ambient) < m.tolerance;
}

inline Point make_point(const ChartedModel& m, const Vec& ambient) {
  return Point{m.id, ambient};
}

// First atlas chart whose domain test accepts x; atlas order is part of the
// model definition, so this is deterministic.
inline const Chart& chart_at(const ChartedModel& m, const Point& x) {
  for (const Chart& c : m.atlas)
    if (c.in_domain(x.ambient)) return c;
  throw UncoveredPointError("no chart accepts point on model " + m.id);
}

inline int chart_index_at(const ChartedModel& m, const Vec& ambient) {
  for (size_t i = 0; i < m.atlas.size(); ++i)
    if (m.atlas[i].in_domain(ambient)) return static_cast<int>(i);
  throw UncoveredPointError("no chart accepts point on model " + m.id);
}

inline Vec chart_coords(const Chart& c, const Point& x) { return c.forward.eval(x.ambient); }

// Pushes a tangent vector through d(forward).
inline Vec to_chart(const Chart& c, const TangentVector& v) {
  return directional_derivative(c.forward, v.base.ambient, {v.ambient});
}

// Pushes chart-coordinate data through d(inverse) back to ambient form.
inline TangentVector from_chart(const ChartedModel& m, const Chart& c, const Vec& x_coords,
                                const Vec& v_coords) {
  Vec amb = c.inverse.eval(x_coords);
  Vec v_amb = directional_derivative(c.inverse, x_coords, {v_coords});
  return TangentVector{Point{m.id, amb}, v_amb};
}

inline Point point_from_chart(const ChartedModel& m, const Chart& c, const Vec& coords) {
  return Point{m.id, c.inverse.eval(coords)};
}

namespace detail {

// Right singular vectors of the membership derivative with singular value
// above threshold; their span is the normal space.
inline Mat normal_space_basis(const ChartedModel& m, const Point& x) {
  if (m.membership.codom == 0) return Mat::Zero(m.ambient_dim, 0);
  Jet j = jet(m.membership, x.ambient, 1);
  Eigen::JacobiSVD<Mat> svd(j.d1, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const int expected = m.ambient_dim - m.dim;
  double smax = s.size() > 0 ? s[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > 1e-6 * std::max(smax, 1.0)) ++rank;
  if (rank != expected)
    throw DegeneratePointError("membership derivative rank " + std::to_string(rank) +
                               " != expected codimension " + std::to_string(expected) +
                               " on model " + m.id);
  return svd.matrixV().leftCols(rank);
}

}  // namespace detail

// Least-squares projection of an ambient vector onto the kernel of the
// membership-residual derivative. Idempotent by construction.
inline TangentVector project_tangent(const ChartedModel& m, const Point& x, const Vec& w) {
  if (m.membership.codom == 0) return TangentVector{x, w};
  Mat nrm = detail::normal_space_basis(m, x);
  Vec proj = w - nrm * (nrm.transpose() * w);
  return TangentVector{x, proj};
}

inline double tangency_residual(const ChartedModel& m, const TangentVector& v) {
  if (m.membership.codom == 0) return 0.0;
  Jet j = jet(m.membership, v.base.ambient, 1);
  return (j.d1 * v.ambient).lpNorm<Eigen::Infinity>();
}

// Deterministic orthonormal tangent frame: Gram-Schmidt over the projected
// ambient basis vectors in index order. Columns span T_x M.
inline Mat tangent_frame(const ChartedModel& m, const Point& x) {
  Mat frame(m.ambient_dim, m.dim);
  int have = 0;
  for (int i = 0; i < m.ambient_dim && have < m.dim; ++i) {
    Vec e = Vec::Zero(m.ambient_dim);
    e[i] = 1.0;
    Vec t = project_tangent(m, x, e).ambient;
    for (int k = 0; k < have; ++k) t -= frame.col(k).dot(t) * frame.col(k);
    double n = t.norm();
    if (n > 1e-8) frame.col(have++) = t / n;
  }
  if (have != m.dim)
    throw DegeneratePointError("could not build a full tangent frame on model " + m.id);
  return frame;
}

inline Vec frame_coords(const Mat& frame, const Vec& ambient) {
  return frame.transpose() * ambient;
}

// Deterministic member point near the given chart's center region, used by
// the seeded samplers. Halton index -> chart ball -> manifold.
inline Point sample_point(const ChartedModel& m, uint64_t index, uint64_t seed) {
  int ci = 0;
  if (!m.sample_charts.empty())
    ci = m.sample_charts[index % m.sample_charts.size()];
  const Chart& c = m.atlas[ci];
  Vec u = m.sample_radius * halton_point(index, c.dim, seed);
  Vec amb = c.inverse.eval(u);
  if (!amb.allFinite())
    throw EvaluationError("sample_point: chart inverse not finite on model " + m.id);
  return Point{m.id, amb};
}

// Differential of a map between charted models at x, expressed in the
// orthonormal tangent frames at x and f(x). Stencil points are moved along
// chart curves so they stay on the manifold; `h` should sit above the noise
// floor of f (maps built from ODE solves are accurate to ~1e-8).
inline Mat map_differential(const ChartedModel& m1, const ChartedModel& m2,
                            const std::function<Point(const Point&)>& f, const Point& x,
                            double h = 1e-2) {
  const Chart& c1 = chart_at(m1, x);
  Point fx = f(x);
  const Chart& c2 = chart_at(m2, fx);
  Mat f1 = tangent_frame(m1, x), f2 = tangent_frame(m2, fx);
  Vec u0 = c1.forward.eval(x.ambient);
  Vec w0 = c2.forward.eval(fx.ambient);
  Mat out(m2.dim, m1.dim);
  for (int i = 0; i < m1.dim; ++i) {
    Vec vc = to_chart(c1, TangentVector{x, f1.col(i)});
    auto g = [&](double s) {
      return c2.forward.eval(f(point_from_chart(m1, c1, Vec(u0 + s * vc))).ambient);
    };
    Vec coarse = (g(h) - g(-h)) / (2.0 * h);
    Vec fine = (g(0.5 * h) - g(-0.5 * h)) / h;
    Vec d = (4.0 * fine - coarse) / 3.0;
    Vec amb = directional_derivative(c2.inverse, w0, {d});
    out.col(i) = f2.transpose() * amb;
  }
  return out;
}

inline TangentVector sample_tangent(const ChartedModel& m, const Point& x, uint64_t index,
                                    uint64_t seed) {
  Vec w = halton_direction(index, m.ambient_dim, seed);
  TangentVector t = project_tangent(m, x, w);
  double n = t.ambient.norm();
  if (n < 1e-10) {
    Mat f = tangent_frame(m, x);
    return TangentVector{x, f.col(static_cast<int>(index) % m.dim)};
  }
  t.ambient /= n;
  return t;
}

}  // namespace symspace
