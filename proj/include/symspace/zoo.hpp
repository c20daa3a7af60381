#pragma once

#include <cmath>
#include <string>

#include "symmetric.hpp"

namespace symspace {

struct ModelSpec {
  std::string kind;  // flat | quadric | matrix-group | involutions
  int n = 0;
  Mat J;             // quadric form matrix (defaults to identity)
  double a = 1.0;    // quadric level
  int k = 0;         // involution signature
  long seed = 0;
};

inline Vec vec_of(const Mat& m) {
  return Eigen::Map<const Vec>(m.data(), m.size());
}

inline Mat unvec(const Vec& v, int rows, int cols) {
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Flat space: mu(x,y) = 2x - y
// ---------------------------------------------------------------------------

inline SymmetricSpaceModel build_flat(int n) {
  if (n < 1) throw InvalidModelError("flat model needs n >= 1");
  auto cm = std::make_shared<ChartedModel>();
  cm->id = "flat-" + std::to_string(n);
  cm->dim = n;
  cm->ambient_dim = n;
  cm->membership = SmoothMap{n, 0, [](const Vec&) { return Vec(0); }, 1.0};
  Chart c;
  c.id = "global";
  c.dim = n;
  c.forward = SmoothMap{n, n, [](const Vec& x) { return x; }, 1.0};
  c.inverse = SmoothMap{n, n, [](const Vec& x) { return x; }, 1.0};
  c.in_domain = [](const Vec&) { return true; };
  c.radius = 1e9;
  cm->atlas = {c};
  cm->sample_charts = {0};
  cm->sample_radius = 1.0;
  cm->geodesically_complete = true;

  SymmetricSpaceModel m;
  m.charted = cm;
  m.mu = SmoothMap{2 * n, n,
                   [n](const Vec& z) { return Vec(2.0 * z.head(n) - z.tail(n)); }, 1.0};
  m.base = Point{cm->id, Vec::Zero(n)};
  return m;
}

// ---------------------------------------------------------------------------
// Quadrics: S = {x : <x,x>_J = a}, mu(x,y) = 2(<x,y>/<x,x>)x - y
// ---------------------------------------------------------------------------

namespace detail {

inline void add_stereographic_atlas(ChartedModel& cm, double r) {
  const int n = cm.ambient_dim;
  auto make = [&](double pole_sign, const std::string& id) {
    Chart c;
    c.id = id;
    c.dim = n - 1;
    c.forward = SmoothMap{n, n - 1,
                          [n, r, pole_sign](const Vec& x) {
                            double denom = r - pole_sign * x[n - 1];
                            if (std::abs(denom) < 1e-12 * r)
                              return Vec(Vec::Constant(n - 1, std::nan("")));
                            return Vec(r * x.head(n - 1) / denom);
                          },
                          r};
    c.inverse = SmoothMap{n - 1, n,
                          [n, r, pole_sign](const Vec& u) {
                            double s = u.squaredNorm();
                            Vec x(n);
                            x.head(n - 1) = 2.0 * r * r * u / (s + r * r);
                            x[n - 1] = pole_sign * r * (s - r * r) / (s + r * r);
                            return x;
                          },
                          r};
    c.in_domain = [n, r, pole_sign](const Vec& x) { return pole_sign * x[n - 1] < 0.5 * r; };
    c.radius = 10.0 * r;
    return c;
  };
  cm.atlas.push_back(make(+1.0, "stereo-north"));
  cm.atlas.push_back(make(-1.0, "stereo-south"));
  cm.sample_charts = {0, 1};
}

}  // namespace detail

inline SymmetricSpaceModel build_quadric(const Mat& J, double a) {
  const int n = static_cast<int>(J.rows());
  if (n < 2 || J.cols() != n) throw InvalidModelError("quadric needs a square J of size >= 2");
  if ((J - J.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + J.lpNorm<Eigen::Infinity>()))
    throw InvalidModelError("quadric form matrix must be symmetric");
  if (a == 0.0) throw InvalidModelError("quadric level a must be nonzero");

  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Vec d = es.eigenvalues();
  Mat q = es.eigenvectors();
  bool reachable = (a > 0.0 && d.maxCoeff() > 0.0) || (a < 0.0 && d.minCoeff() < 0.0);
  if (!reachable) throw InvalidModelError("empty quadric for the given (J, a)");

  auto cm = std::make_shared<ChartedModel>();
  cm->id = "quadric-" + std::to_string(n);
  cm->dim = n - 1;
  cm->ambient_dim = n;
  {
    Mat Jc = J;
    cm->membership = SmoothMap{n, 1,
                               [Jc, a](const Vec& x) {
                                 Vec r(1);
                                 r[0] = x.dot(Jc * x) - a;
                                 return r;
                               },
                               std::sqrt(std::abs(a))};
  }
  cm->geodesically_complete = true;

  const bool is_sphere = a > 0.0 && (J - Mat::Identity(n, n)).lpNorm<Eigen::Infinity>() < 1e-12;
  if (is_sphere) {
    double r = std::sqrt(a);
    cm->id = "sphere-" + std::to_string(n);
    detail::add_stereographic_atlas(*cm, r);
    cm->sample_radius = 0.6 * r;
  } else {
    // graph charts in the eigenbasis of J: solve coordinate i from the level
    double dmax = d.cwiseAbs().maxCoeff();
    double rchar = std::sqrt(std::abs(a) / dmax);
    int nonzero = 0;
    for (int i = 0; i < n; ++i)
      if (std::abs(d[i]) > 1e-12 * dmax) ++nonzero;
    const double floor = std::abs(a) / (2.0 * nonzero);

    int neg_count = 0, pos_count = 0, neg_idx = -1, pos_idx = -1;
    for (int i = 0; i < n; ++i) {
      if (d[i] < -1e-12 * dmax) {
        ++neg_count;
        neg_idx = i;
      }
      if (d[i] > 1e-12 * dmax) {
        ++pos_count;
        pos_idx = i;
      }
    }
    const bool two_sheet = (a < 0.0 && neg_count == 1) || (a > 0.0 && pos_count == 1);
    const int sheet_idx = a < 0.0 ? neg_idx : pos_idx;

    auto make = [&](int i, double sgn) {
      Chart c;
      c.id = "graph-" + std::to_string(i) + (sgn > 0 ? "+" : "-");
      c.dim = n - 1;
      Mat qc = q;
      Vec dc = d;
      c.forward = SmoothMap{n, n - 1,
                            [qc, i, n](const Vec& x) {
                              Vec y = qc.transpose() * x;
                              Vec out(n - 1);
                              int o = 0;
                              for (int j = 0; j < n; ++j)
                                if (j != i) out[o++] = y[j];
                              return out;
                            },
                            rchar};
      c.inverse = SmoothMap{n - 1, n,
                            [qc, dc, i, n, a, sgn](const Vec& u) {
                              Vec y(n);
                              double rest = 0.0;
                              int o = 0;
                              for (int j = 0; j < n; ++j)
                                if (j != i) {
                                  y[j] = u[o++];
                                  rest += dc[j] * y[j] * y[j];
                                }
                              double radicand = (a - rest) / dc[i];
                              if (radicand < 1e-14)
                                return Vec(Vec::Constant(n, std::nan("")));
                              y[i] = sgn * std::sqrt(radicand);
                              return Vec(qc * y);
                            },
                            rchar};
      c.in_domain = [qc, dc, i, sgn, floor](const Vec& x) {
        Vec y = qc.transpose() * x;
        return sgn * y[i] > 0.0 && std::abs(dc[i]) * y[i] * y[i] >= floor;
      };
      c.radius = 1e6;
      return c;
    };

    if (two_sheet) {
      cm->atlas = {make(sheet_idx, +1.0)};
      cm->sample_charts = {0};
    } else {
      for (int i = 0; i < n; ++i) {
        if (std::abs(d[i]) <= 1e-12 * dmax) continue;
        cm->atlas.push_back(make(i, +1.0));
        cm->atlas.push_back(make(i, -1.0));
      }
      for (size_t ci = 0; ci < cm->atlas.size(); ++ci) {
        // chart center is valid iff solving coordinate i at zero coords works
        Vec probe = cm->atlas[ci].inverse.eval(Vec::Zero(n - 1));
        if (probe.allFinite()) cm->sample_charts.push_back(static_cast<int>(ci));
      }
      if (cm->sample_charts.empty()) throw InvalidModelError("quadric has no valid chart center");
    }
    cm->sample_radius = 0.4 * rchar;
  }

  SymmetricSpaceModel m;
  m.charted = cm;
  {
    Mat Jc = J;
    m.mu = SmoothMap{2 * n, n,
                     [Jc, n](const Vec& z) {
                       Vec x = z.head(n), y = z.tail(n);
                       double xx = x.dot(Jc * x);
                       if (std::abs(xx) < 1e-14) return Vec(Vec::Constant(n, std::nan("")));
                       return Vec(2.0 * (x.dot(Jc * y) / xx) * x - y);
                     },
                     std::sqrt(std::abs(a))};
  }
  if (is_sphere) {
    Vec north = Vec::Zero(n);
    north[n - 1] = std::sqrt(a);
    m.base = Point{cm->id, north};
  } else {
    m.base = Point{cm->id, cm->atlas[cm->sample_charts.empty() ? 0 : cm->sample_charts[0]]
                               .inverse.eval(Vec::Zero(n - 1))};
  }
  if (!m.base.ambient.allFinite()) throw InvalidModelError("quadric base point construction failed");
  return m;
}

// ---------------------------------------------------------------------------
// Matrix group GL(n) as an open subset: mu(g,h) = g h^-1 g
// ---------------------------------------------------------------------------

inline SymmetricSpaceModel build_matrix_group(int n) {
  if (n < 1) throw InvalidModelError("matrix group needs n >= 1");
  const int nn = n * n;
  auto cm = std::make_shared<ChartedModel>();
  cm->id = "gl-" + std::to_string(n);
  cm->dim = nn;
  cm->ambient_dim = nn;
  cm->membership = SmoothMap{nn, 1,
                             [n](const Vec& x) {
                               Vec r(1);
                               double det = unvec(x, n, n).determinant();
                               r[0] = std::max(0.0, 1e-6 - std::abs(det));
                               return r;
                             },
                             1.0};
  Chart c;
  c.id = "entries";
  c.dim = nn;
  c.forward = SmoothMap{nn, nn, [](const Vec& x) { return x; }, 1.0};
  c.inverse = SmoothMap{nn, nn, [](const Vec& x) { return x; }, 1.0};
  c.in_domain = [n](const Vec& x) { return std::abs(unvec(x, n, n).determinant()) > 1e-6; };
  c.radius = 1e6;
  cm->atlas = {c};
  cm->sample_charts = {0};
  cm->sample_radius = 0.25;
  cm->geodesically_complete = false;  // charted domain only; see membership floor

  SymmetricSpaceModel m;
  m.charted = cm;
  m.mu = SmoothMap{2 * nn, nn,
                   [n, nn](const Vec& z) {
                     Mat g = unvec(z.head(nn), n, n);
                     Mat h = unvec(z.tail(nn), n, n);
                     Eigen::PartialPivLU<Mat> lu(h);
                     if (std::abs(lu.determinant()) < 1e-12)
                       return Vec(Vec::Constant(nn, std::nan("")));
                     Mat out = g * lu.solve(g);
                     return vec_of(out);
                   },
                   1.0};
  // base point: identity matrix; identity chart means ambient == coords
  m.base = Point{cm->id, vec_of(Mat::Identity(n, n))};
  return m;
}

// ---------------------------------------------------------------------------
// Spaces of involutions: {x : x^2 = 1}, mu(x,y) = x y x
// ---------------------------------------------------------------------------

namespace detail {

// Block-transvection chart centered at a diagonal sign matrix g: coordinates
// are the off-diagonal block pair (A, B) of r = I + A + B with x = r g r^-1.
inline Chart involution_chart(int n, const Mat& g, const std::string& id) {
  std::vector<int> plus, minus;
  for (int i = 0; i < n; ++i) (g(i, i) > 0 ? plus : minus).push_back(i);
  const int p = static_cast<int>(plus.size());
  const int q = static_cast<int>(minus.size());
  const int dim = 2 * p * q;

  auto pack = [p, q](const Mat& A, const Mat& B) {
    Vec out(2 * p * q);
    out.head(p * q) = vec_of(A);
    out.tail(p * q) = vec_of(B);
    return out;
  };
  auto blocks = [plus, minus, p, q](const Mat& X, Mat& x11, Mat& x12, Mat& x21, Mat& x22) {
    x11.resize(p, p);
    x12.resize(p, q);
    x21.resize(q, p);
    x22.resize(q, q);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) x11(i, j) = X(plus[i], plus[j]);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j) x12(i, j) = X(plus[i], minus[j]);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < p; ++j) x21(i, j) = X(minus[i], plus[j]);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) x22(i, j) = X(minus[i], minus[j]);
  };

  Chart c;
  c.id = id;
  c.dim = dim;
  c.forward = SmoothMap{n * n, dim,
                        [n, p, q, blocks, pack](const Vec& xv) {
                          Mat X = unvec(xv, n, n);
                          Mat x11, x12, x21, x22;
                          blocks(X, x11, x12, x21, x22);
                          Eigen::PartialPivLU<Mat> lu_a(Mat::Identity(p, p) + x11);
                          Eigen::PartialPivLU<Mat> lu_b(Mat::Identity(q, q) - x22);
                          if (std::abs(lu_a.determinant()) < 1e-12 ||
                              std::abs(lu_b.determinant()) < 1e-12)
                            return Vec(Vec::Constant(2 * p * q, std::nan("")));
                          Mat A = -lu_a.solve(x12);
                          Mat B = lu_b.solve(x21);
                          return pack(A, B);
                        },
                        1.0};
  Mat gc = g;
  c.inverse = SmoothMap{dim, n * n,
                        [n, p, q, plus, minus, gc](const Vec& u) {
                          Mat A = unvec(u.head(p * q), p, q);
                          Mat B = unvec(u.tail(p * q), q, p);
                          Mat r = Mat::Identity(n, n);
                          for (int i = 0; i < p; ++i)
                            for (int j = 0; j < q; ++j) r(plus[i], minus[j]) = A(i, j);
                          for (int i = 0; i < q; ++i)
                            for (int j = 0; j < p; ++j) r(minus[i], plus[j]) = B(i, j);
                          Eigen::PartialPivLU<Mat> lu(r);
                          if (std::abs(lu.determinant()) < 1e-12)
                            return Vec(Vec::Constant(n * n, std::nan("")));
                          Mat X = r * gc * lu.inverse();
                          return vec_of(X);
                        },
                        1.0};
  c.in_domain = [n, blocks, p, q](const Vec& xv) {
    Mat X = unvec(xv, n, n);
    Mat x11, x12, x21, x22;
    blocks(X, x11, x12, x21, x22);
    return std::abs((Mat::Identity(p, p) + x11).determinant()) > 0.15 &&
           std::abs((Mat::Identity(q, q) - x22).determinant()) > 0.15;
  };
  c.radius = 1e3;
  return c;
}

}  // namespace detail

inline SymmetricSpaceModel build_involutions(int n, int k) {
  if (n < 1 || k < 0 || k > n) throw InvalidModelError("involutions need 0 <= k <= n");
  const int nn = n * n;
  auto cm = std::make_shared<ChartedModel>();
  cm->id = "invol-" + std::to_string(n) + "-" + std::to_string(k);
  cm->dim = 2 * k * (n - k);
  cm->ambient_dim = nn;
  const double trace_pin = 2.0 * k - n;
  cm->membership = SmoothMap{nn, nn + 1,
                             [n, nn, trace_pin](const Vec& xv) {
                               Mat X = unvec(xv, n, n);
                               Mat r = X * X - Mat::Identity(n, n);
                               Vec out(nn + 1);
                               out.head(nn) = vec_of(r);
                               out[nn] = X.trace() - trace_pin;
                               return out;
                             },
                             1.0};

  Mat b = Mat::Identity(n, n);
  for (int i = k; i < n; ++i) b(i, i) = -1.0;
  cm->atlas.push_back(detail::involution_chart(n, b, "transvection+"));
  if (2 * k == n) cm->atlas.push_back(detail::involution_chart(n, Mat(-b), "transvection-"));
  cm->sample_charts = {0};
  cm->sample_radius = 0.3;
  cm->geodesically_complete = false;  // finite atlas; distant involutions fall outside it

  SymmetricSpaceModel m;
  m.charted = cm;
  m.mu = SmoothMap{2 * nn, nn,
                   [n, nn](const Vec& z) {
                     Mat x = unvec(z.head(nn), n, n);
                     Mat y = unvec(z.tail(nn), n, n);
                     return vec_of(Mat(x * y * x));
                   },
                   1.0};
  m.base = Point{cm->id, vec_of(b)};
  return m;
}

// ---------------------------------------------------------------------------
// Dispatch and test-corpus linear algebra helpers
// ---------------------------------------------------------------------------

inline SymmetricSpaceModel build_model(const ModelSpec& spec) {
  if (spec.kind == "flat") return build_flat(spec.n);
  if (spec.kind == "quadric") {
    Mat J = spec.J.size() > 0 ? spec.J : Mat(Mat::Identity(spec.n, spec.n));
    return build_quadric(J, spec.a);
  }
  if (spec.kind == "matrix-group") return build_matrix_group(spec.n);
  if (spec.kind == "involutions") return build_involutions(spec.n, spec.k);
  throw InvalidModelError("unknown model kind: " + spec.kind);
}

// Commutator bracket of gl(n) as a Bilinear over vec'd matrices.
inline Bilinear matrix_commutator_bracket(int n) {
  const int nn = n * n;
  Bilinear b;
  b.in_dim = nn;
  b.out_dim = nn;
  b.comp.assign(nn, Mat::Zero(nn, nn));
  for (int pcol = 0; pcol < nn; ++pcol) {
    Mat ep = unvec(Vec::Unit(nn, pcol), n, n);
    for (int qcol = 0; qcol < nn; ++qcol) {
      Mat eq = unvec(Vec::Unit(nn, qcol), n, n);
      Vec out = vec_of(Mat(ep * eq - eq * ep));
      for (int o = 0; o < nn; ++o) b.comp[o](pcol, qcol) = out[o];
    }
  }
  return b;
}

// sigma(X) = -X^T on vec'd matrices.
inline Mat negative_transpose_involution(int n) {
  const int nn = n * n;
  Mat s = Mat::Zero(nn, nn);
  for (int p = 0; p < nn; ++p) {
    Mat ep = unvec(Vec::Unit(nn, p), n, n);
    s.col(p) = vec_of(Mat(-ep.transpose()));
  }
  return s;
}

}  // namespace symspace
