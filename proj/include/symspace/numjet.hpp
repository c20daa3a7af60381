#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace symspace {

// A map given purely as a coordinate function. `scale` is the characteristic
// length used to size finite-difference steps; stencil points at distance a
// few multiples of scale*eps^(1/5) from the expansion point must stay inside
// the domain of definition.
struct SmoothMap {
  int dom = 0;
  int codom = 0;
  std::function<Vec(const Vec&)> eval;
  double scale = 1.0;
};

struct Jet {
  Vec value;
  Mat d1;                           // codom x dom
  std::vector<Mat> d2;              // d2[i](j,k), symmetric in (j,k)
  std::vector<std::vector<Mat>> d3; // d3[i][j](k,l), symmetric in all three
  int order = 1;
};

namespace detail {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

inline double step_order1(double scale) { return scale * std::cbrt(kEps); }
// eps^(1/3) balances truncation and rounding for first derivatives only; the
// second and third order stencils divide by h^2 and h^3 and need the larger
// eps^(1/5)-sized steps to keep rounding below the spec tolerances.
inline double step_order2(double scale) { return scale * 2.0 * std::pow(kEps, 0.2); }
inline double step_order3(double scale) { return scale * 4.0 * std::pow(kEps, 0.2); }

inline Vec eval_checked(const SmoothMap& f, const Vec& x) {
  Vec y = f.eval(x);
  if (y.size() != f.codom || !y.allFinite()) {
    std::ostringstream os;
    os << "non-finite evaluation at [" << x.transpose() << "]";
    throw EvaluationError(os.str());
  }
  return y;
}

// Central difference df(x)(s) with base step h, one Richardson level.
inline Vec d1_dir_h(const SmoothMap& f, const Vec& x, const Vec& s, double h) {
  auto central = [&](double hh) {
    return Vec(((eval_checked(f, x + hh * s) - eval_checked(f, x - hh * s)) / (2.0 * hh)).eval());
  };
  Vec coarse = central(h);
  Vec fine = central(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

// Pure second derivative d2f(x)(s,s), one Richardson level.
inline Vec d2_dir_h(const SmoothMap& f, const Vec& x, const Vec& s, double h, const Vec& f0) {
  auto second = [&](double hh) {
    return Vec(((eval_checked(f, x + hh * s) - 2.0 * f0 + eval_checked(f, x - hh * s)) / (hh * hh)).eval());
  };
  Vec coarse = second(h);
  Vec fine = second(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

// Pure third derivative d3f(x)(s,s,s), one Richardson level.
inline Vec d3_dir_h(const SmoothMap& f, const Vec& x, const Vec& s, double h) {
  auto third = [&](double hh) {
    Vec p2 = eval_checked(f, x + 2.0 * hh * s);
    Vec p1 = eval_checked(f, x + hh * s);
    Vec m1 = eval_checked(f, x - hh * s);
    Vec m2 = eval_checked(f, x - 2.0 * hh * s);
    return Vec(((p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * hh * hh * hh)).eval());
  };
  Vec coarse = third(h);
  Vec fine = third(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace detail

// Mixed directional derivative of order |dirs| (1 to 3) by central
// differences with one Richardson extrapolation level. Mixed orders are
// polarized into pure directional stencils, which makes the result exactly
// symmetric under permutation of the directions.
inline Vec directional_derivative(const SmoothMap& f, const Vec& x, const std::vector<Vec>& dirs) {
  const int order = static_cast<int>(dirs.size());
  if (order < 1 || order > 3) throw EngineError("directional_derivative: order must be 1, 2 or 3");

  std::vector<Vec> unit(dirs.size());
  double factor = 1.0;
  for (size_t i = 0; i < dirs.size(); ++i) {
    double n = dirs[i].norm();
    if (n == 0.0) return Vec::Zero(f.codom);  // linearity in each slot
    unit[i] = dirs[i] / n;
    factor *= n;
  }

  if (order == 1) {
    return factor * detail::d1_dir_h(f, x, unit[0], detail::step_order1(f.scale));
  }
  if (order == 2) {
    double h = detail::step_order2(f.scale);
    Vec f0 = detail::eval_checked(f, x);
    Vec plus = unit[0] + unit[1];
    Vec minus = unit[0] - unit[1];
    Vec a = plus.norm() == 0.0 ? Vec::Zero(f.codom) : detail::d2_dir_h(f, x, plus, h, f0);
    Vec b = minus.norm() == 0.0 ? Vec::Zero(f.codom) : detail::d2_dir_h(f, x, minus, h, f0);
    return factor * 0.25 * (a - b);
  }
  double h = detail::step_order3(f.scale);
  auto cubic = [&](const Vec& s) {
    return s.norm() == 0.0 ? Vec(Vec::Zero(f.codom)) : detail::d3_dir_h(f, x, s, h);
  };
  Vec c1 = cubic(unit[0] + unit[1] + unit[2]);
  Vec c2 = cubic(unit[0] + unit[1] - unit[2]);
  Vec c3 = cubic(unit[0] - unit[1] + unit[2]);
  Vec c4 = cubic(unit[0] - unit[1] - unit[2]);
  return factor * (c1 - c2 - c3 + c4) / 24.0;
}

// First derivative along `s` with an explicit base step. Used when the map
// being differentiated is itself a finite-difference quantity, where the
// step has to sit well above the noise floor of the inner evaluation.
inline Vec directional_derivative_h(const SmoothMap& f, const Vec& x, const Vec& s, double h) {
  double n = s.norm();
  if (n == 0.0) return Vec::Zero(f.codom);
  return n * detail::d1_dir_h(f, x, s / n, h);
}

inline Jet jet(const SmoothMap& f, const Vec& x, int order) {
  if (order < 1 || order > 3) throw EngineError("jet: order must be 1, 2 or 3");
  Jet j;
  j.order = order;
  j.value = detail::eval_checked(f, x);
  j.d1.resize(f.codom, f.dom);
  for (int k = 0; k < f.dom; ++k) {
    Vec e = Vec::Zero(f.dom);
    e[k] = 1.0;
    j.d1.col(k) = directional_derivative(f, x, {e});
  }
  if (order >= 2) {
    j.d2.assign(f.codom, Mat::Zero(f.dom, f.dom));
    for (int a = 0; a < f.dom; ++a) {
      Vec ea = Vec::Zero(f.dom);
      ea[a] = 1.0;
      for (int b = a; b < f.dom; ++b) {
        Vec eb = Vec::Zero(f.dom);
        eb[b] = 1.0;
        Vec v = directional_derivative(f, x, {ea, eb});
        for (int i = 0; i < f.codom; ++i) {
          j.d2[i](a, b) = v[i];
          j.d2[i](b, a) = v[i];
        }
      }
    }
  }
  if (order >= 3) {
    j.d3.assign(f.codom, std::vector<Mat>(f.dom, Mat::Zero(f.dom, f.dom)));
    for (int a = 0; a < f.dom; ++a) {
      Vec ea = Vec::Zero(f.dom);
      ea[a] = 1.0;
      for (int b = a; b < f.dom; ++b) {
        Vec eb = Vec::Zero(f.dom);
        eb[b] = 1.0;
        for (int c = b; c < f.dom; ++c) {
          Vec ec = Vec::Zero(f.dom);
          ec[c] = 1.0;
          Vec v = directional_derivative(f, x, {ea, eb, ec});
          int perm[6][3] = {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
          for (int i = 0; i < f.codom; ++i)
            for (auto& p : perm) j.d3[i][p[0]](p[1], p[2]) = v[i];
        }
      }
    }
  }
  return j;
}

}  // namespace symspace
