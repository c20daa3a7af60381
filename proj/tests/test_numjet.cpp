#include <catch2/catch_amalgamated.hpp>

#include "symspace/numjet.hpp"

using namespace symspace;

namespace {

SmoothMap scalar_map(std::function<double(double)> f) {
  return SmoothMap{1, 1,
                   [f](const Vec& x) {
                     Vec y(1);
                     y[0] = f(x[0]);
                     return y;
                   },
                   1.0};
}

Vec v1(double a) {
  Vec v(1);
  v[0] = a;
  return v;
}

}  // namespace

TEST_CASE("first derivative of x^2 at 3") {
  SmoothMap f = scalar_map([](double x) { return x * x; });
  Vec d = directional_derivative(f, v1(3.0), {v1(1.0)});
  REQUIRE(d[0] == Catch::Approx(6.0).margin(1e-9));
}

TEST_CASE("second derivative of a bilinear form is constant in x") {
  SmoothMap f{2, 1,
              [](const Vec& x) {
                Vec y(1);
                y[0] = 3.0 * x[0] * x[1];
                return y;
              },
              1.0};
  Vec u(2), v(2);
  u << 1.0, 2.0;
  v << -0.5, 1.5;
  Vec xa(2), xb(2);
  xa << 0.3, -0.7;
  xb << 5.0, 2.0;
  Vec da = directional_derivative(f, xa, {u, v});
  Vec db = directional_derivative(f, xb, {u, v});
  // d2(u,v) = 3(u0 v1 + u1 v0)
  double expect = 3.0 * (u[0] * v[1] + u[1] * v[0]);
  REQUIRE(da[0] == Catch::Approx(expect).margin(1e-7));
  REQUIRE(db[0] == Catch::Approx(expect).margin(1e-7));
}

TEST_CASE("third derivative of sin at 0.7") {
  SmoothMap f = scalar_map([](double x) { return std::sin(x); });
  Vec d = directional_derivative(f, v1(0.7), {v1(1.0), v1(1.0), v1(1.0)});
  REQUIRE(d[0] == Catch::Approx(-std::cos(0.7)).margin(1e-6));
}

TEST_CASE("identity jet has identity first derivative") {
  SmoothMap f{3, 3, [](const Vec& x) { return x; }, 1.0};
  Vec x(3);
  x << 0.1, -2.0, 4.0;
  Jet j = jet(f, x, 1);
  REQUIRE((j.d1 - Mat::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("affine map has vanishing second derivative") {
  Mat a(2, 2);
  a << 1.0, 2.0, -3.0, 0.5;
  Vec b(2);
  b << 4.0, -1.0;
  SmoothMap f{2, 2, [a, b](const Vec& x) { return Vec(a * x + b); }, 1.0};
  Vec x(2);
  x << 0.3, 0.9;
  Jet j = jet(f, x, 2);
  for (const Mat& d2 : j.d2) REQUIRE(d2.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("polarized second derivatives are exactly symmetric") {
  SmoothMap f{3, 2,
              [](const Vec& x) {
                Vec y(2);
                y[0] = std::sin(x[0] * x[1]) + x[2] * x[2] * x[0];
                y[1] = std::exp(0.3 * x[0] - 0.2 * x[2]) * x[1];
                return y;
              },
              1.0};
  Vec x(3);
  x << 0.4, -0.8, 0.2;
  Vec u = halton_direction(3, 3, 7), v = halton_direction(4, 3, 7);
  Vec duv = directional_derivative(f, x, {u, v});
  Vec dvu = directional_derivative(f, x, {v, u});
  REQUIRE(duv == dvu);  // bit-identical by polarization
  Jet j = jet(f, x, 2);
  for (const Mat& d2 : j.d2)
    REQUIRE((d2 - d2.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("chain rule holds to 1e-7 relative") {
  SmoothMap g{2, 2,
              [](const Vec& x) {
                Vec y(2);
                y[0] = std::sin(x[0]) + 0.5 * x[1];
                y[1] = x[0] * x[1];
                return y;
              },
              1.0};
  SmoothMap f{2, 1,
              [](const Vec& y) {
                Vec z(1);
                z[0] = std::exp(0.2 * y[0]) + y[1] * y[1];
                return z;
              },
              1.0};
  SmoothMap fg{2, 1, [f, g](const Vec& x) { return f.eval(g.eval(x)); }, 1.0};
  Vec x(2);
  x << 0.7, -0.3;
  Mat dg = jet(g, x, 1).d1;
  Mat df = jet(f, g.eval(x), 1).d1;
  Mat direct = jet(fg, x, 1).d1;
  Mat composed = df * dg;
  REQUIRE((direct - composed).lpNorm<Eigen::Infinity>() <
          1e-7 * (1.0 + composed.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("halving the step barely changes polynomial second derivatives") {
  auto poly = [](const Vec& x) {
    Vec y(1);
    y[0] = x[0] * x[0] * x[0] - 2.0 * x[0] * x[1] * x[1] + x[1] * x[1] * x[1] * x[1];
    return y;
  };
  SmoothMap f{2, 1, poly, 1.0};
  SmoothMap f_half{2, 1, poly, 0.5};  // scale halves every stencil step
  Vec x(2);
  x << 1.2, -0.4;
  Vec u = halton_direction(1, 2, 0), v = halton_direction(2, 2, 0);
  Vec a = directional_derivative(f, x, {u, v});
  Vec b = directional_derivative(f_half, x, {u, v});
  REQUIRE((a - b).lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + a.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("zero direction short-circuits to zero") {
  SmoothMap f = scalar_map([](double x) { return std::exp(x); });
  Vec d = directional_derivative(f, v1(0.3), {v1(0.0)});
  REQUIRE(d[0] == 0.0);
}

TEST_CASE("non-finite evaluation raises EvaluationError") {
  SmoothMap f = scalar_map([](double x) { return std::sqrt(x); });  // NaN left of 0
  REQUIRE_THROWS_AS(directional_derivative(f, v1(1e-9), {v1(1.0)}), EvaluationError);
}

TEST_CASE("third order jet of a cubic form matches the symmetric coefficients") {
  SmoothMap f{2, 1,
              [](const Vec& x) {
                Vec y(1);
                y[0] = x[0] * x[0] * x[1];
                return y;
              },
              1.0};
  Vec x(2);
  x << 0.5, 0.25;
  Jet j = jet(f, x, 3);
  // d3/dx0 dx0 dx1 = 2, all symmetric placements
  REQUIRE(j.d3[0][0](0, 1) == Catch::Approx(2.0).margin(2e-6));
  REQUIRE(j.d3[0][0](1, 0) == Catch::Approx(2.0).margin(2e-6));
  REQUIRE(j.d3[0][1](0, 0) == Catch::Approx(2.0).margin(2e-6));
  REQUIRE(j.d3[0][0](0, 0) == Catch::Approx(0.0).margin(2e-6));
  REQUIRE(j.d3[0][1](1, 1) == Catch::Approx(0.0).margin(2e-6));
}
