#include <catch2/catch_amalgamated.hpp>

#include "symspace/zoo.hpp"

using namespace symspace;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// Mixed second derivative by nested first-order differences; independent of
// the polarized stencil used by jet().
Vec nested_mixed_d2(const SmoothMap& f, const Vec& x, const Vec& u, const Vec& v) {
  const double h = 1e-4;
  auto d1 = [&](const Vec& at) {
    return Vec((f.eval(at + h * u) - f.eval(at - h * u)) / (2.0 * h));
  };
  return (d1(x + h * v) - d1(x - h * v)) / (2.0 * h);
}

}  // namespace

TEST_CASE("flat model has one global identity chart") {
  auto m = build_flat(3);
  Point x{m.charted->id, v3(1.0, -2.0, 0.5)};
  const Chart& c = chart_at(*m.charted, x);
  REQUIRE(c.id == "global");
  TangentVector v{x, v3(0.1, 0.2, 0.3)};
  REQUIRE((to_chart(c, v) - v.ambient).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("sphere atlas covers the poles with the opposite chart") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  Point north{m.charted->id, v3(0, 0, 1)};
  Point south{m.charted->id, v3(0, 0, -1)};
  REQUIRE(chart_at(*m.charted, north).id == "stereo-south");
  REQUIRE(chart_at(*m.charted, south).id == "stereo-north");
  REQUIRE(is_member(*m.charted, north.ambient));
  REQUIRE_FALSE(is_member(*m.charted, v3(0, 0, 1.1)));
}

TEST_CASE("stereographic differential at an equator point matches the closed form") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  Point e1{m.charted->id, v3(1, 0, 0)};
  const Chart& c = chart_at(*m.charted, e1);
  REQUIRE(c.id == "stereo-north");  // phi(x) = (x1, x2) / (1 - x3)
  // hand oracle: d phi(e1) e3 = (1, 0), d phi(e1) e2 = (0, 1)
  Vec d3 = to_chart(c, TangentVector{e1, v3(0, 0, 1)});
  Vec d2 = to_chart(c, TangentVector{e1, v3(0, 1, 0)});
  REQUIRE(d3[0] == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(d3[1] == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(d2[0] == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(d2[1] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("chart round trip is the identity on tangent vectors") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  for (int i = 0; i < 8; ++i) {
    Point x = sample_point(*m.charted, i, 11);
    TangentVector v = sample_tangent(*m.charted, x, i, 3);
    const Chart& c = chart_at(*m.charted, x);
    Vec coords = chart_coords(c, x);
    TangentVector back = from_chart(*m.charted, c, coords, to_chart(c, v));
    REQUIRE((back.ambient - v.ambient).norm() < 1e-8 * (1.0 + v.ambient.norm()));
    REQUIRE((back.base.ambient - x.ambient).norm() < 1e-9);
  }
}

TEST_CASE("project_tangent on the sphere") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  Point e3{m.charted->id, v3(0, 0, 1)};
  SECTION("normal direction is killed") {
    TangentVector t = project_tangent(*m.charted, e3, v3(0, 0, 1));
    REQUIRE(t.ambient.norm() < 1e-10);
  }
  SECTION("orthogonal decomposition") {
    TangentVector t = project_tangent(*m.charted, e3, v3(1, 0, 1));
    REQUIRE((t.ambient - v3(1, 0, 0)).norm() < 1e-10);
  }
  SECTION("idempotence") {
    for (int i = 0; i < 6; ++i) {
      Vec w = halton_point(i, 3, 5);
      TangentVector once = project_tangent(*m.charted, e3, w);
      TangentVector twice = project_tangent(*m.charted, e3, once.ambient);
      REQUIRE((once.ambient - twice.ambient).lpNorm<Eigen::Infinity>() < 1e-10);
      REQUIRE(tangency_residual(*m.charted, once) < 1e-8);
    }
  }
}

TEST_CASE("transition map on the sphere overlap band") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  const Chart& cn = m.charted->atlas[0];
  const Chart& cs = m.charted->atlas[1];
  Point eq{m.charted->id, v3(std::sqrt(0.87), 0.2, 0.3)};  // x3 = 0.3, in both charts
  REQUIRE(cn.in_domain(eq.ambient));
  REQUIRE(cs.in_domain(eq.ambient));

  SmoothMap transition{2, 2,
                       [&](const Vec& u) { return cs.forward.eval(cn.inverse.eval(u)); }, 1.0};
  Vec u0 = cn.forward.eval(eq.ambient);
  Jet j = jet(transition, u0, 2);

  // consistency of the two chart views
  REQUIRE((j.value - cs.forward.eval(eq.ambient)).lpNorm<Eigen::Infinity>() < 1e-9);
  // invertible first derivative
  REQUIRE(condition_number(j.d1) < 1e6);
  // second derivative agrees with an independent nested stencil
  Vec u = halton_direction(0, 2, 1), v = halton_direction(1, 2, 1);
  Vec polarized = directional_derivative(transition, u0, {u, v});
  Vec nested = nested_mixed_d2(transition, u0, u, v);
  REQUIRE((polarized - nested).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("uncovered points raise UncoveredPointError") {
  auto m = build_matrix_group(2);
  Point singular{m.charted->id, vec_of(Mat::Zero(2, 2))};
  REQUIRE_THROWS_AS(chart_at(*m.charted, singular), UncoveredPointError);
}

TEST_CASE("tangent frames are orthonormal and tangent") {
  auto sphere = build_quadric(Mat::Identity(3, 3), 1.0);
  auto invol = build_involutions(2, 1);
  for (const auto& m : {sphere, invol}) {
    Mat f = tangent_frame(*m.charted, m.base);
    REQUIRE(f.cols() == m.charted->dim);
    REQUIRE((f.transpose() * f - Mat::Identity(f.cols(), f.cols())).lpNorm<Eigen::Infinity>() <
            1e-10);
    for (int i = 0; i < f.cols(); ++i)
      REQUIRE(tangency_residual(*m.charted, TangentVector{m.base, f.col(i)}) < 1e-7);
  }
}

TEST_CASE("map_differential of the identity is the identity") {
  auto m = build_quadric(Mat::Identity(3, 3), 1.0);
  Point x = sample_point(*m.charted, 2, 1);
  Mat d = map_differential(*m.charted, *m.charted, [](const Point& p) { return p; }, x);
  REQUIRE((d - Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 1e-7);
}
