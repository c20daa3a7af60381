#include <catch2/catch_amalgamated.hpp>

#include "symspace/cah.hpp"
#include "testlib.hpp"

using namespace symspace;
using testlib::v3;

namespace {

SymmetricSpaceModel& sphere() {
  static SymmetricSpaceModel m = build_quadric(Mat::Identity(3, 3), 1.0);
  return m;
}

ConnectionModel& sphere_conn() {
  static ConnectionModel c = canonical_connection(sphere());
  return c;
}

SymmetricSpaceModel& gl2() {
  static SymmetricSpaceModel m = build_matrix_group(2);
  return m;
}

ConnectionModel& gl2_conn() {
  static ConnectionModel c = canonical_connection(gl2());
  return c;
}

}  // namespace

TEST_CASE("axioms hold on the zoo models") {
  SECTION("flat is exact") {
    AxiomReport r = check_axioms(build_flat(3), 16, 0);
    REQUIRE(r.s1 < 1e-12);
    REQUIRE(r.s2 < 1e-12);
    REQUIRE(r.s3 < 1e-12);
    REQUIRE(r.s4 < 1e-9);
  }
  SECTION("curved models pass at 1e-7") {
    Mat J = Mat::Identity(3, 3);
    J(2, 2) = -1.0;
    std::vector<SymmetricSpaceModel> models = {sphere(), build_quadric(J, -1.0),
                                               build_matrix_group(2), build_involutions(2, 1)};
    for (const auto& m : models) {
      AxiomReport r = check_axioms(m, 16, 1);
      INFO(m.charted->id);
      REQUIRE(r.s1 < 1e-7);
      REQUIRE(r.s2 < 1e-7);
      REQUIRE(r.s3 < 1e-7);
      REQUIRE(r.s4 < 1e-7);
      REQUIRE(r.closure < 1e-9);
    }
  }
  SECTION("a broken multiplication is detected through S2") {
    auto broken = build_flat(3);
    const double eps_break = 1e-3;
    broken.mu = SmoothMap{6, 3,
                          [eps_break](const Vec& z) {
                            Vec out = 2.0 * z.head(3) - z.tail(3);
                            out[0] += eps_break * z.tail(3)[0];
                            return out;
                          },
                          1.0};
    AxiomReport r = check_axioms(broken, 16, 0);
    REQUIRE(r.s2 > eps_break);
  }
}

TEST_CASE("tangent spaces multiply by v.w = 2v - w") {
  REQUIRE(tangent_square_residual(build_flat(2), Point{"flat-2", v3(0.3, 0.1, 0).head(2)}) <
          1e-9);
  Point e3{sphere().charted->id, v3(0, 0, 1)};
  REQUIRE(tangent_square_residual(sphere(), e3) < 1e-7);
  Point s = sample_point(*sphere().charted, 5, 3);
  REQUIRE(tangent_square_residual(sphere(), s) < 1e-7);
}

TEST_CASE("both mixed-slot forms of the canonical coefficients agree") {
  const auto& m = sphere();
  for (int i = 0; i < 4; ++i) {
    Point x = sample_point(*m.charted, i, 7);
    const Chart& c = chart_at(*m.charted, x);
    Vec u0 = c.forward.eval(x.ambient);
    const int n = c.dim;
    SmoothMap pair_map{2 * n, n,
                       [&](const Vec& z) {
                         return c.forward.eval(
                             mu_eval(m, c.inverse.eval(z.head(n)), c.inverse.eval(z.tail(n))));
                       },
                       1.0};
    Vec z0(2 * n);
    z0 << u0, u0;
    Vec v = halton_direction(2 * i, n, 5), w = halton_direction(2 * i + 1, n, 5);
    Vec v2 = Vec::Zero(2 * n), w2 = Vec::Zero(2 * n), v1 = Vec::Zero(2 * n);
    v2.tail(n) = v;
    w2.tail(n) = w;
    v1.head(n) = v;
    Vec second_slot = 0.5 * directional_derivative(pair_map, z0, {v2, w2});
    Vec mixed_slot = -0.5 * directional_derivative(pair_map, z0, {v1, w2});
    REQUIRE((second_slot - mixed_slot).lpNorm<Eigen::Infinity>() < 1e-6);
    // and the engine's coefficient field equals the second-slot form
    Vec b = sphere_conn().coeff(c, u0, v, w);
    REQUIRE((b - second_slot).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("symmetry differential identity (geodesic reflection)") {
  const auto& m = sphere();
  const auto& conn = sphere_conn();
  Point e3{m.charted->id, v3(0, 0, 1)};
  TangentVector vel{e3, v3(0.8, 0.3, 0)};
  Geodesic geo = shoot(conn, e3, vel, 1.0);

  // s = 0: both sides are minus the identity
  REQUIRE(symmetry_transport_check(m, conn, geo, 0.45, 0.0) < 1e-7);
  // generic offsets
  REQUIRE(symmetry_transport_check(m, conn, geo, 0.45, 0.35) < 1e-5);
  REQUIRE(symmetry_transport_check(m, conn, geo, 0.3, -0.25) < 1e-5);

  auto flat = build_flat(2);
  ConnectionModel fc = trivial_connection(flat.charted);
  Point o{flat.charted->id, Vec::Zero(2)};
  Vec d2(2);
  d2 << 1.0, -0.5;
  Geodesic line = shoot(fc, o, TangentVector{o, d2}, 1.0);
  REQUIRE(symmetry_transport_check(flat, fc, line, 0.5, 0.3) < 1e-9);
}

TEST_CASE("translations slide along the geodesic and transport tangents") {
  const auto& m = sphere();
  const auto& conn = sphere_conn();
  Point e1{m.charted->id, v3(1, 0, 0)};
  TangentVector vel{e1, v3(0, 1, 0)};  // the equator
  Geodesic geo = shoot(conn, e1, vel, 2.0);
  const double s = 0.7;
  auto tau = translation(m, geo, s);

  // oracle: the ambient rotation by angle s about the z axis
  Mat rot = testlib::rotation3(2, s);
  for (int i = 0; i < 4; ++i) {
    Point p = sample_point(*m.charted, i, 13);
    REQUIRE((tau(p).ambient - rot * p.ambient).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  // tau(alpha(t)) = alpha(t+s)
  for (double t : {0.0, 0.4, 1.1}) {
    REQUIRE((tau(geo.at(t)).ambient - geo.at(t + s).ambient).norm() < 1e-6);
  }

  // T tau = parallel transport along the geodesic
  for (double t : {0.2, 0.9}) {
    Point xt = geo.at(t);
    Mat frame = tangent_frame(*m.charted, xt);
    Mat d = map_differential(*m.charted, *m.charted, tau, xt);
    Mat f2 = tangent_frame(*m.charted, tau(xt));
    Mat moved = transport_many(conn, geo, t, t + s, frame);
    for (int i = 0; i < frame.cols(); ++i)
      REQUIRE((f2 * d.col(i) - moved.col(i)).lpNorm<Eigen::Infinity>() < 1e-5);
  }

  // s = 0 gives the identity (involution squared)
  auto tau0 = translation(m, geo, 0.0);
  Point probe = sample_point(*m.charted, 9, 13);
  REQUIRE((tau0(probe).ambient - probe.ambient).lpNorm<Eigen::Infinity>() < 1e-12);

  // flat translations are plain shifts
  auto flat = build_flat(2);
  ConnectionModel fc = trivial_connection(flat.charted);
  Point o{flat.charted->id, Vec::Zero(2)};
  Vec d2(2);
  d2 << 0.3, 0.4;
  Geodesic line = shoot(fc, o, TangentVector{o, d2}, 2.0);
  auto tau_flat = translation(flat, line, 1.2);
  Vec probe2(2);
  probe2 << -0.5, 2.0;
  Point pf{flat.charted->id, probe2};
  REQUIRE((tau_flat(pf).ambient - (probe2 + 1.2 * d2)).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("derivation fields generate the translation flow") {
  const auto& m = sphere();
  const auto& conn = sphere_conn();
  Point e3{m.charted->id, v3(0, 0, 1)};
  TangentVector v{e3, v3(1, 0, 0)};
  auto xi = derivation_field(m, v);

  SECTION("value at the base point") {
    REQUIRE((xi(e3).ambient - v.ambient).lpNorm<Eigen::Infinity>() < 1e-7);
  }
  SECTION("rotation generator oracle") {
    // xi_{e1} is the generator of the rotation carrying e3 toward e1
    Mat gen = Mat::Zero(3, 3);
    gen(0, 2) = 1.0;
    gen(2, 0) = -1.0;
    for (int i = 0; i < 5; ++i) {
      Point p = sample_point(*m.charted, i, 21);
      REQUIRE((xi(p).ambient - gen * p.ambient).lpNorm<Eigen::Infinity>() < 1e-6);
    }
  }
  SECTION("derivation property") {
    for (int i = 0; i < 4; ++i) {
      Point x = sample_point(*m.charted, 2 * i, 19);
      Point y = sample_point(*m.charted, 2 * i + 1, 19);
      REQUIRE(derivation_residual(m, xi, x, y) < 1e-6);
    }
  }
  SECTION("flow matches the translations") {
    Geodesic geo = shoot(conn, e3, v, 1.0);
    Point x0 = sample_point(*m.charted, 3, 21);
    for (double t : {0.25, 0.6, 1.0}) {
      Point flowed = flow(xi, x0, t);
      Point translated = translation(m, geo, t)(x0);
      REQUIRE((flowed.ambient - translated.ambient).lpNorm<Eigen::Infinity>() < 1e-5);
    }
  }
  SECTION("flat derivation fields are constant") {
    auto flat = build_flat(2);
    Vec vv(2);
    vv << 0.7, -0.2;
    Point o{flat.charted->id, Vec::Zero(2)};
    auto xif = derivation_field(flat, TangentVector{o, vv});
    Point far{flat.charted->id, (Vec(2) << 3.0, -1.0).finished()};
    REQUIRE((xif(far).ambient - vv).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("gl(2) geodesics are one-parameter subgroups") {
  const auto& m = gl2();
  const auto& conn = gl2_conn();
  Mat vmat(2, 2);
  vmat << 0.3, -0.5, 0.4, 0.2;
  TangentVector v{m.base, vec_of(vmat)};

  for (double t : {0.25, 0.5, 1.0}) {
    Point p = exp_map(conn, m.base, TangentVector{m.base, t * v.ambient});
    Mat oracle = testlib::expm(Mat(t * vmat));
    REQUIRE((p.ambient - vec_of(oracle)).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  SECTION("derivation flow is two-sided multiplication by expm(tv/2)") {
    auto xi = derivation_field(m, v);
    Mat x0(2, 2);
    x0 << 1.1, 0.2, -0.1, 0.9;
    Point p0{m.charted->id, vec_of(x0)};
    double t = 0.8;
    Point flowed = flow(xi, p0, t);
    Mat half = testlib::expm(Mat(0.5 * t * vmat));
    Mat oracle = half * x0 * half;
    REQUIRE((flowed.ambient - vec_of(oracle)).lpNorm<Eigen::Infinity>() < 1e-6);

    Geodesic geo = shoot(conn, m.base, v, 1.0);
    Point translated = translation(m, geo, t)(p0);
    REQUIRE((flowed.ambient - translated.ambient).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("involution component carries a closed geodesic with trivial holonomy") {
  auto m = build_involutions(2, 1);
  ConnectionModel conn = canonical_connection(m);
  Mat u1(2, 2);
  u1 << 0, 1, 1, 0;
  TangentVector v{m.base, vec_of(u1)};

  // the orbit of orthogonal reflections closes after parameter 2*pi
  Geodesic loop = shoot(conn, m.base, v, 2.0 * M_PI);
  REQUIRE((loop.endpoint().ambient - m.base.ambient).norm() < 1e-5);

  // quarter-loop checkpoint: R(t) b in ambient form
  Point quarter = loop.at(M_PI / 2.0);
  Mat expect(2, 2);
  expect << 0, 1, 1, 0;
  REQUIRE((quarter.ambient - vec_of(expect)).norm() < 1e-5);

  // transporting a frame around the loop returns it unchanged
  Mat frame = tangent_frame(*m.charted, m.base);
  Mat back = transport_many(conn, loop, 0.0, 2.0 * M_PI, frame);
  REQUIRE((back - frame).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("lie triple systems from curvature") {
  SECTION("flat bracket vanishes") {
    auto flat = build_flat(3);
    ConnectionModel fc = trivial_connection(flat.charted);
    LieTripleSystem sys = lts(flat, fc);
    REQUIRE(sys.bracket.max_norm() < 1e-12);
  }
  SECTION("sphere bracket is minus the curvature and satisfies the axioms") {
    LieTripleSystem sys = lts(sphere(), sphere_conn());
    Mat frame = sys.basis;
    Point b = sphere().base;
    for (int i = 0; i < sys.dim; ++i)
      for (int j = 0; j < sys.dim; ++j)
        for (int k = 0; k < sys.dim; ++k) {
          Vec r = curvature(sphere_conn(), b, TangentVector{b, frame.col(i)},
                            TangentVector{b, frame.col(j)}, TangentVector{b, frame.col(k)})
                      .ambient;
          REQUIRE((sys.bracket.at(i, j, k) + frame.transpose() * r).lpNorm<Eigen::Infinity>() <
                  1e-6);
        }
    LtsAxiomResiduals res = lts_axiom_residuals(sys, 32, 3);
    REQUIRE(res.antisymmetry < 1e-10);
    REQUIRE(res.cyclic < 1e-4);
    REQUIRE(res.derivation < 1e-4);
  }
}

TEST_CASE("lie triple systems from involutive automorphisms") {
  SECTION("abelian brackets give the zero system") {
    Bilinear zero;
    zero.in_dim = 3;
    zero.out_dim = 3;
    zero.comp.assign(3, Mat::Zero(3, 3));
    Mat sigma = -Mat::Identity(3, 3);
    InvolutionSplit split = lts_from_involution(zero, sigma);
    REQUIRE(split.lts.dim == 3);
    REQUIRE(split.lts.bracket.max_norm() == 0.0);
  }
  SECTION("sigma = id gives an empty minus part") {
    Bilinear br = matrix_commutator_bracket(2);
    InvolutionSplit split = lts_from_involution(br, Mat::Identity(4, 4));
    REQUIRE(split.lts.dim == 0);
  }
  SECTION("gl(2) with negative transpose: symmetric matrices") {
    Bilinear br = matrix_commutator_bracket(2);
    Mat sigma = negative_transpose_involution(2);
    InvolutionSplit split = lts_from_involution(br, sigma);
    REQUIRE(split.lts.dim == 3);  // symmetric 2x2 matrices
    REQUIRE(split.bracket_rule_residual < 1e-10);
    for (int i = 0; i < 3; ++i) {
      Mat basis_mat = unvec(split.lts.basis.col(i), 2, 2);
      REQUIRE((basis_mat - basis_mat.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
    LtsAxiomResiduals res = lts_axiom_residuals(split.lts, 32, 5);
    REQUIRE(res.antisymmetry < 1e-10);
    REQUIRE(res.cyclic < 1e-10);
    REQUIRE(res.derivation < 1e-10);
  }
  SECTION("non-involutive or non-automorphism inputs are rejected") {
    Bilinear br = matrix_commutator_bracket(2);
    Mat bad = 2.0 * Mat::Identity(4, 4);
    REQUIRE_THROWS_AS(lts_from_involution(br, bad), EngineError);
    Mat shear = Mat::Identity(4, 4);
    shear(0, 1) = 1.0;
    shear(1, 0) = 0.0;  // involutive only if shear^2 = id; it is not
    REQUIRE_THROWS_AS(lts_from_involution(br, shear), EngineError);
  }
}

TEST_CASE("morphisms are affine: symmetries commute with exp") {
  const auto& m = sphere();
  const auto& conn = sphere_conn();
  Point e3{m.charted->id, v3(0, 0, 1)};
  auto mu_b = symmetry(m, e3);
  Point x = sample_point(*m.charted, 2, 27);
  Mat d = map_differential(*m.charted, *m.charted, mu_b, x);
  Mat f1 = tangent_frame(*m.charted, x);
  Mat f2 = tangent_frame(*m.charted, mu_b(x));
  for (int i = 0; i < 2; ++i) {
    TangentVector v{x, f1.col(i) * 0.6};
    Point lhs = mu_b(exp_map(conn, x, v));
    TangentVector dv{mu_b(x), f2 * (d * (f1.transpose() * v.ambient))};
    Point rhs = exp_map(conn, mu_b(x), dv);
    REQUIRE((lhs.ambient - rhs.ambient).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}
