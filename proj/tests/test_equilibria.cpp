#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rvmb/equilibria.hpp"
#include "support.hpp"

using namespace rvmb;
using Eigen::Vector3d;

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

// K_j from the defining lambda-integral with lambda = gamma + x^2, integrated by adaptive Simpson.
double bessel_oracle(int j, double g) {
  auto f = [&](double x) {
    double x2 = x * x;
    return 2 * std::pow(x, 2 * j) * std::pow(2 * g + x2, j - 0.5) * std::exp(-x2);
  };
  double b = 12;
  double fa = f(0), fm = f(b / 2), fb = f(b);
  double whole = b / 6 * (fa + 4 * fm + fb);
  double scale = 0;
  for (int i = 0; i < 200; ++i) scale += f((i + 0.5) * b / 200) * b / 200;
  double integral = adaptive_simpson(f, 0, b, fa, fm, fb, whole, 1e-13 * scale, 40);
  double fact = 1, fact2 = 1;
  for (int i = 1; i <= j; ++i) fact *= i;
  for (int i = 1; i <= 2 * j; ++i) fact2 *= i;
  return std::pow(2.0, j) * fact / fact2 * std::pow(g, -j) * std::exp(-g) * integral;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<JuttnerState> sample_states() {
  std::vector<JuttnerState> v;
  double gammas[5] = {0.5, 1.0, 3.0, 8.0, 20.0};
  Vector3d us[5] = {{0.3, 0, 0}, {0.1, -0.2, 0.15}, {0, 0, 0}, {-0.05, 0.25, 0.1}, {0.2, 0.1, -0.1}};
  for (int i = 0; i < 5; ++i) {
    JuttnerState s;
    s.n0 = 1.0 + 0.2 * i;
    s.T0 = 1.0 / gammas[i];
    s.u = us[i];
    v.push_back(s);
  }
  return v;
}

}  // namespace

TEST_CASE("Bessel functions against the defining integral and the standard library") {
  for (double g : {0.5, 1.0, 5.0, 20.0}) {
    for (int j = 0; j <= 3; ++j) {
      double k = bessel_k(j, g);
      CHECK(k > 0);
      CHECK(rel(k, bessel_oracle(j, g)) <= 1e-10);
      CHECK(rel(k, std::cyl_bessel_k(double(j), g)) <= 1e-10);
    }
    double r = std::abs(bessel_k(3, g) - bessel_k(1, g) - 4 * bessel_k(2, g) / g) / bessel_k(3, g);
    CHECK(r <= 1e-10);
  }
  double g = 50;
  double asym = std::sqrt(M_PI / (2 * g)) * std::exp(-g) * (1 + 15 / (8 * g));
  CHECK(rel(bessel_k(2, g), asym) <= 1e-2);
  CHECK_THROWS_AS(bessel_k(2, 0.0), Error);
  CHECK_THROWS_AS(bessel_k(4, 1.0), Error);
}

TEST_CASE("Juttner distribution symmetries") {
  PhysicalConstants k;
  JuttnerState st;
  st.T0 = 0.7;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    Vector3d p = test::random_vec(rng, 3);
    CHECK(juttner_eval(p, st, k) > 0);
    CHECK(rel(juttner_eval(p, st, k), juttner_eval(Vector3d(-p), st, k)) <= 1e-14);
    JuttnerState d = st;
    d.n0 *= 2;
    CHECK(rel(juttner_eval(p, d, k), 2 * juttner_eval(p, st, k)) <= 1e-14);
  }
}

TEST_CASE("first and second moments match the closed forms") {
  PhysicalConstants k;
  for (const auto& st : sample_states()) {
    Moments mo = moment_quadrature(st, k);
    Eigen::Vector4d I = moment_first_closed(st, k);
    Eigen::Matrix4d T = moment_second_closed(st, k, closure_analytic(st, k));
    CHECK((mo.I - I).cwiseAbs().maxCoeff() / I.cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((mo.T - T).cwiseAbs().maxCoeff() / T.cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(rel(mo.I(0) / k.c, st.n0 * st.u0(k) / k.c) <= 1e-6);
    CHECK((mo.T - mo.T.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * mo.T.cwiseAbs().maxCoeff());

    JuttnerState rest = st;
    rest.u.setZero();
    Eigen::Matrix4d L = rest_boost<double>(st.u, k);
    Eigen::Matrix4d boosted = L * moment_second(rest, k) * L.transpose();
    CHECK((boosted - mo.T).cwiseAbs().maxCoeff() / mo.T.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("moments at rest") {
  PhysicalConstants k;
  JuttnerState st;
  st.n0 = 1.3;
  st.T0 = 0.5;
  Moments mo = moment_quadrature(st, k);
  CHECK(rel(mo.I(0), st.n0 * k.c) <= 1e-10);
  CHECK(mo.I.tail<3>().cwiseAbs().maxCoeff() <= 1e-12);
  FluidClosure cl = closure_analytic(st, k);
  CHECK(rel(mo.T(0, 0), cl.e0) <= 1e-10);
  for (int i = 1; i < 4; ++i) CHECK(rel(mo.T(i, i), cl.P0) <= 1e-10);
  CHECK(std::abs(mo.T(0, 1)) <= 1e-12);
  CHECK(std::abs(mo.T(1, 2)) <= 1e-12);
}

TEST_CASE("moments in general units") {
  PhysicalConstants k;
  k.m = 2.0;
  k.c = 3.0;
  k.k_B = 0.5;
  JuttnerState st;
  st.n0 = 0.8;
  st.T0 = 10.0;
  st.u = Vector3d(0.5, -0.3, 0.2);
  Moments mo = moment_quadrature(st, k);
  CHECK((mo.I - moment_first_closed(st, k)).norm() / mo.I.norm() <= 1e-6);
  Eigen::Matrix4d T = moment_second_closed(st, k, closure_analytic(st, k));
  CHECK((mo.T - T).cwiseAbs().maxCoeff() / T.cwiseAbs().maxCoeff() <= 1e-6);
  Tensor3 T3 = moment_third_closed(st, k);
  double worst = 0;
  for (int q = 0; q < 64; ++q) worst = std::max(worst, std::abs(T3.v[q] - mo.T3.v[q]));
  CHECK(worst / T3.max_abs() <= 1e-5);
}

TEST_CASE("third moments") {
  PhysicalConstants k;
  for (const auto& st : sample_states()) {
    Moments mo = moment_quadrature(st, k);
    Tensor3 cl = moment_third_closed(st, k);
    Tensor3 bo = moment_third_boosted(st, k);
    double scale = cl.max_abs();
    double worst_q = 0, worst_b = 0, worst_sym = 0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) {
          worst_q = std::max(worst_q, std::abs(cl(a, b, c) - mo.T3(a, b, c)));
          worst_b = std::max(worst_b, std::abs(cl(a, b, c) - bo(a, b, c)));
          worst_sym = std::max(worst_sym, std::abs(cl(a, b, c) - cl(b, c, a)) + std::abs(cl(a, b, c) - cl(b, a, c)));
        }
    CHECK(worst_q / scale <= 1e-5);
    CHECK(worst_b / scale <= 1e-12);
    CHECK(worst_sym <= 1e-14 * scale);

    JuttnerState rest = st;
    rest.u.setZero();
    Tensor3 r = moment_third_rest(rest, k);
    Tensor3 rq = moment_quadrature(rest, k).T3;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) {
          if (r(a, b, c) != 0)
            CHECK(rel(rq(a, b, c), r(a, b, c)) <= 1e-8);
          else
            CHECK(std::abs(rq(a, b, c)) <= 1e-10 * r(0, 0, 0));
        }
    Tensor3 c0 = moment_third_closed(rest, k);
    for (int q = 0; q < 64; ++q) CHECK(std::abs(c0.v[q] - r.v[q]) <= 1e-14 * r(0, 0, 0));
  }
}

TEST_CASE("closure from quadrature") {
  PhysicalConstants k;
  for (double g : {0.5, 1.0, 5.0, 20.0}) {
    JuttnerState st;
    st.n0 = 1.7;
    st.T0 = 1 / g;
    FluidClosure cl = synge_closure(st, k);
    CHECK(rel(cl.P0 / (st.n0 * k.k_B * st.T0), 1.0) <= 1e-6);
    double e_oracle = st.n0 * k.m * k.c * k.c * (bessel_k(1, g) / bessel_k(2, g) + 3 / g);
    CHECK(rel(cl.e0, e_oracle) <= 1e-6);
    CHECK(cl.e0 + cl.P0 > 0);
    CHECK(rel(cl.h, k.m * k.c * k.c * bessel_k(3, g) / bessel_k(2, g)) <= 1e-6);
  }
  JuttnerState cold;
  cold.T0 = 0.01;
  FluidClosure cl = synge_closure(cold, k);
  double thermal = cl.e0 - cold.n0 * k.m * k.c * k.c;
  CHECK(rel(thermal, 1.5 * cold.n0 * k.k_B * cold.T0) <= 0.02);
}

TEST_CASE("energy redundancy identity") {
  PhysicalConstants k;
  RedundancyOptions opt;
  opt.points = 8;
  opt.h = 1e-2;
  StateFamily constant = [](double, double) {
    JuttnerState s;
    s.n0 = 1.2;
    s.T0 = 0.3;
    s.u = Vector3d(0.1, 0, 0);
    return s;
  };
  CHECK(energy_redundancy_check(constant, k, opt) == 0.0);

  double C = 1.0 / isentropic_density(2.0, 1.0);
  StateFamily isentropic = [C](double t, double x) {
    JuttnerState s;
    double g = 2.0 + 0.3 * std::sin(2 * M_PI * x - t);
    s.T0 = 1 / g;
    s.n0 = isentropic_density(g, C);
    s.u = Vector3d(0.1 * std::cos(2 * M_PI * x), 0.05, 0);
    return s;
  };
  std::vector<double> hs, rs;
  for (double h : {4e-2, 2e-2, 1e-2, 5e-3}) {
    opt.h = h;
    hs.push_back(h);
    rs.push_back(energy_redundancy_check(isentropic, k, opt));
  }
  CHECK(rs.back() < 1e-4);
  CHECK(test::loglog_slope(hs, rs) == doctest::Approx(2.0).epsilon(0.1));

  ClosureFn broken = [&k](const JuttnerState& s) {
    FluidClosure cl = closure_analytic(s, k);
    cl.e0 *= 1 + 0.5 * s.T0;
    return cl;
  };
  std::vector<double> rb;
  for (double h : {2e-2, 5e-3}) {
    opt.h = h;
    rb.push_back(energy_redundancy_check(isentropic, k, opt, broken));
  }
  CHECK(rb[1] > 1e-2);
  CHECK(rb[1] > 0.5 * rb[0]);
}

TEST_CASE("global Maxwellian domination") {
  PhysicalConstants k;
  GlobalMaxwellianParams gm;
  gm.T_M = 0.5;
  CHECK_THROWS_AS(gm.check_domination(0.4), ConfigError);
  CHECK_THROWS_AS(gm.check_domination(1.2), ConfigError);
  JuttnerState st;
  st.T0 = 0.6;
  st.u = Vector3d(0.02, 0, 0);
  double h = 1e-3;
  std::array<JuttnerState, 6> nb;
  for (int d = 0; d < 3; ++d) {
    nb[2 * d] = st;
    nb[2 * d + 1] = st;
    nb[2 * d].u(d) += 0.05 * h;
    nb[2 * d + 1].u(d) -= 0.05 * h;
    nb[2 * d].T0 += 0.02 * h;
    nb[2 * d + 1].T0 -= 0.02 * h;
  }
  // M is dominated by sqrt(J_M) uniformly in the truncation radius; sqrt(M) only on a bounded box
  double small = domination_ratio(uniform_grid(12, 6.0), st, nb, h, gm, k, 1.0);
  double large = domination_ratio(uniform_grid(12, 24.0), st, nb, h, gm, k, 1.0);
  CHECK(large <= small * 1.0001);
  double sq_small = domination_ratio(uniform_grid(12, 6.0), st, nb, h, gm, k, 0.5);
  double sq_large = domination_ratio(uniform_grid(12, 24.0), st, nb, h, gm, k, 0.5);
  CHECK(std::isfinite(sq_small));
  CHECK(sq_large > sq_small);
}
