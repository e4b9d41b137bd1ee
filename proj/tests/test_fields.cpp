#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "rvmb/fields.hpp"
#include "support.hpp"

using namespace rvmb;

namespace {

FieldState random_state(int n, double length, unsigned seed) {
  FieldState s = zero_state(n, length);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < s.cells(); ++i) s.E[c](i) = u(rng);
  EdgeField none;
  for (auto& v : none) v = Eigen::VectorXd::Zero(s.cells());
  PhysicalConstants k;
  double dt = 0.5 * s.spacing() / std::sqrt(3.0);
  for (int i = 0; i < 3; ++i) s = maxwell_step(s, none, dt, k);
  s.time = 0;
  return s;
}

/// Manufactured current c int p_hat sqrt(M) f dp for f = sqrt(M) v(t, x).p with a smooth periodic v.
CurrentFunction manufactured_current(double length, double flux_constant) {
  double w = 2 * M_PI / length;
  return [w, flux_constant](double t, const Eigen::Vector3d& x) {
    Eigen::Vector3d v(std::sin(w * x(1) + 0.3) * std::cos(2 * t), std::cos(w * x(2)) * std::sin(t + 0.2),
                      std::sin(w * (x(0) + x(1))) * std::cos(t));
    return Eigen::Vector3d(flux_constant * v);
  };
}

}  // namespace

TEST_CASE("staggered positions follow the documented layout") {
  FieldState s = zero_state(4, 2.0, Eigen::Vector3d(-1, -1, -1));
  CHECK((edge_position(s, 0, 1, 2, 3) - Eigen::Vector3d(-0.25, 0.0, 0.5)).norm() < 1e-15);
  CHECK((face_position(s, 2, 1, 2, 3) - Eigen::Vector3d(-0.25, 0.25, 0.5)).norm() < 1e-15);
  CHECK(s.index(-1, 0, 4) == s.index(3, 0, 0));
}

TEST_CASE("div B stays at round-off over 1000 steps with a source") {
  FieldState s = random_state(10, 1.0, 3);
  PhysicalConstants k;
  double dt = 0.9 * s.spacing() / std::sqrt(3.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  EdgeField J0;
  for (auto& v : J0) {
    v.resize(s.cells());
    for (int i = 0; i < s.cells(); ++i) v(i) = 0.1 * u(rng);
  }
  double initial = divergence_b(s).cwiseAbs().maxCoeff();
  for (int n = 0; n < 1000; ++n) {
    EdgeField J = J0;
    for (auto& v : J) v *= std::cos(0.05 * n);
    s = maxwell_step(s, J, dt, k);
  }
  CHECK(s.B[0].cwiseAbs().maxCoeff() >= 0.1);
  CHECK(initial <= 1e-12);
  CHECK(divergence_b(s).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("source-free scheme conserves the staggered energy") {
  FieldState s = random_state(8, 1.0, 4);
  PhysicalConstants k;
  double dt = 0.7 * s.spacing() / std::sqrt(3.0);
  EdgeField none;
  for (auto& v : none) v = Eigen::VectorXd::Zero(s.cells());
  double e0 = staggered_energy(s, dt, k);
  double worst = 0;
  for (int n = 0; n < 50; ++n) {
    double before = staggered_energy(s, dt, k);
    s = maxwell_step(s, none, dt, k);
    worst = std::max(worst, std::abs(staggered_energy(s, dt, k) - before) / e0);
  }
  CHECK(worst <= 1e-10);
  CHECK(std::abs(staggered_energy(s, dt, k) - e0) / e0 <= 1e-10);
}

TEST_CASE("plane wave oscillates at the discrete dispersion frequency") {
  int n = 16;
  double L = 1.0;
  FieldState s = zero_state(n, L);
  double kx = 2 * M_PI * 3 / L;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) s.E[1](s.index(i, j, l)) = std::cos(kx * edge_position(s, 1, i, j, l)(0));
  PhysicalConstants k;
  k.c = 1.3;
  double dt = 0.6 * s.spacing() / (std::sqrt(3.0) * k.c);
  double w = discrete_frequency(Eigen::Vector3d(kx, 0, 0), s.spacing(), dt, k);
  EdgeField none;
  for (auto& v : none) v = Eigen::VectorXd::Zero(s.cells());
  int steps = 200;
  for (int m = 0; m < steps; ++m) s = maxwell_step(s, none, dt, k);
  double amp = std::cos(w * steps * dt), gap = 0;
  for (int i = 0; i < n; ++i) {
    int id = s.index(i, 2, 5);
    gap = std::max(gap, std::abs(s.E[1](id) - amp * std::cos(kx * edge_position(s, 1, i, 2, 5)(0))));
  }
  CHECK(gap <= 1e-10);
  double continuum = k.c * kx;
  CHECK(std::abs(w - continuum) / continuum > 1e-3);
  double s2 = std::pow(std::sin(w * dt / 2) / (k.c * dt), 2);
  CHECK(s2 == doctest::Approx(std::pow(std::sin(kx * s.spacing() / 2) / s.spacing(), 2)).epsilon(1e-12));
}

TEST_CASE("energy identity residual converges at second order in dt") {
  int n = 8;
  double L = 1.0;
  FieldState s = random_state(n, L, 5);
  PhysicalConstants k;
  auto J = manufactured_current(L, 0.2);
  double base = 0.8 * s.spacing() / std::sqrt(3.0);
  std::vector<double> dts, res;
  for (int r = 0; r < 4; ++r) {
    double dt = base / std::pow(2, r);
    auto rec = energy_identity_residual(s, J, 1.0, dt, k);
    dts.push_back(rec.dt);
    res.push_back(std::abs(rec.residual));
    CHECK(std::abs(rec.work) > 10 * std::abs(rec.residual));
  }
  CHECK(std::abs(test::loglog_slope(dts, res) - 2) <= 0.2);
}

TEST_CASE("Gauss law drift follows the charge-conservation error of the sampled source") {
  PhysicalConstants k;
  PulsedSourceSpec spec;
  std::vector<double> h, drift;
  for (int n : {16, 32}) {
    FieldState s = zero_state(n, 8.0, Eigen::Vector3d::Constant(-4));
    double dt = 0.5 * s.spacing() / std::sqrt(3.0);
    int steps = static_cast<int>(std::ceil(2.0 / dt));
    dt = 2.0 / steps;
    for (int m = 0; m < steps; ++m) {
      double th = (m + 0.5) * dt;
      EdgeField J = sample_edges(s, [&](const Eigen::Vector3d& x) { return Eigen::Vector3d(-spec.current(th, x)); });
      s = maxwell_step(s, J, dt, k);
    }
    Eigen::VectorXd rho = sample_nodes(s, [&](const Eigen::Vector3d& x) { return -spec.charge(2.0, x); });
    double scale = 4 * M_PI * rho.cwiseAbs().maxCoeff();
    h.push_back(s.spacing());
    drift.push_back(gauss_residual(s, rho, k) / scale);
  }
  CHECK(drift[1] < drift[0]);
  CHECK(test::loglog_slope(h, drift) >= 1.8);
  CHECK(drift[1] <= 0.05);
}

TEST_CASE("the pulsed source satisfies continuity") {
  PulsedSourceSpec spec;
  std::mt19937_64 rng(4);
  for (int s = 0; s < 20; ++s) {
    Eigen::Vector3d y = test::random_vec(rng, 1.5);
    double t = 0.1 + 0.07 * s, d = 1e-4;
    double drho = (spec.charge(t + d, y) - spec.charge(t - d, y)) / (2 * d);
    double div = 0;
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d yp = y, ym = y;
      yp(c) += d;
      ym(c) -= d;
      div += (spec.current(t, yp)(c) - spec.current(t, ym)(c)) / (2 * d);
    }
    CHECK(std::abs(drho + div) <= 1e-5);
  }
}

TEST_CASE("bump derivatives match finite differences and the integral matches quadrature") {
  Bump b{Eigen::Vector3d(0.1, -0.2, 0.3), 1.3};
  std::mt19937_64 rng(8);
  for (int s = 0; s < 10; ++s) {
    Eigen::Vector3d y = b.center + test::random_vec(rng, 0.7);
    double d = 1e-4, lap = 0;
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d yp = y, ym = y;
      yp(c) += d;
      ym(c) -= d;
      CHECK((b.value(yp) - b.value(ym)) / (2 * d) == doctest::Approx(b.gradient(y)(c)).epsilon(1e-6).scale(1));
      lap += (b.value(yp) - 2 * b.value(y) + b.value(ym)) / (d * d);
    }
    CHECK(lap == doctest::Approx(b.laplacian(y)).epsilon(1e-5).scale(1));
  }
  Eigen::VectorXd x, w;
  gauss_legendre(40, x, w);
  double acc = 0;
  for (int i = 0; i < 40; ++i) {
    double r = b.radius * (x(i) + 1) / 2;
    acc += w(i) * b.radius / 2 * 4 * M_PI * r * r * std::pow(1 - r * r / (b.radius * b.radius), 4);
  }
  CHECK(b.integral() == doctest::Approx(acc).epsilon(1e-13));
}

TEST_CASE("CFL violation and malformed layouts are rejected") {
  FieldState s = zero_state(4, 1.0);
  PhysicalConstants k;
  EdgeField none;
  for (auto& v : none) v = Eigen::VectorXd::Zero(s.cells());
  CHECK_THROWS_AS(maxwell_step(s, none, s.spacing(), k), Error);
  FieldState bad = s;
  bad.E[0].resize(3);
  CHECK_THROWS_AS(divergence_b(bad), Error);
}

TEST_CASE("binary and CSV snapshots round-trip") {
  FieldState s = random_state(4, 2.5, 6);
  s.time = 1.25;
  s.origin = Eigen::Vector3d(0.5, -1, 2);
  write_field_binary("test_fields.bin", s);
  {
    std::ifstream in("test_fields.bin", std::ios::binary);
    char magic[6];
    in.read(magic, 6);
    CHECK(std::string(magic, 6) == "RVMBF1");
  }
  FieldState r = read_field_binary("test_fields.bin");
  CHECK(r.n == 4);
  CHECK(r.length == 2.5);
  CHECK(r.time == 1.25);
  CHECK(r.origin == s.origin);
  for (int c = 0; c < 3; ++c) {
    CHECK(r.E[c] == s.E[c]);
    CHECK(r.B[c] == s.B[c]);
  }
  std::remove("test_fields.bin");
  write_field_csv("test_fields.csv", s);
  std::ifstream in("test_fields.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "i,j,l,E1,E2,E3,B1,B2,B3");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 64);
  std::remove("test_fields.csv");
  std::ofstream junk("test_junk.bin");
  junk << "NOTAFIELD";
  junk.close();
  CHECK_THROWS_AS(read_field_binary("test_junk.bin"), Error);
  std::remove("test_junk.bin");
}

TEST_CASE("kernels at rest reduce to the direction") {
  PhysicalConstants k;
  std::mt19937_64 rng(1);
  for (int s = 0; s < 5; ++s) {
    Eigen::Vector3d w = test::random_unit(rng);
    GSKernels g = gs_kernels(w, Eigen::Vector3d::Zero(), k);
    CHECK((g.eT - w).norm() <= 1e-15);
    CHECK((g.eS - w).norm() <= 1e-15);
    CHECK(g.bT.norm() == 0.0);
    CHECK(g.bS.norm() == 0.0);
  }
}

TEST_CASE("kernels stay inside the (1 + |p|)^4 envelope") {
  PhysicalConstants k;
  AngularGrid ang = angular_grid(48, 48);
  std::vector<double> pn, ratio;
  for (double r : {0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0}) {
    Eigen::Vector3d p = r * Eigen::Vector3d(0.36, 0.48, 0.8);
    double sup = 0;
    for (int a = 0; a < ang.size(); ++a) {
      GSKernels g = gs_kernels(ang.omega.row(a).transpose(), p, k);
      sup = std::max({sup, g.eT.norm(), g.eS.norm(), g.bT.norm(), g.bS.norm()});
    }
    pn.push_back(r);
    ratio.push_back(sup / std::pow(1 + r, 4));
    CHECK(sup <= 4 * std::pow(1 + r, 2));
  }
  for (size_t i = 1; i < ratio.size(); ++i) CHECK(ratio[i] < ratio[i - 1]);
}

TEST_CASE("reciprocal of 1 - |p_hat| grows like |p|^2, not like 1 + |p|") {
  PhysicalConstants k;
  for (double r : {0.5, 2.0, 10.0, 100.0}) {
    double b = r / std::sqrt(1 + r * r);
    double inv = 1 / (1 - b);
    CHECK(inv <= 2 * (1 + r) * (1 + r));
    if (r >= 2) CHECK(inv > 1 + r);
  }
}

TEST_CASE("kernel magnitude grows with the denominator bound as the degeneracy is approached") {
  PhysicalConstants k;
  AngularGrid ang = angular_grid(96, 8);
  double prev = 0;
  for (double r : {1.0, 3.0, 10.0, 30.0, 100.0}) {
    Eigen::Vector3d p(0, 0, r);
    double b = r / std::sqrt(1 + r * r);
    double sup_s = 0, sup_t = 0;
    for (int a = 0; a < ang.size(); ++a) {
      GSKernels g = gs_kernels(ang.omega.row(a).transpose(), p, k);
      sup_s = std::max(sup_s, g.eS.norm());
      sup_t = std::max(sup_t, g.eT.norm());
    }
    CHECK(sup_s * (1 - b) <= 2.0);
    CHECK(sup_t * (1 - b) * (1 - b) / (1 - b * b) <= 2.0);
    CHECK(sup_s > prev);
    prev = sup_s;
  }
  Eigen::Vector3d p(0, 0, 3);
  try {
    gs_kernels(Eigen::Vector3d(0, 0, -1), p, k, 0.1);
    FAIL("expected an excluded-direction error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
}

TEST_CASE("a vanishing source leaves only the initial-data term") {
  PhysicalConstants k;
  GSOptions opt;
  opt.momentum = gl_sinh_grid(8, 3.0, 0.5);
  opt.n_theta = 8;
  opt.n_phi = 8;
  SpacetimeSource src = static_charge_source(0.0, Bump{}, 4.0, opt.momentum, k);
  GSResult none = gs_eval(src, nullptr, 2.0, Eigen::Vector3d(2, 0, 0), k, opt);
  CHECK(none.E.norm() == 0.0);
  CHECK(none.B.norm() == 0.0);
  FieldState init = random_state(8, 4.0, 2);
  GSResult with = gs_eval(src, &init, 0.7, Eigen::Vector3d(0.3, 0.2, 0.1), k, opt);
  auto evolved = sample_fields(free_evolution(init, 0.7, k), Eigen::Vector3d(0.3, 0.2, 0.1));
  CHECK((with.E - evolved.first).norm() == 0.0);
  CHECK((with.B - evolved.second).norm() == 0.0);
  CHECK((with.E - with.E_data).norm() == 0.0);
}

TEST_CASE("retarded fields are linear in the source") {
  PhysicalConstants k;
  GSOptions opt;
  opt.momentum = gl_sinh_grid(10, 3.0, 0.5);
  opt.n_theta = 12;
  opt.n_phi = 16;
  PulsedSourceSpec one;
  PulsedSourceSpec two = one;
  two.kappa *= 2;
  two.swirl *= 2;
  Eigen::Vector3d x(1.2, 0.4, -0.3);
  GSResult a = gs_eval(pulsed_source(one, opt.momentum, k), nullptr, 1.5, x, k, opt);
  GSResult b = gs_eval(pulsed_source(two, opt.momentum, k), nullptr, 1.5, x, k, opt);
  CHECK((b.E - 2 * a.E).norm() <= 1e-12 * a.E.norm());
  CHECK((b.B - 2 * a.B).norm() <= 1e-12 * a.B.norm());
}

TEST_CASE("static charge gives the Coulomb field outside its support") {
  PhysicalConstants k;
  GSOptions opt;
  opt.momentum = gl_sinh_grid(16, 3.0, 0.5);
  Bump bump{Eigen::Vector3d(0.2, -0.1, 0.3), 1.0};
  double q = 2.0;
  SpacetimeSource src = static_charge_source(q, bump, 4.0, opt.momentum, k);
  std::mt19937_64 rng(12);
  std::vector<Eigen::Vector3d> pts;
  for (int s = 0; s < 4; ++s) pts.push_back(bump.center + 3 * bump.radius * test::random_unit(rng));
  auto res = gs_eval_points(src, nullptr, 10.0, pts, k, opt);
  for (size_t i = 0; i < pts.size(); ++i) {
    Eigen::Vector3d r = pts[i] - bump.center;
    Eigen::Vector3d coulomb = q * r / std::pow(r.norm(), 3);
    CHECK((res[i].E - coulomb).norm() / coulomb.norm() <= 0.05);
    CHECK((res[i].E - coulomb).norm() / coulomb.norm() <= 1e-5);
    CHECK(res[i].B.norm() <= 1e-8 * coulomb.norm());
    CHECK(res[i].excluded_measure == 0.0);
  }
}

TEST_CASE("retarded fields agree with the grid solver on a pulsed source") {
  PhysicalConstants k;
  GSOptions opt;
  opt.momentum = gl_sinh_grid(16, 3.0, 0.5);
  PulsedSourceSpec spec;
  std::vector<Eigen::Vector3d> pts = {{2, 0, 0},     {0, 2, 0},       {1.5, 1.5, 0}, {0, 0, 2.2},
                                      {2.5, 1, 0.5}, {0.5, 0.3, 0.2}, {3.2, 0, 0},   {0, -3, 1}};
  FieldComparison cmp = compare_with_grid_solver(spec, 80, 10.0, 2.5, pts, k, opt);
  CHECK(cmp.max_rel_E <= 0.05);
  CHECK(cmp.max_rel_B <= 0.05);
}

TEST_CASE("coverage errors when the cone leaves the sampled source") {
  PhysicalConstants k;
  GSOptions opt;
  opt.momentum = gl_sinh_grid(6, 3.0, 0.5);
  SpacetimeSource src = static_charge_source(1.0, Bump{}, 4.0, opt.momentum, k);
  src.domain_lower = Eigen::Vector3d::Constant(-0.5);
  src.domain_upper = Eigen::Vector3d::Constant(0.5);
  CHECK_THROWS_AS(gs_eval(src, nullptr, 3.0, Eigen::Vector3d(2, 0, 0), k, opt), Error);
  SpacetimeSource late = static_charge_source(1.0, Bump{}, 4.0, opt.momentum, k);
  late.t_lower = 1.0;
  try {
    gs_eval(late, nullptr, 3.0, Eigen::Vector3d(1.5, 0, 0), k, opt);
    FAIL("expected a coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
  PhysicalConstants other;
  other.c = 2;
  CHECK_THROWS_AS(gs_eval(src, nullptr, 1.0, Eigen::Vector3d(2, 0, 0), other, opt), ConfigError);
}

TEST_CASE("lattice amplitudes interpolate samples and reject points outside") {
  SpacetimeLattice lat;
  lat.nt = 5;
  lat.n = 9;
  lat.t0 = 0;
  lat.dt = 0.25;
  lat.h = 0.25;
  lat.origin = Eigen::Vector3d::Constant(-1);
  lat.values.resize(lat.nt * lat.n * lat.n * lat.n);
  auto f = [](double t, const Eigen::Vector3d& y) { return 1 + 2 * t - y(0) + 0.5 * y(1) + 3 * y(2); };
  for (int it = 0; it < lat.nt; ++it)
    for (int i = 0; i < lat.n; ++i)
      for (int j = 0; j < lat.n; ++j)
        for (int l = 0; l < lat.n; ++l)
          lat.values(((it * lat.n + i) * lat.n + j) * lat.n + l) =
              f(it * lat.dt, lat.origin + lat.h * Eigen::Vector3d(i, j, l));
  auto amp = lattice_amplitude(lat);
  CHECK(amp(0.33, Eigen::Vector3d(0.1, -0.37, 0.52)) == doctest::Approx(f(0.33, Eigen::Vector3d(0.1, -0.37, 0.52))));
  CHECK_THROWS_AS(amp(1.5, Eigen::Vector3d::Zero()), Error);
  CHECK_THROWS_AS(amp(0.5, Eigen::Vector3d(1.2, 0, 0)), Error);
}

TEST_CASE("closed-form inverse power moments match quadrature") {
  Eigen::VectorXd x, w;
  gauss_legendre(200, x, w);
  for (double b : {0.0, 1e-6, 0.3, 0.8, 0.95})
    for (int n : {1, 2, 3, 4, 5}) {
      double acc = 0;
      for (int i = 0; i < 200; ++i) acc += w(i) * std::pow(1 + b * x(i), -n);
      CHECK(inverse_power_moment(b, n) == doctest::Approx(acc).epsilon(1e-10));
    }
}

TEST_CASE("gradient kernels: mean-zero property and growth bounds") {
  PhysicalConstants k;
  AngularGrid ang = angular_grid(128, 16);
  Eigen::Vector3d dir = Eigen::Vector3d(0.6, 0.8, 0).normalized();
  std::vector<Eigen::Vector3d> shells;
  for (double r : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) shells.push_back(r * dir);

  SUBCASE("representative kernels pass both checks") {
    auto rep = gs_gradient_kernel_checks(shells, k, ang, representative_gradient_kernels());
    CHECK(rep.mean_zero);
    CHECK(rep.bounds_hold);
    CHECK(rep.shells.front().mean_residual <= 1e-8);
    CHECK(rep.max_mean_residual <= 1e-8);
    CHECK(rep.fitted_a <= 2.0);
  }
  SUBCASE("plain mean subtraction is mean-zero but not uniformly bounded") {
    GradientKernels g = representative_gradient_kernels();
    g.a = plain_mean_free_kernel();
    auto rep = gs_gradient_kernel_checks(shells, k, ang, g);
    CHECK(rep.mean_zero);
    CHECK_FALSE(rep.bounds_hold);
    CHECK(rep.growth_a > 1.0);
  }
  SUBCASE("exponent-five negative control fails the bound") {
    GradientKernels g = representative_gradient_kernels();
    g.a = weighted_mean_free_kernel(5);
    auto rep = gs_gradient_kernel_checks(shells, k, ang, g);
    CHECK(rep.mean_zero);
    CHECK_FALSE(rep.bounds_hold);
    CHECK(rep.growth_a > 0.4);
  }
  SUBCASE("a kernel without zero mean fails the mean check") {
    GradientKernels g = representative_gradient_kernels();
    g.a = [](const Eigen::Vector3d& w, const Eigen::Vector3d& ph) { return 1 / std::pow(1 + ph.dot(w), 4) + 0 * w(0); };
    auto rep = gs_gradient_kernel_checks(shells, k, ang, g);
    CHECK_FALSE(rep.mean_zero);
  }
}
