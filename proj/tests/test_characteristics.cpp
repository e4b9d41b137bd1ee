#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "rvmb/characteristics.hpp"
#include "support.hpp"

using namespace rvmb;

namespace {

WaveFieldSpec smooth_spec() {
  WaveFieldSpec s;
  s.E0 = Eigen::Vector3d(0.03, -0.02, 0.01);
  s.E1 = Eigen::Vector3d(0.02, 0.04, -0.03);
  s.B0 = Eigen::Vector3d(-0.01, 0.05, 0.02);
  s.B1 = Eigen::Vector3d(0.04, -0.01, 0.03);
  s.wave = Eigen::Vector3d(1.3, -0.7, 0.4);
  s.omega = 0.9;
  return s;
}

}  // namespace

TEST_CASE("free streaming is reproduced exactly") {
  PhysicalConstants k;
  k.c = 1.7;
  k.m = 0.8;
  std::mt19937_64 rng(3);
  for (int s = 0; s < 10; ++s) {
    Eigen::Vector3d x = test::random_vec(rng, 2), p = test::random_vec(rng, 2);
    double t = 0.3, tau = t - 0.9 + 0.2 * s;
    auto traj = integrate_variational(t, x, p, zero_field(), tau, 0.07, k);
    const auto& e = traj.back();
    double p0 = std::sqrt(k.m * k.m * k.c * k.c + p.squaredNorm());
    Eigen::Vector3d X = x + k.c * p / p0 * (tau - t);
    CHECK((e.X - X).norm() <= 1e-13);
    CHECK((e.P - p).norm() == 0.0);
    CHECK((e.dXdp - free_streaming_dxdp(p, tau - t, k)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(e.tau == tau);
  }
}

TEST_CASE("initial conditions of the variational system") {
  PhysicalConstants k;
  auto traj = integrate_variational(0.5, Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.1, 0.2, 0.3),
                                    wave_field(smooth_spec()), 0.8, 0.05, k);
  CHECK(traj.front().tau == 0.5);
  CHECK(traj.front().dXdp.isZero(0));
  CHECK(traj.front().dPdp.isIdentity(0));
  CHECK(traj.front().X == Eigen::Vector3d(1, 2, 3));
  CHECK(traj.size() == 7);
  CHECK(integrate_characteristic(0.5, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), zero_field(), 0.5, 0.1, k)
            .size() == 1);
}

TEST_CASE("a constant magnetic field conserves |P| and P0") {
  PhysicalConstants k;
  Eigen::Vector3d p(0.7, -0.4, 1.1);
  auto traj = integrate_characteristic(0, Eigen::Vector3d::Zero(), p,
                                       constant_field(Eigen::Vector3d::Zero(), Eigen::Vector3d(0.3, -0.5, 0.8)), 1.0,
                                       0.01, k);
  double p0 = energy(p, k);
  for (const auto& s : traj) {
    CHECK(std::abs(s.P.norm() - p.norm()) <= 1e-10);
    CHECK(std::abs(energy(s.P, k) - p0) <= 1e-10);
  }
}

TEST_CASE("P0 is constant along trajectories without an electric field in a non-uniform magnetic field") {
  PhysicalConstants k;
  WaveFieldSpec s;
  s.B0 = Eigen::Vector3d(0, 0, 0.4);
  s.B1 = Eigen::Vector3d(0.2, 0.1, 0);
  s.wave = Eigen::Vector3d(0, 0, 1.5);
  Eigen::Vector3d p(0.5, 0.2, -0.3);
  auto traj = integrate_characteristic(0, Eigen::Vector3d::Zero(), p, wave_field(s), 1.0, 0.01, k);
  CHECK(std::abs(energy(traj.back().P, k) - energy(p, k)) <= 1e-10);
}

TEST_CASE("forward then backward integration returns to the start") {
  PhysicalConstants k;
  auto field = wave_field(smooth_spec());
  Eigen::Vector3d x(0.2, -0.5, 0.9), p(0.6, 0.3, -0.8);
  auto fwd = integrate_characteristic(0, x, p, field, 1.0, 0.01, k).back();
  auto back = integrate_characteristic(1.0, fwd.X, fwd.P, field, 0.0, 0.01, k).back();
  CHECK((back.X - x).norm() <= 1e-8);
  CHECK((back.P - p).norm() <= 1e-8);
}

TEST_CASE("RK4 endpoint error drops about 16x per halving") {
  PhysicalConstants k;
  WaveFieldSpec s = smooth_spec();
  s.E1 *= 10;
  s.B1 *= 10;
  auto field = wave_field(s);
  Eigen::Vector3d x(0.1, 0.2, 0.3), p(0.9, -0.6, 0.4);
  auto ref = integrate_characteristic(0, x, p, field, 2.0, 0.2 / 64, k).back();
  std::vector<double> h, err;
  for (double step : {0.2, 0.1, 0.05}) {
    auto e = integrate_characteristic(0, x, p, field, 2.0, step, k).back();
    h.push_back(step);
    err.push_back((e.X - ref.X).norm() + (e.P - ref.P).norm());
  }
  CHECK(err[0] / err[1] == doctest::Approx(16).epsilon(0.25));
  CHECK(err[1] / err[2] == doctest::Approx(16).epsilon(0.25));
  CHECK(test::loglog_slope(h, err) == doctest::Approx(4).epsilon(0.05));
}

TEST_CASE("variational Jacobian matches finite differences of perturbed trajectories") {
  std::mt19937_64 rng(11);
  for (double c : {1.0, 2.0}) {
    PhysicalConstants k;
    k.c = c;
    auto field = wave_field(smooth_spec());
    for (int s = 0; s < 4; ++s) {
      Eigen::Vector3d x = test::random_vec(rng, 1), p = test::random_vec(rng, 1.5);
      double tau = s % 2 ? -0.8 : 0.8;
      double step = 0.02, h = 1e-5;
      auto var = integrate_variational(0, x, p, field, tau, step, k).back();
      Eigen::Matrix3d fd = finite_difference_dxdp(0, x, p, field, tau, step, h, k);
      double bound = 10 * (h + std::pow(step, 4));
      CHECK((var.dXdp - fd).cwiseAbs().maxCoeff() <= 1e-5);
      CHECK((var.dXdp - fd).cwiseAbs().maxCoeff() <= bound);
    }
  }
}

TEST_CASE("field-free determinant matches the closed form") {
  PhysicalConstants k;
  std::mt19937_64 rng(5);
  for (int s = 0; s < 20; ++s) {
    Eigen::Vector3d p = test::random_vec(rng, 3);
    double dtau = 0.01 + 0.19 * (s / 19.0);
    auto r = jacobian_band_check(0, Eigen::Vector3d::Zero(), p, zero_field(), -dtau, 0.01, k);
    double exact = dtau * dtau * dtau / std::pow(1 + p.squaredNorm(), 2.5);
    CHECK(std::abs(std::abs(r.det) - exact) <= 1e-10 * std::max(1.0, exact));
    CHECK(std::abs(std::abs(r.det) - exact) / exact <= 1e-12);
    CHECK(r.det < 0);
    CHECK(r.in_band);
  }
}

TEST_CASE("field-free determinant carries c^5 for c != 1") {
  PhysicalConstants k;
  k.c = 2.0;
  k.m = 1.5;
  Eigen::Vector3d p(0.4, 1.2, -0.7);
  double dtau = 0.15;
  double det = free_streaming_dxdp(p, dtau, k).determinant();
  double p0 = energy(p, k);
  CHECK(det == doctest::Approx(std::pow(k.c, 5) * k.m * k.m * std::pow(dtau, 3) / std::pow(p0, 5)).epsilon(1e-13));
  CHECK(free_streaming_det(p, dtau, k) == doctest::Approx(det).epsilon(1e-13));
}

TEST_CASE("band holds on a random sweep with weak fields") {
  PhysicalConstants k;
  BandSweepOptions opt;
  auto rows = band_sweep(opt, k);
  REQUIRE(rows.size() == 100);
  double worst = 0;
  for (const auto& r : rows) {
    CHECK(std::abs(r.dtau) <= 0.2);
    CHECK(r.x.cwiseAbs().maxCoeff() <= opt.x_scale);
    CHECK(r.p.cwiseAbs().maxCoeff() <= opt.p_scale);
    CHECK(std::isfinite(r.record.det));
    CHECK(r.record.in_band);
    worst = std::max(worst, std::abs(std::log(std::abs(r.record.det) / r.record.reference)));
  }
  CHECK(worst < std::log(2.0));
}

TEST_CASE("band check reports strong-field departures as data") {
  PhysicalConstants k;
  WaveFieldSpec s;
  s.B0 = Eigen::Vector3d(0, 0, 40);
  auto r = jacobian_band_check(0, Eigen::Vector3d::Zero(), Eigen::Vector3d(2, 0, 0), wave_field(s), 1.0, 0.001, k);
  CHECK_FALSE(r.in_band);
  CHECK(r.reference > 0);
}

TEST_CASE("determinant vanishes cubically with the field-free leading coefficient") {
  PhysicalConstants k;
  Eigen::Vector3d p(0.5, -0.3, 0.8);
  auto fit = cubic_vanishing_fit(0.2, Eigen::Vector3d(0.1, 0.0, -0.2), p, wave_field(smooth_spec()), 2e-5, 0.2, 9, k);
  CHECK(std::abs(fit.exponent - 3) <= 0.05);
  double lead = free_streaming_det(p, 1.0, k);
  CHECK(fit.det.front() / std::pow(fit.dtau.front(), 3) == doctest::Approx(lead).epsilon(1e-3));
}

namespace {

GridFieldData trig_grid(int n) {
  GridFieldData d;
  d.n = n;
  d.length = 2 * M_PI;
  double h = d.length / n;
  for (int c = 0; c < 3; ++c) {
    d.E[c].resize(n * n * n);
    d.B[c].resize(n * n * n);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        double x = (i + 0.5) * h, y = (j + 0.5) * h, z = (l + 0.5) * h;
        int id = (i * n + j) * n + l;
        d.E[0](id) = std::sin(x) * std::cos(y);
        d.E[1](id) = std::cos(z);
        d.E[2](id) = std::sin(x + y + z);
        d.B[0](id) = std::cos(2 * y);
        d.B[1](id) = std::sin(z) * std::sin(x);
        d.B[2](id) = 0.5;
      }
  return d;
}

/// Largest gap between sampled gradients and finite differences of sampled values, and between
/// sampled gradients and the exact gradient of E_1 and E_2.
std::pair<double, double> grid_gradient_gaps(int n) {
  GridFieldData d = trig_grid(n);
  double h = d.length / n;
  auto field = grid_field(d);
  std::mt19937_64 rng(2);
  double fd_gap = 0, exact_gap = 0, fd_step = 1e-7;
  for (int s = 0; s < 40; ++s) {
    Eigen::Vector3d x = Eigen::Vector3d::Constant(M_PI) + test::random_vec(rng, 3);
    FieldSample f = field(0, x);
    for (int e = 0; e < 3; ++e) {
      Eigen::Vector3d xp = x, xm = x;
      xp(e) += fd_step;
      xm(e) -= fd_step;
      if (std::floor(xp(e) / h - 0.5) != std::floor(xm(e) / h - 0.5)) continue;
      Eigen::Vector3d dE = (field(0, xp).E - field(0, xm).E) / (2 * fd_step);
      Eigen::Vector3d dB = (field(0, xp).B - field(0, xm).B) / (2 * fd_step);
      fd_gap = std::max({fd_gap, (dE - f.grad_E.col(e)).norm(), (dB - f.grad_B.col(e)).norm()});
    }
    exact_gap = std::max(exact_gap, std::abs(f.grad_E(0, 0) - std::cos(x(0)) * std::cos(x(1))));
    exact_gap = std::max(exact_gap, std::abs(f.grad_E(1, 2) + std::sin(x(2))));
  }
  return {fd_gap, exact_gap};
}

}  // namespace

TEST_CASE("grid sampler interpolates nodes and wraps periodically") {
  int n = 16;
  GridFieldData d = trig_grid(n);
  double h = d.length / n;
  auto field = grid_field(d);
  Eigen::Vector3d node((3 + 0.5) * h, (5 + 0.5) * h, (7 + 0.5) * h);
  FieldSample at_node = field(0, node);
  CHECK(at_node.E(0) == doctest::Approx(std::sin(node(0)) * std::cos(node(1))).epsilon(1e-14));
  CHECK(at_node.B(0) == doctest::Approx(std::cos(2 * node(1))).epsilon(1e-14));
  Eigen::Vector3d shifted = node + Eigen::Vector3d(d.length, -d.length, 0);
  CHECK((field(0, shifted).E - at_node.E).norm() <= 1e-13);
  CHECK_THROWS_AS(grid_field(GridFieldData{}), Error);
}

TEST_CASE("grid sampler gradients are consistent with its values to first order in the spacing") {
  auto coarse = grid_gradient_gaps(16);
  auto fine = grid_gradient_gaps(32);
  CHECK(coarse.first <= 2 * (2 * M_PI / 16));
  CHECK(coarse.first / fine.first >= 1.7);
  CHECK(coarse.second / fine.second >= 3.0);
  CHECK(fine.second <= 0.02);
}

TEST_CASE("wave field gradients agree with finite differences") {
  auto field = wave_field(smooth_spec());
  Eigen::Vector3d x(0.4, -0.2, 0.7);
  FieldSample f = field(0.3, x);
  for (int e = 0; e < 3; ++e) {
    Eigen::Vector3d xp = x, xm = x;
    xp(e) += 1e-6;
    xm(e) -= 1e-6;
    CHECK(((field(0.3, xp).E - field(0.3, xm).E) / 2e-6 - f.grad_E.col(e)).norm() <= 1e-8);
    CHECK(((field(0.3, xp).B - field(0.3, xm).B) / 2e-6 - f.grad_B.col(e)).norm() <= 1e-8);
  }
}

TEST_CASE("leaving the sampler domain raises a domain error") {
  PhysicalConstants k;
  EMFieldSampler field = zero_field();
  field.lower = Eigen::Vector3d::Constant(-1);
  field.upper = Eigen::Vector3d::Constant(1);
  try {
    integrate_characteristic(0, Eigen::Vector3d::Zero(), Eigen::Vector3d(5, 0, 0), field, 3.0, 0.1, k);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
  CHECK_THROWS_AS(integrate_characteristic(0, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), field, 1.0, 0.0, k),
                  Error);
}

TEST_CASE("trajectory CSV has one row per state") {
  PhysicalConstants k;
  auto traj = integrate_variational(0, Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 0, 0), zero_field(), 0.5, 0.1, k);
  std::string path = "test_traj.csv";
  write_trajectory_csv(path, traj);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "tau,X1,X2,X3,P1,P2,P3,det");
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(traj.size()));
  std::remove(path.c_str());
}
