#include "rvmb/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <limits>
#include <type_traits>

#include "rvmb/error.hpp"
#include "rvmb/parallel.hpp"

namespace rvmb {

namespace {

double sq(double v) { return v * v; }

/// Fornberg weights for derivative `order` at 0 from the given offsets.
std::vector<double> fd_weights(const std::vector<double>& offsets, int order) {
  int n = static_cast<int>(offsets.size());
  std::vector<std::vector<double>> c(n, std::vector<double>(order + 1, 0.0));
  double c1 = 1, c4 = offsets[0];
  c[0][0] = 1;
  for (int i = 1; i < n; ++i) {
    int mn = std::min(i, order);
    double c2 = 1, c5 = c4;
    c4 = offsets[i];
    for (int j = 0; j < i; ++j) {
      double c3 = offsets[i] - offsets[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = c[i][order];
  return w;
}

/// Stencil (levels, weights) of d/dt at `level` from at most five stored levels 0..last.
void time_stencil(int level, int last, double dt, std::vector<int>& levels, std::vector<double>& w) {
  int width = std::min(5, last + 1);
  int start = std::clamp(level - width / 2, 0, last + 1 - width);
  std::vector<double> off;
  levels.clear();
  for (int i = 0; i < width; ++i) {
    levels.push_back(start + i);
    off.push_back(start + i - level);
  }
  w = fd_weights(off, 1);
  for (double& v : w) v /= dt;
}

/// Lagrange weights at fractional level s from up to four stored levels 0..last.
void interp_stencil_levels(double s, int last, std::vector<int>& levels, std::vector<double>& w) {
  int width = std::min(4, last + 1);
  int start = std::clamp(static_cast<int>(std::floor(s)) - (width - 1) / 2, 0, last + 1 - width);
  levels.clear();
  w.assign(width, 1.0);
  for (int i = 0; i < width; ++i) levels.push_back(start + i);
  for (int i = 0; i < width; ++i)
    for (int j = 0; j < width; ++j)
      if (i != j) w[i] *= (s - levels[j]) / double(levels[i] - levels[j]);
}

int wrap(int j, int n) { return ((j % n) + n) % n; }

void check_positive_definite(const Matrix5d& A0, int x) {
  Eigen::LLT<Matrix5d> llt(A0);
  require(llt.info() == Eigen::Success, ErrorKind::domain,
          "assembly: A0 is not positive definite at point " + std::to_string(x));
}

}  // namespace

EnthalpyCoefficients enthalpy_coefficients(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double K1 = bessel_k(1, g), K2 = bessel_k(2, g), K3 = bessel_k(3, g);
  FluidClosure cl = closure_analytic(st, k);
  EnthalpyCoefficients e;
  e.h = cl.h;
  e.h1 = st.n0 * k.m * k.m * (6 * K3 + g * K2) / (g * K2);
  e.h2 = st.n0 * k.m * k.m * K3 / (g * K2);
  double r = K1 / K2;
  e.h3 = -r * r - 2 * r / g + 1 + 8 / (g * g);
  e.h4 = r / g + 4 / (g * g);
  return e;
}

Matrix5d a0_closed(const JuttnerState& st, const PhysicalConstants& k) {
  EnthalpyCoefficients e = enthalpy_coefficients(st, k);
  FluidClosure cl = closure_analytic(st, k);
  double c = k.c, u0 = st.u0(k), n0 = st.n0;
  const Eigen::Vector3d& u = st.u;
  Matrix5d A;
  A(0, 0) = n0 * u0 / c;
  A(0, 4) = (cl.e0 * u0 * u0 + cl.P0 * u.squaredNorm()) / (c * c * c);
  A(4, 4) = (e.h1 * u0 * u0 - 3 * c * c * e.h2) * u0 / c;
  for (int j = 0; j < 3; ++j) {
    A(0, 1 + j) = n0 * u0 * e.h * u(j) / (c * c * c);
    A(1 + j, 4) = (e.h1 * u0 * u0 - c * c * e.h2) * u(j) / c;
    for (int l = 0; l < 3; ++l) A(1 + j, 1 + l) = (e.h1 * u(j) * u(l) + (j == l ? e.h2 * c * c : 0.0)) * u0 / c;
  }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) A(i, j) = A(j, i);
  return A;
}

Matrix5d a_closed(const JuttnerState& st, const PhysicalConstants& k, int axis) {
  require(axis >= 0 && axis < 3, ErrorKind::input, "a_closed: axis must be 0, 1 or 2");
  EnthalpyCoefficients e = enthalpy_coefficients(st, k);
  FluidClosure cl = closure_analytic(st, k);
  double c = k.c, u0 = st.u0(k), n0 = st.n0;
  const Eigen::Vector3d& u = st.u;
  double ui = u(axis);
  auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  Matrix5d A;
  A(0, 0) = n0 * ui;
  A(0, 4) = n0 * e.h * u0 * ui / (c * c);
  A(4, 4) = (e.h1 * u0 * u0 - c * c * e.h2) * ui;
  for (int j = 0; j < 3; ++j) {
    A(0, 1 + j) = n0 * e.h * ui * u(j) / (c * c) + cl.P0 * d(axis, j);
    A(1 + j, 4) = (e.h1 * ui * u(j) + c * c * e.h2 * d(axis, j)) * u0;
    for (int l = 0; l < 3; ++l)
      A(1 + j, 1 + l) = e.h1 * ui * u(j) * u(l) + e.h2 * c * c * (ui * d(j, l) + d(axis, j) * u(l) + d(axis, l) * u(j));
  }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) A(i, j) = A(j, i);
  return A;
}

double a0_det_bound(const JuttnerState& st, const PhysicalConstants& k) {
  EnthalpyCoefficients e = enthalpy_coefficients(st, k);
  double g = st.gamma(k);
  return std::pow(st.n0, 5) * std::pow(k.m, 8) * std::pow(k.c, 3) * std::pow(st.u0(k), 5) * std::pow(e.h4, 3) /
         (g * g);
}

Matrix6d maxwell_flux_matrix(const PhysicalConstants& k, int axis) {
  require(axis >= 0 && axis < 3, ErrorKind::input, "maxwell_flux_matrix: axis must be 0, 1 or 2");
  auto eps = [](int a, int b, int c) { return 0.5 * (a - b) * (b - c) * (c - a); };
  Matrix6d A = Matrix6d::Zero();
  for (int l = 0; l < 3; ++l)
    for (int j = 0; j < 3; ++j) {
      A(l, 3 + j) = -k.c * eps(l, axis, j);
      A(3 + l, j) = k.c * eps(l, axis, j);
    }
  return A;
}

double SineMode::value(double t, double x, double length) const {
  return mean + amplitude * std::sin(2 * M_PI * wavenumber * x / length + phase - frequency * t);
}

BackgroundProfile sinusoidal_profile(const SinusoidalProfile& spec) {
  BackgroundProfile p;
  p.length = spec.length;
  p.name = "sinusoidal";
  bool is_static = spec.n0.frequency == 0 && spec.T0.frequency == 0;
  for (int i = 0; i < 3; ++i)
    is_static = is_static && spec.u[i].frequency == 0 && spec.E0[i].frequency == 0 && spec.B0[i].frequency == 0;
  p.is_static = is_static;
  p.eval = [spec](double t, double x) {
    ProfileSample s;
    double L = spec.length;
    s.n0 = spec.n0.value(t, x, L);
    s.T0 = spec.T0.value(t, x, L);
    for (int i = 0; i < 3; ++i) {
      s.u(i) = spec.u[i].value(t, x, L);
      s.E0(i) = spec.E0[i].value(t, x, L);
      s.B0(i) = spec.B0[i].value(t, x, L);
    }
    return s;
  };
  return p;
}

double isentropic_log_slope(double gamma) {
  double K1 = bessel_k(1, gamma), K2 = bessel_k(2, gamma), K3 = bessel_k(3, gamma);
  double dK2 = -K1 - 2 * K2 / gamma;
  double dK3 = -K2 - 3 * K3 / gamma;
  return dK2 / K2 - 1 / gamma + K3 / K2 + gamma * (dK3 * K2 - K3 * dK2) / (K2 * K2);
}

double isentropic_gamma(double n, double C) {
  require(n > 0 && C > 0, ErrorKind::domain, "isentropic_gamma: density and constant must be positive");
  auto f = [&](double lg) { return std::log(isentropic_density(std::exp(lg), C)) - std::log(n); };
  double lo = std::log(0.05), hi = std::log(400.0);
  double flo = f(lo), fhi = f(hi);
  require(flo > 0 && fhi < 0, ErrorKind::domain, "isentropic_gamma: density outside the supported temperature range");
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

BackgroundProfile equilibrium_profile(const EquilibriumProfile& spec, const PhysicalConstants& k) {
  require(spec.n_mean > 0 && spec.T_mean > 0 && spec.length > 0, ErrorKind::input,
          "equilibrium_profile: density, temperature and length must be positive");
  double g_mean = k.m * k.c * k.c / (k.k_B * spec.T_mean);
  double C = spec.n_mean / isentropic_density(g_mean, 1.0);
  BackgroundProfile p;
  p.length = spec.length;
  p.name = "equilibrium";
  p.is_static = true;
  p.eval = [spec, k, C](double, double x) {
    double kap = 2 * M_PI * spec.wavenumber / spec.length;
    double U = spec.flow_amplitude, d = spec.density_amplitude, c = k.c;
    ProfileSample s;
    s.n0 = spec.n_mean + d * std::cos(kap * x);
    double g = isentropic_gamma(s.n0, C);
    s.T0 = k.m * c * c / (k.k_B * g);
    s.u = Eigen::Vector3d(0, U * std::sin(kap * x), 0);
    double u0 = std::sqrt(c * c + s.u.squaredNorm());
    s.B0 = Eigen::Vector3d(0, 0,
                           spec.B3_base + 4 * M_PI * k.e_minus * U / (c * c) *
                                              (spec.n_mean * (1 - std::cos(kap * x)) / kap +
                                               d * sq(std::sin(kap * x)) / (2 * kap)));
    double dn = -d * kap * std::sin(kap * x);
    double dg = dn / (s.n0 * isentropic_log_slope(g));
    double dT = -s.T0 / g * dg;
    double dP = k.k_B * (s.T0 * dn + s.n0 * dT);
    s.E0 = Eigen::Vector3d(-(c * dP / (k.e_minus * s.n0) + s.u(1) * s.B0(2)) / u0, 0, 0);
    return s;
  };
  return p;
}

double FluidForcing::fluid_max() const {
  double m = 0;
  for (size_t j = 0; j < continuity.size(); ++j)
    m = std::max({m, std::abs(continuity[j]), momentum[j].cwiseAbs().maxCoeff(), std::abs(energy[j])});
  return m;
}

double FluidForcing::maxwell_max() const {
  double m = 0;
  for (size_t j = 0; j < ampere.size(); ++j)
    m = std::max({m, ampere[j].cwiseAbs().maxCoeff(), faraday[j].cwiseAbs().maxCoeff(), std::abs(gauss[j]),
                  std::abs(div_b[j])});
  return m;
}

Background manufactured_background(const BackgroundProfile& profile, int nx, const PhysicalConstants& k,
                                   const BackgroundBounds& bounds, double time) {
  k.validate();
  if (nx < 4) throw ConfigError("background.nx", "at least 4 points are required");
  if (!(profile.length > 0)) throw ConfigError("background.length", "must be positive");
  require(static_cast<bool>(profile.eval), ErrorKind::input, "manufactured_background: profile has no evaluator");
  Background bg;
  bg.k = k;
  bg.nx = nx;
  bg.length = profile.length;
  bg.time = time;
  bg.is_static = profile.is_static;
  double h = profile.length / nx, c = k.c, e = k.e_minus;

  struct Quantities {
    double cont_t, cont_x, energy_t, energy_x, energy_src;
    Eigen::Vector3d mom_t, mom_x, mom_src, E, B;
    double n0, u0;
    Eigen::Vector3d u;
  };
  auto quantities = [&](double t, double x) {
    ProfileSample s = profile.eval(t, x);
    JuttnerState st{s.n0, s.u, s.T0};
    FluidClosure cl = closure_analytic(st, k);
    double u0 = st.u0(k), w = cl.e0 + cl.P0;
    Quantities q;
    q.n0 = s.n0;
    q.u0 = u0;
    q.u = s.u;
    q.cont_t = s.n0 * u0 / c;
    q.cont_x = s.n0 * s.u(0);
    q.mom_t = w * u0 * s.u / c;
    q.mom_x = w * s.u(0) * s.u + c * c * cl.P0 * Eigen::Vector3d::UnitX();
    q.mom_src = c * e * s.n0 * (u0 * s.E0 + s.u.cross(s.B0));
    q.energy_t = (w * u0 * u0 - c * c * cl.P0) / c;
    q.energy_x = w * u0 * s.u(0);
    q.energy_src = c * e * s.n0 * s.u.dot(s.E0);
    q.E = s.E0;
    q.B = s.B0;
    return q;
  };
  auto curl1 = [](const Eigen::Vector3d& dx) { return Eigen::Vector3d(0, -dx(2), dx(1)); };

  FluidForcing& F = bg.forcing;
  for (int j = 0; j < nx; ++j) {
    double x = j * h;
    ProfileSample s = profile.eval(time, x);
    if (!(s.n0 > 0)) throw ConfigError("background.n0", "density must be positive");
    if (!(s.T0 > 0)) throw ConfigError("background.T0", "temperature must be positive");
    if (std::abs(s.n0 - k.n_bar) > bounds.max_density_deviation)
      throw ConfigError("background.n0", "deviation from n_bar exceeds the smallness bound");
    if (s.u.norm() > bounds.max_speed * c) throw ConfigError("background.u", "flow speed exceeds the smallness bound");
    if (s.E0.norm() > bounds.max_E) throw ConfigError("background.E0", "field exceeds the smallness bound");
    if (s.B0.norm() > bounds.max_B) throw ConfigError("background.B0", "field exceeds the smallness bound");
    bg.state.push_back(JuttnerState{s.n0, s.u, s.T0});
    bg.E0.push_back(s.E0);
    bg.B0.push_back(s.B0);

    Quantities q0 = quantities(time, x);
    Quantities xl = quantities(time, x - h), xr = quantities(time, x + h);
    Quantities tl = quantities(time - h, x), tr = quantities(time + h, x);
    auto ddx = [&](auto get) {
      using T = std::decay_t<decltype(get(xr))>;
      return T((get(xr) - get(xl)) / (2 * h));
    };
    auto ddt = [&](auto get) {
      using T = std::decay_t<decltype(get(tr))>;
      return T((get(tr) - get(tl)) / (2 * h));
    };
    F.continuity.push_back(ddt([](const Quantities& a) { return a.cont_t; }) / c +
                           ddx([](const Quantities& a) { return a.cont_x; }));
    Eigen::Vector3d mt = ddt([](const Quantities& a) -> Eigen::Vector3d { return a.mom_t; });
    Eigen::Vector3d mx = ddx([](const Quantities& a) -> Eigen::Vector3d { return a.mom_x; });
    F.momentum.push_back(mt / c + mx + q0.mom_src);
    F.energy.push_back(ddt([](const Quantities& a) { return a.energy_t; }) / c +
                       ddx([](const Quantities& a) { return a.energy_x; }) + q0.energy_src);
    Eigen::Vector3d dEt = ddt([](const Quantities& a) -> Eigen::Vector3d { return a.E; });
    Eigen::Vector3d dBt = ddt([](const Quantities& a) -> Eigen::Vector3d { return a.B; });
    Eigen::Vector3d dEx = ddx([](const Quantities& a) -> Eigen::Vector3d { return a.E; });
    Eigen::Vector3d dBx = ddx([](const Quantities& a) -> Eigen::Vector3d { return a.B; });
    F.ampere.push_back(dEt - c * curl1(dBx) - 4 * M_PI * e * q0.n0 * q0.u / c);
    F.faraday.push_back(dBt + c * curl1(dEx));
    F.gauss.push_back(dEx(0) - 4 * M_PI * e * (k.n_bar - q0.n0 * q0.u0 / c));
    F.div_b.push_back(dBx(0));
  }
  return bg;
}

HilbertContext HilbertContext::create(const Background& bg, const HilbertOptions& opt, bool with_operators) {
  if (!bg.is_static)
    throw ConfigError("background", "the coefficient hierarchy needs a time-independent background");
  if (opt.momentum_nodes < 4) throw ConfigError("hilbert.momentum_nodes", "at least 4 nodes per axis are required");
  if (!(opt.p_max > 0)) throw ConfigError("hilbert.p_max", "must be positive");
  if (!(opt.dt > 0)) throw ConfigError("hilbert.dt", "must be positive");
  if (opt.levels < 1) throw ConfigError("hilbert.levels", "at least one step is required");
  HilbertContext ctx;
  ctx.bg_ = bg;
  ctx.opt_ = opt;
  const PhysicalConstants& k = bg.k;
  ctx.grid_ = uniform_grid(opt.momentum_nodes, opt.p_max);
  int N = ctx.grid_.size();
  ctx.p_hat_.resize(N, 3);
  ctx.p0_.resize(N);
  for (int i = 0; i < N; ++i) {
    Eigen::Vector3d p = ctx.grid_.node(i);
    ctx.p0_(i) = energy(p, k);
    ctx.p_hat_.row(i) = (p / ctx.p0_(i)).transpose();
  }
  ctx.points_.resize(bg.nx);
  CollisionOptions copt = opt.collision;
  copt.threads = 1;
  parallel_for(bg.nx, opt.threads, [&](int begin, int end) {
    for (int x = begin; x < end; ++x) {
      PointData& pd = ctx.points_[x];
      pd.st = bg.state[x];
      pd.E0 = bg.E0[x];
      pd.B0 = bg.B0[x];
      pd.M.resize(N);
      pd.psi_t.resize(N, 5);
      pd.grad_log_m.resize(N, 3);
      double u0 = pd.st.u0(k), kT = k.k_B * pd.st.T0;
      for (int i = 0; i < N; ++i) {
        Eigen::Vector3d p = ctx.grid_.node(i);
        pd.M(i) = juttner_eval(p, pd.st, k);
        pd.grad_log_m.row(i) = ((pd.st.u - u0 * p / ctx.p0_(i)) / kT).transpose();
      }
      pd.sqrt_m = pd.M.cwiseSqrt();
      for (int i = 0; i < N; ++i) {
        Eigen::Vector3d p = ctx.grid_.node(i);
        pd.psi_t(i, 0) = pd.sqrt_m(i);
        for (int a = 0; a < 3; ++a) pd.psi_t(i, 1 + a) = p(a) * pd.sqrt_m(i);
        pd.psi_t(i, 4) = ctx.p0_(i) * pd.sqrt_m(i);
      }
      const Eigen::VectorXd& w = ctx.grid_.weights;
      pd.A0 = pd.psi_t.transpose() * w.asDiagonal() * pd.psi_t;
      for (int a = 0; a < 3; ++a) {
        Eigen::VectorXd wa = (w.array() * k.c * ctx.p_hat_.col(a).array()).matrix();
        pd.A[a] = pd.psi_t.transpose() * wa.asDiagonal() * pd.psi_t;
      }
      check_positive_definite(pd.A0, x);
      pd.A0_inv = pd.A0.inverse();
      if (with_operators)
        pd.L = std::make_shared<LinearizedOperator>(LinearizedOperator::assemble(ctx.grid_, pd.st, k, copt));
    }
  });
  for (int x = 0; x < bg.nx; ++x) {
    double det = a0_closed(ctx.points_[x].st, k).determinant();
    require(det > a0_det_bound(ctx.points_[x].st, k), ErrorKind::domain,
            "assembly: det A0 is below its lower bound at point " + std::to_string(x));
  }
  return ctx;
}

Vector5d HilbertContext::moments(int x, const Eigen::VectorXd& f) const {
  return points_[x].psi_t.transpose() * grid_.weights.cwiseProduct(f);
}

Vector5d HilbertContext::coefficients(int x, const Eigen::VectorXd& f) const {
  return points_[x].A0_inv * moments(x, f);
}

Eigen::VectorXd HilbertContext::project(int x, const Eigen::VectorXd& f) const {
  return points_[x].psi_t * coefficients(x, f);
}

double HilbertContext::norm(const Eigen::VectorXd& f) const {
  return std::sqrt(grid_.weights.dot(f.cwiseAbs2()));
}

Eigen::VectorXd HilbertContext::force(int x, const Eigen::Vector3d& E, const Eigen::Vector3d& B,
                                      const Eigen::VectorXd& f) const {
  const PointData& pd = points_[x];
  const PhysicalConstants& k = bg_.k;
  int n = grid_.n_axis, N = grid_.size();
  double hp = grid_.spacing();
  Vector5d cf = coefficients(x, f);
  Eigen::VectorXd g = f - pd.psi_t * cf;
  Eigen::VectorXd out(N);
  const int stride[3] = {n * n, n, 1};
  for (int i = 0; i < N; ++i) {
    int idx[3] = {i / (n * n), (i / n) % n, i % n};
    Eigen::Vector3d ph = p_hat_.row(i).transpose();
    Eigen::Vector3d gl = pd.grad_log_m.row(i).transpose();
    double poly = cf(0) + cf(1) * grid_.nodes(i, 0) + cf(2) * grid_.nodes(i, 1) + cf(3) * grid_.nodes(i, 2) +
                  cf(4) * p0_(i);
    Eigen::Vector3d grad = pd.sqrt_m(i) * (cf.segment<3>(1) + cf(4) * ph + poly * gl);
    for (int a = 0; a < 3; ++a) {
      double up = idx[a] + 1 < n ? g(i + stride[a]) : 0.0;
      double dn = idx[a] > 0 ? g(i - stride[a]) : 0.0;
      grad(a) += (up - dn) / (2 * hp) + 0.5 * g(i) * gl(a);
    }
    out(i) = -k.e_minus * (E + ph.cross(B)).dot(grad);
  }
  const Eigen::VectorXd& w = grid_.weights;
  out -= (w.dot(pd.sqrt_m.cwiseProduct(out)) / w.dot(pd.M)) * pd.sqrt_m;
  return out;
}

Eigen::VectorXd HilbertContext::transport(int x, const Eigen::VectorXd& f_left, const Eigen::VectorXd& f_right) const {
  int n = bg_.nx;
  const PointData& l = points_[wrap(x - 1, n)];
  const PointData& r = points_[wrap(x + 1, n)];
  Eigen::ArrayXd d = (r.sqrt_m.array() * f_right.array() - l.sqrt_m.array() * f_left.array()) / (2 * h());
  return (bg_.k.c * p_hat_.col(0).array() * d / points_[x].sqrt_m.array()).matrix();
}

Eigen::Vector3d HilbertContext::current(int x, const Eigen::VectorXd& f) const {
  Eigen::VectorXd wf = grid_.weights.cwiseProduct(points_[x].sqrt_m).cwiseProduct(f);
  return bg_.k.c * (p_hat_.transpose() * wf);
}

double HilbertContext::charge(int x, const Eigen::VectorXd& f) const {
  return grid_.weights.cwiseProduct(points_[x].sqrt_m).dot(f);
}

Eigen::VectorXd HilbertCoefficient::f(const HilbertContext& ctx, int level, int x) const {
  Eigen::VectorXd v = ctx.point(x).psi_t * U[level][x];
  if (!micro.empty() && micro[level][x].size() > 0) v += micro[level][x];
  return v;
}

HilbertCoefficient background_stage(const HilbertContext& ctx) {
  HilbertCoefficient s;
  s.order = 0;
  s.dt = ctx.options().dt;
  int L = ctx.options().levels + 1, nx = ctx.nx();
  Vector5d e0 = Vector5d::Zero();
  e0(0) = 1;
  s.U.assign(L, std::vector<Vector5d>(nx, e0));
  s.E.assign(L, ctx.background().E0);
  s.B.assign(L, ctx.background().B0);
  s.micro.assign(L, std::vector<Eigen::VectorXd>(nx));
  return s;
}

Eigen::VectorXd stage_kinetic_operator(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                       int level, int x) {
  require(n >= 0 && static_cast<int>(lower.size()) > n, ErrorKind::input,
          "stage_kinetic_operator: stages 0..n are required");
  int nx = ctx.nx();
  const HilbertCoefficient& s = lower[n];
  Eigen::VectorXd out = ctx.transport(x, s.f(ctx, level, wrap(x - 1, nx)), s.f(ctx, level, wrap(x + 1, nx)));
  if (n > 0 && s.levels() > 1) {
    std::vector<int> lv;
    std::vector<double> w;
    time_stencil(level, s.levels() - 1, s.dt, lv, w);
    for (size_t i = 0; i < lv.size(); ++i) out += w[i] * s.f(ctx, lv[i], x);
  }
  for (int i = 0; i <= n; ++i) {
    const HilbertCoefficient& fi = lower[i];
    out += ctx.force(x, fi.E[level][x], fi.B[level][x], lower[n - i].f(ctx, level, x));
  }
  return out;
}

MicroPartResult micro_part(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower, int level,
                           bool solve) {
  require(n >= 0 && static_cast<int>(lower.size()) > n, ErrorKind::input, "micro_part: stages 0..n are required");
  require(!solve || ctx.has_operators(), ErrorKind::input, "micro_part: context was built without operators");
  const HilbertOptions& opt = ctx.options();
  int nx = ctx.nx();
  MicroPartResult r;
  r.micro.resize(nx);
  r.rhs.resize(nx);
  r.p_ratio.assign(nx, 0.0);
  r.raw_p_ratio.assign(nx, 0.0);
  r.projection.assign(nx, 0.0);
  r.solves.resize(nx);
  CollisionOptions copt = opt.collision;
  copt.threads = 1;
  parallel_for(nx, opt.threads, [&](int begin, int end) {
    for (int x = begin; x < end; ++x) {
      const PointData& pd = ctx.point(x);
      Eigen::VectorXd rhs = -stage_kinetic_operator(n, ctx, lower, level, x);
      for (int i = 1; i <= n; ++i) {
        int j = n + 1 - i;
        QResult q = gamma_bilinear(lower[i].f(ctx, level, x), lower[j].f(ctx, level, x), ctx.grid(), pd.st,
                                   ctx.constants(), copt);
        rhs += ctx.micro(x, q.values);
      }
      double rn = ctx.norm(rhs);
      double pn = ctx.norm(ctx.project(x, rhs));
      r.raw_p_ratio[x] = rn > 0 ? pn / rn : 0.0;
      r.p_ratio[x] = n == 0 ? 0.0 : r.raw_p_ratio[x];
      r.rhs[x] = rhs;
      if (solve) {
        Eigen::VectorXd g = ctx.micro(x, rhs);
        if (ctx.norm(g) == 0) {
          r.micro[x] = Eigen::VectorXd::Zero(g.size());
        } else {
          PseudoInverseOptions popt = opt.inverse;
          popt.micro_tol = std::max(popt.micro_tol, opt.micro_tol);
          r.micro[x] = pd.L->pseudo_inverse(g, popt, &r.solves[x]);
        }
        double mn = ctx.norm(r.micro[x]);
        r.projection[x] = mn > 0 ? ctx.norm(ctx.project(x, r.micro[x])) / mn : 0.0;
      }
    }
  });
  double worst = *std::max_element(r.raw_p_ratio.begin(), r.raw_p_ratio.end());
  if (!solve) return r;
  if (n == 0)
    require(worst <= opt.forcing_budget, ErrorKind::consistency,
            "micro_part: the background leaves a projected residual above the forcing budget");
  else
    require(worst <= opt.consistency_tol, ErrorKind::consistency,
            "micro_part: projected right-hand side of stage " + std::to_string(n) + " is not small");
  return r;
}

namespace {

/// Moment sources of the stage-n macro system at one level: S = -moments of the known terms and
/// S_bar = (4 pi e J(micro), 0).
void stage_sources(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                   const std::vector<Eigen::VectorXd>& micro_n, int level, std::vector<Vector5d>& S,
                   std::vector<Vector6d>& S_bar) {
  int nx = ctx.nx();
  const PhysicalConstants& k = ctx.constants();
  S.assign(nx, Vector5d::Zero());
  S_bar.assign(nx, Vector6d::Zero());
  for (int x = 0; x < nx; ++x) {
    const PointData& pd = ctx.point(x);
    Eigen::VectorXd known = ctx.transport(x, micro_n[wrap(x - 1, nx)], micro_n[wrap(x + 1, nx)]);
    known += ctx.force(x, pd.E0, pd.B0, micro_n[x]);
    for (int i = 1; i < n; ++i)
      known += ctx.force(x, lower[i].E[level][x], lower[i].B[level][x], lower[n - i].f(ctx, level, x));
    S[x] = -ctx.moments(x, known);
    S_bar[x].head<3>() = 4 * M_PI * k.e_minus * ctx.current(x, micro_n[x]);
  }
}

void assemble_coefficients(const HilbertContext& ctx, HyperbolicSystem& sys) {
  int nx = ctx.nx();
  const PhysicalConstants& k = ctx.constants();
  sys.h = ctx.h();
  sys.c = k.c;
  sys.A0.resize(nx);
  sys.A0_inv.resize(nx);
  for (auto& a : sys.A) a.resize(nx);
  sys.B1.resize(nx);
  sys.B2.resize(nx);
  sys.B.resize(nx);
  for (int x = 0; x < nx; ++x) {
    const PointData& pd = ctx.point(x);
    sys.A0[x] = pd.A0;
    sys.A0_inv[x] = pd.A0_inv;
    for (int a = 0; a < 3; ++a) sys.A[a][x] = pd.A[a];
    Matrix5d dA1 = (ctx.point(wrap(x + 1, nx)).A[0] - ctx.point(wrap(x - 1, nx)).A[0]) / (2 * ctx.h());
    Matrix5d Bf;
    for (int l = 0; l < 5; ++l) Bf.col(l) = ctx.moments(x, ctx.force(x, pd.E0, pd.B0, pd.psi_t.col(l)));
    sys.B1[x] = Bf + dA1;
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d e = Eigen::Vector3d::Unit(a), z = Eigen::Vector3d::Zero();
      sys.B2[x].col(a) = ctx.moments(x, ctx.force(x, e, z, pd.sqrt_m));
      sys.B2[x].col(3 + a) = ctx.moments(x, ctx.force(x, z, e, pd.sqrt_m));
    }
    sys.B[x].setZero();
    for (int l = 0; l < 5; ++l)
      sys.B[x].block<3, 1>(0, l) = -4 * M_PI * k.e_minus * ctx.current(x, pd.psi_t.col(l));
  }
}

}  // namespace

double HyperbolicSystem::max_speed() const {
  double s = c;
  for (int x = 0; x < nx(); ++x) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix5d> es(A[0][x], A0[x], Eigen::EigenvaluesOnly);
    s = std::max(s, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return s;
}

HyperbolicSystem assemble_macro_system(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                       const std::vector<Eigen::VectorXd>& micro_n, int level) {
  require(n >= 1 && static_cast<int>(lower.size()) >= n, ErrorKind::input,
          "assemble_macro_system: stages 0..n-1 are required");
  require(static_cast<int>(micro_n.size()) == ctx.nx(), ErrorKind::input,
          "assemble_macro_system: micro part must cover every point");
  HyperbolicSystem sys;
  assemble_coefficients(ctx, sys);
  stage_sources(n, ctx, lower, micro_n, level, sys.S, sys.S_bar);
  return sys;
}

namespace {

MacroState rate(const HyperbolicSystem& sys, const MacroState& s, const std::vector<Vector5d>& S,
                const std::vector<Vector6d>& S_bar, const Matrix6d& Abar) {
  int nx = sys.nx();
  double h = sys.h;
  MacroState r;
  r.U.resize(nx);
  r.U_bar.resize(nx);
  for (int x = 0; x < nx; ++x) {
    int l = wrap(x - 1, nx), rr = wrap(x + 1, nx);
    Matrix5d dA1 = (sys.A[0][rr] - sys.A[0][l]) / (2 * h);
    Vector5d flux = (sys.A[0][rr] * s.U[rr] - sys.A[0][l] * s.U[l]) / (2 * h) - dA1 * s.U[x];
    r.U[x] = sys.A0_inv[x] * (S[x] - flux - sys.B1[x] * s.U[x] - sys.B2[x] * s.U_bar[x]);
    r.U_bar[x] = S_bar[x] - Abar * (s.U_bar[rr] - s.U_bar[l]) / (2 * h) - sys.B[x] * s.U[x];
  }
  return r;
}

MacroState axpy(const MacroState& a, double t, const MacroState& b) {
  MacroState r = a;
  for (size_t x = 0; x < a.U.size(); ++x) {
    r.U[x] += t * b.U[x];
    r.U_bar[x] += t * b.U_bar[x];
  }
  return r;
}

}  // namespace

void step_macro(const HyperbolicSystem& sys, MacroState& state, double t, double dt, const MacroSource& source,
                double cfl_max) {
  require(static_cast<int>(state.U.size()) == sys.nx() && static_cast<int>(state.U_bar.size()) == sys.nx(),
          ErrorKind::input, "step_macro: state size mismatch");
  if (!(sys.max_speed() * dt <= cfl_max * sys.h)) throw ConfigError("dt", "macro step violates the CFL bound");
  for (int x = 0; x < sys.nx(); ++x)
    require(sys.A0_inv[x].allFinite(), ErrorKind::degenerate, "step_macro: A0 is not invertible");
  PhysicalConstants k;
  k.c = sys.c;
  Matrix6d Abar = maxwell_flux_matrix(k, 0);
  std::vector<Vector5d> S;
  std::vector<Vector6d> Sb;
  auto f = [&](double tt, const MacroState& s) {
    source(tt, S, Sb);
    return rate(sys, s, S, Sb, Abar);
  };
  MacroState k1 = f(t, state);
  MacroState k2 = f(t + dt / 2, axpy(state, dt / 2, k1));
  MacroState k3 = f(t + dt / 2, axpy(state, dt / 2, k2));
  MacroState k4 = f(t + dt, axpy(state, dt, k3));
  for (int x = 0; x < sys.nx(); ++x) {
    state.U[x] += dt / 6 * (k1.U[x] + 2 * k2.U[x] + 2 * k3.U[x] + k4.U[x]);
    state.U_bar[x] += dt / 6 * (k1.U_bar[x] + 2 * k2.U_bar[x] + 2 * k3.U_bar[x] + k4.U_bar[x]);
  }
}

void step_macro(const HyperbolicSystem& sys, MacroState& state, double dt, double cfl_max) {
  std::vector<Vector5d> S = sys.S;
  std::vector<Vector6d> Sb = sys.S_bar;
  if (S.empty()) S.assign(sys.nx(), Vector5d::Zero());
  if (Sb.empty()) Sb.assign(sys.nx(), Vector6d::Zero());
  step_macro(
      sys, state, 0.0, dt,
      [&](double, std::vector<Vector5d>& s, std::vector<Vector6d>& sb) {
        s = S;
        sb = Sb;
      },
      cfl_max);
}

double macro_norm(const MacroState& state) {
  double s = 0;
  for (size_t x = 0; x < state.U.size(); ++x) s += state.U[x].squaredNorm() + state.U_bar[x].squaredNorm();
  return std::sqrt(s);
}

std::vector<double> solve_periodic_gradient(const std::vector<double>& r, double h) {
  int n = static_cast<int>(r.size());
  std::vector<std::complex<double>> rh(n);
  for (int m = 0; m < n; ++m) {
    std::complex<double> s = 0;
    for (int j = 0; j < n; ++j) s += r[j] * std::polar(1.0, -2 * M_PI * m * j / n);
    rh[m] = s;
  }
  std::vector<double> out(n, 0.0);
  for (int m = 0; m < n; ++m) {
    double sn = std::sin(2 * M_PI * m / n);
    if (std::abs(sn) < 1e-12) continue;
    std::complex<double> e = rh[m] / std::complex<double>(0, sn / h);
    for (int j = 0; j < n; ++j) out[j] += (e * std::polar(1.0, 2 * M_PI * m * j / n)).real() / n;
  }
  return out;
}

HilbertCoefficient build_coefficient(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                     const StageInitialData& initial) {
  require(n >= 1 && static_cast<int>(lower.size()) >= n, ErrorKind::input,
          "build_coefficient: stages 0..n-1 are required");
  require(ctx.has_operators(), ErrorKind::input, "build_coefficient: context was built without operators");
  const HilbertOptions& opt = ctx.options();
  const PhysicalConstants& k = ctx.constants();
  int nx = ctx.nx(), last = opt.levels;
  HilbertCoefficient s;
  s.order = n;
  s.dt = opt.dt;
  s.micro.resize(last + 1);

  for (int l = 0; l <= last; ++l) {
    if (n == 1 && l > 0) {
      s.micro[l] = s.micro[0];
      continue;
    }
    MicroPartResult mp = micro_part(n - 1, ctx, lower, l);
    s.micro[l] = mp.micro;
    for (int x = 0; x < nx; ++x) {
      s.micro_projection_max = std::max(s.micro_projection_max, mp.projection[x]);
      s.consistency_max = std::max(s.consistency_max, mp.p_ratio[x]);
    }
  }

  HyperbolicSystem sys;
  assemble_coefficients(ctx, sys);
  if (!(sys.max_speed() * opt.dt <= opt.cfl_max * sys.h))
    throw ConfigError("hilbert.dt", "macro step violates the CFL bound");
  std::vector<std::vector<Vector5d>> S(last + 1);
  std::vector<std::vector<Vector6d>> Sb(last + 1);
  for (int l = 0; l <= last; ++l) stage_sources(n, ctx, lower, s.micro[l], l, S[l], Sb[l]);

  MacroState st;
  st.U.assign(nx, Vector5d::Zero());
  st.U_bar.assign(nx, Vector6d::Zero());
  for (int x = 0; x < nx; ++x) {
    if (!initial.U.empty()) st.U[x] = initial.U.at(x);
    if (!initial.E.empty()) st.U_bar[x].head<3>() = initial.E.at(x);
    if (!initial.B.empty()) st.U_bar[x].tail<3>() = initial.B.at(x);
  }
  std::vector<double> rho(nx);
  double e1_mean = 0;
  for (int x = 0; x < nx; ++x) {
    rho[x] = -4 * M_PI * k.e_minus * ctx.charge(x, ctx.point(x).psi_t * st.U[x] + s.micro[0][x]);
    e1_mean += st.U_bar[x](0) / nx;
  }
  std::vector<double> e1 = solve_periodic_gradient(rho, ctx.h());
  for (int x = 0; x < nx; ++x) st.U_bar[x](0) = e1[x] + e1_mean;

  auto store = [&](const MacroState& m) {
    s.U.push_back(m.U);
    std::vector<Eigen::Vector3d> E(nx), B(nx);
    for (int x = 0; x < nx; ++x) {
      E[x] = m.U_bar[x].head<3>();
      B[x] = m.U_bar[x].tail<3>();
    }
    s.E.push_back(E);
    s.B.push_back(B);
  };
  store(st);
  MacroSource source = [&](double t, std::vector<Vector5d>& out, std::vector<Vector6d>& out_bar) {
    std::vector<int> lv;
    std::vector<double> w;
    interp_stencil_levels(t / opt.dt, last, lv, w);
    out.assign(nx, Vector5d::Zero());
    out_bar.assign(nx, Vector6d::Zero());
    for (size_t i = 0; i < lv.size(); ++i)
      for (int x = 0; x < nx; ++x) {
        out[x] += w[i] * S[lv[i]][x];
        out_bar[x] += w[i] * Sb[lv[i]][x];
      }
  };
  for (int l = 0; l < last; ++l) {
    step_macro(sys, st, l * opt.dt, opt.dt, source, opt.cfl_max);
    store(st);
  }

  const MomentumGrid& grid = ctx.grid();
  int na = grid.n_axis;
  double tail = 0;
  for (int l = 0; l <= last; ++l) {
    double gauss = 0;
    for (int x = 0; x < nx; ++x) {
      const PointData& pd = ctx.point(x);
      Eigen::VectorXd f = s.f(ctx, l, x);
      double dE = (s.E[l][wrap(x + 1, nx)](0) - s.E[l][wrap(x - 1, nx)](0)) / (2 * ctx.h());
      gauss = std::max(gauss, std::abs(dE + 4 * M_PI * k.e_minus * ctx.charge(x, f)));
      double dB = (s.B[l][wrap(x + 1, nx)](0) - s.B[l][wrap(x - 1, nx)](0)) / (2 * ctx.h());
      s.div_b_max = std::max(s.div_b_max, std::abs(dB));
      for (int i = 0; i < grid.size(); ++i) {
        double ratio = std::abs(pd.sqrt_m(i) * f(i)) / std::pow(pd.M(i), opt.envelope_power);
        s.envelope_constant = std::max(s.envelope_constant, ratio);
        int a = i / (na * na), b = (i / na) % na, c = i % na;
        bool outer = a == 0 || b == 0 || c == 0 || a == na - 1 || b == na - 1 || c == na - 1;
        if (outer) tail = std::max(tail, ratio);
      }
    }
    s.gauss_max = std::max(s.gauss_max, gauss);
  }
  s.envelope_tail_ratio = s.envelope_constant > 0 ? tail / s.envelope_constant : 0.0;
  return s;
}

std::vector<HilbertCoefficient> build_hierarchy(int n_max, const HilbertContext& ctx) {
  std::vector<HilbertCoefficient> stages;
  stages.push_back(background_stage(ctx));
  for (int n = 1; n <= n_max; ++n) stages.push_back(build_coefficient(n, ctx, stages));
  return stages;
}

ResidualStudy residual_scaling_study(const HilbertContext& ctx, const std::vector<HilbertCoefficient>& stages, int N,
                                     const ResidualStudyOptions& opt) {
  require(N >= 0 && static_cast<int>(stages.size()) > N, ErrorKind::input,
          "residual_scaling_study: stages 0..N are required");
  require(N == 0 || ctx.has_operators(), ErrorKind::input, "residual_scaling_study: operators are required");
  require(opt.epsilons.size() >= 2, ErrorKind::input, "residual_scaling_study: at least two epsilons are required");
  int nx = ctx.nx(), last = ctx.options().levels;
  int level = opt.level < 0 ? last / 2 : opt.level;
  require(level <= last, ErrorKind::input, "residual_scaling_study: level outside the time window");
  std::vector<int> pts = opt.points;
  if (pts.empty())
    for (int i = 0; i < 4; ++i) pts.push_back(i * nx / 4);
  std::vector<double> eps = opt.epsilons;
  std::sort(eps.begin(), eps.end());
  CollisionOptions copt = ctx.options().collision;
  copt.threads = 1;

  int ns = static_cast<int>(pts.size()), ne = static_cast<int>(eps.size());
  std::vector<std::vector<double>> res(ns, std::vector<double>(ne)), pp(ns, std::vector<double>(ne)),
      mp(ns, std::vector<double>(ne));
  std::vector<double> forcing(ns);
  parallel_for(ns, ctx.options().threads, [&](int begin, int end) {
    for (int si = begin; si < end; ++si) {
      int x = pts[si];
      const PointData& pd = ctx.point(x);
      std::vector<Eigen::VectorXd> f(N + 1), V(N + 1), Lf(N + 1);
      for (int n = 0; n <= N; ++n) {
        const HilbertCoefficient& s = stages[n];
        f[n] = s.f(ctx, level, x);
        V[n] = ctx.transport(x, s.f(ctx, level, wrap(x - 1, nx)), s.f(ctx, level, wrap(x + 1, nx)));
        if (n > 0) {
          std::vector<int> lv;
          std::vector<double> w;
          time_stencil(level, s.levels() - 1, s.dt, lv, w);
          for (size_t i = 0; i < lv.size(); ++i) V[n] += w[i] * s.f(ctx, lv[i], x);
          Lf[n] = pd.L->apply_projected(f[n]);
        }
      }
      std::vector<std::vector<Eigen::VectorXd>> W(N + 1, std::vector<Eigen::VectorXd>(N + 1)), G = W;
      for (int i = 0; i <= N; ++i)
        for (int j = 0; j <= N; ++j) {
          W[i][j] = ctx.force(x, stages[i].E[level][x], stages[i].B[level][x], f[j]);
          if (i >= 1 && j >= 1)
            G[i][j] = ctx.micro(x, gamma_bilinear(f[i], f[j], ctx.grid(), pd.st, ctx.constants(), copt).values);
        }
      Eigen::VectorXd G0 = ctx.project(x, V[0] + W[0][0]);
      forcing[si] = ctx.norm(G0);
      for (int e = 0; e < ne; ++e) {
        double ep = eps[e];
        Eigen::VectorXd R = -G0;
        for (int n = 0; n <= N; ++n) {
          R += std::pow(ep, n) * V[n];
          if (n > 0) R += std::pow(ep, n - 1) * Lf[n];
        }
        for (int i = 0; i <= N; ++i)
          for (int j = 0; j <= N; ++j) {
            R += std::pow(ep, i + j) * W[i][j];
            if (i >= 1 && j >= 1) R -= std::pow(ep, i + j - 1) * G[i][j];
          }
        Eigen::VectorXd P = ctx.project(x, R);
        res[si][e] = ctx.norm(R);
        pp[si][e] = ctx.norm(P);
        mp[si][e] = ctx.norm(R - P);
      }
    }
  });

  ResidualStudy study;
  study.stages = N;
  double fsum = 0;
  for (double v : forcing) fsum += v * v;
  study.forcing_norm = std::sqrt(fsum / ns);
  for (int e = 0; e < ne; ++e) {
    ResidualRow row;
    row.epsilon = eps[e];
    for (int si = 0; si < ns; ++si) {
      row.residual += sq(res[si][e]) / ns;
      row.p_part += sq(pp[si][e]) / ns;
      row.micro_part += sq(mp[si][e]) / ns;
    }
    row.residual = std::sqrt(row.residual);
    row.p_part = std::sqrt(row.p_part);
    row.micro_part = std::sqrt(row.micro_part);
    study.rows.push_back(row);
  }
  int first = 0;
  for (int e = ne - 1; e >= 1; --e) {
    const ResidualRow& a = study.rows[e - 1];
    const ResidualRow& b = study.rows[e];
    double local = std::log(b.residual / a.residual) / std::log(b.epsilon / a.epsilon);
    if (!(local >= N - opt.floor_drop)) {
      first = e;
      study.floor_reached = true;
      break;
    }
  }
  if (ne - first < 2) first = 0;
  double mx = 0, my = 0;
  int np = ne - first;
  for (int e = first; e < ne; ++e) {
    mx += std::log(study.rows[e].epsilon) / np;
    my += std::log(study.rows[e].residual) / np;
  }
  double sxy = 0, sxx = 0;
  for (int e = first; e < ne; ++e) {
    double dx = std::log(study.rows[e].epsilon) - mx;
    sxy += dx * (std::log(study.rows[e].residual) - my);
    sxx += dx * dx;
  }
  study.slope = sxy / sxx;
  study.fit_points = np;
  return study;
}

void write_stage_csv(const std::string& path, const HilbertContext& ctx, const HilbertCoefficient& stage, int level) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::input, "write_stage_csv: cannot open " + path);
  out << "x,a,b1,b2,b3,c,E1,E2,E3,B1,B2,B3,micro_norm,micro_projection\n";
  out << std::setprecision(17);
  for (int x = 0; x < ctx.nx(); ++x) {
    out << ctx.background().x(x);
    for (int i = 0; i < 5; ++i) out << ',' << stage.U[level][x](i);
    for (int i = 0; i < 3; ++i) out << ',' << stage.E[level][x](i);
    for (int i = 0; i < 3; ++i) out << ',' << stage.B[level][x](i);
    double mn = 0, pr = 0;
    if (!stage.micro.empty() && stage.micro[level][x].size() > 0) {
      mn = ctx.norm(stage.micro[level][x]);
      pr = mn > 0 ? ctx.norm(ctx.project(x, stage.micro[level][x])) / mn : 0.0;
    }
    out << ',' << mn << ',' << pr << '\n';
  }
}

}  // namespace rvmb
