#include "rvmb/equilibria.hpp"

#include <algorithm>
#include <cmath>

#include "rvmb/error.hpp"

namespace rvmb {

void JuttnerState::validate() const {
  if (!(n0 > 0)) throw ConfigError("n0", "must be positive");
  if (!(T0 > 0)) throw ConfigError("T0", "must be positive");
  if (!u.allFinite()) throw ConfigError("u", "must be finite");
}

void GlobalMaxwellianParams::check_domination(double T0) const {
  if (!(n_M > 0)) throw ConfigError("n_M", "must be positive");
  if (!(T_M > 0)) throw ConfigError("T_M", "must be positive");
  if (!(T_M < T0 && T0 < 2 * T_M)) throw ConfigError("T_M", "requires T_M < T0 < 2 T_M");
}

double bessel_k(int j, double gamma) {
  require(gamma > 0, ErrorKind::domain, "bessel_k: gamma must be positive");
  require(j >= 0 && j <= 3, ErrorKind::domain, "bessel_k: order must be in {0,1,2,3}");
  // K_j(g) = 2^j j!/(2j)! g^j int_0^inf exp(-g cosh t) sinh^{2j} t dt, scaled by exp(g).
  auto f = [&](double t) {
    double s = std::sinh(t);
    return std::exp(-gamma * (std::cosh(t) - 1)) * std::pow(s, 2 * j);
  };
  double t_end = 1;
  while (true) {
    double tail = -gamma * (std::cosh(t_end) - 1) + 2 * j * std::log(std::sinh(t_end));
    if (tail < -60) break;
    t_end += 0.5;
  }
  double h = std::min(0.25, 0.5 / std::sqrt(gamma));
  auto trap = [&](double step) {
    int n = static_cast<int>(std::ceil(t_end / step));
    double sum = 0.5 * f(0);
    for (int i = 1; i <= n; ++i) sum += f(i * step);
    return sum * step;
  };
  double prev = trap(h);
  double cur = prev;
  for (int it = 0; it < 30; ++it) {
    h *= 0.5;
    cur = trap(h);
    if (std::abs(cur - prev) <= 1e-12 * std::abs(cur)) break;
    prev = cur;
  }
  static const double coef[4] = {1.0, 1.0, 8.0 / 24.0, 48.0 / 720.0};
  return coef[j] * std::pow(gamma, j) * cur * std::exp(-gamma);
}

double juttner_prefactor(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double mc = k.m * k.c;
  return st.n0 * g / (4 * M_PI * mc * mc * mc * bessel_k(2, g));
}

double juttner_exponent(const Eigen::Vector3d& p, const JuttnerState& st, const PhysicalConstants& k) {
  return (-st.u0(k) * energy(p, k) + st.u.dot(p)) / (k.k_B * st.T0);
}

double juttner_eval(const Eigen::Vector3d& p, const JuttnerState& st, const PhysicalConstants& k) {
  return juttner_prefactor(st, k) * std::exp(juttner_exponent(p, st, k));
}

double global_maxwellian_eval(const Eigen::Vector3d& p, const GlobalMaxwellianParams& g, const PhysicalConstants& k) {
  JuttnerState st;
  st.n0 = g.n_M;
  st.T0 = g.T_M;
  return juttner_eval(p, st, k);
}

double Tensor3::max_abs() const {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double choose_p_max(const JuttnerState& st, const PhysicalConstants& k, double tail_tol) {
  double g = st.gamma(k);
  double mc = k.m * k.c;
  double decades = -std::log(tail_tol);
  double slope = g * (st.u0(k) - st.u.norm()) / k.c;
  return mc * ((decades + 3 * std::log(1 + decades / slope)) / slope + 3);
}

namespace {

Eigen::Vector3d mean_momentum(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  return k.m * st.u * bessel_k(3, g) / bessel_k(2, g);
}

}  // namespace

namespace {

Moments moment_sum(const JuttnerState& st, const PhysicalConstants& k, int nodes, double tail_tol) {
  double g = st.gamma(k);
  double mc = k.m * k.c;
  double pmax = choose_p_max(st, k, tail_tol);
  double a = mc / std::sqrt(g);
  MomentumGrid grid = gl_sinh_grid(nodes, pmax, a);
  Eigen::Vector3d centre = mean_momentum(st, k);
  double A = juttner_prefactor(st, k);
  Moments out;
  out.I.setZero();
  out.T.setZero();
  int n = grid.n_axis;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d I = Eigen::Vector4d::Zero();
    Eigen::Matrix4d T = Eigen::Matrix4d::Zero();
    Tensor3 T3;
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        int idx = grid.index(i, j, l);
        Eigen::Vector3d p = grid.node(idx) + centre;
        double p0 = energy(p, k);
        double w = grid.weights(idx) * A * std::exp(juttner_exponent(p, st, k)) * k.c / p0;
        Eigen::Vector4d P;
        P << p0, p;
        I += w * P;
        for (int a1 = 0; a1 < 4; ++a1)
          for (int b1 = a1; b1 < 4; ++b1) {
            double wab = w * P(a1) * P(b1);
            T(a1, b1) += wab;
            for (int c1 = b1; c1 < 4; ++c1) T3(a1, b1, c1) += wab * P(c1);
          }
      }
    out.I += I;
    out.T += T;
    for (int q = 0; q < 64; ++q) out.T3.v[q] += T3.v[q];
  }
  for (int a1 = 0; a1 < 4; ++a1)
    for (int b1 = a1; b1 < 4; ++b1) {
      out.T(b1, a1) = out.T(a1, b1);
      for (int c1 = b1; c1 < 4; ++c1) {
        double v = out.T3(a1, b1, c1);
        out.T3(a1, c1, b1) = out.T3(b1, a1, c1) = out.T3(b1, c1, a1) = out.T3(c1, a1, b1) = out.T3(c1, b1, a1) = v;
      }
    }
  return out;
}

double moment_change(const Moments& a, const Moments& b) {
  double d = (a.I - b.I).cwiseAbs().maxCoeff() / b.I.cwiseAbs().maxCoeff();
  d = std::max(d, (a.T - b.T).cwiseAbs().maxCoeff() / b.T.cwiseAbs().maxCoeff());
  double t3 = 0;
  for (int q = 0; q < 64; ++q) t3 = std::max(t3, std::abs(a.T3.v[q] - b.T3.v[q]));
  return std::max(d, t3 / b.T3.max_abs());
}

}  // namespace

Moments moment_quadrature(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt) {
  st.validate();
  require(opt.nodes >= 4 && opt.max_nodes >= opt.nodes, ErrorKind::input, "moment_quadrature: invalid node counts");
  Moments coarse = moment_sum(st, k, opt.nodes, opt.tail_tol);
  for (int n = opt.nodes + opt.node_step; n <= opt.max_nodes; n += opt.node_step) {
    Moments fine = moment_sum(st, k, n, opt.tail_tol);
    if (moment_change(coarse, fine) <= opt.rel_tol) return fine;
    coarse = fine;
  }
  throw Error(ErrorKind::convergence, "moment_quadrature: tolerance not reached at the maximum node count");
}

Eigen::Vector4d moment_first(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt) {
  return moment_quadrature(st, k, opt).I;
}

Eigen::Matrix4d moment_second(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt) {
  return moment_quadrature(st, k, opt).T;
}

Eigen::Vector4d moment_first_closed(const JuttnerState& st, const PhysicalConstants& k) {
  return st.n0 * st.four_velocity(k);
}

Eigen::Matrix4d moment_second_closed(const JuttnerState& st, const PhysicalConstants& k, const FluidClosure& cl) {
  Eigen::Vector4d U = st.four_velocity(k);
  return (cl.e0 + cl.P0) / (k.c * k.c) * U * U.transpose() + cl.P0 * minkowski<double>();
}

Tensor3 moment_third_rest(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double K2 = bessel_k(2, g), K3 = bessel_k(3, g);
  double base = st.n0 * k.m * k.m * k.c * k.c * k.c / (g * K2);
  Tensor3 T;
  T(0, 0, 0) = base * (3 * K3 + g * K2);
  for (int i = 1; i < 4; ++i) T(0, i, i) = T(i, i, 0) = T(i, 0, i) = base * K3;
  return T;
}

Tensor3 moment_third_closed(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double K2 = bessel_k(2, g), K3 = bessel_k(3, g);
  double c = k.c;
  double u0 = st.u0(k);
  const Eigen::Vector3d& u = st.u;
  double uu = u.squaredNorm();
  double f = st.n0 * k.m * k.m / (g * K2);
  Tensor3 T;
  T(0, 0, 0) = f * ((3 * K3 + g * K2) * u0 * u0 * u0 + 3 * K3 * u0 * uu);
  for (int i = 0; i < 3; ++i) {
    double v = f * ((5 * K3 + g * K2) * u0 * u0 * u(i) + K3 * uu * u(i));
    T(0, 0, i + 1) = T(0, i + 1, 0) = T(i + 1, 0, 0) = v;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double v = f * ((6 * K3 + g * K2) * u0 * u(i) * u(j) + (i == j ? c * c * K3 * u0 : 0.0));
      T(0, i + 1, j + 1) = T(i + 1, 0, j + 1) = T(i + 1, j + 1, 0) = v;
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 3; ++l) {
        double v = f * (6 * K3 + g * K2) * u(i) * u(j) * u(l);
        v += f * c * c * K3 * ((j == l ? u(i) : 0.0) + (i == l ? u(j) : 0.0) + (i == j ? u(l) : 0.0));
        T(i + 1, j + 1, l + 1) = v;
      }
  return T;
}

Tensor3 moment_third_boosted(const JuttnerState& st, const PhysicalConstants& k) {
  Tensor3 R = moment_third_rest(st, k);
  Eigen::Matrix4d L = rest_boost<double>(st.u, k);
  Tensor3 T;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c) {
        double s = 0;
        for (int a1 = 0; a1 < 4; ++a1)
          for (int b1 = 0; b1 < 4; ++b1)
            for (int c1 = 0; c1 < 4; ++c1) s += L(a, a1) * L(b, b1) * L(c, c1) * R(a1, b1, c1);
        T(a, b, c) = s;
      }
  return T;
}

FluidClosure synge_closure(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt) {
  JuttnerState rest = st;
  rest.u.setZero();
  Eigen::Matrix4d T = moment_second(rest, k, opt);
  FluidClosure cl;
  cl.e0 = T(0, 0);
  cl.P0 = T(1, 1);
  cl.h = (cl.e0 + cl.P0) / st.n0;
  return cl;
}

FluidClosure closure_analytic(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double K2 = bessel_k(2, g), K3 = bessel_k(3, g);
  FluidClosure cl;
  cl.P0 = st.n0 * k.k_B * st.T0;
  cl.e0 = st.n0 * k.m * k.c * k.c * (K3 / K2 - 1 / g);
  cl.h = (cl.e0 + cl.P0) / st.n0;
  return cl;
}

double isentropic_density(double gamma, double C) {
  double K2 = bessel_k(2, gamma), K3 = bessel_k(3, gamma);
  // exp(gamma K3/K2) multiplies the scaled K2 ~ exp(-gamma); combine in log form
  return C * K2 / gamma * std::exp(gamma * K3 / K2);
}

double energy_redundancy_check(const StateFamily& family, const PhysicalConstants& k, const RedundancyOptions& opt,
                           const ClosureFn& closure) {
  require(opt.points >= 1 && opt.h > 0, ErrorKind::input, "energy_redundancy_check: invalid sampling");
  ClosureFn cf = closure ? closure : [&k](const JuttnerState& s) { return closure_analytic(s, k); };
  auto hp = [&](double t, double x, double& hh, double& P) {
    JuttnerState s = family(t, x);
    FluidClosure cl = cf(s);
    hh = (cl.e0 + cl.P0) / s.n0;
    P = cl.P0;
  };
  double worst = 0;
  for (int i = 0; i < opt.points; ++i) {
    double x = opt.x_min + (opt.x_max - opt.x_min) * i / opt.points;
    JuttnerState s = family(opt.t, x);
    double hp1, Pp1, hm1, Pm1, hpx, Ppx, hmx, Pmx;
    hp(opt.t + opt.h, x, hp1, Pp1);
    hp(opt.t - opt.h, x, hm1, Pm1);
    hp(opt.t, x + opt.h, hpx, Ppx);
    hp(opt.t, x - opt.h, hmx, Pmx);
    double dth = (hp1 - hm1) / (2 * opt.h), dtP = (Pp1 - Pm1) / (2 * opt.h);
    double dxh = (hpx - hmx) / (2 * opt.h), dxP = (Ppx - Pmx) / (2 * opt.h);
    double r = s.u0(k) / k.c * (s.n0 * dth - dtP) + s.u(0) * (s.n0 * dxh - dxP);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double domination_ratio(const MomentumGrid& grid, const JuttnerState& st, const std::array<JuttnerState, 6>& neighbours,
                        double h, const GlobalMaxwellianParams& g, const PhysicalConstants& k, double power) {
  g.check_domination(st.T0);
  double worst = 0;
  for (int idx = 0; idx < grid.size(); ++idx) {
    Eigen::Vector3d p = grid.node(idx);
    double sm = std::pow(juttner_eval(p, st, k), power);
    Eigen::Vector3d grad;
    for (int d = 0; d < 3; ++d) {
      double plus = std::pow(juttner_eval(p, neighbours[2 * d], k), power);
      double minus = std::pow(juttner_eval(p, neighbours[2 * d + 1], k), power);
      grad(d) = (plus - minus) / (2 * h);
    }
    double j = std::sqrt(global_maxwellian_eval(p, g, k));
    worst = std::max(worst, (sm + grad.norm()) / j);
  }
  return worst;
}

}  // namespace rvmb
