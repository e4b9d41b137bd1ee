#include "rvmb/characteristics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <random>

namespace rvmb {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0, -a(2), a(1), a(2), 0, -a(0), -a(1), a(0), 0;
  return s;
}

struct Deriv {
  Eigen::Vector3d dX;
  Eigen::Vector3d dP;
  Eigen::Matrix3d dJX;
  Eigen::Matrix3d dJP;
};

Deriv rhs(double tau, const CharacteristicState& s, const EMFieldSampler& field, const PhysicalConstants& k,
          bool variational) {
  FieldSample f = field(tau, s.X);
  double p0 = energy(s.P, k);
  Eigen::Vector3d ph = s.P / p0;
  Deriv d;
  d.dX = k.c * ph;
  d.dP = -f.E - ph.cross(f.B);
  if (variational) {
    Eigen::Matrix3d D = (p0 * p0 * Eigen::Matrix3d::Identity() - s.P * s.P.transpose()) / (p0 * p0 * p0);
    d.dJX = k.c * D * s.dPdp;
    d.dJP = -f.grad_E * s.dXdp - skew(ph) * f.grad_B * s.dXdp + skew(f.B) * D * s.dPdp;
  } else {
    d.dJX.setZero();
    d.dJP.setZero();
  }
  return d;
}

CharacteristicState advance(const CharacteristicState& s, const Deriv& d, double h) {
  CharacteristicState r = s;
  r.X += h * d.dX;
  r.P += h * d.dP;
  r.dXdp += h * d.dJX;
  r.dPdp += h * d.dJP;
  return r;
}

Trajectory integrate(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p, const EMFieldSampler& field,
                     double tau_end, double step, const PhysicalConstants& k, bool variational) {
  require(step > 0, ErrorKind::input, "characteristics: step must be positive");
  require(static_cast<bool>(field.eval), ErrorKind::input, "characteristics: sampler has no evaluator");
  double span = tau_end - t;
  int n = std::max(1, static_cast<int>(std::ceil(std::abs(span) / step - 1e-12)));
  double h = span / n;
  Trajectory traj;
  traj.reserve(n + 1);
  CharacteristicState s;
  s.tau = t;
  s.X = x;
  s.P = p;
  traj.push_back(s);
  if (span == 0) return traj;
  for (int i = 0; i < n; ++i) {
    double tau = t + i * h;
    Deriv k1 = rhs(tau, s, field, k, variational);
    Deriv k2 = rhs(tau + h / 2, advance(s, k1, h / 2), field, k, variational);
    Deriv k3 = rhs(tau + h / 2, advance(s, k2, h / 2), field, k, variational);
    Deriv k4 = rhs(tau + h, advance(s, k3, h), field, k, variational);
    s.X += h / 6 * (k1.dX + 2 * k2.dX + 2 * k3.dX + k4.dX);
    s.P += h / 6 * (k1.dP + 2 * k2.dP + 2 * k3.dP + k4.dP);
    s.dXdp += h / 6 * (k1.dJX + 2 * k2.dJX + 2 * k3.dJX + k4.dJX);
    s.dPdp += h / 6 * (k1.dJP + 2 * k2.dJP + 2 * k3.dJP + k4.dJP);
    s.tau = i + 1 == n ? tau_end : t + (i + 1) * h;
    field(s.tau, s.X);
    traj.push_back(s);
  }
  return traj;
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

bool EMFieldSampler::contains(const Eigen::Vector3d& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

FieldSample EMFieldSampler::operator()(double tau, const Eigen::Vector3d& x) const {
  require(contains(x), ErrorKind::domain, "characteristics: trajectory left the sampler domain");
  return eval(tau, x);
}

EMFieldSampler zero_field() {
  EMFieldSampler s;
  s.eval = [](double, const Eigen::Vector3d&) { return FieldSample{}; };
  return s;
}

EMFieldSampler constant_field(const Eigen::Vector3d& E, const Eigen::Vector3d& B) {
  EMFieldSampler s;
  s.eval = [E, B](double, const Eigen::Vector3d&) {
    FieldSample f;
    f.E = E;
    f.B = B;
    return f;
  };
  return s;
}

EMFieldSampler wave_field(const WaveFieldSpec& spec) {
  EMFieldSampler s;
  s.eval = [spec](double tau, const Eigen::Vector3d& x) {
    double ph_e = spec.wave.dot(x) + spec.omega * tau;
    double ph_b = spec.wave.dot(x) - spec.omega * tau;
    FieldSample f;
    f.E = spec.E0 + spec.E1 * std::sin(ph_e);
    f.B = spec.B0 + spec.B1 * std::cos(ph_b);
    f.grad_E = spec.E1 * spec.wave.transpose() * std::cos(ph_e);
    f.grad_B = -spec.B1 * spec.wave.transpose() * std::sin(ph_b);
    return f;
  };
  return s;
}

EMFieldSampler grid_field(const GridFieldData& data) {
  int n = data.n;
  require(n >= 2, ErrorKind::input, "grid_field: need at least two cells per axis");
  for (int c = 0; c < 3; ++c)
    require(data.E[c].size() == n * n * n && data.B[c].size() == n * n * n, ErrorKind::input,
            "grid_field: component size does not match n^3");
  double h = data.length / n;
  auto idx = [n](int i, int j, int l) { return (wrap(i, n) * n + wrap(j, n)) * n + wrap(l, n); };
  // Centred-difference gradients at the nodes: grad[c][d] holds d(comp c)/dx_d.
  auto gradients = [&](const std::array<Eigen::VectorXd, 3>& F) {
    std::array<std::array<Eigen::VectorXd, 3>, 3> g;
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d) {
        g[c][d].resize(n * n * n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
              int ip[3] = {i, j, l}, im[3] = {i, j, l};
              ++ip[d];
              --im[d];
              g[c][d](idx(i, j, l)) = (F[c](idx(ip[0], ip[1], ip[2])) - F[c](idx(im[0], im[1], im[2]))) / (2 * h);
            }
      }
    return g;
  };
  auto gE = std::make_shared<std::array<std::array<Eigen::VectorXd, 3>, 3>>(gradients(data.E));
  auto gB = std::make_shared<std::array<std::array<Eigen::VectorXd, 3>, 3>>(gradients(data.B));
  auto d = std::make_shared<GridFieldData>(data);
  EMFieldSampler s;
  s.eval = [d, gE, gB, h, n, idx](double, const Eigen::Vector3d& x) {
    Eigen::Vector3d r = (x - d->origin) / h - Eigen::Vector3d::Constant(0.5);
    int i0[3];
    double w[3];
    for (int a = 0; a < 3; ++a) {
      double fl = std::floor(r(a));
      i0[a] = static_cast<int>(fl);
      w[a] = r(a) - fl;
    }
    auto trilinear = [&](const Eigen::VectorXd& v) {
      double acc = 0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c) {
            double wt = (a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) * (c ? w[2] : 1 - w[2]);
            acc += wt * v(idx(i0[0] + a, i0[1] + b, i0[2] + c));
          }
      return acc;
    };
    FieldSample f;
    for (int c = 0; c < 3; ++c) {
      f.E(c) = trilinear(d->E[c]);
      f.B(c) = trilinear(d->B[c]);
      for (int e = 0; e < 3; ++e) {
        f.grad_E(c, e) = trilinear((*gE)[c][e]);
        f.grad_B(c, e) = trilinear((*gB)[c][e]);
      }
    }
    return f;
  };
  return s;
}

Trajectory integrate_characteristic(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                    const EMFieldSampler& sampler, double tau_end, double step,
                                    const PhysicalConstants& k) {
  return integrate(t, x, p, sampler, tau_end, step, k, false);
}

Trajectory integrate_variational(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                 const EMFieldSampler& sampler, double tau_end, double step,
                                 const PhysicalConstants& k) {
  return integrate(t, x, p, sampler, tau_end, step, k, true);
}

Eigen::Matrix3d free_streaming_dxdp(const Eigen::Vector3d& p, double dtau, const PhysicalConstants& k) {
  double p0 = energy(p, k);
  return k.c * dtau * (p0 * p0 * Eigen::Matrix3d::Identity() - p * p.transpose()) / (p0 * p0 * p0);
}

double free_streaming_det(const Eigen::Vector3d& p, double dtau, const PhysicalConstants& k) {
  double p0 = energy(p, k);
  double cd = k.c * std::abs(dtau);
  return cd * cd * cd * k.m * k.m * k.c * k.c / std::pow(p0, 5);
}

Eigen::Matrix3d finite_difference_dxdp(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                       const EMFieldSampler& sampler, double tau_end, double step, double h,
                                       const PhysicalConstants& k) {
  require(h > 0, ErrorKind::input, "finite_difference_dxdp: h must be positive");
  Eigen::Matrix3d J;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    Eigen::Vector3d Xp = integrate_characteristic(t, x, pp, sampler, tau_end, step, k).back().X;
    Eigen::Vector3d Xm = integrate_characteristic(t, x, pm, sampler, tau_end, step, k).back().X;
    J.col(i) = (Xp - Xm) / (2 * h);
  }
  return J;
}

BandRecord jacobian_band_check(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                               const EMFieldSampler& sampler, double tau, double step, const PhysicalConstants& k,
                               double kappa_low, double kappa_high) {
  BandRecord r;
  r.det = integrate_variational(t, x, p, sampler, tau, step, k).back().dXdp.determinant();
  r.reference = free_streaming_det(p, tau - t, k);
  r.lower = kappa_low * r.reference;
  r.upper = kappa_high * r.reference;
  r.in_band = std::abs(r.det) >= r.lower && std::abs(r.det) <= r.upper;
  return r;
}

std::vector<BandSweepRow> band_sweep(const BandSweepOptions& opt, const PhysicalConstants& k) {
  require(opt.samples > 0, ErrorKind::input, "band_sweep: samples must be positive");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> g;
  auto vec = [&](double scale) -> Eigen::Vector3d { return Eigen::Vector3d(u(rng), u(rng), u(rng)) * scale; };
  auto ball = [&](double radius) -> Eigen::Vector3d {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    return v.normalized() * radius * std::cbrt(0.5 * (u(rng) + 1));
  };
  std::vector<BandSweepRow> rows;
  rows.reserve(opt.samples);
  for (int s = 0; s < opt.samples; ++s) {
    WaveFieldSpec spec;
    spec.E0 = ball(opt.field_max / 2);
    spec.E1 = ball(opt.field_max / 2);
    spec.B0 = ball(opt.field_max / 2);
    spec.B1 = ball(opt.field_max / 2);
    spec.wave = vec(2.0);
    spec.omega = 2 * u(rng);
    BandSweepRow row;
    row.x = vec(opt.x_scale);
    row.p = vec(opt.p_scale);
    double mag = opt.dtau_max * (0.05 + 0.95 * 0.5 * (u(rng) + 1));
    row.dtau = u(rng) < 0 ? -mag : mag;
    double t = 0.5 * (u(rng) + 1);
    row.record = jacobian_band_check(t, row.x, row.p, wave_field(spec), t + row.dtau, opt.step, k);
    rows.push_back(row);
  }
  return rows;
}

CubicFit cubic_vanishing_fit(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                             const EMFieldSampler& sampler, double dtau_min, double dtau_max, int points,
                             const PhysicalConstants& k, int steps_per_interval) {
  require(points >= 2 && dtau_min > 0 && dtau_max > dtau_min, ErrorKind::input,
          "cubic_vanishing_fit: need at least two separations in increasing order");
  CubicFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < points; ++i) {
    double d = dtau_min * std::pow(dtau_max / dtau_min, static_cast<double>(i) / (points - 1));
    double det = integrate_variational(t, x, p, sampler, t + d, d / steps_per_interval, k).back().dXdp.determinant();
    fit.dtau.push_back(d);
    fit.det.push_back(std::abs(det));
    double lx = std::log(d), ly = std::log(std::abs(det));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double n = points;
  fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.coefficient = std::exp((sy - fit.exponent * sx) / n);
  return fit;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::input, "write_trajectory_csv: cannot open " + path);
  out << "tau,X1,X2,X3,P1,P2,P3,det\n" << std::setprecision(17);
  for (const auto& s : traj)
    out << s.tau << ',' << s.X(0) << ',' << s.X(1) << ',' << s.X(2) << ',' << s.P(0) << ',' << s.P(1) << ','
        << s.P(2) << ',' << s.dXdp.determinant() << '\n';
}

}  // namespace rvmb
