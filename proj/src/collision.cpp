#include "rvmb/collision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "rvmb/error.hpp"
#include "rvmb/parallel.hpp"

namespace rvmb {

namespace {

struct HemiRule {
  std::vector<double> ct, st, w;
  std::vector<double> cp, sp;
  double wphi = 0;
};

HemiRule hemi_rule(int n_theta, int n_phi) {
  require(n_theta >= 1 && n_phi >= 1, ErrorKind::input, "angular rule: need positive node counts");
  Eigen::VectorXd x, w;
  gauss_legendre(n_theta, x, w);
  HemiRule r;
  for (int i = 0; i < n_theta; ++i) {
    double c = 0.5 * (x(i) + 1);
    r.ct.push_back(c);
    r.st.push_back(std::sqrt(std::max(0.0, 1 - c * c)));
    // both hemispheres give the same post-collision pair, hence the factor 2
    r.w.push_back(2 * 0.5 * w(i));
  }
  for (int j = 0; j < n_phi; ++j) {
    double ph = (j + 0.5) * 2 * M_PI / n_phi;
    r.cp.push_back(std::cos(ph));
    r.sp.push_back(std::sin(ph));
  }
  r.wphi = 2 * M_PI / n_phi;
  return r;
}

// Separable evaluation on a uniform grid; matches interp_stencil, including one-sided cubic stencils at the edges.
struct UniformInterp {
  double x0 = 0, h = 1;
  int n = 0;
  InterpOrder order = InterpOrder::linear;

  int axis(double x, int& s, double* wt) const {
    double t = (x - x0) / h;
    if (!(t >= 0 && t <= n - 1)) return 0;
    int c = std::min(static_cast<int>(t), n - 2);
    if (order == InterpOrder::linear || n < 4) {
      s = c;
      wt[0] = 1 - (t - c);
      wt[1] = t - c;
      return 2;
    }
    s = std::clamp(c - 1, 0, n - 4);
    double u = t - s;
    wt[0] = -(u - 1) * (u - 2) * (u - 3) / 6;
    wt[1] = u * (u - 2) * (u - 3) / 2;
    wt[2] = -u * (u - 1) * (u - 3) / 2;
    wt[3] = u * (u - 1) * (u - 2) / 6;
    return 4;
  }

  bool eval(const double* r, const Eigen::Vector3d& x, double& out) const {
    int s[3], m = 0;
    double w[3][4];
    for (int d = 0; d < 3; ++d) {
      m = axis(x(d), s[d], w[d]);
      if (m == 0) return false;
    }
    double acc = 0;
    for (int a = 0; a < m; ++a) {
      double ay = 0;
      for (int b = 0; b < m; ++b) {
        const double* row = r + ((s[0] + a) * n + s[1] + b) * n + s[2];
        double az = 0;
        for (int c = 0; c < m; ++c) az += w[2][c] * row[c];
        ay += w[1][b] * az;
      }
      acc += w[0][a] * ay;
    }
    out = acc;
    return true;
  }
};

struct CoreOut {
  Eigen::VectorXd gain, loss;
  double trunc = 0;
  long dropped = 0, evaluated = 0;
};

// out_i = pref_i sum_j wm_j sum_w W [rF(p') rG(q') - rF_i rG_j], using M(p')M(q') = M(p)M(q).
// A collision whose outcome leaves the box is dropped whole and its loss size tallied.
CoreOut collide_core(const MomentumGrid& grid, const PhysicalConstants& k, const Eigen::VectorXd& rF,
                     const Eigen::VectorXd& rG, const Eigen::VectorXd& pref, const Eigen::VectorXd& wm,
                     const CollisionOptions& opt, bool need_gain = true) {
  int N = grid.size();
  HemiRule hr = hemi_rule(opt.hemi_theta, opt.hemi_phi);
  std::vector<int> partners;
  double wmax = wm.cwiseAbs().maxCoeff();
  double pair_floor = opt.weight_cutoff * wmax * pref.cwiseAbs().maxCoeff();
  for (int j = 0; j < N; ++j)
    if (std::abs(wm(j)) > opt.weight_cutoff * wmax) partners.push_back(j);
  Eigen::VectorXd p0s(N);
  for (int i = 0; i < N; ++i) p0s(i) = energy<double>(grid.node(i), k);
  double mc2 = k.m * k.c * k.m * k.c;

  CoreOut out;
  out.gain = Eigen::VectorXd::Zero(N);
  out.loss = Eigen::VectorXd::Zero(N);
  std::vector<double> trunc(N, 0.0);
  std::vector<long> dropped(N, 0), evaluated(N, 0);

  bool uniform = grid.rule == GridRule::uniform;
  UniformInterp ui;
  if (uniform) {
    ui.x0 = grid.axis(0);
    ui.h = grid.spacing();
    ui.n = grid.n_axis;
    ui.order = opt.interp;
  }
  auto lookup = [&](const Eigen::VectorXd& r, const Eigen::Vector3d& x, Stencil& st, double& out) {
    if (uniform) return ui.eval(r.data(), x, out);
    if (!interp_stencil(grid, x, opt.interp, st)) return false;
    out = 0;
    for (int t = 0; t < st.n; ++t) out += st.w[t] * r(st.idx[t]);
    return true;
  };

  parallel_for(N, opt.threads, [&](int begin, int end) {
    Stencil sp, sq;
    for (int i = begin; i < end; ++i) {
      Eigen::Vector3d p = grid.node(i);
      double p0 = p0s(i);
      double gain = 0, loss = 0, tr = 0;
      long nd = 0, ne = 0;
      for (int j : partners) {
        if (std::abs(pref(i) * wm(j)) <= pair_floor) continue;
        Eigen::Vector3d q = grid.node(j);
        double q0 = p0s(j);
        Eigen::Vector3d v = p0 * q - q0 * p;
        double vn = v.norm();
        if (vn <= 1e-14 * (p0 * q0)) continue;
        Eigen::Vector3d P = p + q;
        double e = p0 + q0;
        double s = 2 * (p0 * q0 - p.dot(q) + mc2);
        Eigen::Vector3d e1, e2, e3;
        frame_from_axis(v, e1, e2, e3);
        double base = s / (p0 * q0) * grid.weights(j) * wm(j) * hr.wphi;
        double lossf = rF(i) * rG(j);
        for (size_t a = 0; a < hr.ct.size(); ++a) {
          double wv = hr.ct[a] * vn;
          for (size_t b = 0; b < hr.cp.size(); ++b) {
            Eigen::Vector3d om = hr.ct[a] * e3 + hr.st[a] * (hr.cp[b] * e1 + hr.sp[b] * e2);
            double wP = om.dot(P);
            double den = e * e - wP * wP;
            double B = e * e * wv / (den * den);
            double W = base * hr.w[a] * B;
            double amp = 2 * e * wv / den;
            Eigen::Vector3d pp = p + amp * om;
            Eigen::Vector3d qp = q - amp * om;
            ++ne;
            if (!need_gain) {
              loss += W * lossf;
              continue;
            }
            double fp = 0, gq = 0;
            if (!lookup(rF, pp, sp, fp) || !lookup(rG, qp, sq, gq)) {
              ++nd;
              tr += std::abs(W * lossf);
              continue;
            }
            loss += W * lossf;
            gain += W * fp * gq;
          }
        }
      }
      out.gain(i) = pref(i) * gain;
      out.loss(i) = pref(i) * loss;
      trunc[i] = std::abs(pref(i)) * tr * grid.weights(i);
      dropped[i] = nd;
      evaluated[i] = ne;
    }
  });
  for (int i = 0; i < N; ++i) {
    out.trunc += trunc[i];
    out.dropped += dropped[i];
    out.evaluated += evaluated[i];
  }
  return out;
}

QResult finish(CoreOut&& c) {
  QResult r;
  r.gain = std::move(c.gain);
  r.loss = std::move(c.loss);
  r.values = r.gain - r.loss;
  r.truncation_loss = c.trunc;
  r.dropped = c.dropped;
  r.evaluated = c.evaluated;
  return r;
}

Eigen::VectorXd sample_m(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k) {
  Eigen::VectorXd m(grid.size());
  double A = juttner_prefactor(st, k);
  for (int i = 0; i < grid.size(); ++i) m(i) = A * std::exp(juttner_exponent(grid.node(i), st, k));
  return m;
}

void check_size(const MomentumGrid& grid, const Eigen::VectorXd& f, const char* what) {
  require(f.size() == grid.size(), ErrorKind::input, std::string(what) + ": size does not match the grid");
}

// Kernel evaluation with the state-dependent constants hoisted.
struct KernelEval {
  PhysicalConstants k;
  double c1 = 0, kT = 0, u0 = 0, A = 0;
  Eigen::Vector3d u;

  KernelEval(const JuttnerState& st, const PhysicalConstants& kk, double c1_override = -1) : k(kk) {
    c1 = c1_override > 0 ? c1_override : k2_constant(st, kk);
    kT = kk.k_B * st.T0;
    u0 = st.u0(kk);
    u = st.u;
    A = juttner_prefactor(st, kk);
  }
  double sqrt_m(const Eigen::Vector3d& p, double p0) const {
    return std::sqrt(A) * std::exp(0.5 * (-u0 * p0 + u.dot(p)) / kT);
  }
  double k2(const Eigen::Vector3d& p, const Eigen::Vector3d& q, double p0, double q0) const {
    double mc2 = k.m * k.c * k.m * k.c;
    double inner = p0 * q0 - p.dot(q);
    double s = 2 * (inner + mc2);
    double g = std::sqrt(std::max(0.0, 2 * (inner - mc2)));
    double ub3 = ((p0 - q0) * u0 - (p - q).dot(u)) / g;
    double U2 = std::sqrt(s) * std::sqrt(k.c * k.c + ub3 * ub3) / (2 * kT);
    double w = ((p0 + q0) * u0 - (p + q).dot(u)) / kT;
    double U1 = 1 / U2 + w / (2 * U2 * U2) + w / (2 * U2 * U2 * U2);
    return c1 * s * std::sqrt(s) / (g * p0 * q0) * U1 * std::exp(-U2);
  }
  double k1(const Eigen::Vector3d& p, const Eigen::Vector3d& q, double p0, double q0) const {
    double mc2 = k.m * k.c * k.m * k.c;
    double inner = p0 * q0 - p.dot(q);
    double s = 2 * (inner + mc2);
    double g = std::sqrt(std::max(0.0, 2 * (inner - mc2)));
    return M_PI * g * std::sqrt(s) / (p0 * q0) * sqrt_m(p, p0) * sqrt_m(q, q0);
  }
};

}  // namespace

QResult q_bilinear(const Eigen::VectorXd& F, const Eigen::VectorXd& G, const MomentumGrid& grid,
                   const JuttnerState& ref, const PhysicalConstants& k, const CollisionOptions& opt) {
  check_size(grid, F, "q_bilinear");
  check_size(grid, G, "q_bilinear");
  Eigen::VectorXd m = sample_m(grid, ref, k);
  Eigen::VectorXd rF = F.cwiseQuotient(m), rG = G.cwiseQuotient(m);
  return finish(collide_core(grid, k, rF, rG, m, m, opt));
}

QResult gamma_bilinear(const Eigen::VectorXd& f1, const Eigen::VectorXd& f2, const MomentumGrid& grid,
                       const JuttnerState& st, const PhysicalConstants& k, const CollisionOptions& opt) {
  check_size(grid, f1, "gamma_bilinear");
  check_size(grid, f2, "gamma_bilinear");
  Eigen::VectorXd m = sample_m(grid, st, k);
  Eigen::VectorXd sm = m.cwiseSqrt();
  Eigen::VectorXd h1 = f1.cwiseQuotient(sm), h2 = f2.cwiseQuotient(sm);
  return finish(collide_core(grid, k, h1, h2, sm, m, opt));
}

Eigen::VectorXd linearized_q_route(const Eigen::VectorXd& f, const MomentumGrid& grid, const JuttnerState& st,
                                   const PhysicalConstants& k, const CollisionOptions& opt) {
  check_size(grid, f, "linearized_q_route");
  Eigen::VectorXd m = sample_m(grid, st, k);
  Eigen::VectorXd sm = m.cwiseSqrt();
  Eigen::VectorXd F = sm.cwiseProduct(f);
  Eigen::VectorXd q = q_bilinear(F, m, grid, st, k, opt).values + q_bilinear(m, F, grid, st, k, opt).values;
  return -q.cwiseQuotient(sm);
}

Eigen::VectorXd perturbed_juttner(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k,
                                  Perturbation kind, double eps) {
  double sigma = std::sqrt(k.m * k.k_B * st.T0);
  Eigen::VectorXd m = sample_m(grid, st, k);
  for (int i = 0; i < grid.size(); ++i) {
    Eigen::Vector3d x = grid.node(i) / sigma;
    double P = 0;
    switch (kind) {
      case Perturbation::shear:
        P = x(0) * x(0) - x(1) * x(1) + x(0) * x(2);
        break;
      case Perturbation::cross_shear:
        P = x(0) * x(1) + x(1) * x(2) + x(2) * x(0);
        break;
      case Perturbation::heat_flux:
        P = x(0) * (x.squaredNorm() - 5);
        break;
    }
    m(i) *= 1 + eps * P;
  }
  return m;
}

Eigen::VectorXd collision_frequency(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k,
                                    AngularRoute route, const CollisionOptions& opt) {
  int N = grid.size();
  Eigen::VectorXd m = sample_m(grid, st, k);
  if (route == AngularRoute::quadrature) {
    Eigen::VectorXd one = Eigen::VectorXd::Ones(N);
    return collide_core(grid, k, one, one, one, m, opt, false).loss;
  }
  Eigen::VectorXd nu(N);
  parallel_for(N, opt.threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) nu(i) = collision_frequency_at(grid.node(i), grid, st, k);
  });
  return nu;
}

double collision_frequency_at(const Eigen::Vector3d& p, const MomentumGrid& grid, const JuttnerState& st,
                              const PhysicalConstants& k) {
  double A = juttner_prefactor(st, k);
  double p0 = energy(p, k);
  double mc2 = k.m * k.c * k.m * k.c;
  double sum = 0;
  for (int j = 0; j < grid.size(); ++j) {
    Eigen::Vector3d q = grid.node(j);
    double q0 = energy(q, k);
    double inner = p0 * q0 - p.dot(q);
    double s = 2 * (inner + mc2);
    double g = std::sqrt(std::max(0.0, 2 * (inner - mc2)));
    sum += grid.weights(j) * M_PI * g * std::sqrt(s) / (p0 * q0) * A * std::exp(juttner_exponent(q, st, k));
  }
  return sum;
}

double k2_constant(const JuttnerState& st, const PhysicalConstants& k) {
  double g = st.gamma(k);
  double mc = k.m * k.c;
  return st.n0 * g / (8 * mc * mc * mc * bessel_k(2, g));
}

double k2_closed(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                 const PhysicalConstants& k, double c1) {
  auto sg = s_and_g(p, q, k);
  require(sg.g > 1e-12 * k.m * k.c, ErrorKind::domain, "k2_closed: singular at p = q");
  KernelEval ke(st, k, c1);
  return ke.k2(p, q, energy(p, k), energy(q, k));
}

double k1_closed(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                 const PhysicalConstants& k) {
  KernelEval ke(st, k);
  return ke.k1(p, q, energy(p, k), energy(q, k));
}

namespace {

template <class Integrand>
double spherical_about(const Eigen::Vector3d& p, int n_radial, int n_theta, int n_phi, double r_max,
                       const Integrand& body) {
  Eigen::VectorXd xr, wr, xt, wt;
  gauss_legendre(n_radial, xr, wr);
  gauss_legendre(n_theta, xt, wt);
  double sum = 0;
  for (int a = 0; a < n_radial; ++a) {
    double r = 0.5 * r_max * (xr(a) + 1);
    double wra = 0.5 * r_max * wr(a) * r * r;
    for (int b = 0; b < n_theta; ++b) {
      double ct = xt(b), st = std::sqrt(1 - ct * ct);
      for (int c = 0; c < n_phi; ++c) {
        double ph = (c + 0.5) * 2 * M_PI / n_phi;
        Eigen::Vector3d dir(st * std::cos(ph), st * std::sin(ph), ct);
        sum += wra * wt(b) * (2 * M_PI / n_phi) * body(Eigen::Vector3d(p + r * dir));
      }
    }
  }
  return sum;
}

}  // namespace

double k2_integral_route(const Eigen::Vector3d& p, const std::function<double(const Eigen::Vector3d&)>& f,
                         const JuttnerState& st, const PhysicalConstants& k, int n_radial, int n_theta, int n_phi,
                         double r_max, int n_omega_theta, int n_omega_phi) {
  HemiRule hr = hemi_rule(n_omega_theta, n_omega_phi);
  double p0 = energy(p, k);
  double mc2 = k.m * k.c * k.m * k.c;
  auto M = [&](const Eigen::Vector3d& x) { return juttner_eval(x, st, k); };
  double smp = std::sqrt(M(p));
  double total = spherical_about(p, n_radial, n_theta, n_phi, r_max, [&](const Eigen::Vector3d& q) {
    double q0 = energy(q, k);
    Eigen::Vector3d v = p0 * q - q0 * p;
    double vn = v.norm();
    if (vn == 0) return 0.0;
    Eigen::Vector3d P = p + q;
    double e = p0 + q0;
    double s = 2 * (p0 * q0 - p.dot(q) + mc2);
    Eigen::Vector3d e1, e2, e3;
    frame_from_axis(v, e1, e2, e3);
    double acc = 0;
    for (size_t a = 0; a < hr.ct.size(); ++a)
      for (size_t b = 0; b < hr.cp.size(); ++b) {
        Eigen::Vector3d om = hr.ct[a] * e3 + hr.st[a] * (hr.cp[b] * e1 + hr.sp[b] * e2);
        double wv = hr.ct[a] * vn;
        double wP = om.dot(P);
        double den = e * e - wP * wP;
        double B = e * e * wv / (den * den);
        double amp = 2 * e * wv / den;
        Eigen::Vector3d pp = p + amp * om, qp = q - amp * om;
        double Mp = M(pp), Mq = M(qp);
        acc += hr.w[a] * hr.wphi * B * (std::sqrt(Mp) * f(pp) * Mq + Mp * std::sqrt(Mq) * f(qp));
      }
    return s / (p0 * q0) * acc;
  });
  return total / smp;
}

double k2_kernel_route(const Eigen::Vector3d& p, const std::function<double(const Eigen::Vector3d&)>& f,
                       const JuttnerState& st, const PhysicalConstants& k, int n_radial, int n_theta, int n_phi,
                       double r_max, double c1) {
  KernelEval ke(st, k, c1);
  double p0 = energy(p, k);
  return spherical_about(p, n_radial, n_theta, n_phi, r_max,
                         [&](const Eigen::Vector3d& q) { return ke.k2(p, q, p0, energy(q, k)) * f(q); });
}

double k2_bound_shape(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                      const PhysicalConstants& k) {
  double d = (p - q).norm();
  return std::exp(-k.c * d / (8 * k.k_B * st.T0)) / (energy(p, k) * d);
}

WeightedKernelRecord weighted_kernel_bounds(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                                            const GlobalMaxwellianParams& gm, const PhysicalConstants& k, double c0,
                                            double C) {
  gm.check_domination(st.T0);
  auto sg = s_and_g(p, q, k);
  require(sg.g > 1e-12 * k.m * k.c, ErrorKind::domain, "weighted_kernel_bounds: singular at p = q");
  WeightedKernelRecord r;
  r.k2 = k2_closed(p, q, st, k);
  double wp = std::pow(1 + p.norm(), k.beta), wq = std::pow(1 + q.norm(), k.beta);
  double lj = 0.5 * (std::log(global_maxwellian_eval(q, gm, k)) - std::log(global_maxwellian_eval(p, gm, k)));
  double lm = 0.5 * (juttner_exponent(p, st, k) - juttner_exponent(q, st, k));
  r.k2_bar = wp / wq * std::exp(lj + lm) * r.k2;
  double d = (p - q).norm();
  r.bound_shape = std::exp(-c0 * k.c * std::sqrt(sg.s) * d / (k.k_B * st.T0 * sg.g)) / (energy(p, k) * d);
  r.ratio = r.k2_bar / r.bound_shape;
  r.holds = r.ratio <= C;
  return r;
}

double fit_kernel_bound(KernelBound kind, const JuttnerState& st, const GlobalMaxwellianParams& gm,
                        const PhysicalConstants& k, double c0, double radius, int n) {
  require(st.u.norm() == 0, ErrorKind::input, "fit_kernel_bound: state must be at rest");
  require(radius > 0 && n >= 4, ErrorKind::input, "fit_kernel_bound: need a positive radius and n >= 4");
  if (kind == KernelBound::weighted) gm.check_domination(st.T0);
  auto ratio = [&](double a, double b, double ct) {
    ct = std::clamp(ct, -1.0, 1.0);
    Eigen::Vector3d p(a, 0, 0), q(b * ct, b * std::sqrt(1 - ct * ct), 0);
    if ((p - q).norm() <= 1e-9 * (1 + radius)) return 0.0;
    if (kind == KernelBound::unweighted) return k2_closed(p, q, st, k) / k2_bound_shape(p, q, st, k);
    return weighted_kernel_bounds(p, q, st, gm, k, c0, 0).ratio;
  };
  struct Point {
    double v, a, b, ct;
  };
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        double a = radius * i / (n - 1), b = radius * j / (n - 1), ct = -1 + 2.0 * l / (n - 1);
        pts.push_back({ratio(a, b, ct), a, b, ct});
      }
  int keep = std::min<int>(8, static_cast<int>(pts.size()));
  std::partial_sort(pts.begin(), pts.begin() + keep, pts.end(), [](const Point& x, const Point& y) { return x.v > y.v; });
  double best = pts[0].v;
  for (int t = 0; t < keep; ++t) {
    Point cur = pts[t];
    double step = radius / (n - 1);
    double cstep = 2.0 / (n - 1);
    for (int it = 0; it < 60 && step > 1e-9 * radius; ++it) {
      bool moved = false;
      for (int d = 0; d < 3; ++d)
        for (int sgn : {-1, 1}) {
          Point cand = cur;
          if (d == 0) cand.a = std::clamp(cur.a + sgn * step, 0.0, radius);
          if (d == 1) cand.b = std::clamp(cur.b + sgn * step, 0.0, radius);
          if (d == 2) cand.ct = std::clamp(cur.ct + sgn * cstep, -1.0, 1.0);
          cand.v = ratio(cand.a, cand.b, cand.ct);
          if (cand.v > cur.v) {
            cur = cand;
            moved = true;
          }
        }
      if (!moved) {
        step *= 0.5;
        cstep *= 0.5;
      }
    }
    best = std::max(best, cur.v);
  }
  return best;
}

namespace {

struct RowIntegrals {
  double nu = 0;
  double kernel = 0;
};

// nu(p) over all q and int (k2 - k1)(p, q) dq over the grid box, in spherical coordinates about p.
// Each ray is cut at the box face and split into radial panels no wider than h.
RowIntegrals row_integrals(const Eigen::Vector3d& p, double p0, const KernelEval& ke, const JuttnerState& st,
                           const PhysicalConstants& k, const CollisionOptions& opt, double h, double box,
                           double r_max) {
  Eigen::VectorXd xr, wr, xt, wt;
  gauss_legendre(opt.panel_nodes, xr, wr);
  gauss_legendre(opt.sphere_theta, xt, wt);
  double mc2 = k.m * k.c * k.m * k.c;
  double A = juttner_prefactor(st, k);
  RowIntegrals out;
  for (int b = 0; b < opt.sphere_theta; ++b) {
    double ct = xt(b), sn = std::sqrt(1 - ct * ct);
    for (int c = 0; c < opt.sphere_phi; ++c) {
      double ph = (c + 0.5) * 2 * M_PI / opt.sphere_phi;
      Eigen::Vector3d dir(sn * std::cos(ph), sn * std::sin(ph), ct);
      double dw = wt(b) * 2 * M_PI / opt.sphere_phi;
      double r_box = std::numeric_limits<double>::infinity();
      for (int d = 0; d < 3; ++d)
        if (dir(d) != 0) r_box = std::min(r_box, ((dir(d) > 0 ? box : -box) - p(d)) / dir(d));
      for (int part = 0; part < 2; ++part) {
        double r0 = part == 0 ? 0 : r_box, r1 = part == 0 ? r_box : std::max(r_box, r_max);
        if (r1 <= r0) continue;
        int panels = static_cast<int>(std::ceil((r1 - r0) / h));
        double width = (r1 - r0) / panels;
        for (int pn = 0; pn < panels; ++pn)
          for (int a = 0; a < opt.panel_nodes; ++a) {
            double r = r0 + width * (pn + 0.5 * (xr(a) + 1));
            double w = 0.5 * width * wr(a) * r * r * dw;
            Eigen::Vector3d q = p + r * dir;
            double q0 = energy<double>(q, k);
            double inner = p0 * q0 - p.dot(q);
            double s = 2 * (inner + mc2);
            double g = std::sqrt(std::max(0.0, 2 * (inner - mc2)));
            out.nu += w * M_PI * g * std::sqrt(s) / (p0 * q0) * A * std::exp(juttner_exponent(q, st, k));
            if (part == 0) out.kernel += w * (ke.k2(p, q, p0, q0) - ke.k1(p, q, p0, q0));
          }
      }
    }
  }
  return out;
}

}  // namespace

LinearizedOperator LinearizedOperator::assemble(const MomentumGrid& grid, const JuttnerState& st,
                                                const PhysicalConstants& k, const CollisionOptions& opt) {
  require(grid.rule == GridRule::uniform, ErrorKind::input, "LinearizedOperator: assembly needs a uniform grid");
  require(opt.subdivision >= 2 && opt.subdivision % 2 == 0, ErrorKind::input,
          "LinearizedOperator: subdivision must be even so no sub-cell centre hits the node");
  st.validate();
  LinearizedOperator L;
  L.grid_ = grid;
  L.state_ = st;
  L.k_ = k;
  int N = grid.size();
  KernelEval ke(st, k);
  Eigen::VectorXd p0(N);
  L.sqrt_m_.resize(N);
  for (int i = 0; i < N; ++i) {
    p0(i) = energy<double>(grid.node(i), k);
    L.sqrt_m_(i) = ke.sqrt_m(grid.node(i), p0(i));
  }
  L.nu_ = collision_frequency(grid, st, k, AngularRoute::closed, opt);
  L.K_ = Eigen::MatrixXd::Zero(N, N);
  double h = grid.spacing();
  double r_max = 2 * std::sqrt(3.0) * grid.p_max;
  int sd = opt.subdivision;
  double hs = h / sd;
  parallel_for(N, opt.threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      Eigen::Vector3d p = grid.node(i);
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        Eigen::Vector3d q = grid.node(j);
        L.K_(i, j) = (ke.k2(p, q, p0(i), p0(j)) - ke.k1(p, q, p0(i), p0(j))) * grid.weights(j);
      }
      if (opt.self_cell == SelfCell::row_integral) {
        RowIntegrals ri = row_integrals(p, p0(i), ke, st, k, opt, h, grid.axis(grid.n_axis - 1) + 0.5 * h, r_max);
        L.nu_(i) = ri.nu;
        L.K_(i, i) = ri.kernel - L.K_.row(i).sum();
        continue;
      }
      double self = 0;
      for (int a = 0; a < sd; ++a)
        for (int b = 0; b < sd; ++b)
          for (int c = 0; c < sd; ++c) {
            Eigen::Vector3d q = p + Eigen::Vector3d((a + 0.5) * hs - 0.5 * h, (b + 0.5) * hs - 0.5 * h,
                                                    (c + 0.5) * hs - 0.5 * h);
            double q0 = energy<double>(q, k);
            self += ke.k2(p, q, p0(i), q0) - ke.k1(p, q, p0(i), q0);
          }
      L.K_(i, i) = self * hs * hs * hs;
    }
  });
  L.psi_.resize(N, 5);
  for (int i = 0; i < N; ++i) {
    Eigen::Vector3d p = grid.node(i);
    L.psi_(i, 0) = L.sqrt_m_(i);
    for (int d = 0; d < 3; ++d) L.psi_(i, 1 + d) = p(d) * L.sqrt_m_(i);
    L.psi_(i, 4) = p0(i) * L.sqrt_m_(i);
  }
  Eigen::Matrix<double, 5, 5> G = L.psi_.transpose() * grid.weights.asDiagonal() * L.psi_;
  Eigen::LLT<Eigen::Matrix<double, 5, 5>> llt(G);
  require(llt.info() == Eigen::Success, ErrorKind::degenerate, "LinearizedOperator: singular invariant Gram matrix");
  Eigen::Matrix<double, 5, 5> Linv = llt.matrixL().solve(Eigen::Matrix<double, 5, 5>::Identity());
  L.basis_ = L.psi_ * Linv.transpose();
  L.gram_inv_ = G.inverse();
  return L;
}

double LinearizedOperator::inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
  return (f.array() * g.array() * grid_.weights.array()).sum();
}

Eigen::VectorXd LinearizedOperator::apply(const Eigen::VectorXd& f) const {
  require(f.size() == size(), ErrorKind::input, "LinearizedOperator::apply: size mismatch");
  return nu_.cwiseProduct(f) - K_ * f;
}

Projection LinearizedOperator::p_project(const Eigen::VectorXd& f) const {
  require(f.size() == size(), ErrorKind::input, "LinearizedOperator::p_project: size mismatch");
  Projection pr;
  Eigen::Matrix<double, 5, 1> rhs = psi_.transpose() * f.cwiseProduct(grid_.weights);
  pr.coeffs = gram_inv_ * rhs;
  Eigen::Matrix<double, 5, 1> ob = basis_.transpose() * f.cwiseProduct(grid_.weights);
  pr.Pf = basis_ * ob;
  return pr;
}

Eigen::VectorXd LinearizedOperator::apply_projected(const Eigen::VectorXd& f) const {
  Eigen::VectorXd g = micro(f);
  return micro(apply(g));
}

Eigen::VectorXd LinearizedOperator::pseudo_inverse(const Eigen::VectorXd& g, const PseudoInverseOptions& opt,
                                                   SolveReport* report) const {
  require(g.size() == size(), ErrorKind::input, "pseudo_inverse: size mismatch");
  double gn = norm(g);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(size());
  if (report) *report = {};
  if (gn == 0) return x;
  Eigen::VectorXd Pg = p_project(g).Pf;
  require(norm(Pg) <= opt.micro_tol * gn, ErrorKind::consistency, "pseudo_inverse: right-hand side is not microscopic");
  Eigen::VectorXd r = g - Pg;
  Eigen::VectorXd d = r;
  double rr = inner(r, r);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (std::sqrt(rr) <= opt.tol * gn) break;
    Eigen::VectorXd Ad = apply_projected(d);
    double dAd = inner(d, Ad);
    require(dAd > 0, ErrorKind::convergence, "pseudo_inverse: operator is not positive on the complement");
    double alpha = rr / dAd;
    x += alpha * d;
    r -= alpha * Ad;
    double rr_new = inner(r, r);
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  if (report) {
    report->iterations = it;
    report->residual = std::sqrt(rr) / gn;
  }
  require(std::sqrt(rr) <= opt.tol * gn, ErrorKind::convergence, "pseudo_inverse: no convergence");
  return micro(x);
}

double LinearizedOperator::spectral_gap(int iterations, unsigned seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd x(size());
  for (int i = 0; i < size(); ++i) x(i) = nd(rng) * sqrt_m_(i);
  x = micro(x);
  x /= norm(x);
  PseudoInverseOptions opt;
  opt.tol = 1e-12;
  double lambda = 0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd y = pseudo_inverse(x, opt);
    x = micro(y);
    x /= norm(x);
    double next = inner(x, apply_projected(x));
    if (it > 0 && std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

void LinearizedOperator::export_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::input, "export_binary: cannot open " + path);
  out.write("RVMBK1", 6);
  std::uint64_t dims[2] = {static_cast<std::uint64_t>(size()), static_cast<std::uint64_t>(size())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  Eigen::MatrixXd L = -K_;
  L.diagonal() += nu_;
  for (int i = 0; i < size(); ++i)
    for (int j = 0; j < size(); ++j) {
      double v = L(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

}  // namespace rvmb
