#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>

#include "frozen_oracle.hpp"
#include "rvmb/characteristics.hpp"
#include "rvmb/collision.hpp"
#include "rvmb/equilibria.hpp"
#include "rvmb/error.hpp"
#include "rvmb/fields.hpp"
#include "rvmb/hilbert.hpp"
#include "rvmb/parallel.hpp"

namespace rvmb::cli {

using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

using Rng = std::mt19937_64;

Vector3d random_unit(Rng& rng) {
  std::normal_distribution<double> d;
  Vector3d v(d(rng), d(rng), d(rng));
  return v.normalized();
}

Vector3d random_box(Rng& rng, double half) {
  std::uniform_real_distribution<double> d(-half, half);
  return {d(rng), d(rng), d(rng)};
}

/// Uniform sample in the ball of radius r.
Vector3d random_ball(Rng& rng, double r) {
  std::uniform_real_distribution<double> d(0, 1);
  return r * std::cbrt(d(rng)) * random_unit(rng);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

bool wanted(const std::set<int>& criteria, int id) { return criteria.empty() || criteria.count(id) > 0; }

unsigned long long seed_of(const Config& cfg) {
  int s = cfg.integer("run.seed");
  if (s < 0) throw ConfigError("run.seed", "must be non-negative");
  return static_cast<unsigned long long>(s);
}

int positive(const Config& cfg, const std::string& key) {
  int v = cfg.integer(key);
  if (v <= 0) throw ConfigError(key, "must be positive");
  return v;
}

double positive_real(const Config& cfg, const std::string& key) {
  double v = cfg.real(key);
  if (!(v > 0)) throw ConfigError(key, "must be positive");
  return v;
}

Table long_table() { return Table{{"criterion", "check", "case", "value"}, {}}; }

void long_row(Table& t, int criterion, const std::string& check, const std::string& cs, double value) {
  t.add_row({static_cast<long long>(criterion), check, cs, value});
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

void moments_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  PhysicalConstants k = cfg.constants();
  int states = positive(cfg, "moments.states");
  double g_lo = positive_real(cfg, "moments.gamma_min"), g_hi = positive_real(cfg, "moments.gamma_max");
  if (g_hi < g_lo) throw ConfigError("moments.gamma_max", "must not be below moments.gamma_min");
  double u_max = cfg.real("moments.u_max");
  if (!(u_max >= 0)) throw ConfigError("moments.u_max", "must be non-negative");
  rep.table.columns = {"state", "n0", "u1", "u2", "u3", "T0", "gamma", "first_rel", "second_rel", "third_rel",
                       "rest_rel"};

  Rng rng(seed_of(cfg));
  std::uniform_real_distribution<double> unit(0, 1), dens(0.5, 2.0);
  double worst1 = 0, worst2 = 0, worst3 = 0, worst_rest = 0;
  bool need12 = wanted(criteria, 1) || wanted(criteria, 2);
  for (int i = 0; i < states && need12; ++i) {
    double frac = states == 1 ? 0.5 : (i + unit(rng)) / states;
    double gamma = g_lo * std::pow(g_hi / g_lo, frac);
    JuttnerState st;
    st.n0 = dens(rng);
    st.u = random_ball(rng, u_max * k.c);
    st.T0 = k.m * k.c * k.c / (k.k_B * gamma);
    Moments mo = moment_quadrature(st, k);
    double e_first = max_rel(mo.I, moment_first_closed(st, k));
    double e_second = max_rel(mo.T, moment_second_closed(st, k, closure_analytic(st, k)));
    Tensor3 cl = moment_third_closed(st, k);
    double e_third = 0;
    for (int q = 0; q < 64; ++q) e_third = std::max(e_third, std::abs(cl.v[q] - mo.T3.v[q]));
    e_third /= cl.max_abs();

    JuttnerState rest = st;
    rest.u.setZero();
    Tensor3 r = moment_third_rest(rest, k);
    Tensor3 rq = moment_quadrature(rest, k).T3;
    double e_rest = 0;
    for (int q = 0; q < 64; ++q) {
      double scale = r.v[q] != 0 ? std::abs(r.v[q]) : std::abs(r(0, 0, 0));
      e_rest = std::max(e_rest, std::abs(rq.v[q] - r.v[q]) / scale);
    }
    worst1 = std::max({worst1, e_first, e_second});
    worst2 = std::max(worst2, e_third);
    worst_rest = std::max(worst_rest, e_rest);
    rep.table.add_row({static_cast<long long>(i), st.n0, st.u(0), st.u(1), st.u(2), st.T0, gamma, e_first, e_second,
                       e_third, e_rest});
  }
  if (wanted(criteria, 1)) {
    auto& c = rep.criterion(1, "first and second moments against the closed forms");
    c.add("max relative error over states", worst1, Relation::less_equal, 1e-6);
  }
  if (wanted(criteria, 2)) {
    auto& c = rep.criterion(2, "third moments against quadrature and the rest-frame forms");
    c.add("closed form vs quadrature", worst2, Relation::less_equal, 1e-5);
    c.add("rest frame vs quadrature", worst_rest, Relation::less_equal, 1e-8);
  }
  if (wanted(criteria, 3)) {
    auto& c = rep.criterion(3, "Bessel recurrence K3 = K1 + 4 K2/gamma");
    for (double g : cfg.reals("moments.bessel_gammas")) {
      if (!(g > 0)) throw ConfigError("moments.bessel_gammas", "must be positive");
      worst3 = std::max(worst3, std::abs(bessel_k(3, g) - bessel_k(1, g) - 4 * bessel_k(2, g) / g) / bessel_k(3, g));
    }
    c.add("max relative residual", worst3, Relation::less_equal, 1e-10);
  }
}

JuttnerState collision_state(const Config& cfg) {
  JuttnerState st;
  st.n0 = positive_real(cfg, "collision.n0");
  st.u = cfg.vec3("collision.u");
  st.T0 = positive_real(cfg, "collision.T0");
  return st;
}

CollisionOptions collision_options(const Config& cfg) {
  CollisionOptions o;
  o.hemi_theta = positive(cfg, "collision.hemi_theta");
  o.hemi_phi = positive(cfg, "collision.hemi_phi");
  return o;
}

VectorXd sample_juttner(const MomentumGrid& g, const JuttnerState& st, const PhysicalConstants& k) {
  VectorXd v(g.size());
  for (int i = 0; i < g.size(); ++i) v(i) = juttner_eval(g.node(i), st, k);
  return v;
}

/// |int Q psi_c| / (||Q||_1 ||psi_c||_inf) on the grid for psi = (1, p, p0).
double invariant_residual(const MomentumGrid& g, const VectorXd& q, int c, const PhysicalConstants& k) {
  double s = 0, l1 = 0, pinf = 0;
  for (int i = 0; i < g.size(); ++i) {
    Vector3d p = g.node(i);
    double psi = c == 0 ? 1.0 : c < 4 ? p(c - 1) : energy(p, k);
    s += q(i) * psi * g.weights(i);
    l1 += std::abs(q(i)) * g.weights(i);
    pinf = std::max(pinf, std::abs(psi));
  }
  return std::abs(s) / (l1 * pinf);
}

void collision_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  PhysicalConstants k = cfg.constants();
  JuttnerState st = collision_state(cfg);
  CollisionOptions opt = collision_options(cfg);
  rep.table = long_table();
  Rng rng(seed_of(cfg));

  if (wanted(criteria, 4)) {
    auto& c = rep.criterion(4, "collision operator fidelity");
    MomentumGrid g = uniform_grid(positive(cfg, "collision.nodes"), positive_real(cfg, "collision.p_max"));
    VectorXd m = sample_juttner(g, st, k);
    QResult qm = q_bilinear(m, m, g, st, k, opt);
    VectorXd nu = collision_frequency(g, st, k);
    double scaled = qm.values.cwiseAbs().maxCoeff() / (nu.maxCoeff() * m.maxCoeff());
    long_row(rep.table, 4, "Q(M,M) scaled", "M", scaled);
    c.add("Q(M,M) sup / (nu_max M_max)", scaled, Relation::less_equal, 1e-3);

    double eps = cfg.real("collision.eps");
    double worst_inv = 0;
    const std::pair<Perturbation, const char*> kinds[] = {
        {Perturbation::shear, "shear"}, {Perturbation::cross_shear, "cross_shear"}, {Perturbation::heat_flux, "heat_flux"}};
    for (const auto& [kind, label] : kinds) {
      VectorXd F = perturbed_juttner(g, st, k, kind, eps);
      QResult q = q_bilinear(F, F, g, st, k, opt);
      for (int comp = 0; comp < 5; ++comp) {
        double r = invariant_residual(g, q.values, comp, k);
        long_row(rep.table, 4, "invariant integral", std::string(label) + " psi" + std::to_string(comp), r);
        worst_inv = std::max(worst_inv, r);
      }
    }
    c.add("collision-invariant integrals of Q(F,F), scaled", worst_inv, Relation::less_equal, 1e-4);

    int samples = positive(cfg, "collision.kinematic_samples");
    double h = positive_real(cfg, "collision.fd_step");
    double worst_cons = 0, worst_jac = 0;
    for (int s = 0; s < samples; ++s) {
      Vector3d p = random_box(rng, 2.0), q = random_box(rng, 2.0), om = random_unit(rng);
      auto [pp, qp] = post_collision(p, q, om, k);
      double scale = p.norm() + q.norm() + energy(p, k) + energy(q, k);
      double cons = std::max((p + q - pp - qp).cwiseAbs().maxCoeff(),
                             std::abs(energy(p, k) + energy(q, k) - energy(pp, k) - energy(qp, k))) /
                    scale;
      double jac = collision_jacobian_check(p, q, om, k, h);
      worst_cons = std::max(worst_cons, cons);
      worst_jac = std::max(worst_jac, jac);
    }
    long_row(rep.table, 4, "post-collision conservation", "max over pairs", worst_cons);
    long_row(rep.table, 4, "collision Jacobian", "max over pairs", worst_jac);
    c.add("post-collision conservation, relative", worst_cons, Relation::less_equal, 1e-12);
    c.add("Jacobian vs p'0 q'0/(p0 q0), relative", worst_jac, Relation::less_equal, 1e-6);
  }

  if (wanted(criteria, 6)) {
    auto& c = rep.criterion(6, "linearized operator null space, gap and pseudo-inverse");
    MomentumGrid g =
        uniform_grid(positive(cfg, "collision.operator_nodes"), positive_real(cfg, "collision.operator_p_max"));
    LinearizedOperator L = LinearizedOperator::assemble(g, st, k, opt);
    double worst_null = 0;
    for (int comp = 0; comp < 5; ++comp) {
      VectorXd psi = L.invariants().col(comp);
      double r = L.apply(psi).norm() / L.nu().cwiseProduct(psi).norm();
      long_row(rep.table, 6, "||L psi|| / ||nu psi||", "psi" + std::to_string(comp), r);
      worst_null = std::max(worst_null, r);
    }
    double gap = L.spectral_gap(positive(cfg, "collision.gap_iterations"), static_cast<unsigned>(seed_of(cfg)));
    long_row(rep.table, 6, "spectral gap", "inverse iteration", gap);

    std::normal_distribution<double> nd;
    double worst_trip = 0;
    int trips = positive(cfg, "collision.roundtrip_samples");
    for (int t = 0; t < trips; ++t) {
      VectorXd f(L.size());
      for (int i = 0; i < L.size(); ++i) f(i) = nd(rng) * L.sqrt_m()(i);
      VectorXd f0 = L.micro(f);
      VectorXd back = L.pseudo_inverse(L.apply_projected(f0));
      double e = L.norm(back - f0) / L.norm(f0);
      long_row(rep.table, 6, "pseudo-inverse round trip", "sample " + std::to_string(t), e);
      worst_trip = std::max(worst_trip, e);
    }
    c.add("max ||L psi|| / ||nu psi|| over invariants", worst_null, Relation::less_equal, 1e-5);
    c.add("spectral gap", gap, Relation::greater, 0);
    c.add("round-trip relative error", worst_trip, Relation::less_equal, 1e-8);
  }

  if (wanted(criteria, 11)) {
    auto& c = rep.criterion(11, "collision output independent of the thread count");
    MomentumGrid g = uniform_grid(positive(cfg, "collision.determinism_nodes"), positive_real(cfg, "collision.p_max"));
    VectorXd F = perturbed_juttner(g, st, k, Perturbation::shear, cfg.real("collision.eps"));
    CollisionOptions one = opt, many = opt;
    one.threads = 1;
    many.threads = std::max(3, default_threads());
    VectorXd a = q_bilinear(F, F, g, st, k, one).values;
    VectorXd b = q_bilinear(F, F, g, st, k, many).values;
    long long differing = 0;
    for (int i = 0; i < a.size(); ++i) differing += std::memcmp(&a(i), &b(i), sizeof(double)) != 0;
    long_row(rep.table, 11, "Q(F,F) entries differing between 1 and several threads", "shear",
             static_cast<double>(differing));
    c.add("differing entries", static_cast<double>(differing), Relation::equal, 0);
  }
}

void kernel_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  if (!wanted(criteria, 5)) return;
  PhysicalConstants k = cfg.constants();
  JuttnerState st{positive_real(cfg, "kernel.n0"), Vector3d::Zero(), positive_real(cfg, "kernel.T0")};
  GlobalMaxwellianParams gm{positive_real(cfg, "kernel.n_M"), positive_real(cfg, "kernel.T_M")};
  if (!(gm.T_M < st.T0 && st.T0 < 2 * gm.T_M)) throw ConfigError("kernel.T_M", "needs T_M < T0 < 2 T_M");
  rep.table = long_table();
  auto& c = rep.criterion(5, "closed-form kernel equivalence and kernel bounds");
  Rng rng(seed_of(cfg));

  int nr = positive(cfg, "kernel.route_radial"), nt = positive(cfg, "kernel.route_theta");
  int np = positive(cfg, "kernel.route_phi");
  double rmax = positive_real(cfg, "kernel.route_radius");
  auto f = [](const Vector3d& q) { return std::exp(-q.squaredNorm() / 4) * (1 + 0.3 * q(0)); };
  double worst_route = 0, worst_c1 = 0;
  double c1 = k2_constant(st, k);
  int routes = positive(cfg, "kernel.route_samples");
  for (int s = 0; s < routes; ++s) {
    Vector3d p = random_ball(rng, 1.5);
    double integral = k2_integral_route(p, f, st, k, nr, nt, np, rmax, 6, 12);
    double closed = k2_kernel_route(p, f, st, k, nr, nt, np, rmax);
    double unit = k2_kernel_route(p, f, st, k, nr, nt, np, rmax, 1.0);
    double e = std::abs(closed - integral) / std::abs(integral);
    double fitted = integral / unit;
    double e_c1 = std::abs(fitted - c1) / c1;
    long_row(rep.table, 5, "kernel route vs integral route", "sample " + std::to_string(s), e);
    long_row(rep.table, 5, "fitted C1", "sample " + std::to_string(s), fitted);
    worst_route = std::max(worst_route, e);
    worst_c1 = std::max(worst_c1, e_c1);
  }
  long_row(rep.table, 5, "derived C1", "closed form", c1);
  c.add("closed vs integral route, relative", worst_route, Relation::less_equal, 1e-3);
  c.add("fitted C1 vs derived, relative", worst_c1, Relation::less_equal, 1e-3);

  double box = positive_real(cfg, "kernel.box"), c0 = positive_real(cfg, "kernel.c0");
  int pairs = positive(cfg, "kernel.pairs"), fit_n = positive(cfg, "kernel.fit_points");
  double C_plain = fit_kernel_bound(KernelBound::unweighted, st, gm, k, c0, std::sqrt(3.0) * box, fit_n);
  double C_weighted = fit_kernel_bound(KernelBound::weighted, st, gm, k, c0, std::sqrt(3.0) * box, fit_n);
  long_row(rep.table, 5, "fitted constant", "unweighted", C_plain);
  long_row(rep.table, 5, "fitted constant", "weighted", C_weighted);
  std::uniform_real_distribution<double> u(-box, box);
  long long miss_plain = 0, miss_weighted = 0;
  for (int s = 0; s < pairs; ++s) {
    Vector3d p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
    if (s % 4 == 0) q = p + 0.01 * Vector3d(u(rng), u(rng), u(rng));
    miss_plain += !(k2_closed(p, q, st, k) <= C_plain * k2_bound_shape(p, q, st, k));
    miss_weighted += !weighted_kernel_bounds(p, q, st, gm, k, c0, C_weighted).holds;
  }
  long_row(rep.table, 5, "pairs violating the bound", "unweighted", static_cast<double>(miss_plain));
  long_row(rep.table, 5, "pairs violating the bound", "weighted", static_cast<double>(miss_weighted));
  c.add("sampled pairs", pairs, Relation::greater_equal, 1000);
  c.add("unweighted bound violations", static_cast<double>(miss_plain), Relation::equal, 0);
  c.add("weighted bound violations", static_cast<double>(miss_weighted), Relation::equal, 0);
}

void chars_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  if (!wanted(criteria, 7)) return;
  PhysicalConstants k = cfg.constants();
  rep.table = long_table();
  auto& c = rep.criterion(7, "characteristic Jacobian determinant");
  Rng rng(seed_of(cfg));
  double step = positive_real(cfg, "chars.step");
  double dtau_max = positive_real(cfg, "chars.dtau_max");

  int free_samples = positive(cfg, "chars.free_samples");
  double worst_free = 0;
  std::uniform_real_distribution<double> frac(0.05, 1.0);
  for (int s = 0; s < free_samples; ++s) {
    Vector3d p = random_box(rng, 3.0);
    double dtau = dtau_max * frac(rng);
    BandRecord r = jacobian_band_check(0, Vector3d::Zero(), p, zero_field(), -dtau, step, k);
    double p0 = energy(p, k);
    double exact = std::pow(k.c * dtau, 3) * k.m * k.m * k.c * k.c / std::pow(p0, 5);
    worst_free = std::max(worst_free, std::abs(std::abs(r.det) - exact));
  }
  long_row(rep.table, 7, "field-free |det| error", "max over samples", worst_free);
  c.add("field-free determinant, absolute error", worst_free, Relation::less_equal, 1e-10);

  BandSweepOptions bo;
  bo.samples = positive(cfg, "chars.samples");
  bo.field_max = positive_real(cfg, "chars.field_max");
  bo.dtau_max = dtau_max;
  bo.step = step;
  bo.seed = seed_of(cfg);
  auto rows = band_sweep(bo, k);
  long long out_of_band = 0;
  double worst_log = 0;
  for (const BandSweepRow& r : rows) {
    out_of_band += !r.record.in_band;
    worst_log = std::max(worst_log, std::abs(std::log(std::abs(r.record.det) / r.record.reference)));
  }
  long_row(rep.table, 7, "band sweep", "samples", static_cast<double>(rows.size()));
  long_row(rep.table, 7, "band sweep", "max |log(det/field-free)|", worst_log);
  c.add("sweep samples", static_cast<double>(rows.size()), Relation::greater_equal, 100);
  c.add("samples outside [1/2, 2] of the field-free value", static_cast<double>(out_of_band), Relation::equal, 0);

  WaveFieldSpec ws;
  double a = 0.5 * bo.field_max;
  ws.E0 = random_ball(rng, a);
  ws.E1 = random_ball(rng, a);
  ws.B0 = random_ball(rng, a);
  ws.B1 = random_ball(rng, a);
  ws.wave = random_box(rng, 1.5);
  ws.omega = 0.9;
  Vector3d x = random_box(rng, 0.5), p = random_box(rng, 1.0);
  CubicFit fit = cubic_vanishing_fit(0.2, x, p, wave_field(ws), positive_real(cfg, "chars.fit_dtau_min"),
                                     positive_real(cfg, "chars.fit_dtau_max"), positive(cfg, "chars.fit_points"), k);
  for (size_t i = 0; i < fit.dtau.size(); ++i)
    long_row(rep.table, 7, "cubic fit |det|", "dtau " + format_real(fit.dtau[i]), fit.det[i]);
  long_row(rep.table, 7, "cubic fit", "exponent", fit.exponent);
  c.add("fitted exponent", fit.exponent, Relation::within, 2.95, 3.05);
}

FieldState random_field_state(int n, double length, unsigned long long seed) {
  FieldState s = zero_state(n, length);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < s.cells(); ++i) s.E[c](i) = u(rng);
  EdgeField none;
  for (auto& v : none) v = VectorXd::Zero(s.cells());
  PhysicalConstants unit;
  double dt = 0.5 * s.spacing() / std::sqrt(3.0);
  for (int i = 0; i < 3; ++i) s = maxwell_step(s, none, dt, unit);
  s.time = 0;
  return s;
}

CurrentFunction smooth_current(double length, double amplitude) {
  double w = 2 * M_PI / length;
  return [w, amplitude](double t, const Vector3d& x) {
    Vector3d v(std::sin(w * x(1) + 0.3) * std::cos(2 * t), std::cos(w * x(2)) * std::sin(t + 0.2),
               std::sin(w * (x(0) + x(1))) * std::cos(t));
    return Vector3d(amplitude * v);
  };
}

void fields_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  if (!wanted(criteria, 8)) return;
  PhysicalConstants k = cfg.constants();
  rep.table = long_table();
  auto& c = rep.criterion(8, "Maxwell solver and retarded field representation");
  unsigned long long seed = seed_of(cfg);

  {
    FieldState s = random_field_state(positive(cfg, "fields.divb_cells"), 1.0, seed);
    double dt = 0.9 * s.spacing() / (std::sqrt(3.0) * k.c);
    Rng rng(seed + 1);
    std::uniform_real_distribution<double> u(-1, 1);
    EdgeField J0;
    for (auto& v : J0) {
      v.resize(s.cells());
      for (int i = 0; i < s.cells(); ++i) v(i) = 0.1 * u(rng);
    }
    int steps = positive(cfg, "fields.divb_steps");
    for (int n = 0; n < steps; ++n) {
      EdgeField J = J0;
      for (auto& v : J) v *= std::cos(0.05 * n);
      s = maxwell_step(s, J, dt, k);
    }
    double divb = divergence_b(s).cwiseAbs().maxCoeff();
    long_row(rep.table, 8, "max |div B|", std::to_string(steps) + " steps", divb);
    long_row(rep.table, 8, "max |B1|", std::to_string(steps) + " steps", s.B[0].cwiseAbs().maxCoeff());
    c.add("steps", steps, Relation::greater_equal, 1000);
    c.add("max |div B|", divb, Relation::less_equal, 1e-12);
  }

  {
    FieldState s = random_field_state(positive(cfg, "fields.energy_cells"), 1.0, seed + 2);
    auto J = smooth_current(1.0, 0.2);
    double base = 0.8 * s.spacing() / (std::sqrt(3.0) * k.c);
    double t_end = positive_real(cfg, "fields.energy_t_end");
    std::vector<double> dts, res;
    int refinements = positive(cfg, "fields.energy_refinements");
    if (refinements < 2) throw ConfigError("fields.energy_refinements", "needs at least 2 time steps");
    for (int r = 0; r < refinements; ++r) {
      EnergyIdentityRecord rec = energy_identity_residual(s, J, t_end, base / std::pow(2, r), k);
      dts.push_back(rec.dt);
      res.push_back(std::abs(rec.residual));
      long_row(rep.table, 8, "energy identity residual", "dt " + format_real(rec.dt), rec.residual);
    }
    double order = loglog_slope(dts, res);
    long_row(rep.table, 8, "energy identity order", "fit", order);
    c.add("energy identity order in dt", order, Relation::within, 1.8, 2.2);
  }

  {
    Vector3d dir = Vector3d(0.6, 0.8, 0).normalized();
    std::vector<Vector3d> shells;
    for (double r : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) shells.push_back(r * dir);
    GradientKernelReport gk = gs_gradient_kernel_checks(
        shells, k, angular_grid(positive(cfg, "fields.kernel_theta"), positive(cfg, "fields.kernel_phi")),
        representative_gradient_kernels());
    for (const KernelShell& sh : gk.shells)
      long_row(rep.table, 8, "mean of kernel a", "|p| " + format_real(sh.p.norm()), sh.mean_residual);
    c.add("max |int a d omega| / int |a| d omega", gk.max_mean_residual, Relation::less_equal, 1e-8);
  }

  GSOptions opt;
  opt.momentum = gl_sinh_grid(positive(cfg, "fields.gs_nodes"), positive_real(cfg, "fields.gs_p_max"), 0.5);

  {
    PulsedSourceSpec spec;
    std::vector<Vector3d> pts = {{2, 0, 0},     {0, 2, 0},       {1.5, 1.5, 0}, {0, 0, 2.2},
                                 {2.5, 1, 0.5}, {0.5, 0.3, 0.2}, {3.2, 0, 0},   {0, -3, 1}};
    FieldComparison cmp = compare_with_grid_solver(spec, positive(cfg, "fields.pulsed_cells"),
                                                   positive_real(cfg, "fields.pulsed_length"),
                                                   positive_real(cfg, "fields.pulsed_time"), pts, k, opt);
    long_row(rep.table, 8, "pulsed source relative gap", "E", cmp.max_rel_E);
    long_row(rep.table, 8, "pulsed source relative gap", "B", cmp.max_rel_B);
    c.add("pulsed source, retarded vs grid solver (E)", cmp.max_rel_E, Relation::less_equal, 0.05);
    c.add("pulsed source, retarded vs grid solver (B)", cmp.max_rel_B, Relation::less_equal, 0.05);
  }

  {
    double q = cfg.real("fields.coulomb_charge");
    if (q == 0) throw ConfigError("fields.coulomb_charge", "must be non-zero");
    Bump bump{Vector3d(0.2, -0.1, 0.3), positive_real(cfg, "fields.coulomb_radius")};
    SpacetimeSource src = static_charge_source(q, bump, 4.0, opt.momentum, k);
    Rng rng(seed + 3);
    std::vector<Vector3d> pts;
    const double radii[3] = {1.5, 2.0, 3.0};
    for (double r : radii) pts.push_back(bump.center + r * bump.radius * random_unit(rng));
    auto res = gs_eval_points(src, nullptr, positive_real(cfg, "fields.coulomb_time"), pts, k, opt);
    for (int i = 0; i < 3; ++i) {
      Vector3d d = pts[i] - bump.center;
      Vector3d coulomb = q * d / std::pow(d.norm(), 3);
      double e = (res[i].E - coulomb).norm() / coulomb.norm();
      long_row(rep.table, 8, "static field vs Coulomb", "radius " + format_real(radii[i]) + " R", e);
      c.add("static field vs Coulomb at " + format_real(radii[i]) + " R", e, Relation::less_equal, 0.05);
    }
  }
}

EquilibriumProfile background_spec(const Config& cfg) {
  EquilibriumProfile e;
  e.n_mean = positive_real(cfg, "background.n_mean");
  e.density_amplitude = cfg.real("background.density_amplitude");
  e.T_mean = positive_real(cfg, "background.T_mean");
  e.flow_amplitude = cfg.real("background.flow_amplitude");
  e.B3_base = cfg.real("background.B3_base");
  e.wavenumber = positive(cfg, "background.wavenumber");
  return e;
}

HilbertOptions hierarchy_options(const Config& cfg) {
  HilbertOptions o;
  o.momentum_nodes = positive(cfg, "hilbert.nodes");
  o.p_max = positive_real(cfg, "hilbert.p_max");
  o.levels = positive(cfg, "hilbert.levels");
  o.dt = positive_real(cfg, "hilbert.dt");
  return o;
}

struct Hierarchy {
  HilbertContext ctx;
  std::vector<HilbertCoefficient> stages;
};

Hierarchy build(const Config& cfg, int stages) {
  PhysicalConstants k = cfg.constants();
  int nx = positive(cfg, "hilbert.nx");
  if (nx < 5) throw ConfigError("hilbert.nx", "needs at least 5 points");
  Background bg = manufactured_background(equilibrium_profile(background_spec(cfg), k), nx, k);
  Hierarchy h{HilbertContext::create(bg, hierarchy_options(cfg)), {}};
  h.stages = build_hierarchy(stages, h.ctx);
  return h;
}

HyperbolicSystem frozen_system(const Config& cfg, int nx) {
  PhysicalConstants k = cfg.constants();
  SinusoidalProfile sp;
  sp.n0 = {1.0, 0.0};
  sp.T0 = {0.3 * k.m * k.c * k.c / k.k_B, 0.0};
  const Vector3d u(0.05, 0.02, 0.0), E(0.1, 0.05, -0.02), B(0.03, 0.1, 0.05);
  for (int i = 0; i < 3; ++i) {
    sp.u[i].mean = u(i) * k.c;
    sp.E0[i].mean = E(i);
    sp.B0[i].mean = B(i);
  }
  Background bg = manufactured_background(sinusoidal_profile(sp), nx, k);
  HilbertContext ctx = HilbertContext::create(bg, hierarchy_options(cfg), false);
  std::vector<HilbertCoefficient> lower{background_stage(ctx)};
  std::vector<VectorXd> zero(nx, VectorXd::Zero(ctx.grid().size()));
  return assemble_macro_system(1, ctx, lower, zero, 0);
}

double asymmetry(const Matrix5d& A) { return (A - A.transpose()).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff(); }

void hilbert_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria, const std::string& out_dir) {
  if (!wanted(criteria, 9)) return;
  PhysicalConstants k = cfg.constants();
  rep.table = long_table();
  auto& c = rep.criterion(9, "Hilbert machinery");
  Rng rng(seed_of(cfg));

  double worst_sym = 0, min_eig = INFINITY;
  std::uniform_real_distribution<double> gam(0.5, 20), dens(0.5, 2);
  int sweep = positive(cfg, "hilbert.sweep_states");
  for (int s = 0; s < sweep; ++s) {
    double g = gam(rng);
    JuttnerState st{dens(rng), random_ball(rng, 0.1 * k.c), k.m * k.c * k.c / (k.k_B * g)};
    Matrix5d A0 = a0_closed(st, k);
    worst_sym = std::max(worst_sym, asymmetry(A0));
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix5d>(A0).eigenvalues().minCoeff());
    for (int a = 0; a < 3; ++a) worst_sym = std::max(worst_sym, asymmetry(a_closed(st, k, a)));
  }
  long_row(rep.table, 9, "A0/Ai asymmetry", "max over sweep", worst_sym);
  c.add("A0 and Ai relative asymmetry", worst_sym, Relation::less_equal, 1e-12);
  c.add("smallest A0 eigenvalue", min_eig, Relation::greater, 0);

  double min_det_ratio = INFINITY;
  for (double g : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0})
    for (int s = 0; s < 6; ++s) {
      Vector3d u = s == 0 ? Vector3d::Zero() : Vector3d(random_unit(rng) * 0.1 * k.c * s / 5.0);
      JuttnerState st{1.3, u, k.m * k.c * k.c / (k.k_B * g)};
      double ratio = a0_closed(st, k).determinant() / a0_det_bound(st, k);
      long_row(rep.table, 9, "det A0 / bound", "gamma " + format_real(g) + " |u| " + format_real(u.norm()), ratio);
      min_det_ratio = std::min(min_det_ratio, ratio);
    }
  c.add("min det A0 / lower bound over the sweep", min_det_ratio, Relation::greater, 1);

  {
    JuttnerState st{1.7, Vector3d::Zero(), 0.7 * k.m * k.c * k.c / k.k_B};
    EnthalpyCoefficients e = enthalpy_coefficients(st, k);
    FluidClosure cl = closure_analytic(st, k);
    Matrix5d expected = Matrix5d::Zero();
    expected(0, 0) = st.n0;
    expected(0, 4) = expected(4, 0) = cl.e0 / k.c;
    for (int j = 1; j <= 3; ++j) expected(j, j) = e.h2 * k.c * k.c;
    expected(4, 4) = k.c * k.c * (e.h1 - 3 * e.h2);
    double gap = (a0_closed(st, k) - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff();
    long_row(rep.table, 9, "A0 at rest vs block form", "entrywise", gap);
    c.add("A0 at rest vs block form, entrywise relative", gap, Relation::less_equal, 1e-12);
  }

  {
    int stages = positive(cfg, "hilbert.stages");
    Hierarchy h = build(cfg, stages);
    double worst = 0;
    for (int n = 1; n <= stages; ++n) {
      const HilbertCoefficient& s = h.stages[n];
      double stage_worst = 0;
      for (int l = 0; l < s.levels(); ++l)
        for (int x = 0; x < h.ctx.nx(); ++x) {
          const VectorXd& g = s.micro[l][x];
          double gn = h.ctx.norm(g);
          if (gn > 0) stage_worst = std::max(stage_worst, h.ctx.norm(h.ctx.project(x, g)) / gn);
        }
      long_row(rep.table, 9, "|P micro| / |micro|", "stage " + std::to_string(n), stage_worst);
      long_row(rep.table, 9, "Gauss residual", "stage " + std::to_string(n), s.gauss_max);
      long_row(rep.table, 9, "div B", "stage " + std::to_string(n), s.div_b_max);
      long_row(rep.table, 9, "envelope constant", "stage " + std::to_string(n), s.envelope_constant);
      worst = std::max(worst, stage_worst);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::string name = "hilbert_stage" + std::to_string(n) + ".csv";
        write_stage_csv((std::filesystem::path(out_dir) / name).string(), h.ctx, s, s.levels() / 2);
        rep.files.push_back(name);
      }
    }
    c.add("max |P micro| / |micro| over stages, levels and points", worst, Relation::less_equal, 1e-8);
  }

  {
    oracle::Vector11cd V0;
    std::uniform_real_distribution<double> d(-1, 1);
    for (int i = 0; i < 11; ++i) V0(i) = {d(rng), d(rng)};
    double t_final = positive_real(cfg, "hilbert.oracle_time");
    double courant = positive_real(cfg, "hilbert.oracle_courant");
    std::vector<int> sizes = cfg.integers("hilbert.oracle_nx");
    if (sizes.size() < 2) throw ConfigError("hilbert.oracle_nx", "needs at least two grid sizes");
    std::vector<double> hs, errs;
    for (int nx : sizes) {
      if (nx < 5) throw ConfigError("hilbert.oracle_nx", "grid sizes must be at least 5");
      HyperbolicSystem sys = frozen_system(cfg, nx);
      hs.push_back(sys.h);
      errs.push_back(oracle::frozen_mode_error(sys, V0, 1.0, t_final, courant));
      long_row(rep.table, 9, "frozen step vs matrix exponential", "nx " + std::to_string(nx), errs.back());
    }
    double order = loglog_slope(hs, errs);
    HyperbolicSystem finest = frozen_system(cfg, sizes.back());
    double no_b2 = oracle::frozen_mode_error(finest, V0, 1.0, t_final, courant, {true, false});
    double no_b1 = oracle::frozen_mode_error(finest, V0, 1.0, t_final, courant, {false, true});
    long_row(rep.table, 9, "frozen step order", "fit", order);
    long_row(rep.table, 9, "oracle without B2 / error", "control", no_b2 / errs.back());
    long_row(rep.table, 9, "oracle without B1 / error", "control", no_b1 / errs.back());
    c.add("frozen-coefficient order", order, Relation::within, 1.8, 2.2);
    c.add("control without B2, ratio to the error", no_b2 / errs.back(), Relation::greater, 20);
    c.add("control without B1, ratio to the error", no_b1 / errs.back(), Relation::greater, 20);
  }
}

void limit_experiment(const Config& cfg, Report& rep, const std::set<int>& criteria) {
  if (!wanted(criteria, 10)) return;
  int stages = positive(cfg, "limit.stages");
  ResidualStudyOptions ro;
  ro.epsilons = cfg.reals("limit.epsilons");
  if (ro.epsilons.size() < 2) throw ConfigError("limit.epsilons", "needs at least two values");
  for (double e : ro.epsilons)
    if (!(e > 0)) throw ConfigError("limit.epsilons", "must be positive");
  std::sort(ro.epsilons.begin(), ro.epsilons.end());
  Hierarchy h = build(cfg, stages);
  rep.table.columns = {"stages", "epsilon", "residual", "p_part", "micro_part"};
  auto& c = rep.criterion(10, "residual scaling of the truncated expansion");
  for (int N = 1; N <= stages; ++N) {
    ResidualStudy st = residual_scaling_study(h.ctx, h.stages, N, ro);
    for (const ResidualRow& r : st.rows)
      rep.table.add_row({static_cast<long long>(N), r.epsilon, r.residual, r.p_part, r.micro_part});
    std::string tag = "N = " + std::to_string(N);
    c.add("fitted slope " + tag, st.slope, Relation::within, N - 0.2, N + 0.2);
    c.add("points in the fit " + tag, st.fit_points, Relation::greater_equal, 2);
  }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"moments", "collision", "kernel", "chars", "fields", "hilbert", "limit"};
  return names;
}

std::string experiment_for_criterion(int id) {
  switch (id) {
    case 1:
    case 2:
    case 3: return "moments";
    case 4:
    case 6:
    case 11: return "collision";
    case 5: return "kernel";
    case 7: return "chars";
    case 8: return "fields";
    case 9: return "hilbert";
    case 10: return "limit";
  }
  throw Error(ErrorKind::input, "no acceptance criterion " + std::to_string(id));
}

std::vector<std::string> echoed_sections(const std::string& name) {
  if (name == "hilbert") return {"constants", "background", "hilbert"};
  if (name == "limit") return {"constants", "background", "hilbert", "limit"};
  return {"constants", name};
}

Report run_experiment(const std::string& name, const Config& cfg, const std::string& out_dir,
                      const std::set<int>& criteria) {
  Report rep;
  rep.experiment = name;
  std::vector<std::string> sections = echoed_sections(name);
  sections.push_back("run");
  for (const auto& [key, value] : cfg.values()) {
    std::string sec = key.substr(0, key.find('.'));
    if (key == "run.threads") continue;
    if (std::find(sections.begin(), sections.end(), sec) != sections.end()) rep.config[key] = value;
  }
  if (name == "moments")
    moments_experiment(cfg, rep, criteria);
  else if (name == "collision")
    collision_experiment(cfg, rep, criteria);
  else if (name == "kernel")
    kernel_experiment(cfg, rep, criteria);
  else if (name == "chars")
    chars_experiment(cfg, rep, criteria);
  else if (name == "fields")
    fields_experiment(cfg, rep, criteria);
  else if (name == "hilbert")
    hilbert_experiment(cfg, rep, criteria, out_dir);
  else if (name == "limit")
    limit_experiment(cfg, rep, criteria);
  else
    throw Error(ErrorKind::input, "unknown experiment '" + name + "'");
  return rep;
}

}  // namespace rvmb::cli
