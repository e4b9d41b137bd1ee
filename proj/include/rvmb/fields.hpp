#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rvmb/kinematics.hpp"
#include "rvmb/quadrature.hpp"

namespace rvmb {

/// Periodic staggered grid fields on a cube of side `length` with n cells per axis.
/// E_c sits on edges at origin + h (i, j, l) + (h/2) e_c, B_c on faces at origin + h (i, j, l) + (h/2) (1 - e_c).
/// Index (i, j, l) maps to (i n + j) n + l.
struct FieldState {
  int n = 0;
  double length = 1;
  double time = 0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  std::array<Eigen::VectorXd, 3> E;
  std::array<Eigen::VectorXd, 3> B;

  double spacing() const { return length / n; }
  int cells() const { return n * n * n; }
  int index(int i, int j, int l) const;
};

FieldState zero_state(int n, double length, const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

Eigen::Vector3d node_position(const FieldState& s, int i, int j, int l);
Eigen::Vector3d edge_position(const FieldState& s, int comp, int i, int j, int l);
Eigen::Vector3d face_position(const FieldState& s, int comp, int i, int j, int l);

/// Vector field sampled on the E edges (component c of index (i, j, l) at edge_position(c, i, j, l)).
using EdgeField = std::array<Eigen::VectorXd, 3>;

/// Samples f at every edge of the layout of s.
EdgeField sample_edges(const FieldState& s, const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& f);

/// Samples f at every node of the layout of s.
Eigen::VectorXd sample_nodes(const FieldState& s, const std::function<double(const Eigen::Vector3d&)>& f);

/// One leapfrog step of dE/dt - c curl B = 4 pi e_ J, dB/dt + c curl E = 0, where J is the particle flux
/// c int p_hat F dp at the half step. B is advanced by half steps around the E update, so E and B share
/// the stored time. Requires c dt <= h/sqrt(3).
FieldState maxwell_step(const FieldState& s, const EdgeField& current, double dt, const PhysicalConstants& k,
                        int threads = 1);

/// Discrete divergence of B at cell centres.
Eigen::VectorXd divergence_b(const FieldState& s);

/// Discrete divergence of E at nodes.
Eigen::VectorXd divergence_e(const FieldState& s);

/// max |div E + 4 pi e_ rho| with rho sampled at nodes.
double gauss_residual(const FieldState& s, const Eigen::VectorXd& rho, const PhysicalConstants& k);

/// 1/2 (||E||^2 + ||B||^2) with cell-volume weights.
double field_energy(const FieldState& s);

/// Energy conserved exactly by the source-free scheme: 1/2 (||E||^2 + <B_minus, B_plus>) with B at the
/// neighbouring half steps.
double staggered_energy(const FieldState& s, double dt, const PhysicalConstants& k);

/// Angular frequency of the source-free scheme for wave vector kv: sin^2(w dt/2)/(c dt)^2 = sum sin^2(k_i h/2)/h^2.
double discrete_frequency(const Eigen::Vector3d& kv, double h, double dt, const PhysicalConstants& k);

/// Trilinear interpolation of each staggered component at x, periodic.
std::pair<Eigen::Vector3d, Eigen::Vector3d> sample_fields(const FieldState& s, const Eigen::Vector3d& x);

/// Source-free evolution to time t with steps no longer than cfl h/(sqrt(3) c).
FieldState free_evolution(const FieldState& s, double t, const PhysicalConstants& k, double cfl = 0.5);

using CurrentFunction = std::function<Eigen::Vector3d(double t, const Eigen::Vector3d& x)>;

struct EnergyIdentityRecord {
  double dt = 0;
  int steps = 0;
  double energy_change = 0;
  /// Trapezoid integral of 4 pi e_ <E, J> over the run.
  double work = 0;
  double residual = 0;
};

/// Runs the scheme with J(t, x) sampled at edges and compares the change of 1/2(||E||^2 + ||B||^2) with the work term.
EnergyIdentityRecord energy_identity_residual(const FieldState& initial, const CurrentFunction& J, double t_end,
                                              double dt, const PhysicalConstants& k);

/// Writes "RVMBF1", uint64 n, float64 length, time, origin[3], then E1..E3, B1..B3 as float64 (little-endian).
void write_field_binary(const std::string& path, const FieldState& s);
FieldState read_field_binary(const std::string& path);

/// CSV with columns i, j, l, E1..E3, B1..B3 in staggered storage.
void write_field_csv(const std::string& path, const FieldState& s);

/// Retarded-integral kernels for direction omega = (y - x)/|y - x| and momentum p, without the outer signs:
/// eT = (omega + p_hat)(1 - |p_hat|^2)/(1 + p_hat.omega)^2, eS = (omega + p_hat)/(1 + p_hat.omega),
/// bT = (omega x p_hat)(1 - |p_hat|^2)/(1 + p_hat.omega)^2, bS = (omega x p_hat)/(1 + p_hat.omega).
struct GSKernels {
  Eigen::Vector3d eT;
  Eigen::Vector3d eS;
  Eigen::Vector3d bT;
  Eigen::Vector3d bS;
};

/// Raises a domain error when 1 + p_hat.omega <= kernel_tol.
GSKernels gs_kernels(const Eigen::Vector3d& omega, const Eigen::Vector3d& p, const PhysicalConstants& k,
                     double kernel_tol = 1e-6);

/// One separable term alpha(t, y) g(p) of a source F. Missing derivatives are taken by centred differences.
struct SourceMode {
  std::function<double(const Eigen::Vector3d& p)> profile;
  std::function<double(double t, const Eigen::Vector3d& y)> amplitude;
  std::function<double(double t, const Eigen::Vector3d& y)> amplitude_dt;
  std::function<Eigen::Vector3d(double t, const Eigen::Vector3d& y)> amplitude_grad;
};

/// F(t, y, p) = sum_k alpha_k(t, y) g_k(p), supported in the ball |y - center| <= radius. The amplitudes
/// are defined for t in [t_lower, t_upper] and y in the box [domain_lower, domain_upper].
struct SpacetimeSource {
  std::vector<SourceMode> modes;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1;
  double t_lower = -std::numeric_limits<double>::infinity();
  double t_upper = std::numeric_limits<double>::infinity();
  Eigen::Vector3d domain_lower = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
  Eigen::Vector3d domain_upper = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
};

/// Amplitude samples on a regular (t, y) lattice: values[(it * n + i) * n + j) * n + l] at
/// (t0 + it dt, origin + h (i, j, l)).
struct SpacetimeLattice {
  int nt = 0;
  int n = 0;
  double t0 = 0;
  double dt = 1;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double h = 1;
  Eigen::VectorXd values;
};

/// Quadrilinear interpolation of lattice samples; points outside the lattice raise a domain error.
std::function<double(double, const Eigen::Vector3d&)> lattice_amplitude(const SpacetimeLattice& lattice);

struct GSOptions {
  MomentumGrid momentum;
  /// Composite Gauss-Legendre in |y - x| over the part of the cone meeting the support.
  int radial_panels = 8;
  int radial_nodes = 8;
  /// Product rule on the cap of directions from x that meets the support.
  int n_theta = 24;
  int n_phi = 32;
  double kernel_tol = 1e-6;
  double difference_step = 1e-4;
  int threads = 0;
};

struct GSResult {
  Eigen::Vector3d E = Eigen::Vector3d::Zero();
  Eigen::Vector3d B = Eigen::Vector3d::Zero();
  Eigen::Vector3d E_data = Eigen::Vector3d::Zero();
  Eigen::Vector3d B_data = Eigen::Vector3d::Zero();
  Eigen::Vector3d E_T = Eigen::Vector3d::Zero();
  Eigen::Vector3d E_S = Eigen::Vector3d::Zero();
  Eigen::Vector3d B_T = Eigen::Vector3d::Zero();
  Eigen::Vector3d B_S = Eigen::Vector3d::Zero();
  /// Largest fraction of sum |g| w over momentum nodes dropped because 1 + p_hat.omega <= kernel_tol.
  double excluded_measure = 0;
};

/// Fields at (t, x) from the retarded representation for a source with zero charge at t = 0. The initial-data
/// term is the source-free evolution of `initial` (skipped when null). The representation uses unit c and
/// gives fields of the charge density int F dp with div E = 4 pi int F dp.
GSResult gs_eval(const SpacetimeSource& source, const FieldState* initial, double t, const Eigen::Vector3d& x,
                 const PhysicalConstants& k, const GSOptions& opt);

std::vector<GSResult> gs_eval_points(const SpacetimeSource& source, const FieldState* initial, double t,
                                     const std::vector<Eigen::Vector3d>& points, const PhysicalConstants& k,
                                     const GSOptions& opt);

/// Rest Juttner profile exp(-gamma (p0/(m c) - 1)) scaled to unit sum on the grid.
std::function<double(const Eigen::Vector3d&)> normalized_rest_profile(double gamma, const MomentumGrid& grid,
                                                                      const PhysicalConstants& k);

/// Compact bump (1 - |y - center|^2/radius^2)^4 with unit peak, its gradient and Laplacian.
struct Bump {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1;
  double value(const Eigen::Vector3d& y) const;
  Eigen::Vector3d gradient(const Eigen::Vector3d& y) const;
  double laplacian(const Eigen::Vector3d& y) const;
  /// Integral of the bump over space.
  double integral() const;
};

/// Static source alpha(y) g(p) with alpha a bump of total charge `charge` and g the normalized rest profile.
SpacetimeSource static_charge_source(double charge, const Bump& bump, double gamma, const MomentumGrid& grid,
                                     const PhysicalConstants& k);

/// Pulse a(t) = sin^2(pi t/duration) on [0, duration] and its running integral b(t).
struct PulsedSourceSpec {
  double kappa = 1;
  double swirl = 1;
  double duration = 1.5;
  double gamma = 4;
  Bump potential{Eigen::Vector3d::Zero(), 1.5};
  Bump stream{Eigen::Vector3d::Zero(), 1.5};

  double pulse(double t) const;
  double pulse_integral(double t) const;
  /// rho = kappa b(t) lap psi.
  double charge(double t, const Eigen::Vector3d& y) const;
  /// j = -kappa a(t) grad psi + swirl a(t) curl(phi e_3); satisfies d rho/dt + div j = 0.
  Eigen::Vector3d current(double t, const Eigen::Vector3d& y) const;
};

/// F = rho g(p) + (j . p_hat) g(p)/kappa' with kappa' = sum p_hat_1^2 g, so int F = rho and int p_hat F = j on the grid.
SpacetimeSource pulsed_source(const PulsedSourceSpec& spec, const MomentumGrid& grid, const PhysicalConstants& k);

struct FieldComparison {
  std::vector<Eigen::Vector3d> points;
  std::vector<GSResult> retarded;
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> grid;
  /// max |E_retarded - E_grid| / max |E_grid| over the points, and the same for B.
  double max_rel_E = 0;
  double max_rel_B = 0;
};

/// Evaluates the pulsed source at time t by the retarded representation and by the staggered solver on a
/// periodic cube of n cells and side `length` centred at the origin, with the source entering as
/// dE/dt - curl B = -4 pi j.
FieldComparison compare_with_grid_solver(const PulsedSourceSpec& spec, int n, double length, double t,
                                         const std::vector<Eigen::Vector3d>& points, const PhysicalConstants& k,
                                         const GSOptions& opt, double cfl = 0.5);

using DirectionalKernel = std::function<double(const Eigen::Vector3d& omega, const Eigen::Vector3d& p_hat)>;

/// Kernels of the field-gradient representation, with expected growth exponents 4, 3 and 2 in 1/(1 + p_hat.omega).
struct GradientKernels {
  DirectionalKernel a;
  DirectionalKernel b;
  DirectionalKernel c;
  int exponent_a = 4;
  int exponent_b = 3;
  int exponent_c = 2;
};

/// Closed-form int_{-1}^{1} (1 + b mu)^{-n} d mu.
double inverse_power_moment(double b, int n);

/// (omega_1 - m)/(1 + p_hat.omega)^n with m the (1 + p_hat.omega)^{-n}-weighted mean of omega_1, in closed form.
DirectionalKernel weighted_mean_free_kernel(int n);

/// omega_1/(1 + p_hat.omega)^4 minus its closed-form spherical mean.
DirectionalKernel plain_mean_free_kernel();

/// a = weighted_mean_free_kernel(4), b = (omega_1 + p_hat_1)/(1 + p_hat.omega)^3, c = (omega_1 + p_hat_1)/(1 + p_hat.omega)^2.
GradientKernels representative_gradient_kernels();

struct KernelShell {
  Eigen::Vector3d p;
  double b = 0;
  /// |int a d omega| / int |a| d omega.
  double mean_residual = 0;
  /// sup over the rule of |kernel| (1 + p_hat.omega)^exponent.
  double ratio_a = 0;
  double ratio_b = 0;
  double ratio_c = 0;
};

struct GradientKernelReport {
  std::vector<KernelShell> shells;
  double max_mean_residual = 0;
  double fitted_a = 0;
  double fitted_b = 0;
  double fitted_c = 0;
  /// Log-log slopes of the ratios against 1/(1 - |p_hat|) over shells with |p| >= growth_from.
  double growth_a = 0;
  double growth_b = 0;
  double growth_c = 0;
  bool mean_zero = false;
  bool bounds_hold = false;
};

/// Mean-zero and growth checks over momenta, with the angular rule rotated so its polar axis follows p_hat.
GradientKernelReport gs_gradient_kernel_checks(const std::vector<Eigen::Vector3d>& momenta, const PhysicalConstants& k,
                                               const AngularGrid& angular, const GradientKernels& kernels,
                                               double mean_tol = 1e-8, double growth_tol = 0.25,
                                               double growth_from = 1.0);

}  // namespace rvmb
