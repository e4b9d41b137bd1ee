#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rvmb/collision.hpp"
#include "rvmb/equilibria.hpp"
#include "rvmb/kinematics.hpp"
#include "rvmb/quadrature.hpp"

namespace rvmb {

using Matrix5d = Eigen::Matrix<double, 5, 5>;
using Vector5d = Eigen::Matrix<double, 5, 1>;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix56d = Eigen::Matrix<double, 5, 6>;
using Matrix65d = Eigen::Matrix<double, 6, 5>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Enthalpy-type coefficients of the macroscopic system: h = (e0 + P0)/n0,
/// h1 = n0 m^2 (6 K3 + gamma K2)/(gamma K2), h2 = n0 m^2 K3/(gamma K2), and the two
/// Bessel-ratio combinations h3, h4 of the determinant bound.
struct EnthalpyCoefficients {
  double h = 0;
  double h1 = 0;
  double h2 = 0;
  double h3 = 0;
  double h4 = 0;
};

EnthalpyCoefficients enthalpy_coefficients(const JuttnerState& st, const PhysicalConstants& k);

/// Closed-form int psi psi^T M dp with psi = (1, p, p0), written entrywise from the enthalpy coefficients.
Matrix5d a0_closed(const JuttnerState& st, const PhysicalConstants& k);

/// Closed-form int psi psi^T c p_hat_i M dp for axis i in {0, 1, 2}.
Matrix5d a_closed(const JuttnerState& st, const PhysicalConstants& k, int axis);

/// Lower bound n0^5 m^8 c^3 (u0)^5 h4^3/gamma^2 on det A0.
double a0_det_bound(const JuttnerState& st, const PhysicalConstants& k);

/// Momentum transfer matrix of the Maxwell block: rows of the 6x6 operator multiplying d/dx_axis (E, B).
Matrix6d maxwell_flux_matrix(const PhysicalConstants& k, int axis);

/// One sinusoidal component mean + amplitude sin(2 pi wavenumber x/L + phase - frequency t).
struct SineMode {
  double mean = 0;
  double amplitude = 0;
  int wavenumber = 1;
  double phase = 0;
  double frequency = 0;

  double value(double t, double x, double length) const;
};

/// Pointwise background data at (t, x1).
struct ProfileSample {
  double n0 = 1;
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  double T0 = 1;
  Eigen::Vector3d E0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d B0 = Eigen::Vector3d::Zero();
};

/// Smooth periodic background in x1 over [0, length).
struct BackgroundProfile {
  std::function<ProfileSample(double t, double x)> eval;
  double length = 2 * M_PI;
  bool is_static = true;
  std::string name;
};

/// Independent sinusoidal components for every background field.
struct SinusoidalProfile {
  SineMode n0{1.0, 0.0};
  std::array<SineMode, 3> u{};
  SineMode T0{0.1, 0.0};
  std::array<SineMode, 3> E0{};
  std::array<SineMode, 3> B0{};
  double length = 2 * M_PI;
};

BackgroundProfile sinusoidal_profile(const SinusoidalProfile& spec);

/// Static equilibrium: n0 = n_mean + density_amplitude cos(kx), T0 on the isentrope through
/// (n_mean, T_mean), transverse flow u2 = flow_amplitude sin(kx), B3 from the Ampere law and
/// E1 from the momentum balance. It solves the fluid equations exactly apart from the Gauss law.
struct EquilibriumProfile {
  double n_mean = 1.0;
  double density_amplitude = 0.05;
  int wavenumber = 1;
  double T_mean = 0.1;
  double flow_amplitude = 0.02;
  double B3_base = 0.0;
  double length = 2 * M_PI;
};

BackgroundProfile equilibrium_profile(const EquilibriumProfile& spec, const PhysicalConstants& k);

/// gamma on the isentropic family n = C K2(gamma)/gamma exp(gamma K3/K2) for a given density.
double isentropic_gamma(double n, double C);

/// d(ln n)/d(gamma) along the isentropic family.
double isentropic_log_slope(double gamma);

/// Sup-norm limits on the background; violations raise a configuration error.
struct BackgroundBounds {
  double max_density_deviation = 0.5;
  double max_speed = 0.3;
  double max_E = 1.0;
  double max_B = 1.0;
};

/// Residuals of the fluid-Maxwell equations of the background at each grid point.
struct FluidForcing {
  std::vector<double> continuity;
  std::vector<Eigen::Vector3d> momentum;
  std::vector<double> energy;
  std::vector<Eigen::Vector3d> ampere;
  std::vector<Eigen::Vector3d> faraday;
  std::vector<double> gauss;
  std::vector<double> div_b;

  /// Largest absolute value over the transport equations (continuity, momentum, energy).
  double fluid_max() const;
  /// Largest absolute value over the Maxwell equations and constraints.
  double maxwell_max() const;
};

/// Background sampled on a periodic grid x_j = j L/nx at time `time`, with its forcing.
struct Background {
  PhysicalConstants k;
  int nx = 0;
  double length = 0;
  double time = 0;
  bool is_static = true;
  std::vector<JuttnerState> state;
  std::vector<Eigen::Vector3d> E0;
  std::vector<Eigen::Vector3d> B0;
  FluidForcing forcing;

  double spacing() const { return length / nx; }
  double x(int j) const { return j * spacing(); }
};

/// Samples the profile and evaluates the forcing by centred differences with step L/nx in x and t.
Background manufactured_background(const BackgroundProfile& profile, int nx, const PhysicalConstants& k,
                                   const BackgroundBounds& bounds = {}, double time = 0);

struct HilbertOptions {
  int momentum_nodes = 8;
  double p_max = 2.0;
  CollisionOptions collision;
  PseudoInverseOptions inverse;
  double dt = 0.05;
  /// Time levels 0..levels are stored for every stage.
  int levels = 8;
  double micro_tol = 1e-8;
  /// Bound on |P(rhs)|/|rhs| for stages n >= 1.
  double consistency_tol = 1e-3;
  /// Bound on |P(rhs)|/|rhs| for the leading equation; that part is the kinetic forcing and is subtracted.
  double forcing_budget = 0.25;
  double cfl_max = 2.5;
  double envelope_power = 0.9;
  int threads = 0;
};

/// Per-point momentum data: M, sqrt M, the weighted invariants psi sqrt M, and their moment matrices.
struct PointData {
  JuttnerState st;
  Eigen::Vector3d E0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d B0 = Eigen::Vector3d::Zero();
  Eigen::VectorXd M;
  Eigen::VectorXd sqrt_m;
  Eigen::Matrix<double, Eigen::Dynamic, 5> psi_t;
  Eigen::Matrix<double, Eigen::Dynamic, 3> grad_log_m;
  Matrix5d A0;
  Matrix5d A0_inv;
  std::array<Matrix5d, 3> A;
  std::shared_ptr<LinearizedOperator> L;
};

/// Background, momentum grid and per-point operators shared by every stage.
class HilbertContext {
 public:
  static HilbertContext create(const Background& bg, const HilbertOptions& opt, bool with_operators = true);

  const Background& background() const { return bg_; }
  const HilbertOptions& options() const { return opt_; }
  const PhysicalConstants& constants() const { return bg_.k; }
  const MomentumGrid& grid() const { return grid_; }
  const PointData& point(int x) const { return points_[x]; }
  int nx() const { return bg_.nx; }
  double h() const { return bg_.spacing(); }
  bool has_operators() const { return !points_.empty() && points_[0].L != nullptr; }
  const Eigen::Matrix<double, Eigen::Dynamic, 3>& p_hat() const { return p_hat_; }
  const Eigen::VectorXd& p0() const { return p0_; }

  /// Weighted moments int psi sqrt M f dp at point x.
  Vector5d moments(int x, const Eigen::VectorXd& f) const;
  /// Null-space coefficients A0^{-1} moments, so that P f = psi_t * coefficients.
  Vector5d coefficients(int x, const Eigen::VectorXd& f) const;
  Eigen::VectorXd project(int x, const Eigen::VectorXd& f) const;
  Eigen::VectorXd micro(int x, const Eigen::VectorXd& f) const { return f - project(x, f); }
  double norm(const Eigen::VectorXd& f) const;

  /// -e (E + p_hat x B) . grad_p(sqrt M f)/sqrt M. The null-space part is differentiated exactly and
  /// the remainder by centred differences on the momentum grid. The density moment of the result is removed
  /// along sqrt M so that the discrete force conserves charge exactly.
  Eigen::VectorXd force(int x, const Eigen::Vector3d& E, const Eigen::Vector3d& B, const Eigen::VectorXd& f) const;

  /// c p_hat_1 D_x(sqrt M f)/sqrt M at x with periodic centred differences.
  Eigen::VectorXd transport(int x, const Eigen::VectorXd& f_left, const Eigen::VectorXd& f_right) const;

  /// Current density c int p_hat sqrt M f dp and charge density int sqrt M f dp.
  Eigen::Vector3d current(int x, const Eigen::VectorXd& f) const;
  double charge(int x, const Eigen::VectorXd& f) const;

 private:
  Background bg_;
  HilbertOptions opt_;
  MomentumGrid grid_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> p_hat_;
  Eigen::VectorXd p0_;
  std::vector<PointData> points_;
};

/// Stage n of the expansion on all time levels: macro (a, b, c), fields and the microscopic part.
struct HilbertCoefficient {
  int order = 0;
  double dt = 0;
  std::vector<std::vector<Vector5d>> U;
  std::vector<std::vector<Eigen::Vector3d>> E;
  std::vector<std::vector<Eigen::Vector3d>> B;
  std::vector<std::vector<Eigen::VectorXd>> micro;

  /// max over levels and points of |P micro|/|micro|.
  double micro_projection_max = 0;
  /// max over levels and points of |P(rhs)|/|rhs| of the equation that produced the micro part.
  double consistency_max = 0;
  /// max over levels of max_x |D_x E_1 + 4 pi e int F dp|.
  double gauss_max = 0;
  double div_b_max = 0;
  /// Fitted C in |F| <= C M^power over all levels, and the ratio of its outer-shell value to the maximum.
  double envelope_constant = 0;
  double envelope_tail_ratio = 0;

  int levels() const { return static_cast<int>(U.size()); }
  /// f = psi sqrt M U + micro at (level, x).
  Eigen::VectorXd f(const HilbertContext& ctx, int level, int x) const;
};

/// Stage 0: F0 = M, i.e. U = (1, 0, 0, 0, 0), zero micro part and the background fields.
HilbertCoefficient background_stage(const HilbertContext& ctx);

struct MicroPartResult {
  std::vector<Eigen::VectorXd> micro;
  std::vector<Eigen::VectorXd> rhs;
  /// |P(rhs) - G|/|rhs| per point, G being the subtracted forcing (leading equation only).
  std::vector<double> p_ratio;
  /// |P(rhs)|/|rhs| per point before forcing subtraction.
  std::vector<double> raw_p_ratio;
  std::vector<double> projection;
  std::vector<SolveReport> solves;
};

/// Kinetic operator of the order-n equation without collisions at (level, x):
/// D_t f_n + T f_n + sum_{i+j=n} force(E_i, B_i) f_j.
Eigen::VectorXd stage_kinetic_operator(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                       int level, int x);

/// Microscopic part of stage n+1 at one time level from stages 0..n; set solve = false to form
/// the right-hand side and its projection only.
MicroPartResult micro_part(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower, int level,
                           bool solve = true);

/// Linear system A0 U_t + A1 U_x + B1 U + B2 Ubar = S and Ubar_t + Abar_1 Ubar_x + B U = Sbar on the periodic grid.
struct HyperbolicSystem {
  double h = 0;
  double c = 1;
  std::vector<Matrix5d> A0;
  std::vector<Matrix5d> A0_inv;
  std::array<std::vector<Matrix5d>, 3> A;
  std::vector<Matrix5d> B1;
  std::vector<Matrix56d> B2;
  std::vector<Vector5d> S;
  std::vector<Matrix65d> B;
  std::vector<Vector6d> S_bar;

  int nx() const { return static_cast<int>(A0.size()); }
  /// Largest characteristic speed over A0^{-1} A1 and the Maxwell block.
  double max_speed() const;
};

/// Macro system of stage n at a time level. Needs stages 0..n-1 in `lower` and the micro part of stage n.
/// The transport term uses D_x(A1 U) - (D_x A1) U with D_x A1 carried in B1.
HyperbolicSystem assemble_macro_system(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                       const std::vector<Eigen::VectorXd>& micro_n, int level);

struct MacroState {
  std::vector<Vector5d> U;
  std::vector<Vector6d> U_bar;
};

using MacroSource = std::function<void(double t, std::vector<Vector5d>& S, std::vector<Vector6d>& S_bar)>;

/// One RK4 step with the sources held in the system; raises a configuration error on a CFL violation.
void step_macro(const HyperbolicSystem& sys, MacroState& state, double dt, double cfl_max = 2.5);

/// One RK4 step from time t with time-dependent sources.
void step_macro(const HyperbolicSystem& sys, MacroState& state, double t, double dt, const MacroSource& source,
                double cfl_max = 2.5);

double macro_norm(const MacroState& state);

/// Initial macro data of a stage; empty members mean zero.
struct StageInitialData {
  std::vector<Vector5d> U;
  std::vector<Eigen::Vector3d> E;
  std::vector<Eigen::Vector3d> B;
};

/// Builds stage n >= 1 from stages 0..n-1: micro part on every level, then the macro fields evolved
/// over the time window. E_1 at t = 0 is projected onto the Gauss law.
HilbertCoefficient build_coefficient(int n, const HilbertContext& ctx, const std::vector<HilbertCoefficient>& lower,
                                     const StageInitialData& initial = {});

/// Stages 0..n_max.
std::vector<HilbertCoefficient> build_hierarchy(int n_max, const HilbertContext& ctx);

/// Solves D_x E = r on the periodic grid with centred differences, dropping the modes the stencil cannot see.
std::vector<double> solve_periodic_gradient(const std::vector<double>& r, double h);

struct ResidualStudyOptions {
  std::vector<double> epsilons{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  /// Sample point indices; empty means four evenly spaced points.
  std::vector<int> points;
  /// Time level of the samples; negative means the middle level.
  int level = -1;
  /// A pair of epsilons whose local slope falls below N - floor_drop marks the discretization floor.
  double floor_drop = 0.5;
};

struct ResidualRow {
  double epsilon = 0;
  double residual = 0;
  double p_part = 0;
  double micro_part = 0;
};

struct ResidualStudy {
  int stages = 0;
  std::vector<ResidualRow> rows;
  double slope = 0;
  int fit_points = 0;
  bool floor_reached = false;
  /// |G0| at the samples: the projected leading residual without forcing subtraction.
  double forcing_norm = 0;
};

/// Kinetic residual of the truncated expansion F = sum_{n<=N} eps^n F_n (fields likewise), built from the
/// same discrete operators as the stages: D_t F + T F + force(E, B) F - Q_d(F, F)/eps - G0, where
/// F = M + sqrt M g, Q_d(F, F) = sqrt M (-L_d g + Gamma_d(g, g)) and G0 is the leading forcing.
ResidualStudy residual_scaling_study(const HilbertContext& ctx, const std::vector<HilbertCoefficient>& stages, int N,
                                     const ResidualStudyOptions& opt = {});

/// Writes "x,a,b1,b2,b3,c,E1,E2,E3,B1,B2,B3,micro_norm,micro_projection" at one level.
void write_stage_csv(const std::string& path, const HilbertContext& ctx, const HilbertCoefficient& stage, int level);

}  // namespace rvmb
