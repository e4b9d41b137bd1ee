#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>

#include "rvmb/kinematics.hpp"
#include "rvmb/quadrature.hpp"

namespace rvmb {

/// Local Jüttner state (n0, u, T0); u is the spatial part of the four-velocity.
struct JuttnerState {
  double n0 = 1.0;
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  double T0 = 1.0;

  double u0(const PhysicalConstants& k) const { return std::sqrt(u.squaredNorm() + k.c * k.c); }
  double gamma(const PhysicalConstants& k) const { return k.m * k.c * k.c / (k.k_B * T0); }
  Eigen::Vector4d four_velocity(const PhysicalConstants& k) const {
    Eigen::Vector4d v;
    v << u0(k), u;
    return v;
  }
  void validate() const;
};

/// Global Maxwellian J_M at rest with density n_M and temperature T_M.
struct GlobalMaxwellianParams {
  double n_M = 1.0;
  double T_M = 1.0;

  double gamma_M(const PhysicalConstants& k) const { return k.m * k.c * k.c / (k.k_B * T_M); }
  /// Throws ConfigError unless T_M < T0 < 2 T_M.
  void check_domination(double T0) const;
};

struct FluidClosure {
  double e0 = 0;
  double P0 = 0;
  double h = 0;
};

/// Modified Bessel function of the second kind K_j(gamma), j in {0, 1, 2, 3}.
double bessel_k(int j, double gamma);

/// Normalization n0 gamma / (4 pi m^3 c^3 K2(gamma)).
double juttner_prefactor(const JuttnerState& st, const PhysicalConstants& k);

double juttner_eval(const Eigen::Vector3d& p, const JuttnerState& st, const PhysicalConstants& k);

/// Jüttner exponent u^mu p_mu / (k_B T0).
double juttner_exponent(const Eigen::Vector3d& p, const JuttnerState& st, const PhysicalConstants& k);

double global_maxwellian_eval(const Eigen::Vector3d& p, const GlobalMaxwellianParams& g, const PhysicalConstants& k);

/// Fully symmetric-capable rank-3 tensor with 4x4x4 components.
struct Tensor3 {
  std::array<double, 64> v{};
  double& operator()(int a, int b, int c) { return v[(a * 4 + b) * 4 + c]; }
  double operator()(int a, int b, int c) const { return v[(a * 4 + b) * 4 + c]; }
  double max_abs() const;
};

/// Nodes per axis start at `nodes` and grow by `node_step` until two successive results agree to rel_tol.
struct MomentOptions {
  int nodes = 48;
  int node_step = 16;
  int max_nodes = 128;
  double rel_tol = 1e-9;
  double tail_tol = 1e-12;
};

struct Moments {
  Eigen::Vector4d I;
  Eigen::Matrix4d T;
  Tensor3 T3;
};

/// Truncation radius about the mean momentum so that the neglected tail is below tail_tol.
double choose_p_max(const JuttnerState& st, const PhysicalConstants& k, double tail_tol);

/// Direct tensor quadrature of c int p^a/p0 M, c int p^a p^b/p0 M and c int p^a p^b p^c/p0 M.
Moments moment_quadrature(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt = {});

Eigen::Vector4d moment_first(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt = {});
Eigen::Matrix4d moment_second(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt = {});

Eigen::Vector4d moment_first_closed(const JuttnerState& st, const PhysicalConstants& k);
Eigen::Matrix4d moment_second_closed(const JuttnerState& st, const PhysicalConstants& k, const FluidClosure& cl);

/// Rest-frame third moment from the Bessel closed forms.
Tensor3 moment_third_rest(const JuttnerState& st, const PhysicalConstants& k);

/// Third moment for general u from the explicit component formulas.
Tensor3 moment_third_closed(const JuttnerState& st, const PhysicalConstants& k);

/// Third moment obtained by boosting the rest-frame tensor.
Tensor3 moment_third_boosted(const JuttnerState& st, const PhysicalConstants& k);

/// Closure from rest-frame quadrature: e0 = T^00, P0 = T^11, h = (e0 + P0)/n0.
FluidClosure synge_closure(const JuttnerState& st, const PhysicalConstants& k, const MomentOptions& opt = {});

/// Closure from Bessel ratios: P0 = n0 k_B T0, e0 = n0 m c^2 (K3/K2 - 1/gamma).
FluidClosure closure_analytic(const JuttnerState& st, const PhysicalConstants& k);

/// Density along the isentropic family n = C K2(gamma)/gamma exp(gamma K3/K2).
double isentropic_density(double gamma, double C);

using StateFamily = std::function<JuttnerState(double t, double x)>;
using ClosureFn = std::function<FluidClosure(const JuttnerState&)>;

struct RedundancyOptions {
  double x_min = 0;
  double x_max = 1;
  int points = 16;
  double t = 0;
  double h = 1e-2;
};

/// Maximum over sample points of the energy-redundancy expression, with central differences in t and x1.
double energy_redundancy_check(const StateFamily& family, const PhysicalConstants& k, const RedundancyOptions& opt,
                           const ClosureFn& closure = {});

/// max over grid nodes of (M^power + |grad_x M^power|)/sqrt J_M, with grad_x from the states at x +/- h e_i
/// ordered (+x1, -x1, +x2, -x2, +x3, -x3).
double domination_ratio(const MomentumGrid& grid, const JuttnerState& st, const std::array<JuttnerState, 6>& neighbours,
                        double h, const GlobalMaxwellianParams& g, const PhysicalConstants& k, double power = 0.5);

}  // namespace rvmb
