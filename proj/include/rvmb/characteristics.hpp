#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rvmb/kinematics.hpp"

namespace rvmb {

/// Field values and spatial Jacobians at one spacetime point; grad_E(j, k) = d E_j / d x_k.
struct FieldSample {
  Eigen::Vector3d E = Eigen::Vector3d::Zero();
  Eigen::Vector3d B = Eigen::Vector3d::Zero();
  Eigen::Matrix3d grad_E = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d grad_B = Eigen::Matrix3d::Zero();
};

/// Electromagnetic field sampler with an optional spatial domain. Points outside the domain raise a domain error.
struct EMFieldSampler {
  std::function<FieldSample(double tau, const Eigen::Vector3d& x)> eval;
  Eigen::Vector3d lower = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
  Eigen::Vector3d upper = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());

  bool contains(const Eigen::Vector3d& x) const;
  FieldSample operator()(double tau, const Eigen::Vector3d& x) const;
};

EMFieldSampler zero_field();

/// Uniform fields E and B.
EMFieldSampler constant_field(const Eigen::Vector3d& E, const Eigen::Vector3d& B);

/// Smooth analytic test field E = E0 + E1 sin(k.x + w tau), B = B0 + B1 cos(k.x - w tau) with exact gradients.
struct WaveFieldSpec {
  Eigen::Vector3d E0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d E1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d B0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d B1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d wave = Eigen::Vector3d(1, 0, 0);
  double omega = 0;
};

EMFieldSampler wave_field(const WaveFieldSpec& spec);

/// Periodic grid field data: component arrays of size n^3 on a cube of side `length` starting at `origin`,
/// sampled at cell-centred nodes origin + (i + 1/2) h; values are trilinear, gradients are centred differences
/// interpolated the same way. Time independent.
struct GridFieldData {
  int n = 0;
  double length = 1;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  std::array<Eigen::VectorXd, 3> E;
  std::array<Eigen::VectorXd, 3> B;
};

EMFieldSampler grid_field(const GridFieldData& data);

struct CharacteristicState {
  double tau = 0;
  Eigen::Vector3d X = Eigen::Vector3d::Zero();
  Eigen::Vector3d P = Eigen::Vector3d::Zero();
  /// dXdp(j, i) = d X_j / d p_i.
  Eigen::Matrix3d dXdp = Eigen::Matrix3d::Zero();
  /// dPdp(j, i) = d P_j / d p_i.
  Eigen::Matrix3d dPdp = Eigen::Matrix3d::Identity();
};

using Trajectory = std::vector<CharacteristicState>;

/// Classical fixed-step RK4 for dX/dtau = c P/P0, dP/dtau = -E - (P/P0) x B, from tau = t to tau_end in either
/// direction. The interval is split into equal steps no longer than `step`; Jacobians stay at their initial values.
Trajectory integrate_characteristic(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                    const EMFieldSampler& sampler, double tau_end, double step,
                                    const PhysicalConstants& k);

/// Same integration with the variational system for dX/dp and dP/dp advanced in the same RK4 stages.
Trajectory integrate_variational(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                 const EMFieldSampler& sampler, double tau_end, double step,
                                 const PhysicalConstants& k);

/// Field-free dX/dp = c (tau - t) [(p0)^2 I - p p^T]/(p0)^3.
Eigen::Matrix3d free_streaming_dxdp(const Eigen::Vector3d& p, double dtau, const PhysicalConstants& k);

/// Field-free determinant (c |tau - t|)^3 m^2 c^2/(p0)^5.
double free_streaming_det(const Eigen::Vector3d& p, double dtau, const PhysicalConstants& k);

/// Finite-difference dX/dp at tau_end from central differences of trajectory endpoints with step h.
Eigen::Matrix3d finite_difference_dxdp(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                                       const EMFieldSampler& sampler, double tau_end, double step, double h,
                                       const PhysicalConstants& k);

struct BandRecord {
  double det = 0;
  /// Field-free determinant at the same p and |tau - t|.
  double reference = 0;
  double lower = 0;
  double upper = 0;
  bool in_band = false;
};

/// Determinant of dX/dp at tau and the band kappa_low D <= |det| <= kappa_high D around the field-free value D.
BandRecord jacobian_band_check(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                               const EMFieldSampler& sampler, double tau, double step, const PhysicalConstants& k,
                               double kappa_low = 0.5, double kappa_high = 2.0);

struct BandSweepOptions {
  int samples = 100;
  double field_max = 0.1;
  double dtau_max = 0.2;
  double x_scale = 1.0;
  double p_scale = 1.0;
  double step = 0.01;
  unsigned long long seed = 1;
};

struct BandSweepRow {
  Eigen::Vector3d x;
  Eigen::Vector3d p;
  double dtau = 0;
  BandRecord record;
};

/// Random sweep over start points, momenta, |tau - t| and wave fields with |E|, |B| <= field_max.
std::vector<BandSweepRow> band_sweep(const BandSweepOptions& opt, const PhysicalConstants& k);

struct CubicFit {
  double exponent = 0;
  /// Fitted leading coefficient of |det| ~ A |tau - t|^exponent.
  double coefficient = 0;
  std::vector<double> dtau;
  std::vector<double> det;
};

/// Log-log fit of |det(dX/dp)| against |tau - t| over geometrically spaced separations.
CubicFit cubic_vanishing_fit(double t, const Eigen::Vector3d& x, const Eigen::Vector3d& p,
                             const EMFieldSampler& sampler, double dtau_min, double dtau_max, int points,
                             const PhysicalConstants& k, int steps_per_interval = 64);

/// CSV with columns tau, X1..X3, P1..P3, det.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace rvmb
