#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <unsupported/Eigen/MatrixFunctions>

#include "rvmb/hilbert.hpp"

namespace rvmb::oracle {

using Vector11cd = Eigen::Matrix<std::complex<double>, 11, 1>;
using Matrix11cd = Eigen::Matrix<std::complex<double>, 11, 11>;

/// Which coupling blocks the oracle keeps; dropping one gives a negative control.
struct OracleBlocks {
  bool b1 = true;
  bool b2 = true;
};

/// Fourier symbol of the frozen macro system at point 0: V_t = -M V for V = (U, Ubar) e^{i kappa x}.
inline Matrix11cd frozen_symbol(const HyperbolicSystem& sys, double kappa, OracleBlocks blocks = {}) {
  const std::complex<double> I(0, 1);
  PhysicalConstants k;
  k.c = sys.c;
  Matrix11cd M = Matrix11cd::Zero();
  Matrix5d B1 = blocks.b1 ? sys.B1[0] : Matrix5d::Zero();
  Matrix56d B2 = blocks.b2 ? sys.B2[0] : Matrix56d::Zero();
  M.block<5, 5>(0, 0) = sys.A0_inv[0].cast<std::complex<double>>() * (I * kappa * sys.A[0][0] + B1).cast<std::complex<double>>();
  M.block<5, 6>(0, 5) = (sys.A0_inv[0] * B2).cast<std::complex<double>>();
  M.block<6, 5>(5, 0) = sys.B[0].cast<std::complex<double>>();
  M.block<6, 6>(5, 5) = I * kappa * maxwell_flux_matrix(k, 0).cast<std::complex<double>>();
  return M;
}

/// Real part of V e^{i kappa x_j} as a macro state.
inline MacroState mode_state(const Vector11cd& V, double kappa, int nx, double h) {
  MacroState s;
  s.U.resize(nx);
  s.U_bar.resize(nx);
  for (int j = 0; j < nx; ++j) {
    Eigen::Matrix<double, 11, 1> r = (V * std::exp(std::complex<double>(0, kappa * j * h))).real();
    s.U[j] = r.head<5>();
    s.U_bar[j] = r.tail<6>();
  }
  return s;
}

/// Max-norm difference between two macro states relative to the max norm of `ref`.
inline double relative_difference(const MacroState& a, const MacroState& ref) {
  double num = 0, den = 0;
  for (size_t j = 0; j < a.U.size(); ++j) {
    num = std::max({num, (a.U[j] - ref.U[j]).cwiseAbs().maxCoeff(), (a.U_bar[j] - ref.U_bar[j]).cwiseAbs().maxCoeff()});
    den = std::max({den, ref.U[j].cwiseAbs().maxCoeff(), ref.U_bar[j].cwiseAbs().maxCoeff()});
  }
  return num / den;
}

/// Steps the single-mode initial state to t_final with step_macro and compares with expm(-M t) V0.
inline double frozen_mode_error(const HyperbolicSystem& sys, const Vector11cd& V0, double kappa, double t_final,
                                double courant, OracleBlocks blocks = {}) {
  int nx = sys.nx();
  double dt_target = courant * sys.h / sys.max_speed();
  int steps = static_cast<int>(std::ceil(t_final / dt_target));
  double dt = t_final / steps;
  MacroState s = mode_state(V0, kappa, nx, sys.h);
  for (int i = 0; i < steps; ++i) step_macro(sys, s, dt);
  Matrix11cd M = frozen_symbol(sys, kappa, blocks);
  Vector11cd V = (-M * t_final).exp() * V0;
  return relative_difference(s, mode_state(V, kappa, nx, sys.h));
}

}  // namespace rvmb::oracle
