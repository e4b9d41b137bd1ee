#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "rvmb/error.hpp"

namespace rvmb {

template <class S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S>
using Mat4 = Eigen::Matrix<S, 4, 4>;

/// Physical constants. Every formula takes these explicitly.
struct PhysicalConstants {
  double m = 1.0;
  double c = 1.0;
  double k_B = 1.0;
  double e_minus = 1.0;
  double n_bar = 1.0;
  double beta = 8.0;

  void validate() const {
    if (!(m > 0)) throw ConfigError("m", "must be positive");
    if (!(c > 0)) throw ConfigError("c", "must be positive");
    if (!(k_B > 0)) throw ConfigError("k_B", "must be positive");
    if (!(e_minus > 0)) throw ConfigError("e_minus", "must be positive");
    if (!(n_bar > 0)) throw ConfigError("n_bar", "must be positive");
    if (!(beta >= 8)) throw ConfigError("beta", "must be at least 8");
  }
  double mc() const { return m * c; }
};

/// Minkowski metric diag(-1, 1, 1, 1).
template <class S = double>
Mat4<S> minkowski() {
  Mat4<S> eta = Mat4<S>::Identity();
  eta(0, 0) = S(-1);
  return eta;
}

template <class S>
S energy(const Vec3<S>& p, const PhysicalConstants& k) {
  S mc = S(k.m * k.c);
  return std::sqrt(mc * mc + p.squaredNorm());
}

template <class S>
Vec3<S> velocity_hat(const Vec3<S>& p, const PhysicalConstants& k) {
  return p / energy(p, k);
}

template <class S>
Vec4<S> four_momentum(const Vec3<S>& p, const PhysicalConstants& k) {
  Vec4<S> v;
  v << energy(p, k), p;
  return v;
}

/// p^mu q_mu with signature (-,+,+,+).
template <class S>
S minkowski_dot(const Vec4<S>& a, const Vec4<S>& b) {
  return -a(0) * b(0) + a.template tail<3>().dot(b.template tail<3>());
}

template <class S>
struct SG {
  S s;
  S g;
};

template <class S>
SG<S> s_and_g(const Vec3<S>& p, const Vec3<S>& q, const PhysicalConstants& k) {
  S p0 = energy(p, k), q0 = energy(q, k);
  S mc2 = S(k.m * k.c) * S(k.m * k.c);
  S inner = p0 * q0 - p.dot(q);
  S g2 = S(2) * (inner - mc2);
  // inner >= mc^2 analytically; guard the rounding at p = q
  if (g2 < S(0)) g2 = S(0);
  return {S(2) * (inner + mc2), std::sqrt(g2)};
}

/// Transfer scalar a(p, q, omega) of the post-collision map.
template <class S>
S transfer_scalar(const Vec3<S>& p, const Vec3<S>& q, const Vec3<S>& omega, const PhysicalConstants& k) {
  S p0 = energy(p, k), q0 = energy(q, k);
  S e = p0 + q0;
  S w = omega.dot(p + q);
  S den = e * e - w * w;
  require(den > S(0), ErrorKind::degenerate, "post_collision: vanishing denominator");
  return S(2) * e * omega.dot(p0 * q - q0 * p) / den;
}

template <class S>
std::pair<Vec3<S>, Vec3<S>> post_collision(const Vec3<S>& p, const Vec3<S>& q, const Vec3<S>& omega,
                                           const PhysicalConstants& k) {
  require(std::abs(omega.norm() - S(1)) <= S(1e-12), ErrorKind::input, "post_collision: omega is not a unit vector");
  S a = transfer_scalar(p, q, omega, k);
  return {p + a * omega, q - a * omega};
}

/// Collision kernel B(p, q, omega) of the angular representation.
template <class S>
S collision_kernel_b(const Vec3<S>& p, const Vec3<S>& q, const Vec3<S>& omega, const PhysicalConstants& k) {
  S p0 = energy(p, k), q0 = energy(q, k);
  S e = p0 + q0;
  S w = omega.dot(p + q);
  S den = e * e - w * w;
  return e * e * std::abs(omega.dot(p0 * q - q0 * p)) / (den * den);
}

/// Relative error of the finite-difference Jacobian determinant of (p,q) -> (p',q')
/// against p'0 q'0 / (p0 q0), using central differences with step h.
inline double collision_jacobian_check(const Vec3<double>& p, const Vec3<double>& q, const Vec3<double>& omega,
                                       const PhysicalConstants& k, double h = 1e-4) {
  require(h > 0, ErrorKind::input, "collision_jacobian_check: step must be positive");
  Eigen::Matrix<double, 6, 6> J;
  for (int j = 0; j < 6; ++j) {
    Eigen::Matrix<double, 6, 1> plus, minus;
    for (int sgn = 0; sgn < 2; ++sgn) {
      Vec3<double> pp = p, qq = q;
      double d = sgn == 0 ? h : -h;
      if (j < 3)
        pp(j) += d;
      else
        qq(j - 3) += d;
      auto [a, b] = post_collision(pp, qq, omega, k);
      Eigen::Matrix<double, 6, 1>& out = sgn == 0 ? plus : minus;
      out << a, b;
    }
    J.col(j) = (plus - minus) / (2 * h);
  }
  auto [pp, qp] = post_collision(p, q, omega, k);
  double expected = energy(pp, k) * energy(qp, k) / (energy(p, k) * energy(q, k));
  return std::abs(std::abs(J.determinant()) - expected) / expected;
}

/// Boost to the center-of-momentum frame of (p, q).
template <class S>
Mat4<S> cm_boost(const Vec3<S>& p, const Vec3<S>& q, const PhysicalConstants& k) {
  auto [s, g] = s_and_g(p, q, k);
  Vec3<S> cr = p.cross(q);
  S cn = cr.norm();
  require(g >= S(1e-10 * k.m * k.c), ErrorKind::degenerate, "cm_boost: degenerate geometry (g below tolerance)");
  require(cn >= S(1e-10) * p.norm() * q.norm() && cn > S(0), ErrorKind::degenerate,
          "cm_boost: degenerate geometry (collinear momenta)");
  S p0 = energy(p, k), q0 = energy(q, k);
  S rs = std::sqrt(s);
  S pq = p.dot(q);
  Mat4<S> L;
  L(0, 0) = (p0 + q0) / rs;
  L.template block<1, 3>(0, 1) = -(p + q).transpose() / rs;
  L(1, 0) = S(2) * cn / (g * rs);
  Vec3<S> r1 = S(2) * (p * (-p0 * q.squaredNorm() + q0 * pq) + q * (-q0 * p.squaredNorm() + p0 * pq)) / (g * rs * cn);
  L.template block<1, 3>(1, 1) = r1.transpose();
  L(2, 0) = S(0);
  L.template block<1, 3>(2, 1) = (cr / cn).transpose();
  L(3, 0) = (p0 - q0) / g;
  L.template block<1, 3>(3, 1) = -(p - q).transpose() / g;
  return L;
}

/// Boost taking the rest-frame four-velocity (c, 0, 0, 0) to (u0, u).
template <class S>
Mat4<S> rest_boost(const Vec3<S>& u, const PhysicalConstants& k) {
  S c = S(k.c);
  S u0 = std::sqrt(u.squaredNorm() + c * c);
  Mat4<S> L = Mat4<S>::Identity();
  S vv = u.squaredNorm();
  if (vv == S(0)) return L;
  S r = u0 / c;
  Vec3<S> v = c * u / u0;
  S v2 = v.squaredNorm();
  L(0, 0) = r;
  L.template block<1, 3>(0, 1) = (r * v / c).transpose();
  L.template block<3, 1>(1, 0) = r * v / c;
  L.template block<3, 3>(1, 1) = Eigen::Matrix<S, 3, 3>::Identity() + (r - S(1)) * v * v.transpose() / v2;
  return L;
}

}  // namespace rvmb
