#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "rvmb/equilibria.hpp"
#include "rvmb/kinematics.hpp"
#include "rvmb/quadrature.hpp"

namespace rvmb {

/// Treatment of the integrable 1/|p-q| singularity on the diagonal of the assembled kernel.
enum class SelfCell {
  /// Average of the kernel over sub-cells of the node's own cell.
  subdivision,
  /// Diagonal chosen so each row sums to the kernel integral over the grid box (cells included),
  /// computed in spherical coordinates about the node; nu is computed the same way over all q.
  row_integral,
};

struct CollisionOptions {
  /// Gauss-Legendre nodes in cos(theta) and uniform nodes in phi on the hemisphere aligned with p0 q - q0 p.
  int hemi_theta = 6;
  int hemi_phi = 12;
  InterpOrder interp = InterpOrder::cubic;
  /// Partner nodes q with M(q) below this fraction of max M are skipped, and so are pairs whose
  /// product of prefactor and partner weight falls below the same fraction of its maximum.
  double weight_cutoff = 1e-10;
  SelfCell self_cell = SelfCell::row_integral;
  /// Sub-cells per axis for the self-cell kernel average.
  int subdivision = 8;
  /// Spherical rule about each node for the row integrals: product directions and
  /// Gauss-Legendre panels of one grid spacing in the radius.
  int sphere_theta = 12;
  int sphere_phi = 24;
  int panel_nodes = 8;
  int threads = 0;
};

/// Collision operator output on the grid together with the gain/loss split and truncation diagnostics.
struct QResult {
  Eigen::VectorXd values;
  Eigen::VectorXd gain;
  Eigen::VectorXd loss;
  /// Sum of |loss| * weight over collisions dropped because p' or q' left the box.
  double truncation_loss = 0;
  long dropped = 0;
  long evaluated = 0;
};

/// Bilinear collision operator in the angular representation. Off-grid values F(p'), G(q') are
/// reconstructed by interpolating F/M and G/M, where M is the Jüttner density of `ref`.
QResult q_bilinear(const Eigen::VectorXd& F, const Eigen::VectorXd& G, const MomentumGrid& grid,
                   const JuttnerState& ref, const PhysicalConstants& k, const CollisionOptions& opt = {});

/// Nonlinear operator Gamma(f1, f2) = Q(sqrt M f1, sqrt M f2)/sqrt M for the state st.
QResult gamma_bilinear(const Eigen::VectorXd& f1, const Eigen::VectorXd& f2, const MomentumGrid& grid,
                       const JuttnerState& st, const PhysicalConstants& k, const CollisionOptions& opt = {});

/// Linearized operator applied through the collision quadrature:
/// -(Q(sqrt M f, M) + Q(M, sqrt M f))/sqrt M.
Eigen::VectorXd linearized_q_route(const Eigen::VectorXd& f, const MomentumGrid& grid, const JuttnerState& st,
                                   const PhysicalConstants& k, const CollisionOptions& opt = {});

/// Kinds of polynomial perturbation M (1 + eps P(p/sigma)), sigma = sqrt(m k_B T0). Every P has
/// degree at most 3 in each coordinate, so cubic interpolation of F/M reproduces it.
enum class Perturbation {
  /// P = x1^2 - x2^2 + x1 x3.
  shear,
  /// P = x1 x2 + x2 x3 + x3 x1.
  cross_shear,
  /// P = x1 (|x|^2 - 5); odd in p.
  heat_flux,
};

Eigen::VectorXd perturbed_juttner(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k,
                                  Perturbation kind, double eps);

enum class AngularRoute { closed, quadrature };

/// nu(p) = int dq int dw s B M(q)/(p0 q0), summed over the grid in q. The closed route uses
/// int B dw = pi g / sqrt(s); the quadrature route integrates B with the aligned hemisphere rule.
Eigen::VectorXd collision_frequency(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k,
                                    AngularRoute route = AngularRoute::closed, const CollisionOptions& opt = {});

/// Value of nu at one momentum, integrated over the grid in q.
double collision_frequency_at(const Eigen::Vector3d& p, const MomentumGrid& grid, const JuttnerState& st,
                              const PhysicalConstants& k);

/// Derived normalization n0 gamma / (8 m^3 c^3 K2(gamma)).
double k2_constant(const JuttnerState& st, const PhysicalConstants& k);

/// Closed-form gain kernel; `c1` overrides the normalization when positive.
double k2_closed(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                 const PhysicalConstants& k, double c1 = -1);

/// Loss kernel pi g sqrt(s) sqrt(M(p) M(q))/(p0 q0).
double k1_closed(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                 const PhysicalConstants& k);

/// K2 f at p from its angular definition, with q in spherical coordinates about p and f given pointwise.
double k2_integral_route(const Eigen::Vector3d& p, const std::function<double(const Eigen::Vector3d&)>& f,
                         const JuttnerState& st, const PhysicalConstants& k, int n_radial, int n_theta, int n_phi,
                         double r_max, int n_omega_theta = 8, int n_omega_phi = 16);

/// int k2(p, q) f(q) dq in the same spherical coordinates about p.
double k2_kernel_route(const Eigen::Vector3d& p, const std::function<double(const Eigen::Vector3d&)>& f,
                       const JuttnerState& st, const PhysicalConstants& k, int n_radial, int n_theta, int n_phi,
                       double r_max, double c1 = -1);

struct WeightedKernelRecord {
  double k2 = 0;
  double k2_bar = 0;
  double bound_shape = 0;
  double ratio = 0;
  bool holds = false;
};

/// Weighted kernel of the global-Maxwellian formulation and the shape
/// exp(-c0 sqrt(s) |p-q|/(k_B T0 g))/(p0 |p-q|); holds when k2_bar <= C * shape.
WeightedKernelRecord weighted_kernel_bounds(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                                            const GlobalMaxwellianParams& gm, const PhysicalConstants& k, double c0,
                                            double C);

/// Shape 1/(p0 |p-q|) exp(-|p-q|/(8 k_B T0)) of the unweighted kernel bound.
double k2_bound_shape(const Eigen::Vector3d& p, const Eigen::Vector3d& q, const JuttnerState& st,
                      const PhysicalConstants& k);

enum class KernelBound {
  /// k2 against exp(-|p-q|/(8 k_B T0))/(p0 |p-q|).
  unweighted,
  /// Weighted k2_bar against exp(-c0 sqrt(s) |p-q|/(k_B T0 g))/(p0 |p-q|).
  weighted,
};

/// Supremum of the kernel-to-shape ratio over |p|, |q| <= radius for a state at rest. The ratio then
/// depends only on |p|, |q| and the angle between them; it is scanned on an n^3 polar grid and
/// the best points are refined by coordinate search.
double fit_kernel_bound(KernelBound kind, const JuttnerState& st, const GlobalMaxwellianParams& gm,
                        const PhysicalConstants& k, double c0, double radius, int n = 48);

struct Projection {
  Eigen::VectorXd Pf;
  /// (a, b1, b2, b3, c) with Pf = (a + b.p + c p0) sqrt M.
  Eigen::Matrix<double, 5, 1> coeffs;
};

struct SolveReport {
  int iterations = 0;
  double residual = 0;
};

struct PseudoInverseOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  double micro_tol = 1e-8;
};

/// Discretized linearized operator L = nu - (K2 - K1) on a momentum grid.
/// Inner products carry the grid weights; the null-space basis is orthonormal in that inner product.
class LinearizedOperator {
 public:
  static LinearizedOperator assemble(const MomentumGrid& grid, const JuttnerState& st, const PhysicalConstants& k,
                                     const CollisionOptions& opt = {});

  int size() const { return static_cast<int>(nu_.size()); }
  const MomentumGrid& grid() const { return grid_; }
  const JuttnerState& state() const { return state_; }
  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::MatrixXd& kernel() const { return K_; }
  const Eigen::VectorXd& sqrt_m() const { return sqrt_m_; }
  /// Columns sqrt M, p_i sqrt M, p0 sqrt M.
  const Eigen::Matrix<double, Eigen::Dynamic, 5>& invariants() const { return psi_; }
  const Eigen::Matrix<double, Eigen::Dynamic, 5>& null_basis() const { return basis_; }

  double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
  double norm(const Eigen::VectorXd& f) const { return std::sqrt(inner(f, f)); }

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  /// (I - P) L (I - P) f.
  Eigen::VectorXd apply_projected(const Eigen::VectorXd& f) const;

  Projection p_project(const Eigen::VectorXd& f) const;
  Eigen::VectorXd micro(const Eigen::VectorXd& f) const { return f - p_project(f).Pf; }

  /// Solves the projected system for f in the orthogonal complement of the null space.
  Eigen::VectorXd pseudo_inverse(const Eigen::VectorXd& g, const PseudoInverseOptions& opt = {},
                                 SolveReport* report = nullptr) const;

  /// Smallest Rayleigh quotient of the projected operator on the complement, by inverse iteration.
  double spectral_gap(int iterations = 60, unsigned seed = 7) const;

  /// Writes the dense operator L as "RVMBK1", uint64 rows, uint64 cols, then row-major float64 (little-endian).
  void export_binary(const std::string& path) const;

 private:
  MomentumGrid grid_;
  JuttnerState state_;
  PhysicalConstants k_;
  Eigen::VectorXd nu_;
  Eigen::MatrixXd K_;
  Eigen::VectorXd sqrt_m_;
  Eigen::Matrix<double, Eigen::Dynamic, 5> psi_;
  Eigen::Matrix<double, Eigen::Dynamic, 5> basis_;
  Eigen::Matrix<double, 5, 5> gram_inv_;
};

}  // namespace rvmb
