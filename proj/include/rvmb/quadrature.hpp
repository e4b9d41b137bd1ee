#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace rvmb {

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, Eigen::VectorXd& x, Eigen::VectorXd& w);

enum class GridRule { uniform, gauss_legendre_sinh };

/// Rectilinear tensor grid on [-p_max, p_max]^3 with quadrature weights.
/// Nodes are ordered with the last axis fastest.
struct MomentumGrid {
  GridRule rule = GridRule::uniform;
  int n_axis = 0;
  double p_max = 0;
  Eigen::VectorXd axis;
  Eigen::VectorXd axis_weight;
  Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
  int index(int i, int j, int l) const { return (i * n_axis + j) * n_axis + l; }
  Eigen::Vector3d node(int idx) const { return nodes.row(idx).transpose(); }
  double spacing() const { return axis(1) - axis(0); }
};

/// Midpoint-centred uniform grid; node j sits at (j - (n-1)/2) h with h = 2 p_max / n.
MomentumGrid uniform_grid(int n, double p_max);

/// Tensor Gauss-Legendre in the mapped coordinate p = a sinh(xi).
MomentumGrid gl_sinh_grid(int n, double p_max, double a);

enum class InterpOrder { linear = 1, cubic = 3 };

/// Stencil of grid indices and weights reproducing a value at an off-grid point.
struct Stencil {
  std::array<int, 64> idx;
  std::array<double, 64> w;
  int n = 0;
};

/// Builds the interpolation stencil at x. Returns false if x lies outside the grid box.
bool interp_stencil(const MomentumGrid& grid, const Eigen::Vector3d& x, InterpOrder order, Stencil& st);

double interpolate(const MomentumGrid& grid, const Eigen::VectorXd& values, const Eigen::Vector3d& x,
                   InterpOrder order, bool* inside = nullptr);

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta) times uniform in phi.
struct AngularGrid {
  Eigen::Matrix<double, Eigen::Dynamic, 3> omega;
  Eigen::VectorXd weights;
  int n_theta = 0;
  int n_phi = 0;
  int size() const { return static_cast<int>(weights.size()); }
};

AngularGrid angular_grid(int n_theta, int n_phi);

/// Same product rule restricted to the hemisphere cos(theta) > 0 about the z axis.
AngularGrid hemisphere_grid(int n_theta, int n_phi);

/// Orthonormal frame (e1, e2, e3) with e3 along the given direction.
void frame_from_axis(const Eigen::Vector3d& axis, Eigen::Vector3d& e1, Eigen::Vector3d& e2, Eigen::Vector3d& e3);

}  // namespace rvmb
