#include "rvmb/quadrature.hpp"

#include <cmath>

#include "rvmb/error.hpp"

namespace rvmb {

void gauss_legendre(int n, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  require(n >= 1, ErrorKind::input, "gauss_legendre: need at least one node");
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = 0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1, p1 = 0;
    for (int j = 1; j <= n; ++j) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1) * z * p1 - (j - 1.0) * p2) / j;
    }
    dp = n * (z * p0 - p1) / (z * z - 1);
    x(i) = -z;
    x(n - 1 - i) = z;
    w(i) = w(n - 1 - i) = 2 / ((1 - z * z) * dp * dp);
  }
  if (n % 2 == 1) x(n / 2) = 0;
}

namespace {

MomentumGrid tensor(GridRule rule, const Eigen::VectorXd& ax, const Eigen::VectorXd& aw, double p_max) {
  MomentumGrid g;
  g.rule = rule;
  g.n_axis = static_cast<int>(ax.size());
  g.p_max = p_max;
  g.axis = ax;
  g.axis_weight = aw;
  int n = g.n_axis;
  g.nodes.resize(n * n * n, 3);
  g.weights.resize(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        int idx = g.index(i, j, l);
        g.nodes.row(idx) << ax(i), ax(j), ax(l);
        g.weights(idx) = aw(i) * aw(j) * aw(l);
      }
  return g;
}

}  // namespace

MomentumGrid uniform_grid(int n, double p_max) {
  require(n >= 2 && p_max > 0, ErrorKind::input, "uniform_grid: need n >= 2 and p_max > 0");
  double h = 2 * p_max / n;
  Eigen::VectorXd ax(n), aw(n);
  for (int j = 0; j < n; ++j) {
    ax(j) = (j - 0.5 * (n - 1)) * h;
    aw(j) = h;
  }
  return tensor(GridRule::uniform, ax, aw, p_max);
}

MomentumGrid gl_sinh_grid(int n, double p_max, double a) {
  require(n >= 2 && p_max > 0 && a > 0, ErrorKind::input, "gl_sinh_grid: invalid parameters");
  Eigen::VectorXd x, w;
  gauss_legendre(n, x, w);
  double xi = std::asinh(p_max / a);
  Eigen::VectorXd ax(n), aw(n);
  for (int j = 0; j < n; ++j) {
    ax(j) = a * std::sinh(x(j) * xi);
    aw(j) = w(j) * a * xi * std::cosh(x(j) * xi);
  }
  return tensor(GridRule::gauss_legendre_sinh, ax, aw, p_max);
}

namespace {

// Locate cell index c with axis(c) <= x < axis(c+1); -1 if outside.
int locate(const Eigen::VectorXd& ax, double x, bool uniform) {
  int n = static_cast<int>(ax.size());
  if (x < ax(0) || x > ax(n - 1)) return -1;
  int c;
  if (uniform) {
    double h = ax(1) - ax(0);
    c = static_cast<int>(std::floor((x - ax(0)) / h));
  } else {
    int lo = 0, hi = n - 1;
    while (hi - lo > 1) {
      int mid = (lo + hi) / 2;
      if (ax(mid) <= x)
        lo = mid;
      else
        hi = mid;
    }
    c = lo;
  }
  if (c >= n - 1) c = n - 2;
  if (c < 0) c = 0;
  return c;
}

// 1D weights for one axis; returns number of points written.
int axis_weights(const Eigen::VectorXd& ax, double x, InterpOrder order, bool uniform, int* id, double* wt) {
  int n = static_cast<int>(ax.size());
  int c = locate(ax, x, uniform);
  if (c < 0) return 0;
  if (order == InterpOrder::linear || n < 4) {
    double t = (x - ax(c)) / (ax(c + 1) - ax(c));
    id[0] = c;
    id[1] = c + 1;
    wt[0] = 1 - t;
    wt[1] = t;
    return 2;
  }
  int s = c - 1;
  if (s < 0) s = 0;
  if (s + 3 > n - 1) s = n - 4;
  for (int a = 0; a < 4; ++a) {
    double l = 1;
    for (int b = 0; b < 4; ++b)
      if (b != a) l *= (x - ax(s + b)) / (ax(s + a) - ax(s + b));
    id[a] = s + a;
    wt[a] = l;
  }
  return 4;
}

}  // namespace

bool interp_stencil(const MomentumGrid& grid, const Eigen::Vector3d& x, InterpOrder order, Stencil& st) {
  bool uniform = grid.rule == GridRule::uniform;
  int id[3][4];
  double wt[3][4];
  int m[3];
  for (int d = 0; d < 3; ++d) {
    m[d] = axis_weights(grid.axis, x(d), order, uniform, id[d], wt[d]);
    if (m[d] == 0) {
      st.n = 0;
      return false;
    }
  }
  int n = 0;
  for (int a = 0; a < m[0]; ++a)
    for (int b = 0; b < m[1]; ++b)
      for (int c = 0; c < m[2]; ++c) {
        st.idx[n] = grid.index(id[0][a], id[1][b], id[2][c]);
        st.w[n] = wt[0][a] * wt[1][b] * wt[2][c];
        ++n;
      }
  st.n = n;
  return true;
}

double interpolate(const MomentumGrid& grid, const Eigen::VectorXd& values, const Eigen::Vector3d& x,
                   InterpOrder order, bool* inside) {
  Stencil st;
  bool ok = interp_stencil(grid, x, order, st);
  if (inside) *inside = ok;
  if (!ok) return 0;
  double v = 0;
  for (int i = 0; i < st.n; ++i) v += st.w[i] * values(st.idx[i]);
  return v;
}

namespace {

AngularGrid product_sphere(int n_theta, int n_phi, double lo) {
  require(n_theta >= 1 && n_phi >= 1, ErrorKind::input, "angular grid: need positive node counts");
  Eigen::VectorXd x, w;
  gauss_legendre(n_theta, x, w);
  AngularGrid g;
  g.n_theta = n_theta;
  g.n_phi = n_phi;
  g.omega.resize(n_theta * n_phi, 3);
  g.weights.resize(n_theta * n_phi);
  double half = 0.5 * (1 - lo);
  for (int i = 0; i < n_theta; ++i) {
    double ct = lo + half * (x(i) + 1);
    double st = std::sqrt(std::max(0.0, 1 - ct * ct));
    for (int j = 0; j < n_phi; ++j) {
      double ph = (j + 0.5) * 2 * M_PI / n_phi;
      int idx = i * n_phi + j;
      g.omega.row(idx) << st * std::cos(ph), st * std::sin(ph), ct;
      g.weights(idx) = half * w(i) * 2 * M_PI / n_phi;
    }
  }
  return g;
}

}  // namespace

AngularGrid angular_grid(int n_theta, int n_phi) { return product_sphere(n_theta, n_phi, -1.0); }

AngularGrid hemisphere_grid(int n_theta, int n_phi) { return product_sphere(n_theta, n_phi, 0.0); }

void frame_from_axis(const Eigen::Vector3d& axis, Eigen::Vector3d& e1, Eigen::Vector3d& e2, Eigen::Vector3d& e3) {
  e3 = axis.normalized();
  Eigen::Vector3d t = std::abs(e3(0)) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  e1 = (t - t.dot(e3) * e3).normalized();
  e2 = e3.cross(e1);
}

}  // namespace rvmb
