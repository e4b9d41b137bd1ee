#include "rvmb/fields.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <tuple>

#include "rvmb/parallel.hpp"

namespace rvmb {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

struct Neighbours {
  int n;
  int at(int i, int j, int l) const { return (wrap(i, n) * n + wrap(j, n)) * n + wrap(l, n); }
};

void require_layout(const FieldState& s) {
  require(s.n >= 2 && s.length > 0, ErrorKind::input, "fields: need at least two cells and a positive length");
  for (int c = 0; c < 3; ++c)
    require(s.E[c].size() == s.cells() && s.B[c].size() == s.cells(), ErrorKind::input,
            "fields: component size does not match n^3");
}

/// curl E evaluated on the faces.
std::array<Eigen::VectorXd, 3> curl_e(const FieldState& s, int threads) {
  int n = s.n;
  double h = s.spacing();
  Neighbours nb{n};
  std::array<Eigen::VectorXd, 3> out;
  for (auto& v : out) v.resize(s.cells());
  const auto& E = s.E;
  parallel_for(n, threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          int id = nb.at(i, j, l);
          out[0](id) = (E[2](nb.at(i, j + 1, l)) - E[2](id) - E[1](nb.at(i, j, l + 1)) + E[1](id)) / h;
          out[1](id) = (E[0](nb.at(i, j, l + 1)) - E[0](id) - E[2](nb.at(i + 1, j, l)) + E[2](id)) / h;
          out[2](id) = (E[1](nb.at(i + 1, j, l)) - E[1](id) - E[0](nb.at(i, j + 1, l)) + E[0](id)) / h;
        }
  });
  return out;
}

/// curl B evaluated on the edges; the adjoint of curl_e.
std::array<Eigen::VectorXd, 3> curl_b(const FieldState& s, const std::array<Eigen::VectorXd, 3>& B, int threads) {
  int n = s.n;
  double h = s.spacing();
  Neighbours nb{n};
  std::array<Eigen::VectorXd, 3> out;
  for (auto& v : out) v.resize(s.cells());
  parallel_for(n, threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          int id = nb.at(i, j, l);
          out[0](id) = (B[2](id) - B[2](nb.at(i, j - 1, l)) - B[1](id) + B[1](nb.at(i, j, l - 1))) / h;
          out[1](id) = (B[0](id) - B[0](nb.at(i, j, l - 1)) - B[2](id) + B[2](nb.at(i - 1, j, l))) / h;
          out[2](id) = (B[1](id) - B[1](nb.at(i - 1, j, l)) - B[0](id) + B[0](nb.at(i, j - 1, l))) / h;
        }
  });
  return out;
}

double sum_squares(const std::array<Eigen::VectorXd, 3>& v) {
  return v[0].squaredNorm() + v[1].squaredNorm() + v[2].squaredNorm();
}

double periodic_trilinear(const FieldState& s, const Eigen::VectorXd& v, const Eigen::Vector3d& offset,
                          const Eigen::Vector3d& x) {
  Neighbours nb{s.n};
  Eigen::Vector3d r = (x - s.origin) / s.spacing() - offset;
  int i0[3];
  double w[3];
  for (int a = 0; a < 3; ++a) {
    double fl = std::floor(r(a));
    i0[a] = static_cast<int>(fl);
    w[a] = r(a) - fl;
  }
  double acc = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        acc += (a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) * (c ? w[2] : 1 - w[2]) *
               v(nb.at(i0[0] + a, i0[1] + b, i0[2] + c));
  return acc;
}

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::input, "read_field_binary: truncated file");
  return v;
}

}  // namespace

int FieldState::index(int i, int j, int l) const { return Neighbours{n}.at(i, j, l); }

FieldState zero_state(int n, double length, const Eigen::Vector3d& origin) {
  FieldState s;
  s.n = n;
  s.length = length;
  s.origin = origin;
  for (int c = 0; c < 3; ++c) {
    s.E[c] = Eigen::VectorXd::Zero(n * n * n);
    s.B[c] = Eigen::VectorXd::Zero(n * n * n);
  }
  require_layout(s);
  return s;
}

Eigen::Vector3d node_position(const FieldState& s, int i, int j, int l) {
  return s.origin + s.spacing() * Eigen::Vector3d(i, j, l);
}

Eigen::Vector3d edge_position(const FieldState& s, int comp, int i, int j, int l) {
  Eigen::Vector3d x = node_position(s, i, j, l);
  x(comp) += 0.5 * s.spacing();
  return x;
}

Eigen::Vector3d face_position(const FieldState& s, int comp, int i, int j, int l) {
  Eigen::Vector3d x = node_position(s, i, j, l) + Eigen::Vector3d::Constant(0.5 * s.spacing());
  x(comp) -= 0.5 * s.spacing();
  return x;
}

EdgeField sample_edges(const FieldState& s, const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& f) {
  EdgeField out;
  for (auto& v : out) v.resize(s.cells());
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int l = 0; l < s.n; ++l) {
        int id = s.index(i, j, l);
        for (int c = 0; c < 3; ++c) out[c](id) = f(edge_position(s, c, i, j, l))(c);
      }
  return out;
}

Eigen::VectorXd sample_nodes(const FieldState& s, const std::function<double(const Eigen::Vector3d&)>& f) {
  Eigen::VectorXd out(s.cells());
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int l = 0; l < s.n; ++l) out(s.index(i, j, l)) = f(node_position(s, i, j, l));
  return out;
}

FieldState maxwell_step(const FieldState& s, const EdgeField& current, double dt, const PhysicalConstants& k,
                        int threads) {
  require_layout(s);
  require(dt > 0, ErrorKind::input, "maxwell_step: dt must be positive");
  require(k.c * dt <= s.spacing() / std::sqrt(3.0) * (1 + 1e-12), ErrorKind::input,
          "maxwell_step: CFL condition c dt <= h/sqrt(3) violated");
  for (int c = 0; c < 3; ++c)
    require(current[c].size() == s.cells(), ErrorKind::input, "maxwell_step: current size does not match n^3");
  FieldState r = s;
  double half = 0.5 * k.c * dt;
  auto ce = curl_e(r, threads);
  for (int c = 0; c < 3; ++c) r.B[c] -= half * ce[c];
  auto cb = curl_b(r, r.B, threads);
  double src = 4 * M_PI * k.e_minus * dt;
  for (int c = 0; c < 3; ++c) r.E[c] += k.c * dt * cb[c] + src * current[c];
  ce = curl_e(r, threads);
  for (int c = 0; c < 3; ++c) r.B[c] -= half * ce[c];
  r.time = s.time + dt;
  return r;
}

Eigen::VectorXd divergence_b(const FieldState& s) {
  require_layout(s);
  Neighbours nb{s.n};
  double h = s.spacing();
  Eigen::VectorXd d(s.cells());
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int l = 0; l < s.n; ++l) {
        int id = nb.at(i, j, l);
        d(id) = (s.B[0](nb.at(i + 1, j, l)) - s.B[0](id) + s.B[1](nb.at(i, j + 1, l)) - s.B[1](id) +
                 s.B[2](nb.at(i, j, l + 1)) - s.B[2](id)) /
                h;
      }
  return d;
}

Eigen::VectorXd divergence_e(const FieldState& s) {
  require_layout(s);
  Neighbours nb{s.n};
  double h = s.spacing();
  Eigen::VectorXd d(s.cells());
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int l = 0; l < s.n; ++l) {
        int id = nb.at(i, j, l);
        d(id) = (s.E[0](id) - s.E[0](nb.at(i - 1, j, l)) + s.E[1](id) - s.E[1](nb.at(i, j - 1, l)) + s.E[2](id) -
                 s.E[2](nb.at(i, j, l - 1))) /
                h;
      }
  return d;
}

double gauss_residual(const FieldState& s, const Eigen::VectorXd& rho, const PhysicalConstants& k) {
  require(rho.size() == s.cells(), ErrorKind::input, "gauss_residual: density size does not match n^3");
  return (divergence_e(s) + 4 * M_PI * k.e_minus * rho).cwiseAbs().maxCoeff();
}

double field_energy(const FieldState& s) {
  double h = s.spacing();
  return 0.5 * h * h * h * (sum_squares(s.E) + sum_squares(s.B));
}

double staggered_energy(const FieldState& s, double dt, const PhysicalConstants& k) {
  double h = s.spacing();
  double q = 0.5 * k.c * dt;
  return 0.5 * h * h * h * (sum_squares(s.E) + sum_squares(s.B) - q * q * sum_squares(curl_e(s, 1)));
}

double discrete_frequency(const Eigen::Vector3d& kv, double h, double dt, const PhysicalConstants& k) {
  double acc = 0;
  for (int a = 0; a < 3; ++a) acc += std::pow(std::sin(kv(a) * h / 2), 2);
  double sn = k.c * dt * std::sqrt(acc) / h;
  require(sn <= 1, ErrorKind::domain, "discrete_frequency: mode is unstable at this dt");
  return 2 * std::asin(sn) / dt;
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> sample_fields(const FieldState& s, const Eigen::Vector3d& x) {
  require_layout(s);
  Eigen::Vector3d E, B;
  for (int c = 0; c < 3; ++c) {
    Eigen::Vector3d eo = Eigen::Vector3d::Zero();
    eo(c) = 0.5;
    Eigen::Vector3d fo = Eigen::Vector3d::Constant(0.5) - eo;
    E(c) = periodic_trilinear(s, s.E[c], eo, x);
    B(c) = periodic_trilinear(s, s.B[c], fo, x);
  }
  return {E, B};
}

FieldState free_evolution(const FieldState& s, double t, const PhysicalConstants& k, double cfl) {
  require_layout(s);
  require(t >= 0 && cfl > 0 && cfl <= 1, ErrorKind::input, "free_evolution: need t >= 0 and cfl in (0, 1]");
  FieldState r = s;
  if (t == 0) return r;
  double dt_max = cfl * s.spacing() / (std::sqrt(3.0) * k.c);
  int steps = static_cast<int>(std::ceil(t / dt_max - 1e-12));
  double dt = t / steps;
  EdgeField zero;
  for (auto& v : zero) v = Eigen::VectorXd::Zero(s.cells());
  for (int i = 0; i < steps; ++i) r = maxwell_step(r, zero, dt, k);
  r.time = s.time + t;
  return r;
}

EnergyIdentityRecord energy_identity_residual(const FieldState& initial, const CurrentFunction& J, double t_end,
                                              double dt, const PhysicalConstants& k) {
  require_layout(initial);
  require(t_end > 0 && dt > 0, ErrorKind::input, "energy_identity_residual: need positive t_end and dt");
  EnergyIdentityRecord rec;
  rec.steps = std::max(1, static_cast<int>(std::lround(t_end / dt)));
  rec.dt = t_end / rec.steps;
  double h3 = std::pow(initial.spacing(), 3);
  double coef = 4 * M_PI * k.e_minus * h3;
  FieldState s = initial;
  auto power = [&](const FieldState& st, double t) {
    EdgeField j = sample_edges(st, [&](const Eigen::Vector3d& x) { return J(initial.time + t, x); });
    double acc = 0;
    for (int c = 0; c < 3; ++c) acc += st.E[c].dot(j[c]);
    return coef * acc;
  };
  double w0 = field_energy(s);
  double p_prev = power(s, 0);
  for (int n = 0; n < rec.steps; ++n) {
    double th = (n + 0.5) * rec.dt;
    EdgeField j = sample_edges(s, [&](const Eigen::Vector3d& x) { return J(initial.time + th, x); });
    s = maxwell_step(s, j, rec.dt, k);
    double p_next = power(s, (n + 1) * rec.dt);
    rec.work += 0.5 * rec.dt * (p_prev + p_next);
    p_prev = p_next;
  }
  rec.energy_change = field_energy(s) - w0;
  rec.residual = rec.energy_change - rec.work;
  return rec;
}

void write_field_binary(const std::string& path, const FieldState& s) {
  require_layout(s);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::input, "write_field_binary: cannot open " + path);
  out.write("RVMBF1", 6);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(s.n));
  put<double>(out, s.length);
  put<double>(out, s.time);
  for (int a = 0; a < 3; ++a) put<double>(out, s.origin(a));
  for (const auto* group : {&s.E, &s.B})
    for (int c = 0; c < 3; ++c) out.write(reinterpret_cast<const char*>((*group)[c].data()), sizeof(double) * s.cells());
}

FieldState read_field_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::input, "read_field_binary: cannot open " + path);
  char magic[6];
  in.read(magic, 6);
  require(in && std::memcmp(magic, "RVMBF1", 6) == 0, ErrorKind::input, "read_field_binary: bad header");
  FieldState s;
  s.n = static_cast<int>(get<std::uint64_t>(in));
  s.length = get<double>(in);
  s.time = get<double>(in);
  for (int a = 0; a < 3; ++a) s.origin(a) = get<double>(in);
  require(s.n >= 2 && s.n <= 4096, ErrorKind::input, "read_field_binary: implausible grid size");
  for (auto* group : {&s.E, &s.B})
    for (int c = 0; c < 3; ++c) {
      (*group)[c].resize(s.cells());
      in.read(reinterpret_cast<char*>((*group)[c].data()), sizeof(double) * s.cells());
      require(static_cast<bool>(in), ErrorKind::input, "read_field_binary: truncated file");
    }
  return s;
}

void write_field_csv(const std::string& path, const FieldState& s) {
  require_layout(s);
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::input, "write_field_csv: cannot open " + path);
  out << "i,j,l,E1,E2,E3,B1,B2,B3\n" << std::setprecision(17);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j)
      for (int l = 0; l < s.n; ++l) {
        int id = s.index(i, j, l);
        out << i << ',' << j << ',' << l;
        for (int c = 0; c < 3; ++c) out << ',' << s.E[c](id);
        for (int c = 0; c < 3; ++c) out << ',' << s.B[c](id);
        out << '\n';
      }
}

GSKernels gs_kernels(const Eigen::Vector3d& omega, const Eigen::Vector3d& p, const PhysicalConstants& k,
                     double kernel_tol) {
  Eigen::Vector3d ph = velocity_hat(p, k);
  double den = 1 + ph.dot(omega);
  require(den > kernel_tol, ErrorKind::domain, "gs_kernels: direction excluded, 1 + p_hat.omega <= kernel_tol");
  double t = (1 - ph.squaredNorm()) / (den * den);
  GSKernels r;
  r.eS = (omega + ph) / den;
  r.eT = (omega + ph) * t;
  r.bS = omega.cross(ph) / den;
  r.bT = omega.cross(ph) * t;
  return r;
}

std::function<double(double, const Eigen::Vector3d&)> lattice_amplitude(const SpacetimeLattice& lat) {
  require(lat.nt >= 2 && lat.n >= 2 && lat.dt > 0 && lat.h > 0, ErrorKind::input,
          "lattice_amplitude: need at least two samples per axis and positive spacings");
  require(lat.values.size() == static_cast<Eigen::Index>(lat.nt) * lat.n * lat.n * lat.n, ErrorKind::input,
          "lattice_amplitude: value count does not match the lattice");
  auto d = std::make_shared<SpacetimeLattice>(lat);
  return [d](double t, const Eigen::Vector3d& y) {
    double r[4] = {(t - d->t0) / d->dt, (y(0) - d->origin(0)) / d->h, (y(1) - d->origin(1)) / d->h,
                   (y(2) - d->origin(2)) / d->h};
    int lim[4] = {d->nt, d->n, d->n, d->n};
    int i0[4];
    double w[4];
    for (int a = 0; a < 4; ++a) {
      require(r[a] >= -1e-12 && r[a] <= lim[a] - 1 + 1e-12, ErrorKind::domain,
              "lattice_amplitude: point outside the sampled lattice");
      i0[a] = std::min(lim[a] - 2, std::max(0, static_cast<int>(std::floor(r[a]))));
      w[a] = r[a] - i0[a];
    }
    double acc = 0;
    for (int corner = 0; corner < 16; ++corner) {
      double wt = 1;
      int id[4];
      for (int a = 0; a < 4; ++a) {
        int bit = (corner >> a) & 1;
        wt *= bit ? w[a] : 1 - w[a];
        id[a] = i0[a] + bit;
      }
      acc += wt * d->values(((static_cast<Eigen::Index>(id[0]) * d->n + id[1]) * d->n + id[2]) * d->n + id[3]);
    }
    return acc;
  };
}

namespace {

/// Momentum integrals of the kernels against one mode for one direction; S1E(:, l) carries the extra p_hat_l.
struct ModeMoments {
  Eigen::Vector3d TE = Eigen::Vector3d::Zero();
  Eigen::Vector3d TB = Eigen::Vector3d::Zero();
  Eigen::Vector3d SE = Eigen::Vector3d::Zero();
  Eigen::Vector3d SB = Eigen::Vector3d::Zero();
  Eigen::Matrix3d S1E = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d S1B = Eigen::Matrix3d::Zero();
};

GSResult gs_cone(const SpacetimeSource& src, double t, const Eigen::Vector3d& x, const GSOptions& opt, const Eigen::MatrixXd& profiles, const Eigen::Matrix<double, Eigen::Dynamic, 3>& ph) {
  GSResult res;
  double d = (src.center - x).norm();
  double R = src.radius;
  double r_lo = std::max(0.0, d - R), r_hi = std::min(t, d + R);
  if (r_hi <= r_lo) return res;
  require(t - r_hi >= src.t_lower && t - r_lo <= src.t_upper, ErrorKind::domain,
          "gs_eval: retarded times of the cone fall outside the source coverage");

  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double mu_min = -1;
  if (d > R) {
    axis = (src.center - x) / d;
    mu_min = std::sqrt(1 - (R / d) * (R / d));
  }
  Eigen::Vector3d e1, e2, e3;
  frame_from_axis(axis, e1, e2, e3);
  Eigen::VectorXd gx, gw;
  gauss_legendre(opt.n_theta, gx, gw);
  int na = opt.n_theta * opt.n_phi;
  std::vector<Eigen::Vector3d> dirs(na);
  std::vector<double> dw(na);
  for (int a = 0; a < opt.n_theta; ++a) {
    double mu = mu_min + (1 - mu_min) * (gx(a) + 1) / 2;
    double s = std::sqrt(std::max(0.0, 1 - mu * mu));
    for (int b = 0; b < opt.n_phi; ++b) {
      double phi = 2 * M_PI * (b + 0.5) / opt.n_phi;
      dirs[a * opt.n_phi + b] = s * std::cos(phi) * e1 + s * std::sin(phi) * e2 + mu * e3;
      dw[a * opt.n_phi + b] = gw(a) * (1 - mu_min) / 2 * 2 * M_PI / opt.n_phi;
    }
  }

  int nm = static_cast<int>(src.modes.size());
  int np = opt.momentum.size();
  const Eigen::VectorXd& pw = opt.momentum.weights;
  std::vector<ModeMoments> mom(static_cast<size_t>(na) * nm);
  Eigen::VectorXd total_abs = Eigen::VectorXd::Zero(nm);
  for (int m = 0; m < nm; ++m) total_abs(m) = (profiles.col(m).cwiseAbs().array() * pw.array()).sum();
  for (int a = 0; a < na; ++a) {
    const Eigen::Vector3d& w = dirs[a];
    Eigen::VectorXd excluded = Eigen::VectorXd::Zero(nm);
    for (int j = 0; j < np; ++j) {
      Eigen::Vector3d v = ph.row(j).transpose();
      double den = 1 + v.dot(w);
      if (den <= opt.kernel_tol) {
        for (int m = 0; m < nm; ++m) excluded(m) += std::abs(profiles(j, m)) * pw(j);
        continue;
      }
      Eigen::Vector3d eS = (w + v) / den;
      Eigen::Vector3d bS = w.cross(v) / den;
      double tf = (1 - v.squaredNorm()) / den;
      for (int m = 0; m < nm; ++m) {
        double g = profiles(j, m) * pw(j);
        if (g == 0) continue;
        ModeMoments& mm = mom[static_cast<size_t>(a) * nm + m];
        mm.TE += g * tf * eS;
        mm.TB += g * tf * bS;
        mm.SE += g * eS;
        mm.SB += g * bS;
        mm.S1E += g * eS * v.transpose();
        mm.S1B += g * bS * v.transpose();
      }
    }
    for (int m = 0; m < nm; ++m)
      if (total_abs(m) > 0) res.excluded_measure = std::max(res.excluded_measure, excluded(m) / total_abs(m));
  }

  Eigen::VectorXd rx, rw;
  gauss_legendre(opt.radial_nodes, rx, rw);
  double panel = (r_hi - r_lo) / opt.radial_panels;
  double ds = opt.difference_step;
  for (int pnl = 0; pnl < opt.radial_panels; ++pnl)
    for (int q = 0; q < opt.radial_nodes; ++q) {
      double r = r_lo + panel * (pnl + (rx(q) + 1) / 2);
      double wr = rw(q) * panel / 2;
      double tau = t - r;
      for (int a = 0; a < na; ++a) {
        Eigen::Vector3d y = x + r * dirs[a];
        if ((y - src.center).norm() > R) continue;
        require((y.array() >= src.domain_lower.array()).all() && (y.array() <= src.domain_upper.array()).all(),
                ErrorKind::domain, "gs_eval: cone extends outside the source coverage");
        double wgt = wr * dw[a];
        for (int m = 0; m < nm; ++m) {
          const SourceMode& md = src.modes[m];
          const ModeMoments& mm = mom[static_cast<size_t>(a) * nm + m];
          double alpha = md.amplitude(tau, y);
          double at = md.amplitude_dt ? md.amplitude_dt(tau, y)
                                      : (md.amplitude(tau + ds, y) - md.amplitude(tau - ds, y)) / (2 * ds);
          Eigen::Vector3d ag;
          if (md.amplitude_grad) {
            ag = md.amplitude_grad(tau, y);
          } else {
            for (int c = 0; c < 3; ++c) {
              Eigen::Vector3d yp = y, ym = y;
              yp(c) += ds;
              ym(c) -= ds;
              ag(c) = (md.amplitude(tau, yp) - md.amplitude(tau, ym)) / (2 * ds);
            }
          }
          res.E_T -= wgt * alpha * mm.TE;
          res.B_T += wgt * alpha * mm.TB;
          res.E_S -= wgt * r * (at * mm.SE + mm.S1E * ag);
          res.B_S += wgt * r * (at * mm.SB + mm.S1B * ag);
        }
      }
    }
  return res;
}

void check_source(const SpacetimeSource& src, double t, const PhysicalConstants& k, const GSOptions& opt) {
  if (k.c != 1) throw ConfigError("c", "the retarded representation is implemented for c = 1");
  require(t >= 0, ErrorKind::input, "gs_eval: t must be non-negative");
  require(src.radius > 0, ErrorKind::input, "gs_eval: support radius must be positive");
  require(opt.momentum.size() > 0, ErrorKind::input, "gs_eval: empty momentum rule");
  require(opt.radial_panels > 0 && opt.radial_nodes > 0 && opt.n_theta > 0 && opt.n_phi > 0, ErrorKind::input,
          "gs_eval: quadrature sizes must be positive");
  for (const auto& m : src.modes)
    require(static_cast<bool>(m.profile) && static_cast<bool>(m.amplitude), ErrorKind::input,
            "gs_eval: every mode needs a profile and an amplitude");
  Eigen::Vector3d lo = src.center - Eigen::Vector3d::Constant(src.radius);
  Eigen::Vector3d hi = src.center + Eigen::Vector3d::Constant(src.radius);
  require((lo.array() >= src.domain_lower.array()).all() && (hi.array() <= src.domain_upper.array()).all(),
          ErrorKind::domain, "gs_eval: source support extends outside the sampled domain");
}

}  // namespace

std::vector<GSResult> gs_eval_points(const SpacetimeSource& source, const FieldState* initial, double t,
                                     const std::vector<Eigen::Vector3d>& points, const PhysicalConstants& k,
                                     const GSOptions& opt) {
  check_source(source, t, k, opt);
  int np = opt.momentum.size(), nm = static_cast<int>(source.modes.size());
  Eigen::MatrixXd profiles(np, nm);
  Eigen::Matrix<double, Eigen::Dynamic, 3> ph(np, 3);
  for (int j = 0; j < np; ++j) {
    Eigen::Vector3d p = opt.momentum.node(j);
    ph.row(j) = velocity_hat(p, k).transpose();
    for (int m = 0; m < nm; ++m) profiles(j, m) = source.modes[m].profile(p);
  }
  FieldState evolved;
  bool has_data = initial != nullptr;
  if (has_data) evolved = free_evolution(*initial, t, k);
  std::vector<GSResult> out(points.size());
  parallel_for(static_cast<int>(points.size()), opt.threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      GSResult r = gs_cone(source, t, points[i], opt, profiles, ph);
      if (has_data) std::tie(r.E_data, r.B_data) = sample_fields(evolved, points[i]);
      r.E = r.E_data + r.E_T + r.E_S;
      r.B = r.B_data + r.B_T + r.B_S;
      out[i] = r;
    }
  });
  return out;
}

GSResult gs_eval(const SpacetimeSource& source, const FieldState* initial, double t, const Eigen::Vector3d& x,
                 const PhysicalConstants& k, const GSOptions& opt) {
  return gs_eval_points(source, initial, t, {x}, k, opt).front();
}

std::function<double(const Eigen::Vector3d&)> normalized_rest_profile(double gamma, const MomentumGrid& grid,
                                                                      const PhysicalConstants& k) {
  require(gamma > 0 && grid.size() > 0, ErrorKind::input, "normalized_rest_profile: need gamma > 0 and a grid");
  double mc = k.m * k.c;
  auto raw = [gamma, mc, k](const Eigen::Vector3d& p) { return std::exp(-gamma * (energy(p, k) / mc - 1)); };
  double total = 0;
  for (int j = 0; j < grid.size(); ++j) total += grid.weights(j) * raw(grid.node(j));
  return [raw, total](const Eigen::Vector3d& p) { return raw(p) / total; };
}

double Bump::value(const Eigen::Vector3d& y) const {
  double u = 1 - (y - center).squaredNorm() / (radius * radius);
  return u > 0 ? u * u * u * u : 0.0;
}

Eigen::Vector3d Bump::gradient(const Eigen::Vector3d& y) const {
  double r2 = radius * radius;
  double u = 1 - (y - center).squaredNorm() / r2;
  if (u <= 0) return Eigen::Vector3d::Zero();
  return -8 * u * u * u * (y - center) / r2;
}

double Bump::laplacian(const Eigen::Vector3d& y) const {
  double r2 = radius * radius;
  double s = (y - center).squaredNorm() / r2;
  double u = 1 - s;
  if (u <= 0) return 0.0;
  return -24 * u * u * (u - 2 * s) / r2;
}

double Bump::integral() const { return 4 * M_PI * radius * radius * radius * 384.0 / 10395.0; }

SpacetimeSource static_charge_source(double charge, const Bump& bump, double gamma, const MomentumGrid& grid,
                                     const PhysicalConstants& k) {
  SpacetimeSource src;
  src.center = bump.center;
  src.radius = bump.radius;
  double scale = charge / bump.integral();
  SourceMode m;
  m.profile = normalized_rest_profile(gamma, grid, k);
  m.amplitude = [bump, scale](double, const Eigen::Vector3d& y) { return scale * bump.value(y); };
  m.amplitude_dt = [](double, const Eigen::Vector3d&) { return 0.0; };
  m.amplitude_grad = [bump, scale](double, const Eigen::Vector3d& y) { return Eigen::Vector3d(scale * bump.gradient(y)); };
  src.modes.push_back(m);
  return src;
}

double PulsedSourceSpec::pulse(double t) const {
  if (t <= 0 || t >= duration) return 0.0;
  double s = std::sin(M_PI * t / duration);
  return s * s;
}

double PulsedSourceSpec::pulse_integral(double t) const {
  if (t <= 0) return 0.0;
  double tc = std::min(t, duration);
  return tc / 2 - duration * std::sin(2 * M_PI * tc / duration) / (4 * M_PI);
}

double PulsedSourceSpec::charge(double t, const Eigen::Vector3d& y) const {
  return kappa * pulse_integral(t) * potential.laplacian(y);
}

Eigen::Vector3d PulsedSourceSpec::current(double t, const Eigen::Vector3d& y) const {
  double a = pulse(t);
  Eigen::Vector3d g = stream.gradient(y);
  return -kappa * a * potential.gradient(y) + swirl * a * Eigen::Vector3d(g(1), -g(0), 0);
}

SpacetimeSource pulsed_source(const PulsedSourceSpec& spec, const MomentumGrid& grid, const PhysicalConstants& k) {
  SpacetimeSource src;
  double reach = std::max((spec.potential.center - spec.stream.center).norm() + spec.stream.radius, spec.potential.radius);
  src.center = spec.potential.center;
  src.radius = reach;
  auto g = normalized_rest_profile(spec.gamma, grid, k);
  double kp = 0;
  for (int j = 0; j < grid.size(); ++j) {
    Eigen::Vector3d p = grid.node(j);
    kp += grid.weights(j) * std::pow(velocity_hat(p, k)(0), 2) * g(p);
  }
  SourceMode rho;
  rho.profile = g;
  rho.amplitude = [spec](double t, const Eigen::Vector3d& y) { return spec.charge(t, y); };
  src.modes.push_back(rho);
  for (int l = 0; l < 3; ++l) {
    SourceMode m;
    m.profile = [g, l, k](const Eigen::Vector3d& p) { return velocity_hat(p, k)(l) * g(p); };
    m.amplitude = [spec, l, kp](double t, const Eigen::Vector3d& y) { return spec.current(t, y)(l) / kp; };
    src.modes.push_back(m);
  }
  return src;
}

FieldComparison compare_with_grid_solver(const PulsedSourceSpec& spec, int n, double length, double t,
                                         const std::vector<Eigen::Vector3d>& points, const PhysicalConstants& k,
                                         const GSOptions& opt, double cfl) {
  FieldComparison cmp;
  cmp.points = points;
  cmp.retarded = gs_eval_points(pulsed_source(spec, opt.momentum, k), nullptr, t, points, k, opt);
  FieldState s = zero_state(n, length, Eigen::Vector3d::Constant(-length / 2));
  double dt_max = cfl * s.spacing() / (std::sqrt(3.0) * k.c);
  int steps = static_cast<int>(std::ceil(t / dt_max - 1e-12));
  double dt = t / steps;
  PhysicalConstants unit = k;
  unit.e_minus = 1;
  for (int i = 0; i < steps; ++i) {
    double th = (i + 0.5) * dt;
    EdgeField J = sample_edges(s, [&](const Eigen::Vector3d& x) { return Eigen::Vector3d(-spec.current(th, x)); });
    s = maxwell_step(s, J, dt, unit, opt.threads);
  }
  double e_scale = 0, b_scale = 0, e_gap = 0, b_gap = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    cmp.grid.push_back(sample_fields(s, points[i]));
    e_scale = std::max(e_scale, cmp.grid[i].first.norm());
    b_scale = std::max(b_scale, cmp.grid[i].second.norm());
    e_gap = std::max(e_gap, (cmp.retarded[i].E - cmp.grid[i].first).norm());
    b_gap = std::max(b_gap, (cmp.retarded[i].B - cmp.grid[i].second).norm());
  }
  cmp.max_rel_E = e_scale > 0 ? e_gap / e_scale : e_gap;
  cmp.max_rel_B = b_scale > 0 ? b_gap / b_scale : b_gap;
  return cmp;
}

double inverse_power_moment(double b, int n) {
  require(b >= 0 && b < 1 && n >= 1, ErrorKind::input, "inverse_power_moment: need 0 <= b < 1 and n >= 1");
  if (b < 1e-5) return 2 + n * (n + 1) * b * b / 3.0;
  if (n == 1) return std::log((1 + b) / (1 - b)) / b;
  return (std::pow(1 - b, 1 - n) - std::pow(1 + b, 1 - n)) / ((n - 1) * b);
}

namespace {

/// int_{-1}^{1} mu (1 + b mu)^{-n} d mu.
double first_moment(double b, int n) {
  if (b < 1e-4) return -2.0 * n * b / 3;
  return (inverse_power_moment(b, n - 1) - inverse_power_moment(b, n)) / b;
}

}  // namespace

DirectionalKernel weighted_mean_free_kernel(int n) {
  require(n >= 2, ErrorKind::input, "weighted_mean_free_kernel: exponent must be at least 2");
  return [n](const Eigen::Vector3d& w, const Eigen::Vector3d& ph) {
    double b = ph.norm();
    double m = 0;
    if (b > 0) m = ph(0) / b * first_moment(b, n) / inverse_power_moment(b, n);
    return (w(0) - m) / std::pow(1 + ph.dot(w), n);
  };
}

DirectionalKernel plain_mean_free_kernel() {
  return [](const Eigen::Vector3d& w, const Eigen::Vector3d& ph) {
    double b = ph.norm();
    double mean = b > 0 ? ph(0) / b * first_moment(b, 4) / 2 : 0.0;
    return w(0) / std::pow(1 + ph.dot(w), 4) - mean;
  };
}

GradientKernels representative_gradient_kernels() {
  GradientKernels g;
  g.a = weighted_mean_free_kernel(4);
  g.b = [](const Eigen::Vector3d& w, const Eigen::Vector3d& ph) { return (w(0) + ph(0)) / std::pow(1 + ph.dot(w), 3); };
  g.c = [](const Eigen::Vector3d& w, const Eigen::Vector3d& ph) { return (w(0) + ph(0)) / std::pow(1 + ph.dot(w), 2); };
  return g;
}

GradientKernelReport gs_gradient_kernel_checks(const std::vector<Eigen::Vector3d>& momenta, const PhysicalConstants& k,
                                               const AngularGrid& angular, const GradientKernels& kernels,
                                               double mean_tol, double growth_tol, double growth_from) {
  require(!momenta.empty() && angular.size() > 0, ErrorKind::input,
          "gs_gradient_kernel_checks: need momenta and a non-empty angular rule");
  GradientKernelReport rep;
  std::vector<double> gx, ga, gb, gc;
  for (const auto& p : momenta) {
    KernelShell sh;
    sh.p = p;
    Eigen::Vector3d ph = velocity_hat(p, k);
    sh.b = ph.norm();
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    if (sh.b > 0) {
      Eigen::Vector3d e1, e2, e3;
      frame_from_axis(ph, e1, e2, e3);
      rot.col(0) = e1;
      rot.col(1) = e2;
      rot.col(2) = e3;
    }
    double sum = 0, sum_abs = 0;
    for (int a = 0; a < angular.size(); ++a) {
      Eigen::Vector3d w = rot * angular.omega.row(a).transpose();
      double den = 1 + ph.dot(w);
      double va = kernels.a(w, ph);
      sum += angular.weights(a) * va;
      sum_abs += angular.weights(a) * std::abs(va);
      sh.ratio_a = std::max(sh.ratio_a, std::abs(va) * std::pow(den, kernels.exponent_a));
      sh.ratio_b = std::max(sh.ratio_b, std::abs(kernels.b(w, ph)) * std::pow(den, kernels.exponent_b));
      sh.ratio_c = std::max(sh.ratio_c, std::abs(kernels.c(w, ph)) * std::pow(den, kernels.exponent_c));
    }
    sh.mean_residual = sum_abs > 0 ? std::abs(sum) / sum_abs : 0.0;
    rep.max_mean_residual = std::max(rep.max_mean_residual, sh.mean_residual);
    rep.fitted_a = std::max(rep.fitted_a, sh.ratio_a);
    rep.fitted_b = std::max(rep.fitted_b, sh.ratio_b);
    rep.fitted_c = std::max(rep.fitted_c, sh.ratio_c);
    if (p.norm() >= growth_from) {
      gx.push_back(std::log(1 / (1 - sh.b)));
      ga.push_back(std::log(sh.ratio_a));
      gb.push_back(std::log(sh.ratio_b));
      gc.push_back(std::log(sh.ratio_c));
    }
    rep.shells.push_back(sh);
  }
  auto slope = [&](const std::vector<double>& y) {
    int n = static_cast<int>(gx.size());
    if (n < 2) return 0.0;
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
      mx += gx[i];
      my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < n; ++i) {
      sxy += (gx[i] - mx) * (y[i] - my);
      sxx += (gx[i] - mx) * (gx[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
  };
  rep.growth_a = slope(ga);
  rep.growth_b = slope(gb);
  rep.growth_c = slope(gc);
  rep.mean_zero = rep.max_mean_residual <= mean_tol;
  rep.bounds_hold = rep.growth_a <= growth_tol && rep.growth_b <= growth_tol && rep.growth_c <= growth_tol;
  return rep;
}

}  // namespace rvmb
