#include "config.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rvmb/error.hpp"

namespace rvmb::cli {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  return v;
}

int parse_integer(const std::string& key, const std::string& text) {
  int v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) throw ConfigError(key, "expected an integer, got '" + text + "'");
  return v;
}

const char* kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::real: return "real";
    case ValueKind::integer: return "integer";
    case ValueKind::reals: return "list of reals";
    case ValueKind::integers: return "list of integers";
    case ValueKind::vec3: return "three reals";
  }
  return "";
}

}  // namespace

const std::vector<KeySpec>& key_registry() {
  static const std::vector<KeySpec> keys = {
      {"constants.m", "1", "particle rest mass"},
      {"constants.c", "1", "speed of light"},
      {"constants.k_B", "1", "Boltzmann constant"},
      {"constants.e_minus", "1", "particle charge magnitude"},
      {"constants.n_bar", "1", "reference density"},
      {"constants.beta", "8", "polynomial weight exponent of the global Maxwellian formulation (>= 8)"},
      {"run.seed", "1", "seed of every random sample drawn by the experiments", ValueKind::integer},
      {"run.threads", "0", "worker threads; 0 means hardware parallelism", ValueKind::integer},
      {"moments.states", "5", "number of sampled Juttner states", ValueKind::integer},
      {"moments.gamma_min", "0.5", "smallest sampled gamma = m c^2/(k_B T0)"},
      {"moments.gamma_max", "20", "largest sampled gamma"},
      {"moments.u_max", "0.3", "largest sampled |u| in units of c"},
      {"moments.bessel_gammas", "0.5, 1, 5, 20", "gamma values of the Bessel recurrence check", ValueKind::reals},
      {"collision.n0", "1", "density of the reference state"},
      {"collision.u", "0.05, 0.02, 0", "flow of the reference state", ValueKind::vec3},
      {"collision.T0", "0.1", "temperature of the reference state"},
      {"collision.nodes", "16", "uniform momentum nodes per axis for Q", ValueKind::integer},
      {"collision.p_max", "2.4", "half side of the momentum box for Q"},
      {"collision.hemi_theta", "6", "hemisphere nodes in cos(theta)", ValueKind::integer},
      {"collision.hemi_phi", "12", "hemisphere nodes in phi", ValueKind::integer},
      {"collision.eps", "0.05", "amplitude of the perturbed test inputs"},
      {"collision.kinematic_samples", "100", "random pairs for the conservation and Jacobian checks", ValueKind::integer},
      {"collision.fd_step", "1e-4", "central-difference step of the Jacobian check"},
      {"collision.operator_nodes", "16", "uniform momentum nodes per axis for the linearized operator", ValueKind::integer},
      {"collision.operator_p_max", "2.4", "half side of the momentum box for the linearized operator"},
      {"collision.roundtrip_samples", "3", "random microscopic inputs of the pseudo-inverse round trip", ValueKind::integer},
      {"collision.gap_iterations", "60", "inverse-iteration steps of the spectral gap estimate", ValueKind::integer},
      {"collision.determinism_nodes", "8", "momentum nodes per axis of the thread-count comparison", ValueKind::integer},
      {"kernel.n0", "1", "density of the state at rest"},
      {"kernel.T0", "1", "temperature of the state at rest"},
      {"kernel.n_M", "1", "density of the global Maxwellian"},
      {"kernel.T_M", "0.6666666666666666", "temperature of the global Maxwellian; needs T_M < T0 < 2 T_M"},
      {"kernel.c0", "0.1", "decay constant of the weighted bound shape"},
      {"kernel.box", "4", "pairs are drawn in [-box, box]^3"},
      {"kernel.pairs", "1000", "sampled (p, q) pairs per bound", ValueKind::integer},
      {"kernel.fit_points", "48", "polar scan points per parameter of the constant fit", ValueKind::integer},
      {"kernel.route_samples", "3", "momenta of the closed-form versus integral-form comparison", ValueKind::integer},
      {"kernel.route_radial", "24", "radial nodes of the kernel routes", ValueKind::integer},
      {"kernel.route_theta", "12", "polar nodes of the kernel routes", ValueKind::integer},
      {"kernel.route_phi", "24", "azimuthal nodes of the kernel routes", ValueKind::integer},
      {"kernel.route_radius", "12", "radial cut-off of the kernel routes"},
      {"chars.samples", "100", "sweep samples of the band check", ValueKind::integer},
      {"chars.field_max", "0.1", "bound on |E| and |B| in the sweep"},
      {"chars.dtau_max", "0.2", "bound on |tau - t| in the sweep"},
      {"chars.step", "0.01", "largest RK4 step"},
      {"chars.free_samples", "20", "field-free determinant samples", ValueKind::integer},
      {"chars.fit_dtau_min", "2e-5", "smallest |tau - t| of the cubic fit"},
      {"chars.fit_dtau_max", "0.2", "largest |tau - t| of the cubic fit"},
      {"chars.fit_points", "9", "separations of the cubic fit", ValueKind::integer},
      {"fields.divb_cells", "10", "cells per axis of the divergence run", ValueKind::integer},
      {"fields.divb_steps", "1000", "steps of the divergence run", ValueKind::integer},
      {"fields.energy_cells", "8", "cells per axis of the energy-identity study", ValueKind::integer},
      {"fields.energy_refinements", "4", "time-step halvings of the energy-identity study", ValueKind::integer},
      {"fields.energy_t_end", "1", "final time of the energy-identity study"},
      {"fields.kernel_theta", "128", "polar nodes of the mean-zero kernel check", ValueKind::integer},
      {"fields.kernel_phi", "16", "azimuthal nodes of the mean-zero kernel check", ValueKind::integer},
      {"fields.gs_nodes", "16", "momentum nodes per axis of the retarded evaluation", ValueKind::integer},
      {"fields.gs_p_max", "3", "momentum box half side of the retarded evaluation"},
      {"fields.pulsed_cells", "80", "cells per axis of the grid solver on the pulsed source", ValueKind::integer},
      {"fields.pulsed_length", "10", "side of the periodic box of the grid solver"},
      {"fields.pulsed_time", "2.5", "comparison time of the pulsed source"},
      {"fields.coulomb_charge", "2", "total charge of the static source"},
      {"fields.coulomb_radius", "1", "support radius of the static source"},
      {"fields.coulomb_time", "10", "evaluation time of the static source"},
      {"background.n_mean", "1", "mean density of the equilibrium background"},
      {"background.density_amplitude", "0.05", "density modulation amplitude"},
      {"background.T_mean", "0.1", "mean temperature"},
      {"background.flow_amplitude", "0.02", "transverse flow amplitude"},
      {"background.B3_base", "0", "constant part of B3"},
      {"background.wavenumber", "1", "modulation wavenumber over the periodic length 2 pi", ValueKind::integer},
      {"hilbert.nx", "12", "spatial points on the periodic background", ValueKind::integer},
      {"hilbert.nodes", "8", "momentum nodes per axis", ValueKind::integer},
      {"hilbert.p_max", "2", "momentum box half side"},
      {"hilbert.levels", "8", "stored time levels after the initial one", ValueKind::integer},
      {"hilbert.dt", "0.05", "spacing of the stored time levels"},
      {"hilbert.stages", "2", "highest stage built by the hilbert experiment", ValueKind::integer},
      {"hilbert.sweep_states", "40", "random states of the symmetry sweep", ValueKind::integer},
      {"hilbert.oracle_nx", "16, 32, 64", "grid sizes of the matrix-exponential comparison", ValueKind::integers},
      {"hilbert.oracle_time", "0.5", "final time of the matrix-exponential comparison"},
      {"hilbert.oracle_courant", "0.5", "Courant number of the matrix-exponential comparison"},
      {"limit.stages", "2", "highest stage N of the residual study", ValueKind::integer},
      {"limit.epsilons", "1e-3, 3e-3, 1e-2, 3e-2, 1e-1", "Knudsen numbers of the residual study", ValueKind::reals},
  };
  return keys;
}

std::string config_reference() {
  std::ostringstream out;
  out << "# Configuration reference\n\n"
      << "Files use `[section]` headers and `name = value` lines. Lists are comma separated. "
      << "Every key is optional; unknown keys are rejected.\n";
  std::string section;
  for (const KeySpec& k : key_registry()) {
    std::string s = k.key.substr(0, k.key.find('.'));
    if (s != section) {
      section = s;
      out << "\n## [" << section << "]\n\n| key | type | default | meaning |\n|---|---|---|---|\n";
    }
    out << "| `" << k.key.substr(k.key.find('.') + 1) << "` | " << kind_name(k.kind) << " | `" << k.default_value
        << "` | " << k.description << " |\n";
  }
  return out.str();
}

Config::Config() {
  for (const KeySpec& k : key_registry()) values_[k.key] = k.default_value;
}

Config Config::parse(std::istream& in) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError("config", e.what());
  }
  Config cfg;
  for (const CLI::ConfigItem& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    std::string key;
    for (const std::string& p : it.parents) key += p + ".";
    key += it.name;
    if (key.find_first_of(" \t") != std::string::npos) throw ConfigError(key, "malformed line");
    std::string value;
    for (size_t i = 0; i < it.inputs.size(); ++i) value += (i ? ", " : "") + trim(it.inputs[i]);
    cfg.set(key, value);
  }
  cfg.validate();
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  return parse(in);
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown key");
  it->second = value;
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown key");
  return it->second;
}

double Config::real(const std::string& key) const { return parse_real(key, trim(raw(key))); }

int Config::integer(const std::string& key) const { return parse_integer(key, trim(raw(key))); }

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : split_list(raw(key))) out.push_back(parse_real(key, s));
  if (out.empty()) throw ConfigError(key, "expected a non-empty list");
  return out;
}

std::vector<int> Config::integers(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& s : split_list(raw(key))) out.push_back(parse_integer(key, s));
  if (out.empty()) throw ConfigError(key, "expected a non-empty list");
  return out;
}

void Config::validate() const {
  for (const KeySpec& k : key_registry()) {
    switch (k.kind) {
      case ValueKind::real: real(k.key); break;
      case ValueKind::integer: integer(k.key); break;
      case ValueKind::reals: reals(k.key); break;
      case ValueKind::integers: integers(k.key); break;
      case ValueKind::vec3: vec3(k.key); break;
    }
  }
  constants();
}

Eigen::Vector3d Config::vec3(const std::string& key) const {
  std::vector<double> v = reals(key);
  if (v.size() != 3) throw ConfigError(key, "expected three comma-separated numbers");
  return {v[0], v[1], v[2]};
}

PhysicalConstants Config::constants() const {
  PhysicalConstants k;
  k.m = real("constants.m");
  k.c = real("constants.c");
  k.k_B = real("constants.k_B");
  k.e_minus = real("constants.e_minus");
  k.n_bar = real("constants.n_bar");
  k.beta = real("constants.beta");
  try {
    k.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("constants." + e.key(), std::string(e.what()).substr(e.key().size() + 2));
  }
  return k;
}

}  // namespace rvmb::cli
