#pragma once

#include <Eigen/Dense>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "rvmb/kinematics.hpp"

namespace rvmb::cli {

enum class ValueKind { real, integer, reals, integers, vec3 };

/// One documented configuration key with its default value.
struct KeySpec {
  std::string key;
  std::string default_value;
  std::string description;
  ValueKind kind = ValueKind::real;
};

/// Every accepted key, ordered by section.
const std::vector<KeySpec>& key_registry();

/// Markdown reference page generated from the registry.
std::string config_reference();

/// Flat `section.name -> value` configuration. Unset keys fall back to the registry defaults;
/// keys outside the registry and values that do not parse raise a ConfigError naming the key.
class Config {
 public:
  Config();

  /// Parses INI text with [section] headers and `name = value` lines; list values are comma separated.
  static Config parse(std::istream& in);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& raw(const std::string& key) const;

  double real(const std::string& key) const;
  int integer(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;
  Eigen::Vector3d vec3(const std::string& key) const;

  /// Checks that every value parses as the kind declared in the registry.
  void validate() const;

  /// Physical constants from the [constants] section, validated.
  PhysicalConstants constants() const;

  /// Every key with its effective value, sorted by key.
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rvmb::cli
