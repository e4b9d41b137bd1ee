#pragma once

#include <Eigen/Dense>
#include <random>

namespace rvmb::test {

inline Eigen::Vector3d random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng), d(rng)};
}

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::Vector3d v(d(rng), d(rng), d(rng));
  return v.normalized();
}

/// Least-squares slope of log(y) against log(x).
template <class V>
double loglog_slope(const V& x, const V& y) {
  int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace rvmb::test
