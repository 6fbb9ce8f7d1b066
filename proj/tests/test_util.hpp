#pragma once

// Shared test oracles: central finite differences and small helpers.
// These stay independent of the library's analytic gradient paths.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtard/tensor.hpp"

namespace testutil {

inline constexpr double kFdStep = 1e-5;

inline double central_diff(const std::function<double(double)>& f, double x, double h = kFdStep) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric, double floor = 1.0) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Finite-difference gradient of f with respect to every entry of x.
inline std::vector<double> fd_gradient(std::vector<double>& x,
                                       const std::function<double()>& f, double h = kFdStep) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = f();
    x[i] = orig - h;
    double fm = f();
    x[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Largest relative error between an analytic gradient and finite differences
/// over a parameter vector edited in place.
inline double max_grad_rel_err(std::vector<double>& x, const std::vector<double>& analytic,
                               const std::function<double()>& f, double floor = 1.0,
                               double h = kFdStep) {
  std::vector<double> numeric = fd_gradient(x, f, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, rel_err(analytic[i], numeric[i], floor));
  return worst;
}

inline std::vector<double> random_logits(std::mt19937_64& eng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> z(n);
  for (double& v : z) v = dist(eng);
  return z;
}

inline mtard::Tensor random_batch01(std::mt19937_64& eng, std::size_t n, std::size_t d) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  mtard::Tensor t = mtard::Tensor::zeros({n, d});
  for (double& v : t.data) v = dist(eng);
  return t;
}

/// Scratch directory unique to a test, cleaned up by the caller when needed.
std::string temp_dir(const std::string& tag);

}  // namespace testutil
