#include "mtard/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace mtard {

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  require(!probs_.empty(), ErrorKind::invalid_input, "ProbVector: empty");
  double sum = 0.0;
  for (double p : probs_) {
    require(std::isfinite(p), ErrorKind::invalid_input, "ProbVector: non-finite entry");
    require(p >= -1e-12 && p <= 1.0 + 1e-12, ErrorKind::invalid_input,
            "ProbVector: entry outside [0,1]");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::invalid_input,
          "ProbVector: entries sum to " + std::to_string(sum) + ", expected 1");
}

ProbVector ProbVector::uniform(std::size_t classes) {
  require(classes >= 1, ErrorKind::invalid_input, "uniform: need at least one class");
  return from_softmax(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

namespace {

void check_logits(std::span<const double> logits) {
  require(logits.size() >= 2, ErrorKind::invalid_input, "logits: need at least 2 classes");
  for (double z : logits)
    require(std::isfinite(z), ErrorKind::invalid_input, "logits: non-finite entry");
}

}  // namespace

ProbVector tempered_softmax(std::span<const double> logits, double tau) {
  check_logits(logits);
  require(tau > 0.0, ErrorKind::domain, "tempered_softmax: tau must be > 0");

  double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp((logits[k] - zmax) / tau);
    denom += out[k];
  }
  for (double& p : out) p /= denom;
  return ProbVector::from_softmax(std::move(out));
}

ProbVector tempered_softmax(const Tensor& logits, double tau) {
  return tempered_softmax(std::span<const double>(logits.data), tau);
}

double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double pk : p.values())
    if (pk > 0.0) h -= pk * std::log(pk);
  return h < 0.0 ? 0.0 : h;  // guard -0.0 from rounding
}

double kl_divergence(const ProbVector& target, const ProbVector& approx) {
  require(target.size() == approx.size(), ErrorKind::shape_mismatch,
          "kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    double t = target[k];
    if (t <= 0.0) continue;
    double a = std::max(approx[k], kProbFloor);
    kl += t * (std::log(t) - std::log(a));
  }
  return kl < 0.0 ? 0.0 : kl;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  check_logits(logits);
  require(label < logits.size(), ErrorKind::invalid_input, "cross_entropy: label out of range");

  double zmax = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double z : logits) lse += std::exp(z - zmax);
  return std::log(lse) - (logits[label] - zmax);
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  return cross_entropy(std::span<const double>(logits.data), label);
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  ProbVector p = tempered_softmax(logits, 1.0);
  require(label < logits.size(), ErrorKind::invalid_input, "cross_entropy_grad: label out of range");
  std::vector<double> g(p.values().begin(), p.values().end());
  g[label] -= 1.0;
  return g;
}

double entropy_temp_gradient(std::span<const double> logits, double tau) {
  check_logits(logits);
  require(tau > 0.0, ErrorKind::domain, "entropy_temp_gradient: tau must be > 0");

  // Work with u_k = (z_k - max z) / tau so q_k = exp(u_k) stays in (0, 1].
  // The derivative is Var_p(u) / tau, which the shift leaves unchanged.
  double zmax = *std::max_element(logits.begin(), logits.end());
  std::size_t n = logits.size();
  std::vector<double> u(n), q(n);
  double denom = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    u[k] = (logits[k] - zmax) / tau;
    q[k] = std::exp(u[k]);
    denom += q[k];
  }
  require(std::isfinite(denom) && denom > 0.0, ErrorKind::numeric,
          "entropy_temp_gradient: degenerate exponential sum");

  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += (q[k] / denom) * u[k];
  double var = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double d = u[k] - mean;
    var += (q[k] / denom) * d * d;
  }
  return var / tau;
}

double entropy_temp_gradient(const Tensor& logits, double tau) {
  return entropy_temp_gradient(std::span<const double>(logits.data), tau);
}

}  // namespace mtard
