#pragma once

#include <span>
#include <vector>

#include "mtard/tensor.hpp"

namespace mtard {

/// Probability floor applied before any log; keeps one-hot-ish distributions
/// out of -inf territory without moving results above test tolerances.
inline constexpr double kProbFloor = 1e-12;

/// Discrete distribution over classes. Invariants are enforced at construction:
/// entries in [0,1] and summing to 1 within 1e-9.
class ProbVector {
public:
  explicit ProbVector(std::vector<double> probs);

  static ProbVector uniform(std::size_t classes);

  /// Trusted constructor for values produced by our own softmax (skips checks).
  static ProbVector from_softmax(std::vector<double> probs) { return ProbVector(std::move(probs), 0); }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::span<const double> values() const { return probs_; }

private:
  ProbVector(std::vector<double> probs, int) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

/// softmax(z / tau) with max-subtraction. tau must be > 0, logits finite, C >= 2.
ProbVector tempered_softmax(std::span<const double> logits, double tau);
ProbVector tempered_softmax(const Tensor& logits, double tau);

/// Shannon entropy in nats, with 0*log(0) := 0.
double entropy(const ProbVector& p);

/// KL(target || approx) in nats. approx entries are floored at kProbFloor
/// before the log; target zeros contribute nothing.
double kl_divergence(const ProbVector& target, const ProbVector& approx);

/// -log softmax(logits)[label] at tau = 1.
double cross_entropy(std::span<const double> logits, std::size_t label);
double cross_entropy(const Tensor& logits, std::size_t label);

/// Gradient of cross_entropy w.r.t. the logits: softmax(z) - onehot(label).
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

/// Derivative of entropy(tempered_softmax(logits, tau)) w.r.t. tau.
/// Equals Var_p(z/tau) / tau with p = tempered_softmax(logits, tau), so it is
/// nonnegative; evaluated on max-shifted quantities so exp() cannot overflow.
double entropy_temp_gradient(std::span<const double> logits, double tau);
double entropy_temp_gradient(const Tensor& logits, double tau);

}  // namespace mtard
