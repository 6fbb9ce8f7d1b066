#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mtard/numeric.hpp"
#include "test_util.hpp"

using namespace mtard;

namespace {

// Independent term-by-term oracles (plain loops, no shared code path).
double entropy_oracle(const std::vector<double>& p) {
  double h = 0.0;
  for (double pk : p)
    if (pk > 0.0) h -= pk * std::log(pk);
  return h;
}

double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
  return kl;
}

}  // namespace

TEST_CASE("tempered_softmax: equal logits give the uniform distribution") {
  for (double tau : {0.5, 1.0, 5.0, 10.0}) {
    std::vector<double> z(7, 3.25);
    ProbVector p = tempered_softmax(std::span<const double>(z), tau);
    for (std::size_t k = 0; k < 7; ++k) CHECK(p[k] == doctest::Approx(1.0 / 7).epsilon(1e-12));
  }
}

TEST_CASE("tempered_softmax: hand-evaluated two-class case") {
  std::vector<double> z = {0.0, std::log(4.0)};
  ProbVector p = tempered_softmax(std::span<const double>(z), 1.0);
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("tempered_softmax: higher temperature moves output toward uniform") {
  std::vector<double> z = {0.0, std::log(4.0)};
  ProbVector sharp = tempered_softmax(std::span<const double>(z), 1.0);
  ProbVector soft = tempered_softmax(std::span<const double>(z), 10.0);
  CHECK(std::abs(soft[0] - 0.5) < std::abs(sharp[0] - 0.5));
  CHECK(std::abs(soft[1] - 0.5) < std::abs(sharp[1] - 0.5));
}

TEST_CASE("tempered_softmax: sums to one and shift-invariant at several temperatures") {
  std::mt19937_64 eng(7);
  for (double tau : {1.0, 5.0, 10.0}) {
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> z = testutil::random_logits(eng, 10, 3.0);
      ProbVector p = tempered_softmax(std::span<const double>(z), tau);
      double sum = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) sum += p[k];
      CHECK(std::abs(sum - 1.0) <= 1e-9);

      std::vector<double> shifted = z;
      for (double& v : shifted) v += 123.456;
      ProbVector q = tempered_softmax(std::span<const double>(shifted), tau);
      for (std::size_t k = 0; k < p.size(); ++k)
        CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("tempered_softmax: huge logits stay finite (max subtraction)") {
  std::vector<double> z = {1000.0, 990.0, -1000.0};
  ProbVector p = tempered_softmax(std::span<const double>(z), 1.0);
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] > 0.99);
}

TEST_CASE("tempered_softmax: error paths") {
  std::vector<double> bad = {1.0, std::nan("")};
  CHECK_THROWS_AS(tempered_softmax(std::span<const double>(bad), 1.0), Error);
  std::vector<double> z = {1.0, 2.0};
  CHECK_THROWS_AS(tempered_softmax(std::span<const double>(z), 0.0), Error);
  CHECK_THROWS_AS(tempered_softmax(std::span<const double>(z), -1.0), Error);
  std::vector<double> single = {1.0};
  CHECK_THROWS_AS(tempered_softmax(std::span<const double>(single), 1.0), Error);
}

TEST_CASE("entropy: uniform, one-hot, and oracle cases") {
  CHECK(entropy(ProbVector::uniform(10)) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  ProbVector onehot(std::vector<double>{0.0, 1.0, 0.0});
  CHECK(entropy(onehot) == 0.0);
  std::vector<double> p = {0.2, 0.8};
  CHECK(entropy(ProbVector(p)) == doctest::Approx(entropy_oracle(p)).epsilon(1e-14));
}

TEST_CASE("kl_divergence: identity, oracle, nonnegativity") {
  std::mt19937_64 eng(11);
  for (int rep = 0; rep < 20; ++rep) {
    ProbVector p = tempered_softmax(
        std::span<const double>(testutil::random_logits(eng, 6)), 1.0);
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }

  std::vector<double> q = {0.2, 0.8};
  std::vector<double> u = {0.5, 0.5};
  CHECK(kl_divergence(ProbVector::uniform(2), ProbVector(q)) ==
        doctest::Approx(kl_oracle(u, q)).epsilon(1e-14));

  for (int rep = 0; rep < 1000; ++rep) {
    ProbVector a = tempered_softmax(
        std::span<const double>(testutil::random_logits(eng, 5, 2.0)), 1.0);
    ProbVector b = tempered_softmax(
        std::span<const double>(testutil::random_logits(eng, 5, 2.0)), 1.0);
    CHECK(kl_divergence(a, b) >= 0.0);
  }
}

TEST_CASE("kl_divergence: dimension mismatch and one-hot clamping") {
  CHECK_THROWS_AS(kl_divergence(ProbVector::uniform(3), ProbVector::uniform(4)), Error);
  // A zero entry in approx where target is nonzero hits the clamp, not -inf.
  ProbVector target = ProbVector::uniform(2);
  ProbVector approx(std::vector<double>{1.0, 0.0});
  double kl = kl_divergence(target, approx);
  CHECK(std::isfinite(kl));
  CHECK(kl > 0.0);
}

TEST_CASE("cross_entropy: uniform logits and hand case") {
  std::vector<double> z(5, -2.0);
  CHECK(cross_entropy(std::span<const double>(z), 3) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
  std::vector<double> z2 = {0.0, std::log(4.0)};
  CHECK(cross_entropy(std::span<const double>(z2), 1) ==
        doctest::Approx(-std::log(0.8)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(std::span<const double>(z2), 2), Error);
}

TEST_CASE("cross_entropy: gradient matches central finite differences") {
  std::mt19937_64 eng(13);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<double> z = testutil::random_logits(eng, 8, 2.0);
    std::size_t label = eng() % 8;
    std::vector<double> analytic = cross_entropy_grad(std::span<const double>(z), label);
    double worst = testutil::max_grad_rel_err(
        z, analytic, [&] { return cross_entropy(std::span<const double>(z), label); }, 1e-6);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("entropy_temp_gradient: uniform logits sit at the zero fixed point") {
  std::vector<double> z(10, 0.75);
  CHECK(entropy_temp_gradient(std::span<const double>(z), 2.0) == 0.0);
}

TEST_CASE("entropy_temp_gradient: matches finite difference of entropy in tau") {
  std::mt19937_64 eng(17);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> z = testutil::random_logits(eng, 10, 2.0);
    double tau = 1.0 + 9.0 * std::uniform_real_distribution<double>(0, 1)(eng);
    double analytic = entropy_temp_gradient(std::span<const double>(z), tau);
    double numeric = testutil::central_diff(
        [&](double t) { return entropy(tempered_softmax(std::span<const double>(z), t)); }, tau);
    CHECK(testutil::rel_err(analytic, numeric, 1e-10) < 1e-6);
  }
}

TEST_CASE("entropy_temp_gradient: nonnegative over 1000 random draws") {
  std::mt19937_64 eng(19);
  std::uniform_real_distribution<double> tau_dist(1.0, 10.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> z = testutil::random_logits(eng, 10, 3.0);
    CHECK(entropy_temp_gradient(std::span<const double>(z), tau_dist(eng)) >= -1e-12);
  }
}

TEST_CASE("entropy_temp_gradient: shift invariance and large logits") {
  std::vector<double> z = {800.0, 805.0, 790.0};  // raw exp would overflow
  double g = entropy_temp_gradient(std::span<const double>(z), 2.0);
  CHECK(std::isfinite(g));
  std::vector<double> shifted = {0.0, 5.0, -10.0};
  CHECK(g == doctest::Approx(entropy_temp_gradient(std::span<const double>(shifted), 2.0))
                 .epsilon(1e-12));
}

TEST_CASE("entropy of tempered softmax is non-decreasing in tau") {
  std::mt19937_64 eng(23);
  std::uniform_real_distribution<double> tau_dist(1.0, 10.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> z = testutil::random_logits(eng, 10, 2.5);
    double t1 = tau_dist(eng), t2 = tau_dist(eng);
    if (t1 > t2) std::swap(t1, t2);
    double h1 = entropy(tempered_softmax(std::span<const double>(z), t1));
    double h2 = entropy(tempered_softmax(std::span<const double>(z), t2));
    CHECK(h2 >= h1 - 1e-12);
  }
}

TEST_CASE("ProbVector: invariant enforcement") {
  CHECK_THROWS_AS(ProbVector(std::vector<double>{0.5, 0.6}), Error);
  CHECK_THROWS_AS(ProbVector(std::vector<double>{1.2, -0.2}), Error);
  CHECK_THROWS_AS(ProbVector(std::vector<double>{}), Error);
  CHECK_NOTHROW(ProbVector(std::vector<double>{0.25, 0.75}));
}
