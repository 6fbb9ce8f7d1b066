#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mtard/checkpoint.hpp"
#include "mtard/net.hpp"
#include "mtard/numeric.hpp"
#include "test_util.hpp"

using namespace mtard;

namespace {

// Nudges parameters away from ReLU kinks so finite differences stay valid.
bool has_near_kink(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch,
                   double margin = 1e-3) {
  ForwardTrace trace = forward_trace(spec, params, batch);
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    if (spec.layers[li].kind != LayerKind::relu) continue;
    for (double v : trace.layer_in[li].data)
      if (std::abs(v) < margin) return true;
  }
  return false;
}

double loss_of(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch,
               const Tensor& upstream_weights) {
  // Scalar probe: sum of (upstream_weights .* logits).
  Tensor logits = forward(spec, params, batch);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i) s += upstream_weights.data[i] * logits.data[i];
  return s;
}

}  // namespace

TEST_CASE("init_params: deterministic per seed, different across seeds") {
  NetworkSpec spec = mlp_spec(2, {32, 32}, 10);
  NetworkParams a = init_params(spec, 42);
  NetworkParams b = init_params(spec, 42);
  NetworkParams c = init_params(spec, 43);
  CHECK(params_content_hash(a) == params_content_hash(b));
  CHECK(params_content_hash(a) != params_content_hash(c));
}

TEST_CASE("init_params: fresh net predicts near-uniformly on random inputs") {
  NetworkSpec spec = mlp_spec(2, {32, 32}, 10);
  NetworkParams params = init_params(spec, 7);
  std::mt19937_64 eng(99);
  Tensor batch = testutil::random_batch01(eng, 200, 2);
  Tensor logits = forward(spec, params, batch);
  double mean_entropy = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r)
    mean_entropy += entropy(tempered_softmax(logits.row(r), 1.0));
  mean_entropy /= static_cast<double>(logits.rows());
  CHECK(mean_entropy > 0.95 * std::log(10.0));
  CHECK(mean_entropy <= std::log(10.0) + 1e-12);
}

TEST_CASE("forward: all-zero parameters give zero logits and a uniform softmax") {
  NetworkSpec spec = mlp_spec(3, {8}, 4);
  NetworkParams params = zero_params(spec);
  std::mt19937_64 eng(1);
  Tensor batch = testutil::random_batch01(eng, 5, 3);
  Tensor logits = forward(spec, params, batch);
  for (double v : logits.data) CHECK(v == 0.0);
  ProbVector p = tempered_softmax(logits.row(0), 1.0);
  for (std::size_t k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(0.25));
}

TEST_CASE("forward: single dense layer equals the hand-computed affine map") {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.classes = 2;
  spec.layers = {LayerSpec::make_dense(2, 2)};
  NetworkParams params = zero_params(spec);
  params.tensors[0].data = {1.0, 2.0, 3.0, 4.0};  // W rows: [1 2], [3 4]
  params.tensors[1].data = {0.5, -0.5};
  Tensor x({1, 2}, {2.0, 1.0});
  Tensor logits = forward(spec, params, x);
  CHECK(logits.at(0, 0) == doctest::Approx(1.0 * 2 + 2.0 * 1 + 0.5));
  CHECK(logits.at(0, 1) == doctest::Approx(3.0 * 2 + 4.0 * 1 - 0.5));
}

TEST_CASE("forward: batched rows equal independent single-row calls") {
  NetworkSpec spec = mlp_spec(4, {16, 8}, 3);
  NetworkParams params = init_params(spec, 5);
  std::mt19937_64 eng(2);
  Tensor batch = testutil::random_batch01(eng, 9, 4);
  Tensor batched = forward(spec, params, batch);
  for (std::size_t r = 0; r < 9; ++r) {
    Tensor single = Tensor::zeros({1, 4});
    std::copy(batch.row(r).begin(), batch.row(r).end(), single.row(0).begin());
    Tensor one = forward(spec, params, single);
    for (std::size_t k = 0; k < 3; ++k) CHECK(batched.at(r, k) == one.at(0, k));
  }
}

TEST_CASE("forward: shape mismatch errors") {
  NetworkSpec spec = mlp_spec(4, {8}, 3);
  NetworkParams params = init_params(spec, 1);
  std::mt19937_64 eng(3);
  Tensor wrong = testutil::random_batch01(eng, 2, 5);
  CHECK_THROWS_AS(forward(spec, params, wrong), Error);
  NetworkSpec other = mlp_spec(5, {8}, 3);
  CHECK_THROWS_AS(forward(other, params, wrong), Error);  // fingerprint mismatch
}

TEST_CASE("backward: parameter and input gradients match finite differences (mlp)") {
  std::mt19937_64 eng(31);
  int done = 0;
  while (done < 8) {
    NetworkSpec spec = mlp_spec(3, {6, 5}, 4);
    NetworkParams params = init_params(spec, eng());
    Tensor batch = testutil::random_batch01(eng, 3, 3);
    if (has_near_kink(spec, params, batch)) continue;
    ++done;

    Tensor up = Tensor::zeros({3, 4});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : up.data) v = dist(eng);

    ForwardTrace trace = forward_trace(spec, params, batch);
    Gradients grads = backward(spec, params, trace, up);

    double worst = 0.0;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
      std::vector<double>& x = params.tensors[t].data;
      worst = std::max(worst, testutil::max_grad_rel_err(x, grads.params[t].data, [&] {
        return loss_of(spec, params, batch, up);
      }));
    }
    CHECK(worst < 1e-4);

    double worst_in = testutil::max_grad_rel_err(batch.data, grads.input.data, [&] {
      return loss_of(spec, params, batch, up);
    });
    CHECK(worst_in < 1e-4);
  }
}

TEST_CASE("backward: conv stack gradients match finite differences") {
  std::mt19937_64 eng(37);
  int done = 0;
  while (done < 3) {
    NetworkSpec spec = conv_spec({1, 5, 5}, {2}, 3);
    NetworkParams params = init_params(spec, eng());
    Tensor batch = testutil::random_batch01(eng, 2, 25);
    if (has_near_kink(spec, params, batch)) continue;
    ++done;

    Tensor up = Tensor::zeros({2, 3});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : up.data) v = dist(eng);

    ForwardTrace trace = forward_trace(spec, params, batch);
    Gradients grads = backward(spec, params, trace, up);

    double worst = 0.0;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
      std::vector<double>& x = params.tensors[t].data;
      worst = std::max(worst, testutil::max_grad_rel_err(x, grads.params[t].data, [&] {
        return loss_of(spec, params, batch, up);
      }));
    }
    CHECK(worst < 1e-4);

    double worst_in = testutil::max_grad_rel_err(batch.data, grads.input.data, [&] {
      return loss_of(spec, params, batch, up);
    });
    CHECK(worst_in < 1e-4);
  }
}

TEST_CASE("backward: zero upstream gives all-zero gradients") {
  NetworkSpec spec = mlp_spec(3, {6}, 4);
  NetworkParams params = init_params(spec, 11);
  std::mt19937_64 eng(4);
  Tensor batch = testutil::random_batch01(eng, 2, 3);
  ForwardTrace trace = forward_trace(spec, params, batch);
  Gradients grads = backward(spec, params, trace, Tensor::zeros({2, 4}));
  for (const Tensor& g : grads.params)
    for (double v : g.data) CHECK(v == 0.0);
  for (double v : grads.input.data) CHECK(v == 0.0);
}

TEST_CASE("backward: stale trace is rejected") {
  NetworkSpec spec = mlp_spec(3, {6}, 4);
  NetworkParams params = init_params(spec, 11);
  std::mt19937_64 eng(5);
  Tensor batch = testutil::random_batch01(eng, 2, 3);
  ForwardTrace trace = forward_trace(spec, params, batch);
  params.tensors[0].data[0] += 0.5;  // params changed after the forward pass
  CHECK_THROWS_AS(backward(spec, params, trace, Tensor::zeros({2, 4})), Error);
}

TEST_CASE("checkpoint: save/load round-trip is bit-exact") {
  NetworkSpec spec = mlp_spec(2, {16, 16}, 5);
  NetworkParams params = init_params(spec, 77, Role::robust_teacher);
  std::string dir = testutil::temp_dir("ckpt");
  std::string path = dir + "/model.mtrd";
  save_checkpoint(params, path);
  NetworkParams loaded = load_checkpoint(path, spec);
  CHECK(loaded.role == Role::robust_teacher);
  CHECK(params_content_hash(loaded) == params_content_hash(params));

  // f32 payloads round-trip exactly when values are f32-representable.
  NetworkParams quantized = params;
  for (Tensor& t : quantized.tensors)
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
  save_checkpoint(quantized, path, Precision::f32);
  NetworkParams loaded32 = load_checkpoint(path, spec);
  CHECK(params_content_hash(loaded32) == params_content_hash(quantized));
}

TEST_CASE("checkpoint: wrong spec is a fingerprint error") {
  NetworkSpec spec = mlp_spec(2, {16}, 5);
  NetworkSpec other = mlp_spec(2, {17}, 5);
  std::string path = testutil::temp_dir("ckpt-fp") + "/model.mtrd";
  save_checkpoint(init_params(spec, 1), path);
  CHECK_THROWS_AS(load_checkpoint(path, other), Error);
  try {
    load_checkpoint(path, other);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::fingerprint_mismatch);
  }
}

TEST_CASE("checkpoint: truncated and corrupt files are parse errors, not crashes") {
  NetworkSpec spec = mlp_spec(2, {16}, 5);
  std::string dir = testutil::temp_dir("ckpt-bad");
  std::string path = dir + "/model.mtrd";
  save_checkpoint(init_params(spec, 1), path);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_checkpoint(path, spec), Error);

  std::string garbage = dir + "/garbage.mtrd";
  std::ofstream(garbage) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(garbage, spec), Error);

  std::string empty = dir + "/empty.mtrd";
  std::ofstream(empty).close();
  CHECK_THROWS_AS(load_checkpoint(empty, spec), Error);
}

TEST_CASE("spec fingerprint distinguishes layer shape, kind, and bias") {
  NetworkSpec a = mlp_spec(2, {8}, 3);
  NetworkSpec b = mlp_spec(2, {9}, 3);
  NetworkSpec c = mlp_spec(2, {8}, 3, /*bias=*/false);
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
  CHECK(a.fingerprint() == mlp_spec(2, {8}, 3).fingerprint());
}

TEST_CASE("network spec validation rejects incompatible chains") {
  NetworkSpec bad;
  bad.input_shape = {4};
  bad.classes = 3;
  bad.layers = {LayerSpec::make_dense(5, 3)};  // expects 5 inputs, gets 4
  CHECK_THROWS_AS(bad.validate(), Error);

  NetworkSpec wrong_out;
  wrong_out.input_shape = {4};
  wrong_out.classes = 3;
  wrong_out.layers = {LayerSpec::make_dense(4, 2)};  // final dim != classes
  CHECK_THROWS_AS(wrong_out.validate(), Error);
}
