#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtard/tensor.hpp"

namespace mtard {

enum class LayerKind { dense, conv, relu, flatten };

enum class Role : std::uint8_t { student = 0, clean_teacher = 1, robust_teacher = 2 };

std::string role_name(Role role);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  // dense
  std::size_t in = 0, out = 0;
  bool bias = true;
  // conv (square kernel, NCHW)
  std::size_t in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;

  static LayerSpec make_dense(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec make_relu();
  static LayerSpec make_flatten();
  static LayerSpec make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel = 3,
                             std::size_t stride = 1, std::size_t pad = 1);
};

/// Architecture description. Input shape is per-example ([d] for vectors,
/// [C,H,W] for images); the flat feature length is its product.
struct NetworkSpec {
  std::vector<std::size_t> input_shape;
  std::size_t classes = 0;
  std::vector<LayerSpec> layers;

  /// Per-layer input shapes plus the final output shape; throws on any
  /// incompatibility (including final dimension != classes).
  std::vector<std::vector<std::size_t>> shape_chain() const;

  void validate() const { (void)shape_chain(); }

  std::size_t input_size() const { return Tensor::numel(input_shape); }

  std::string canonical_string() const;
  std::uint64_t fingerprint() const;
};

/// MLP: input -> dense(h0) -> relu -> ... -> dense(classes).
NetworkSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t classes, bool bias = true);

/// Conv stack: [conv3x3(ch)-relu]* -> flatten -> dense(classes).
NetworkSpec conv_spec(const std::vector<std::size_t>& input_chw,
                      const std::vector<std::size_t>& channels, std::size_t classes);

/// Parameter snapshot for a spec. Tensors are laid out layer-major
/// (dense: W [out x in], b [out]; conv: W [out_ch x in_ch x k x k], b [out_ch]).
struct NetworkParams {
  std::vector<Tensor> tensors;
  std::uint64_t fingerprint = 0;
  Role role = Role::student;

  std::size_t total_scalars() const;
};

/// Fan-in-scaled uniform init, deterministic in (spec, seed).
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed, Role role = Role::student);

/// All-zero parameters with the right shapes (also used for SGD velocity).
NetworkParams zero_params(const NetworkSpec& spec, Role role = Role::student);

/// FNV-1a over the raw parameter bytes; changes iff any value changes.
std::uint64_t params_content_hash(const NetworkParams& params);

struct ForwardTrace {
  Tensor input;                  // the batch the trace belongs to
  std::vector<Tensor> layer_in;  // activation entering each layer
  Tensor logits;                 // [N x classes]
  std::uint64_t params_hash = 0;
};

struct Gradients {
  std::vector<Tensor> params;  // same layout as NetworkParams::tensors
  Tensor input;                // [N x input_size]
};

/// Batch forward; batch is [N x input_size]. Pure: no mutation of inputs.
Tensor forward(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch);

/// Forward keeping the intermediates backward() needs.
ForwardTrace forward_trace(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch);

/// Exact reverse-mode gradients for parameters and the input batch.
/// upstream is dLoss/dlogits, [N x classes]. The trace must come from a
/// forward_trace() on the same params (checked by content hash).
Gradients backward(const NetworkSpec& spec, const NetworkParams& params, const ForwardTrace& trace,
                   const Tensor& upstream);

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace mtard
