#include "mtard/net.hpp"

#include <cmath>
#include <cstring>

#include "mtard/rng.hpp"

namespace mtard {

std::string role_name(Role role) {
  switch (role) {
    case Role::student: return "student";
    case Role::clean_teacher: return "clean-teacher";
    case Role::robust_teacher: return "robust-teacher";
  }
  return "unknown";
}

LayerSpec LayerSpec::make_dense(std::size_t in, std::size_t out, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in = in;
  l.out = out;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::make_relu() {
  LayerSpec l;
  l.kind = LayerKind::relu;
  return l;
}

LayerSpec LayerSpec::make_flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                               std::size_t stride, std::size_t pad) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}

namespace {

std::vector<std::size_t> conv_out_shape(const LayerSpec& l, const std::vector<std::size_t>& in) {
  require(in.size() == 3, ErrorKind::shape_mismatch, "conv layer expects [C,H,W] input");
  require(in[0] == l.in_ch, ErrorKind::shape_mismatch, "conv layer channel mismatch");
  require(l.kernel >= 1 && l.stride >= 1, ErrorKind::invalid_input, "conv kernel/stride must be >= 1");
  std::size_t h = in[1] + 2 * l.pad, w = in[2] + 2 * l.pad;
  require(h >= l.kernel && w >= l.kernel, ErrorKind::shape_mismatch, "conv kernel larger than input");
  return {l.out_ch, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
}

}  // namespace

std::vector<std::vector<std::size_t>> NetworkSpec::shape_chain() const {
  require(!input_shape.empty() && input_size() > 0, ErrorKind::invalid_input,
          "network spec: empty input shape");
  require(classes >= 2, ErrorKind::invalid_input, "network spec: need at least 2 classes");
  require(!layers.empty(), ErrorKind::invalid_input, "network spec: no layers");

  std::vector<std::vector<std::size_t>> chain;
  std::vector<std::size_t> cur = input_shape;
  for (const LayerSpec& l : layers) {
    chain.push_back(cur);
    switch (l.kind) {
      case LayerKind::dense:
        require(cur.size() == 1 && cur[0] == l.in, ErrorKind::shape_mismatch,
                "dense layer input mismatch");
        cur = {l.out};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = {Tensor::numel(cur)};
        break;
      case LayerKind::conv:
        cur = conv_out_shape(l, cur);
        break;
    }
  }
  require(cur.size() == 1 && cur[0] == classes, ErrorKind::shape_mismatch,
          "network spec: final output dimension must equal class count");
  chain.push_back(cur);
  return chain;
}

std::string NetworkSpec::canonical_string() const {
  std::string s = "in=";
  for (std::size_t i = 0; i < input_shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(input_shape[i]);
  }
  s += ";classes=" + std::to_string(classes);
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerKind::dense:
        s += ";dense(" + std::to_string(l.in) + "," + std::to_string(l.out) + (l.bias ? ",b" : "") + ")";
        break;
      case LayerKind::relu: s += ";relu"; break;
      case LayerKind::flatten: s += ";flatten"; break;
      case LayerKind::conv:
        s += ";conv(" + std::to_string(l.in_ch) + "," + std::to_string(l.out_ch) + ",k" +
             std::to_string(l.kernel) + ",s" + std::to_string(l.stride) + ",p" + std::to_string(l.pad) +
             ")";
        break;
    }
  }
  return s;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t NetworkSpec::fingerprint() const {
  std::string s = canonical_string();
  return fnv1a64(s.data(), s.size());
}

NetworkSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t classes, bool bias) {
  NetworkSpec spec;
  spec.input_shape = {input_dim};
  spec.classes = classes;
  std::size_t prev = input_dim;
  for (std::size_t h : hidden) {
    spec.layers.push_back(LayerSpec::make_dense(prev, h, bias));
    spec.layers.push_back(LayerSpec::make_relu());
    prev = h;
  }
  spec.layers.push_back(LayerSpec::make_dense(prev, classes, bias));
  spec.validate();
  return spec;
}

NetworkSpec conv_spec(const std::vector<std::size_t>& input_chw,
                      const std::vector<std::size_t>& channels, std::size_t classes) {
  require(input_chw.size() == 3, ErrorKind::invalid_input, "conv_spec: input shape must be [C,H,W]");
  NetworkSpec spec;
  spec.input_shape = input_chw;
  spec.classes = classes;
  std::size_t prev_ch = input_chw[0];
  for (std::size_t ch : channels) {
    spec.layers.push_back(LayerSpec::make_conv(prev_ch, ch));
    spec.layers.push_back(LayerSpec::make_relu());
    prev_ch = ch;
  }
  spec.layers.push_back(LayerSpec::make_flatten());
  // conv3x3 stride 1 pad 1 preserves H and W
  std::size_t flat = prev_ch * input_chw[1] * input_chw[2];
  spec.layers.push_back(LayerSpec::make_dense(flat, classes));
  spec.validate();
  return spec;
}

std::size_t NetworkParams::total_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

namespace {

void append_layer_tensors(const LayerSpec& l, std::vector<Tensor>& out) {
  switch (l.kind) {
    case LayerKind::dense:
      out.push_back(Tensor::zeros({l.out, l.in}));
      if (l.bias) out.push_back(Tensor::zeros({l.out}));
      break;
    case LayerKind::conv:
      out.push_back(Tensor::zeros({l.out_ch, l.in_ch, l.kernel, l.kernel}));
      out.push_back(Tensor::zeros({l.out_ch}));
      break;
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
  }
}

}  // namespace

NetworkParams zero_params(const NetworkSpec& spec, Role role) {
  spec.validate();
  NetworkParams p;
  p.fingerprint = spec.fingerprint();
  p.role = role;
  for (const LayerSpec& l : spec.layers) append_layer_tensors(l, p.tensors);
  return p;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed, Role role) {
  NetworkParams p = zero_params(spec, role);
  std::size_t idx = 0;
  std::size_t layer_no = 0;
  for (const LayerSpec& l : spec.layers) {
    double fan_in = 0.0;
    std::size_t count = 0;
    if (l.kind == LayerKind::dense) {
      fan_in = static_cast<double>(l.in);
      count = l.bias ? 2 : 1;
    } else if (l.kind == LayerKind::conv) {
      fan_in = static_cast<double>(l.in_ch * l.kernel * l.kernel);
      count = 2;
    }
    double bound = fan_in > 0.0 ? 1.0 / std::sqrt(fan_in) : 0.0;
    for (std::size_t slot = 0; slot < count; ++slot) {
      Rng rng(Rng::derive_key(seed, rng_tag::init, layer_no, slot));
      for (double& v : p.tensors[idx + slot].data) v = rng.uniform(-bound, bound);
    }
    idx += count;
    ++layer_no;
  }
  return p;
}

std::uint64_t params_content_hash(const NetworkParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor& t : params.tensors)
    h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
  return h;
}

namespace {

struct LayerIO {
  const LayerSpec* spec;
  std::vector<std::size_t> in_shape;   // per-example
  std::vector<std::size_t> out_shape;  // per-example
  std::size_t tensor_base;             // first tensor index in NetworkParams
};

std::vector<LayerIO> layout(const NetworkSpec& spec) {
  auto chain = spec.shape_chain();
  std::vector<LayerIO> ios;
  std::size_t base = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerIO io{&l, chain[i], chain[i + 1], base};
    if (l.kind == LayerKind::dense) base += l.bias ? 2 : 1;
    if (l.kind == LayerKind::conv) base += 2;
    ios.push_back(io);
  }
  return ios;
}

void check_batch(const NetworkSpec& spec, const Tensor& batch) {
  require(batch.rank() == 2, ErrorKind::shape_mismatch, "batch must be [N x features]");
  require(batch.cols() == spec.input_size(), ErrorKind::shape_mismatch,
          "batch feature length " + std::to_string(batch.cols()) + " does not match spec input " +
              std::to_string(spec.input_size()));
  require(batch.rows() >= 1, ErrorKind::invalid_input, "empty batch");
  require(batch.all_finite(), ErrorKind::invalid_input, "batch contains non-finite values");
}

void check_bound(const NetworkSpec& spec, const NetworkParams& params) {
  require(params.fingerprint == spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "params fingerprint does not match spec");
}

void dense_forward(const LayerSpec& l, const Tensor& w, const Tensor* b, const Tensor& x, Tensor& y) {
  std::size_t n = x.rows();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xi = x.data.data() + r * l.in;
    double* yo = y.data.data() + r * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      double acc = b ? b->data[o] : 0.0;
      const double* wrow = w.data.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) acc += wrow[i] * xi[i];
      yo[o] = acc;
    }
  }
}

void conv_forward(const LayerSpec& l, const std::vector<std::size_t>& in_shape,
                  const std::vector<std::size_t>& out_shape, const Tensor& w, const Tensor& b,
                  const Tensor& x, Tensor& y) {
  std::size_t n = x.rows();
  std::size_t ih = in_shape[1], iw = in_shape[2];
  std::size_t oh = out_shape[1], ow = out_shape[2];
  std::size_t in_sz = Tensor::numel(in_shape), out_sz = Tensor::numel(out_shape);
  long pad = static_cast<long>(l.pad);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xi = x.data.data() + r * in_sz;
    double* yo = y.data.data() + r * out_sz;
    for (std::size_t co = 0; co < l.out_ch; ++co) {
      for (std::size_t out_y = 0; out_y < oh; ++out_y) {
        for (std::size_t out_x = 0; out_x < ow; ++out_x) {
          double acc = b.data[co];
          for (std::size_t ci = 0; ci < l.in_ch; ++ci) {
            for (std::size_t ky = 0; ky < l.kernel; ++ky) {
              long sy = static_cast<long>(out_y * l.stride + ky) - pad;
              if (sy < 0 || sy >= static_cast<long>(ih)) continue;
              for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                long sx = static_cast<long>(out_x * l.stride + kx) - pad;
                if (sx < 0 || sx >= static_cast<long>(iw)) continue;
                acc += w.data[((co * l.in_ch + ci) * l.kernel + ky) * l.kernel + kx] *
                       xi[(ci * ih + static_cast<std::size_t>(sy)) * iw + static_cast<std::size_t>(sx)];
              }
            }
          }
          yo[(co * oh + out_y) * ow + out_x] = acc;
        }
      }
    }
  }
}

Tensor run_forward(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch,
                   std::vector<Tensor>* keep_inputs) {
  check_bound(spec, params);
  check_batch(spec, batch);
  auto ios = layout(spec);
  std::size_t n = batch.rows();
  Tensor cur = batch;
  for (const LayerIO& io : ios) {
    if (keep_inputs) keep_inputs->push_back(cur);
    const LayerSpec& l = *io.spec;
    switch (l.kind) {
      case LayerKind::dense: {
        Tensor y = Tensor::zeros({n, l.out});
        const Tensor* b = l.bias ? &params.tensors[io.tensor_base + 1] : nullptr;
        dense_forward(l, params.tensors[io.tensor_base], b, cur, y);
        cur = std::move(y);
        break;
      }
      case LayerKind::relu: {
        Tensor y = cur;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        cur = std::move(y);
        break;
      }
      case LayerKind::flatten:
        break;  // data is already flat per example
      case LayerKind::conv: {
        Tensor y = Tensor::zeros({n, Tensor::numel(io.out_shape)});
        conv_forward(l, io.in_shape, io.out_shape, params.tensors[io.tensor_base],
                     params.tensors[io.tensor_base + 1], cur, y);
        cur = std::move(y);
        break;
      }
    }
  }
  return cur;
}

}  // namespace

Tensor forward(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch) {
  return run_forward(spec, params, batch, nullptr);
}

ForwardTrace forward_trace(const NetworkSpec& spec, const NetworkParams& params, const Tensor& batch) {
  ForwardTrace trace;
  trace.input = batch;
  trace.logits = run_forward(spec, params, batch, &trace.layer_in);
  trace.params_hash = params_content_hash(params);
  return trace;
}

Gradients backward(const NetworkSpec& spec, const NetworkParams& params, const ForwardTrace& trace,
                   const Tensor& upstream) {
  check_bound(spec, params);
  require(trace.params_hash == params_content_hash(params), ErrorKind::state,
          "backward: stale forward trace (params changed since forward)");
  require(trace.layer_in.size() == spec.layers.size(), ErrorKind::state,
          "backward: trace does not match spec");
  std::size_t n = trace.input.rows();
  require(upstream.rank() == 2 && upstream.rows() == n && upstream.cols() == spec.classes,
          ErrorKind::shape_mismatch, "backward: upstream must be [N x classes]");

  auto ios = layout(spec);
  Gradients grads;
  grads.params.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) grads.params.push_back(Tensor::zeros_like(t));

  Tensor g = upstream;
  for (std::size_t li = ios.size(); li-- > 0;) {
    const LayerIO& io = ios[li];
    const LayerSpec& l = *io.spec;
    const Tensor& x = trace.layer_in[li];
    switch (l.kind) {
      case LayerKind::dense: {
        Tensor& gw = grads.params[io.tensor_base];
        const Tensor& w = params.tensors[io.tensor_base];
        Tensor gx = Tensor::zeros({n, l.in});
        for (std::size_t r = 0; r < n; ++r) {
          const double* gi = g.data.data() + r * l.out;
          const double* xi = x.data.data() + r * l.in;
          double* gxi = gx.data.data() + r * l.in;
          for (std::size_t o = 0; o < l.out; ++o) {
            double go = gi[o];
            if (go == 0.0) continue;
            double* gwrow = gw.data.data() + o * l.in;
            const double* wrow = w.data.data() + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) {
              gwrow[i] += go * xi[i];
              gxi[i] += go * wrow[i];
            }
          }
        }
        if (l.bias) {
          Tensor& gb = grads.params[io.tensor_base + 1];
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t o = 0; o < l.out; ++o) gb.data[o] += g.data[r * l.out + o];
        }
        g = std::move(gx);
        break;
      }
      case LayerKind::relu: {
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] <= 0.0) g.data[i] = 0.0;
        break;
      }
      case LayerKind::flatten:
        break;
      case LayerKind::conv: {
        const Tensor& w = params.tensors[io.tensor_base];
        Tensor& gw = grads.params[io.tensor_base];
        Tensor& gb = grads.params[io.tensor_base + 1];
        std::size_t ih = io.in_shape[1], iw = io.in_shape[2];
        std::size_t oh = io.out_shape[1], ow = io.out_shape[2];
        std::size_t in_sz = Tensor::numel(io.in_shape), out_sz = Tensor::numel(io.out_shape);
        long pad = static_cast<long>(l.pad);
        Tensor gx = Tensor::zeros({n, in_sz});
        for (std::size_t r = 0; r < n; ++r) {
          const double* xi = x.data.data() + r * in_sz;
          const double* gi = g.data.data() + r * out_sz;
          double* gxi = gx.data.data() + r * in_sz;
          for (std::size_t co = 0; co < l.out_ch; ++co) {
            for (std::size_t out_y = 0; out_y < oh; ++out_y) {
              for (std::size_t out_x = 0; out_x < ow; ++out_x) {
                double go = gi[(co * oh + out_y) * ow + out_x];
                if (go == 0.0) continue;
                gb.data[co] += go;
                for (std::size_t ci = 0; ci < l.in_ch; ++ci) {
                  for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                    long sy = static_cast<long>(out_y * l.stride + ky) - pad;
                    if (sy < 0 || sy >= static_cast<long>(ih)) continue;
                    for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                      long sx = static_cast<long>(out_x * l.stride + kx) - pad;
                      if (sx < 0 || sx >= static_cast<long>(iw)) continue;
                      std::size_t widx = ((co * l.in_ch + ci) * l.kernel + ky) * l.kernel + kx;
                      std::size_t xidx =
                          (ci * ih + static_cast<std::size_t>(sy)) * iw + static_cast<std::size_t>(sx);
                      gw.data[widx] += go * xi[xidx];
                      gxi[xidx] += go * w.data[widx];
                    }
                  }
                }
              }
            }
          }
        }
        g = std::move(gx);
        break;
      }
    }
  }
  grads.input = std::move(g);
  return grads;
}

}  // namespace mtard
