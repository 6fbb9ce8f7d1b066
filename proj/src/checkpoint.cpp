#include "mtard/checkpoint.hpp"

#include <array>

#include "mtard/binio.hpp"

namespace mtard {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'T', 'R', 'D'};
constexpr std::size_t kMaxRank = 8;

void write_tensor(binio::Writer& w, const Tensor& t, Precision precision) {
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape) w.u64(d);
  if (precision == Precision::f64) {
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
  } else {
    for (double v : t.data) w.f32(static_cast<float>(v));
  }
}

Tensor read_tensor(binio::Reader& r, Precision precision) {
  std::size_t rank = r.u8();
  require(rank >= 1 && rank <= kMaxRank, ErrorKind::parse, "tensor rank implausible: " + r.path());
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::size_t& d : shape) {
    d = static_cast<std::size_t>(r.u64());
    require(d >= 1 && d <= (1ull << 32), ErrorKind::parse, "tensor dim implausible: " + r.path());
    n *= d;
  }
  require(n <= (1ull << 30), ErrorKind::parse, "tensor too large: " + r.path());
  std::vector<double> data(n);
  if (precision == Precision::f64) {
    r.bytes(data.data(), n * sizeof(double));
  } else {
    for (double& v : data) v = static_cast<double>(r.f32());
  }
  return Tensor(std::move(shape), std::move(data));
}

CheckpointInfo read_header(binio::Reader& r) {
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  require(magic == kMagic, ErrorKind::parse, "bad checkpoint magic: " + r.path());
  CheckpointInfo info;
  info.version = r.u16();
  require(info.version == kCheckpointVersion, ErrorKind::version_mismatch,
          "unsupported checkpoint version " + std::to_string(info.version) + ": " + r.path());
  std::uint8_t role = r.u8();
  require(role <= 2, ErrorKind::parse, "bad role tag: " + r.path());
  info.role = static_cast<Role>(role);
  info.fingerprint = r.u64();
  std::uint8_t dtype = r.u8();
  require(dtype == 4 || dtype == 8, ErrorKind::parse, "bad payload dtype: " + r.path());
  info.precision = static_cast<Precision>(dtype);
  return info;
}

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path, Precision precision) {
  binio::Writer w(path);
  w.bytes(kMagic.data(), 4);
  w.u16(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(params.role));
  w.u64(params.fingerprint);
  w.u8(static_cast<std::uint8_t>(precision));
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const Tensor& t : params.tensors) write_tensor(w, t, precision);
  w.close();
}

NetworkParams load_checkpoint(const std::string& path, const NetworkSpec& spec) {
  binio::Reader r(path);
  CheckpointInfo info = read_header(r);
  require(info.fingerprint == spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "checkpoint was written for a different network spec: " + path);

  NetworkParams expected = zero_params(spec, info.role);
  std::uint32_t count = r.u32();
  require(count == expected.tensors.size(), ErrorKind::parse,
          "checkpoint tensor count mismatch: " + path);
  NetworkParams params;
  params.fingerprint = info.fingerprint;
  params.role = info.role;
  params.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t = read_tensor(r, info.precision);
    require(t.shape == expected.tensors[i].shape, ErrorKind::parse,
            "checkpoint tensor " + std::to_string(i) + " shape mismatch: " + path);
    params.tensors.push_back(std::move(t));
  }
  return params;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  binio::Reader r(path);
  return read_header(r);
}

}  // namespace mtard
