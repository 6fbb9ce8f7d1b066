#include "mtard/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "mtard/binio.hpp"
#include "mtard/rng.hpp"

namespace mtard {

void Dataset::validate() const {
  require(size() > 0, ErrorKind::invalid_input, "dataset: empty");
  require(classes >= 2, ErrorKind::invalid_input, "dataset: need at least 2 classes");
  require(features.rank() == 2 && features.rows() == size(), ErrorKind::shape_mismatch,
          "dataset: features/labels length mismatch");
  require(Tensor::numel(feature_shape) == feature_dim(), ErrorKind::shape_mismatch,
          "dataset: feature_shape does not match feature length");
  for (std::uint32_t y : labels)
    require(y < classes, ErrorKind::invalid_input, "dataset: label out of range");
  for (double v : features.data)
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::invalid_input,
            "dataset: feature outside [0,1]");
}

namespace {

// Per-dimension min-max rescale into [0.05, 0.95].
void scale_features(Tensor& features) {
  std::size_t n = features.rows(), d = features.cols();
  for (std::size_t j = 0; j < d; ++j) {
    double lo = features.at(0, j), hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, features.at(i, j));
      hi = std::max(hi, features.at(i, j));
    }
    double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      double v = span > 0.0 ? (features.at(i, j) - lo) / span : 0.5;
      features.at(i, j) = 0.05 + 0.9 * v;
    }
  }
}

}  // namespace

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  require(n >= 2, ErrorKind::invalid_input, "gen_two_moons: need n >= 2");
  Rng rng(Rng::derive_key(seed, rng_tag::data, 0x300ULL));
  Dataset ds;
  ds.classes = 2;
  ds.feature_shape = {2};
  ds.features = Tensor::zeros({n, 2});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t label = static_cast<std::uint32_t>(i % 2);
    double t = rng.uniform(0.0, std::numbers::pi);
    double x, y;
    if (label == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    ds.features.at(i, 0) = x + noise * rng.normal();
    ds.features.at(i, 1) = y + noise * rng.normal();
    ds.labels[i] = label;
  }
  scale_features(ds.features);
  ds.validate();
  return ds;
}

Dataset gen_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed) {
  require(classes >= 2, ErrorKind::invalid_input, "gen_blobs: need at least 2 classes");
  require(n >= classes, ErrorKind::invalid_input, "gen_blobs: need n >= classes");
  Rng rng(Rng::derive_key(seed, rng_tag::data, 0xb10bULL));
  Dataset ds;
  ds.classes = classes;
  ds.feature_shape = {2};
  ds.features = Tensor::zeros({n, 2});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t label = static_cast<std::uint32_t>(i % classes);
    double ang = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);
    ds.features.at(i, 0) = std::cos(ang) + spread * rng.normal();
    ds.features.at(i, 1) = std::sin(ang) + spread * rng.normal();
    ds.labels[i] = label;
  }
  scale_features(ds.features);
  ds.validate();
  return ds;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, std::size_t train_n,
                                             std::size_t test_n, std::uint64_t seed) {
  ds.validate();
  require(train_n + test_n <= ds.size(), ErrorKind::invalid_input,
          "stratified_split: requested more examples than available");
  require(train_n > 0 && test_n > 0, ErrorKind::invalid_input,
          "stratified_split: both splits must be non-empty");

  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  Rng rng(Rng::derive_key(seed, rng_tag::data, 0x5bffULL));
  for (auto& idx : by_class) rng.shuffle(idx);

  // Round-robin across classes keeps both splits balanced.
  std::vector<std::size_t> train_idx, test_idx;
  std::vector<std::size_t> cursor(ds.classes, 0);
  auto take = [&](std::vector<std::size_t>& dst, std::size_t want) {
    std::size_t c = 0;
    while (dst.size() < want) {
      if (cursor[c] < by_class[c].size()) dst.push_back(by_class[c][cursor[c]++]);
      c = (c + 1) % ds.classes;
    }
  };
  take(train_idx, train_n);
  take(test_idx, test_n);

  auto build = [&](const std::vector<std::size_t>& idx, Split split) {
    Dataset out;
    out.classes = ds.classes;
    out.split = split;
    out.feature_shape = ds.feature_shape;
    out.features = Tensor::zeros({idx.size(), ds.feature_dim()});
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy(ds.features.row(idx[i]).begin(), ds.features.row(idx[i]).end(),
                out.features.row(i).begin());
      out.labels[i] = ds.labels[idx[i]];
    }
    out.validate();
    return out;
  };
  return {build(train_idx, Split::train), build(test_idx, Split::test)};
}

namespace {

std::uint32_t read_be32(binio::Reader& r) {
  std::array<std::uint8_t, 4> b{};
  r.bytes(b.data(), 4);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t classes,
                 std::size_t subset) {
  binio::Reader imgs(images_path);
  require(read_be32(imgs) == 0x00000803u, ErrorKind::parse,
          "bad IDX image magic (expected 0x00000803): " + images_path);
  std::size_t n = read_be32(imgs);
  std::size_t rows = read_be32(imgs);
  std::size_t cols = read_be32(imgs);
  require(n > 0 && rows > 0 && cols > 0, ErrorKind::parse, "empty IDX image file: " + images_path);

  binio::Reader labs(labels_path);
  require(read_be32(labs) == 0x00000801u, ErrorKind::parse,
          "bad IDX label magic (expected 0x00000801): " + labels_path);
  std::size_t ln = read_be32(labs);
  require(ln == n, ErrorKind::parse, "IDX image/label count mismatch");

  if (subset > 0 && subset < n) n = subset;
  std::size_t d = rows * cols;
  Dataset ds;
  ds.feature_shape = {1, rows, cols};
  ds.features = Tensor::zeros({n, d});
  ds.labels.resize(n);
  std::vector<std::uint8_t> buf(d);
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    imgs.bytes(buf.data(), d);
    for (std::size_t j = 0; j < d; ++j) ds.features.at(i, j) = buf[j] / 255.0;
    std::uint8_t y;
    labs.bytes(&y, 1);
    ds.labels[i] = y;
    max_label = std::max<std::uint32_t>(max_label, y);
  }
  ds.classes = classes > 0 ? classes : max_label + 1;
  if (ds.classes < 2) ds.classes = 2;
  ds.validate();
  return ds;
}

Dataset load_cifar_binary(const std::string& path, std::size_t classes, std::size_t subset) {
  constexpr std::size_t kPixels = 3072;
  constexpr std::size_t kRecord = 1 + kPixels;

  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorKind::io, "cannot open for reading: " + path);
  auto bytes = static_cast<std::size_t>(in.tellg());
  require(bytes > 0, ErrorKind::parse, "empty CIFAR file: " + path);
  require(bytes % kRecord == 0, ErrorKind::parse,
          "CIFAR file size " + std::to_string(bytes) + " is not a multiple of record length " +
              std::to_string(kRecord) + ": " + path);
  std::size_t n = bytes / kRecord;
  if (subset > 0 && subset < n) n = subset;
  in.seekg(0);

  Dataset ds;
  ds.classes = classes;
  ds.feature_shape = {3, 32, 32};
  ds.features = Tensor::zeros({n, kPixels});
  ds.labels.resize(n);
  std::vector<std::uint8_t> rec(kRecord);
  for (std::size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()), kRecord);
    require(in.gcount() == static_cast<std::streamsize>(kRecord), ErrorKind::parse,
            "unexpected end of file: " + path);
    ds.labels[i] = rec[0];
    for (std::size_t j = 0; j < kPixels; ++j) ds.features.at(i, j) = rec[1 + j] / 255.0;
  }
  ds.validate();
  return ds;
}

namespace {
constexpr std::array<char, 4> kCacheMagic = {'M', 'T', 'D', 'S'};
constexpr std::uint16_t kCacheVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  binio::Writer w(path);
  w.bytes(kCacheMagic.data(), 4);
  w.u16(kCacheVersion);
  w.u8(static_cast<std::uint8_t>(ds.split));
  w.u32(static_cast<std::uint32_t>(ds.classes));
  w.u64(ds.size());
  w.u8(static_cast<std::uint8_t>(ds.feature_shape.size()));
  for (std::size_t d : ds.feature_shape) w.u64(d);
  for (std::uint32_t y : ds.labels) w.u32(y);
  w.bytes(ds.features.data.data(), ds.features.data.size() * sizeof(double));
  w.close();
}

Dataset load_dataset(const std::string& path) {
  binio::Reader r(path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  require(magic == kCacheMagic, ErrorKind::parse, "bad dataset magic: " + path);
  std::uint16_t version = r.u16();
  require(version == kCacheVersion, ErrorKind::version_mismatch,
          "unsupported dataset version: " + path);
  Dataset ds;
  ds.split = static_cast<Split>(r.u8());
  ds.classes = r.u32();
  std::size_t n = r.u64();
  std::size_t rank = r.u8();
  require(rank >= 1 && rank <= 4, ErrorKind::parse, "dataset feature rank implausible: " + path);
  ds.feature_shape.resize(rank);
  for (std::size_t& d : ds.feature_shape) d = r.u64();
  std::size_t dim = Tensor::numel(ds.feature_shape);
  require(n > 0 && n <= (1ull << 28) && dim > 0 && dim <= (1ull << 24), ErrorKind::parse,
          "dataset dimensions implausible: " + path);
  ds.labels.resize(n);
  for (std::uint32_t& y : ds.labels) y = r.u32();
  ds.features = Tensor::zeros({n, dim});
  r.bytes(ds.features.data.data(), n * dim * sizeof(double));
  ds.validate();
  return ds;
}

}  // namespace mtard
