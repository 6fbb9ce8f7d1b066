#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtard/tensor.hpp"

namespace mtard {

enum class Split : std::uint8_t { train = 0, test = 1 };

/// Labeled examples with features normalized into [0,1].
struct Dataset {
  Tensor features;                          // [N x d], entries in [0,1]
  std::vector<std::uint32_t> labels;        // N entries, each < classes
  std::size_t classes = 0;
  Split split = Split::train;
  std::vector<std::size_t> feature_shape;   // per-example shape, e.g. {2} or {3,32,32}

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  void validate() const;
};

/// Interleaved two-class half-moons with Gaussian noise, min-max scaled into
/// [0.05, 0.95] so epsilon-balls around points stay clippable.
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

/// C Gaussian blobs centered on the unit circle, same scaling.
Dataset gen_blobs(std::size_t n, std::size_t classes, double spread, std::uint64_t seed);

/// Class-stratified deterministic split into (train, test).
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, std::size_t train_n,
                                             std::size_t test_n, std::uint64_t seed);

/// IDX (big-endian, magic 0x00000803 for images / 0x00000801 for labels).
/// Pixels are scaled by 1/255. classes == 0 infers max(label)+1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t classes = 0, std::size_t subset = 0);

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar_binary(const std::string& path, std::size_t classes = 10, std::size_t subset = 0);

/// Versioned native cache; round-trips bit-exactly.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace mtard
