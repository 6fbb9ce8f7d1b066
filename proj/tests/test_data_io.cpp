#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <vector>

#include "mtard/dataset.hpp"
#include "test_util.hpp"

using namespace mtard;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("gen_two_moons: deterministic per seed, balanced, in bounds") {
  Dataset a = gen_two_moons(201, 0.1, 7);
  Dataset b = gen_two_moons(201, 0.1, 7);
  Dataset c = gen_two_moons(201, 0.1, 8);
  CHECK(a.features.data == b.features.data);
  CHECK(a.labels == b.labels);
  CHECK(a.features.data != c.features.data);

  std::size_t count0 = 0;
  for (std::uint32_t y : a.labels) count0 += (y == 0);
  std::size_t count1 = a.size() - count0;
  CHECK(std::max(count0, count1) - std::min(count0, count1) <= 1);

  for (double v : a.features.data) {
    CHECK(v >= 0.05 - 1e-12);
    CHECK(v <= 0.95 + 1e-12);
  }
}

TEST_CASE("gen_blobs: class count, balance, determinism") {
  Dataset a = gen_blobs(90, 5, 0.05, 3);
  CHECK(a.classes == 5);
  std::vector<std::size_t> counts(5, 0);
  for (std::uint32_t y : a.labels) ++counts[y];
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(counts[c] >= 90 / 5 - 1);
    CHECK(counts[c] <= 90 / 5 + 1);
  }
  CHECK(gen_blobs(90, 5, 0.05, 3).features.data == a.features.data);
}

TEST_CASE("stratified_split: sizes, tags, balance") {
  Dataset all = gen_two_moons(300, 0.1, 9);
  auto [train, test] = stratified_split(all, 200, 100, 9);
  CHECK(train.size() == 200);
  CHECK(test.size() == 100);
  CHECK(train.split == Split::train);
  CHECK(test.split == Split::test);
  std::size_t t0 = 0;
  for (std::uint32_t y : train.labels) t0 += (y == 0);
  CHECK(t0 >= 99);
  CHECK(t0 <= 101);
  CHECK_THROWS_AS(stratified_split(all, 250, 100, 9), Error);
}

TEST_CASE("load_idx: hand-crafted two-image fixture parses to exact pixels") {
  std::string dir = testutil::temp_dir("idx");
  std::string images = dir + "/images-idx3-ubyte";
  std::string labels = dir + "/labels-idx1-ubyte";

  std::vector<std::uint8_t> img;
  put_be32(img, 0x00000803);
  put_be32(img, 2);  // images
  put_be32(img, 2);  // rows
  put_be32(img, 3);  // cols
  // image 0: 0..5, image 1: 250..255
  for (int v = 0; v < 6; ++v) img.push_back(static_cast<std::uint8_t>(v));
  for (int v = 250; v <= 255; ++v) img.push_back(static_cast<std::uint8_t>(v));
  write_bytes(images, img);

  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, 2);
  lab.push_back(1);
  lab.push_back(0);
  write_bytes(labels, lab);

  Dataset ds = load_idx(images, labels);
  CHECK(ds.size() == 2);
  CHECK(ds.feature_dim() == 6);
  CHECK(ds.feature_shape == std::vector<std::size_t>{1, 2, 3});
  CHECK(ds.labels[0] == 1);
  CHECK(ds.labels[1] == 0);
  for (int j = 0; j < 6; ++j) CHECK(ds.features.at(0, j) == doctest::Approx(j / 255.0));
  CHECK(ds.features.at(1, 5) == doctest::Approx(1.0));
  CHECK(ds.features.at(1, 0) == doctest::Approx(250.0 / 255.0));
}

TEST_CASE("load_idx: wrong magic, truncation, empty file") {
  std::string dir = testutil::temp_dir("idx-bad");
  std::string images = dir + "/bad-images";
  std::string labels = dir + "/bad-labels";

  std::vector<std::uint8_t> img;
  put_be32(img, 0x00000802);  // wrong magic
  put_be32(img, 1);
  put_be32(img, 1);
  put_be32(img, 1);
  img.push_back(7);
  write_bytes(images, img);
  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, 1);
  lab.push_back(0);
  write_bytes(labels, lab);
  CHECK_THROWS_AS(load_idx(images, labels), Error);

  std::vector<std::uint8_t> truncated;
  put_be32(truncated, 0x00000803);
  put_be32(truncated, 5);
  put_be32(truncated, 28);
  put_be32(truncated, 28);
  truncated.push_back(1);  // far too few pixel bytes
  write_bytes(images, truncated);
  CHECK_THROWS_AS(load_idx(images, labels), Error);

  write_bytes(images, {});
  CHECK_THROWS_AS(load_idx(images, labels), Error);
}

TEST_CASE("load_cifar_binary: two-record fixture, subset cap, corrupt length") {
  std::string dir = testutil::temp_dir("cifar");
  std::string path = dir + "/batch.bin";

  std::vector<std::uint8_t> bytes;
  bytes.push_back(3);  // record 0 label
  for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(i % 256));
  bytes.push_back(9);  // record 1 label
  for (int i = 0; i < 3072; ++i) bytes.push_back(255);
  write_bytes(path, bytes);

  Dataset ds = load_cifar_binary(path);
  CHECK(ds.size() == 2);
  CHECK(ds.classes == 10);
  CHECK(ds.feature_shape == std::vector<std::size_t>{3, 32, 32});
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
  CHECK(ds.features.at(0, 0) == doctest::Approx(0.0));
  CHECK(ds.features.at(0, 257) == doctest::Approx(1.0 / 255.0));
  CHECK(ds.features.at(1, 1234) == doctest::Approx(1.0));

  Dataset capped = load_cifar_binary(path, 10, 1);
  CHECK(capped.size() == 1);
  CHECK(capped.labels[0] == 3);

  bytes.push_back(0);  // size no longer a record multiple
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_cifar_binary(path), Error);
}

TEST_CASE("dataset cache: round-trip is bit-exact") {
  Dataset ds = gen_two_moons(64, 0.15, 21);
  ds.split = Split::test;
  std::string path = testutil::temp_dir("cache") + "/data.mtds";
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  CHECK(back.features.data == ds.features.data);
  CHECK(back.labels == ds.labels);
  CHECK(back.classes == ds.classes);
  CHECK(back.split == Split::test);
  CHECK(back.feature_shape == ds.feature_shape);
}

TEST_CASE("dataset validation rejects out-of-range values") {
  Dataset ds = gen_two_moons(10, 0.1, 1);
  ds.labels[0] = 9;
  CHECK_THROWS_AS(ds.validate(), Error);
  Dataset ds2 = gen_two_moons(10, 0.1, 1);
  ds2.features.data[0] = 1.5;
  CHECK_THROWS_AS(ds2.validate(), Error);
}
