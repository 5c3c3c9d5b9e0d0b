#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gdp/harness/config.hpp"
#include "gdp/network.hpp"

namespace gdp::harness {

struct Dataset {
  Shape sample_shape;  // [c,h,w]
  std::vector<Scalar> pixels;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  // Samples [begin, end) of `order` gathered into one batch.
  Batch gather(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) const;
  Batch all() const;
};

struct Splits {
  Dataset train, val;
};

// Gaussian blobs: class k puts a blob at angle 2 pi k / classes on a ring
// around the image center, with a class-dependent width; every sample jitters
// the blob position, scales its amplitude and adds pixel noise.
Splits make_synthetic(const DatasetSpec& spec);

// Unsigned-byte IDX image (magic 0x803) and label (0x801) files; pixels / 255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// One sample per line: label, then c*h*w pixel values. A non-numeric first line is a header.
Dataset load_csv(const std::filesystem::path& path, const Shape& sample_shape, int classes);

Splits load_dataset(const DatasetSpec& spec);

// Minibatches over a permutation drawn from `seed`; the last short batch is kept.
std::vector<Batch> shuffled_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed);
std::vector<Batch> ordered_batches(const Dataset& data, std::size_t batch_size);

}  // namespace gdp::harness
