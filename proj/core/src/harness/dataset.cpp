#include "gdp/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "gdp/error.hpp"

namespace gdp::harness {

Batch Dataset::gather(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) const {
  const std::size_t per = numel(sample_shape);
  Batch b;
  Shape s{end - begin};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  b.images = Tensor(s);
  auto dst = b.images.data();
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t k = order[i];
    std::copy_n(pixels.begin() + static_cast<long>(k * per), per, dst.begin() + static_cast<long>((i - begin) * per));
    b.labels.push_back(labels[k]);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  return gather(order, 0, size());
}

namespace {

Dataset synthesize(const DatasetSpec& spec, int count, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int C = spec.channels, H = spec.height, W = spec.width;
  Dataset d;
  d.sample_shape = {static_cast<std::size_t>(C), static_cast<std::size_t>(H), static_cast<std::size_t>(W)};
  d.classes = spec.classes;
  d.pixels.resize(static_cast<std::size_t>(count) * C * H * W);
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double radius = 0.3 * std::min(H, W);
  for (int n = 0; n < count; ++n) {
    const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.classes));
    d.labels.push_back(label);
    const double angle = 2 * std::numbers::pi * label / spec.classes;
    const double by = cy + radius * std::sin(angle) + spec.jitter * (2 * unit(rng) - 1);
    const double bx = cx + radius * std::cos(angle) + spec.jitter * (2 * unit(rng) - 1);
    const double sigma = label % 2 == 0 ? 1.0 : 1.8;
    const double amp = 0.7 + 0.6 * unit(rng);
    for (int c = 0; c < C; ++c) {
      // Later channels see the blob mirrored, so multi-channel sets carry extra cues.
      const double my = c % 2 == 0 ? by : H - 1 - by;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double r2 = (y - my) * (y - my) + (x - bx) * (x - bx);
          const double v = amp * std::exp(-r2 / (2 * sigma * sigma)) + spec.noise * gauss(rng);
          d.pixels[((static_cast<std::size_t>(n) * C + c) * H + y) * W + x] = static_cast<Scalar>(v);
        }
    }
  }
  return d;
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::Io, "truncated IDX file '" + path.string() + "'");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Splits make_synthetic(const DatasetSpec& spec) {
  return {synthesize(spec, spec.train, 1), synthesize(spec, spec.val, 2)};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream im(images, std::ios::binary), lb(labels, std::ios::binary);
  if (!im) throw Error(ErrorCode::Io, "cannot read '" + images.string() + "'");
  if (!lb) throw Error(ErrorCode::Io, "cannot read '" + labels.string() + "'");
  if (read_be32(im, images) != 0x803) throw Error(ErrorCode::Io, "'" + images.string() + "' is not an IDX image file");
  if (read_be32(lb, labels) != 0x801) throw Error(ErrorCode::Io, "'" + labels.string() + "' is not an IDX label file");
  const std::uint32_t n = read_be32(im, images), h = read_be32(im, images), w = read_be32(im, images);
  if (read_be32(lb, labels) != n) throw Error(ErrorCode::Io, "IDX image and label counts differ");
  Dataset d;
  d.sample_shape = {1, h, w};
  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
  if (!im.read(reinterpret_cast<char*>(raw.data()), static_cast<long>(raw.size()))) {
    throw Error(ErrorCode::Io, "truncated IDX image data");
  }
  d.pixels.reserve(raw.size());
  for (auto v : raw) d.pixels.push_back(static_cast<Scalar>(v) / 255);
  std::vector<unsigned char> lab(n);
  if (!lb.read(reinterpret_cast<char*>(lab.data()), n)) throw Error(ErrorCode::Io, "truncated IDX label data");
  for (auto v : lab) {
    d.labels.push_back(v);
    d.classes = std::max(d.classes, static_cast<int>(v) + 1);
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const Shape& sample_shape, int classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  Dataset d;
  d.sample_shape = sample_shape;
  d.classes = classes;
  const std::size_t per = numel(sample_shape);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (lineno == 1) continue;
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (values.size() != per + 1) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(per + 1) +
                                     " values, got " + std::to_string(values.size()));
    }
    const int label = static_cast<int>(values[0]);
    if (label < 0 || label >= classes || label != values[0]) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": label out of range");
    }
    d.labels.push_back(label);
    for (std::size_t k = 1; k <= per; ++k) d.pixels.push_back(static_cast<Scalar>(values[k]));
  }
  if (d.labels.empty()) throw Error(ErrorCode::Io, "'" + path.string() + "' has no samples");
  return d;
}

Splits load_dataset(const DatasetSpec& spec) {
  if (spec.kind == "synthetic") return make_synthetic(spec);
  if (spec.kind == "idx") {
    Splits s{load_idx(spec.train_images, spec.train_labels), load_idx(spec.val_images, spec.val_labels)};
    s.train.classes = s.val.classes = std::max({s.train.classes, s.val.classes, spec.classes});
    return s;
  }
  if (spec.kind == "csv") {
    const Shape shape{static_cast<std::size_t>(spec.channels), static_cast<std::size_t>(spec.height),
                      static_cast<std::size_t>(spec.width)};
    return {load_csv(spec.train_csv, shape, spec.classes), load_csv(spec.val_csv, shape, spec.classes)};
  }
  throw Error(ErrorCode::Config, "unknown dataset kind '" + spec.kind + "'");
}

std::vector<Batch> shuffled_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws keeps the permutation identical across standard libraries.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size)
    batches.push_back(data.gather(order, b, std::min(order.size(), b + batch_size)));
  return batches;
}

std::vector<Batch> ordered_batches(const Dataset& data, std::size_t batch_size) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size)
    batches.push_back(data.gather(order, b, std::min(order.size(), b + batch_size)));
  return batches;
}

}  // namespace gdp::harness
