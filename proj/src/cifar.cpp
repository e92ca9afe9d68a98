#include "dtk/cifar.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

namespace dtk {

namespace {

CifarRecords parse_records(std::span<const std::uint8_t> bytes, int label_bytes, int num_classes) {
  const std::size_t record = static_cast<std::size_t>(label_bytes + kCifarPixels);
  if (bytes.size() % record != 0) {
    throw FormatError("CIFAR data of " + std::to_string(bytes.size()) +
                      " bytes is not a whole number of " + std::to_string(record) + "-byte records");
  }
  const std::size_t count = bytes.size() / record;
  CifarRecords out;
  out.num_classes = num_classes;
  out.pixels.resize(count * static_cast<std::size_t>(kCifarPixels));
  out.labels.resize(count);
  if (label_bytes == 2) out.coarse_labels.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = bytes.data() + r * record;
    const int fine = rec[label_bytes - 1];
    if (fine >= num_classes) {
      throw FormatError("record " + std::to_string(r) + " at offset " +
                        std::to_string(r * record) + " has label " + std::to_string(fine) +
                        " outside [0," + std::to_string(num_classes) + ")");
    }
    out.labels[r] = fine;
    if (label_bytes == 2) {
      if (rec[0] >= 20) {
        throw FormatError("record " + std::to_string(r) + " has coarse label " +
                          std::to_string(rec[0]) + " outside [0,20)");
      }
      out.coarse_labels[r] = rec[0];
    }
    std::copy_n(rec + label_bytes, kCifarPixels, out.pixels.data() + r * kCifarPixels);
  }
  return out;
}

std::vector<std::uint8_t> read_exact(const std::filesystem::path& path, std::uintmax_t expected) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw FormatError("CIFAR file '" + path.string() + "' not found");
  }
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size != expected) {
    throw FormatError("CIFAR file '" + path.string() + "' has " + std::to_string(size) +
                      " bytes, expected " + std::to_string(expected));
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("failed reading CIFAR file '" + path.string() + "'");
  return bytes;
}

}  // namespace

CifarRecords parse_cifar10(std::span<const std::uint8_t> bytes) { return parse_records(bytes, 1, 10); }

CifarRecords parse_cifar100(std::span<const std::uint8_t> bytes) {
  return parse_records(bytes, 2, 100);
}

CifarRecords read_cifar10_file(const std::filesystem::path& path, Index records) {
  const auto bytes = read_exact(path, static_cast<std::uintmax_t>(records * kCifar10RecordBytes));
  return parse_cifar10(bytes);
}

CifarRecords read_cifar100_file(const std::filesystem::path& path, Index records) {
  const auto bytes = read_exact(path, static_cast<std::uintmax_t>(records * kCifar100RecordBytes));
  return parse_cifar100(bytes);
}

CifarDataset load_cifar10(const std::filesystem::path& dir) {
  CifarDataset ds;
  for (int i = 1; i <= 5; ++i) {
    auto part = read_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), 10000);
    ds.train = i == 1 ? std::move(part) : concatenate(ds.train, part);
  }
  ds.test = read_cifar10_file(dir / "test_batch.bin", 10000);
  return ds;
}

CifarDataset load_cifar100(const std::filesystem::path& dir) {
  return {read_cifar100_file(dir / "train.bin", kCifarTrainPool),
          read_cifar100_file(dir / "test.bin", 10000)};
}

CifarRecords select(const CifarRecords& records, std::span<const std::size_t> indices) {
  CifarRecords out;
  out.num_classes = records.num_classes;
  out.pixels.resize(indices.size() * static_cast<std::size_t>(kCifarPixels));
  out.labels.reserve(indices.size());
  const bool coarse = !records.coarse_labels.empty();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= records.labels.size()) throw InputError("record index out of range");
    std::copy_n(records.pixels.data() + src * kCifarPixels, kCifarPixels,
                out.pixels.data() + i * kCifarPixels);
    out.labels.push_back(records.labels[src]);
    if (coarse) out.coarse_labels.push_back(records.coarse_labels[src]);
  }
  return out;
}

CifarRecords concatenate(const CifarRecords& a, const CifarRecords& b) {
  CifarRecords out = a;
  out.pixels.insert(out.pixels.end(), b.pixels.begin(), b.pixels.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.coarse_labels.insert(out.coarse_labels.end(), b.coarse_labels.begin(), b.coarse_labels.end());
  return out;
}

SplitIndices split_indices(Index pool_size, std::uint64_t seed) {
  if (pool_size != kCifarTrainPool) {
    throw InputError("split needs the " + std::to_string(kCifarTrainPool) +
                     "-record training pool, got " + std::to_string(pool_size));
  }
  Rng rng(derive_seed(seed, 0x5b117));
  auto order = rng.permutation(static_cast<std::size_t>(pool_size));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + kCifarTrainSplit);
  s.validation.assign(order.begin() + kCifarTrainSplit, order.end());
  return s;
}

std::pair<CifarRecords, CifarRecords> split(const CifarRecords& pool, std::uint64_t seed) {
  const auto s = split_indices(pool.size(), seed);
  return {select(pool, s.train), select(pool, s.validation)};
}

DatasetSplit to_split(const CifarRecords& records) {
  DatasetSplit out;
  out.images = Tensorf({records.size(), 3, kCifarSide, kCifarSide});
  float* dst = out.images.data();
  for (std::uint8_t b : records.pixels) *dst++ = static_cast<float>(b);
  out.labels = records.labels;
  return out;
}

ChannelStats channel_stats(const DatasetSplit& split) {
  ChannelStats stats;
  const Index N = split.images.dim(0), C = split.images.dim(1);
  if (C != 3) throw ShapeError("channel_stats expects 3-channel images");
  const Index plane = split.images.dim(2) * split.images.dim(3);
  const double count = static_cast<double>(N * plane);
  if (count == 0) return stats;
  for (Index c = 0; c < 3; ++c) {
    double total = 0;
    for (Index n = 0; n < N; ++n) {
      const float* p = split.images.data() + (n * C + c) * plane;
      for (Index i = 0; i < plane; ++i) total += p[i];
    }
    const double mean = total / count;
    double sq = 0;
    for (Index n = 0; n < N; ++n) {
      const float* p = split.images.data() + (n * C + c) * plane;
      for (Index i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    stats.mean[static_cast<std::size_t>(c)] = mean;
    stats.stddev[static_cast<std::size_t>(c)] = std::sqrt(sq / count);
  }
  return stats;
}

ChannelStats standardize(DatasetSplit& split, const ChannelStats* given) {
  const ChannelStats stats = given ? *given : channel_stats(split);
  const Index N = split.images.dim(0), C = split.images.dim(1);
  const Index plane = split.images.dim(2) * split.images.dim(3);
  for (Index c = 0; c < C; ++c) {
    const double mean = stats.mean[static_cast<std::size_t>(c)];
    const double scale = 1.0 / (stats.stddev[static_cast<std::size_t>(c)] + kStdGuard);
    for (Index n = 0; n < N; ++n) {
      float* p = split.images.data() + (n * C + c) * plane;
      for (Index i = 0; i < plane; ++i) p[i] = static_cast<float>((p[i] - mean) * scale);
    }
  }
  return stats;
}

void AugmentConfig::validate() const {
  if (rotation_range_deg < 0 || rotation_range_deg > 180) {
    throw ConfigError("rotation range must lie in [0, 180] degrees");
  }
  if (shift_range_fraction < 0 || zoom_range < 0 || zoom_range >= 1) {
    throw ConfigError("shift range must be nonnegative and zoom range in [0, 1)");
  }
}

AugmentDraw draw_augmentation(const AugmentConfig& config, Rng& rng) {
  AugmentDraw d;
  // Every draw is consumed even for disabled transforms so the stream stays aligned.
  const bool h = rng.bernoulli(0.5);
  const bool v = rng.bernoulli(0.5);
  const double angle = rng.uniform(-1.0, 1.0);
  const double sx = rng.uniform(-1.0, 1.0);
  const double sy = rng.uniform(-1.0, 1.0);
  const double zoom = rng.uniform(-1.0, 1.0);
  d.flip_h = config.horizontal_flip && h;
  d.flip_v = config.vertical_flip && v;
  d.angle_deg = angle * config.rotation_range_deg;
  d.shift_x = sx * config.shift_range_fraction;
  d.shift_y = sy * config.shift_range_fraction;
  d.zoom = 1.0 + zoom * config.zoom_range;
  return d;
}

Tensorf apply_augmentation(const Tensorf& image, const AugmentDraw& draw) {
  if (image.rank() != 3 && !(image.rank() == 4 && image.dim(0) == 1)) {
    throw ShapeError("augment expects [C,H,W] or [1,C,H,W], got " + shape_string(image.shape()));
  }
  const Index C = image.dim(image.rank() - 3);
  const Index H = image.dim(image.rank() - 2);
  const Index W = image.dim(image.rank() - 1);
  if (draw.identity()) return image;

  Tensorf out(image.shape());
  const double cy = 0.5 * static_cast<double>(H - 1);
  const double cx = 0.5 * static_cast<double>(W - 1);
  const double theta = draw.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double ty = draw.shift_y * static_cast<double>(H);
  const double tx = draw.shift_x * static_cast<double>(W);

  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      // Invert: output = zoom * (R * p + t)  =>  p = R^T (output / zoom - t).
      const double oy = (static_cast<double>(i) - cy) / draw.zoom - ty;
      const double ox = (static_cast<double>(j) - cx) / draw.zoom - tx;
      double sy = cos_t * oy + sin_t * ox + cy;
      double sx = -sin_t * oy + cos_t * ox + cx;
      // Flips act on the source before the geometric warp.
      if (draw.flip_v) sy = static_cast<double>(H - 1) - sy;
      if (draw.flip_h) sx = static_cast<double>(W - 1) - sx;

      const double fy = std::floor(sy), fx = std::floor(sx);
      const Index y0 = static_cast<Index>(fy), x0 = static_cast<Index>(fx);
      const double wy = sy - fy, wx = sx - fx;
      for (Index c = 0; c < C; ++c) {
        const float* plane = image.data() + c * H * W;
        auto at = [&](Index y, Index x) -> double {
          return (y >= 0 && y < H && x >= 0 && x < W) ? plane[y * W + x] : 0.0;
        };
        double v = (1 - wy) * (1 - wx) * at(y0, x0);
        if (wx != 0) v += (1 - wy) * wx * at(y0, x0 + 1);
        if (wy != 0) v += wy * (1 - wx) * at(y0 + 1, x0);
        if (wy != 0 && wx != 0) v += wy * wx * at(y0 + 1, x0 + 1);
        out[c * H * W + i * W + j] = static_cast<float>(v);
      }
    }
  }
  return out;
}

Tensorf augment(const Tensorf& image, const AugmentConfig& config, Rng& rng) {
  return apply_augmentation(image, draw_augmentation(config, rng));
}

}  // namespace dtk
