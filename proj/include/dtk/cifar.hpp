#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "dtk/random.hpp"
#include "dtk/tensor.hpp"

namespace dtk {

inline constexpr Index kCifarSide = 32;
inline constexpr Index kCifarPixels = 3 * kCifarSide * kCifarSide;  // 3072
inline constexpr Index kCifar10RecordBytes = 1 + kCifarPixels;       // 3073
inline constexpr Index kCifar100RecordBytes = 2 + kCifarPixels;      // 3074
inline constexpr Index kCifarTrainPool = 50000;
inline constexpr Index kCifarTrainSplit = 40000;
inline constexpr Index kCifarValSplit = 10000;

/// Decoded CIFAR records: raw bytes, channel-planar [3, 32, 32] per record.
struct CifarRecords {
  int num_classes = 10;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  /// CIFAR-100 coarse labels; empty for CIFAR-10.
  std::vector<int> coarse_labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

/// Parses any whole number of CIFAR-10 records (1 label byte + 3072 pixels).
CifarRecords parse_cifar10(std::span<const std::uint8_t> bytes);
/// Parses any whole number of CIFAR-100 records (coarse, fine, 3072 pixels).
CifarRecords parse_cifar100(std::span<const std::uint8_t> bytes);

/// Reads a file and checks its size equals `records` whole records.
CifarRecords read_cifar10_file(const std::filesystem::path& path, Index records);
CifarRecords read_cifar100_file(const std::filesystem::path& path, Index records);

struct CifarDataset {
  CifarRecords train;
  CifarRecords test;
};

/// data_batch_1..5.bin + test_batch.bin, each exactly 10,000 records.
CifarDataset load_cifar10(const std::filesystem::path& dir);
/// train.bin (50,000 records) + test.bin (10,000 records); fine labels.
CifarDataset load_cifar100(const std::filesystem::path& dir);

CifarRecords select(const CifarRecords& records, std::span<const std::size_t> indices);
CifarRecords concatenate(const CifarRecords& a, const CifarRecords& b);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of the 50,000-record pool into 40,000 train / 10,000 validation.
SplitIndices split_indices(Index pool_size, std::uint64_t seed);
std::pair<CifarRecords, CifarRecords> split(const CifarRecords& pool, std::uint64_t seed);

/// Float images [N, 3, H, W] with integer labels.
struct DatasetSplit {
  Tensorf images;
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

/// Converts bytes to floats in [0, 255].
DatasetSplit to_split(const CifarRecords& records);

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

inline constexpr double kStdGuard = 1e-7;

ChannelStats channel_stats(const DatasetSplit& split);

/// Per-channel (x - mean) / (std + 1e-7). Computes stats from `split` unless
/// given (validation/test reuse the training statistics). Returns the stats used.
ChannelStats standardize(DatasetSplit& split, const ChannelStats* stats = nullptr);

struct AugmentConfig {
  bool horizontal_flip = true;
  bool vertical_flip = true;
  double rotation_range_deg = 30.0;
  double shift_range_fraction = 0.3;
  double zoom_range = 0.3;

  void validate() const;
  static AugmentConfig none() { return {false, false, 0.0, 0.0, 0.0}; }
};

/// One sampled geometric transform.
struct AugmentDraw {
  bool flip_h = false;
  bool flip_v = false;
  double angle_deg = 0.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  double zoom = 1.0;     // magnification about the centre

  bool identity() const {
    return !flip_h && !flip_v && angle_deg == 0.0 && shift_x == 0.0 && shift_y == 0.0 && zoom == 1.0;
  }
};

/// Draws in the fixed order: h-flip (p=0.5), v-flip (p=0.5), rotation, shift x, shift y, zoom.
AugmentDraw draw_augmentation(const AugmentConfig& config, Rng& rng);

/// Flips, then rotates, shifts, and zooms about the image centre; bilinear
/// resampling with zero fill. `image` is [C, H, W] or [1, C, H, W].
Tensorf apply_augmentation(const Tensorf& image, const AugmentDraw& draw);

Tensorf augment(const Tensorf& image, const AugmentConfig& config, Rng& rng);

}  // namespace dtk
