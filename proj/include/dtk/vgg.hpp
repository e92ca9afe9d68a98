#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dtk/graph.hpp"
#include "dtk/weights_io.hpp"

namespace dtk {

enum class VggFamily { vgg16, vgg19 };

const char* to_string(VggFamily family);
VggFamily parse_family(const std::string& text);

/// One convolution block: freeze flag plus one dilation rate, or two rates
/// for the parallel-branch variant (block 5 only).
struct BlockPlan {
  bool frozen = false;
  std::vector<int> dilations{1};

  bool two_branch() const { return dilations.size() == 2; }
  bool operator==(const BlockPlan&) const = default;
};

/// A buildable VGG variant; each catalog row is one of these.
struct ArchConfig {
  VggFamily family = VggFamily::vgg16;
  std::array<BlockPlan, 5> blocks{};
  int num_classes = 10;
  /// Divides every convolution filter count (1 = published widths).
  int width_divisor = 1;
  Index image_size = 32;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

inline constexpr std::array<int, 5> kBlockFilters{64, 128, 256, 512, 512};
/// Hidden dense widths; the classifier layer adds num_classes.
inline constexpr std::array<int, 2> kHeadUnits{512, 256};

std::array<int, 5> convs_per_block(VggFamily family);

/// Canonical names: block{i}_conv{j}[_br{b}], fc{k}.
std::string conv_layer_name(int block, int conv, int branch = 0);
std::string block_output_name(int block);

/// Random Glorot init from `seed`, optionally followed by importing the
/// convolution weights of a pretrained file (dense layers stay random).
struct InitSource {
  std::uint64_t seed = 0;
  const NamedTensorList* pretrained = nullptr;
};

template <typename Scalar>
ModelGraph<Scalar> build_vgg(const ArchConfig& config, const InitSource& init);

/// Conv layer names of one block (1-based), both branches included.
std::vector<std::string> block_conv_layers(const ArchConfig& config, int block);

struct CatalogEntry {
  std::string label;
  std::string slug;
  ArchConfig config;
};

/// The eight rows of the dilation-rate comparison table.
std::vector<CatalogEntry> table1_catalog(int num_classes = 10);

/// Parses a block plan token list such as "freeze", "2", or "4,8".
BlockPlan parse_block_plan(const std::string& text);
std::string format_block_plan(const BlockPlan& plan);

}  // namespace dtk
