#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtk/graph.hpp"
#include "dtk/tensor.hpp"

namespace dtk {

struct NamedTensor {
  std::string name;
  Tensorf tensor;
};

using NamedTensorList = std::vector<NamedTensor>;

// NTL1 container, little-endian throughout:
//   "NTL1" | u32 count | count x (u32 name_len | name | u8 rank | rank x u32 extent | f32 data)
//   | u32 CRC-32 of every preceding byte

std::vector<std::uint8_t> encode_ntl(const NamedTensorList& entries);
NamedTensorList decode_ntl(const std::vector<std::uint8_t>& bytes);

void write_ntl(const std::filesystem::path& path, const NamedTensorList& entries);
NamedTensorList read_ntl(const std::filesystem::path& path);

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

struct LoadOptions {
  /// Error when any graph parameter has no matching entry.
  bool strict = true;
  /// Let "block5_convJ.*" entries fill every "block5_convJ_brB" copy.
  bool map_branches = false;
  /// Ignore non-convolution entries (pretrained dense layers never fit the head).
  bool conv_only = false;
};

/// Names are layer names for loaded / missing and entry names for extra.
struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missing;
  std::vector<std::string> extra;
};

/// Copies matching entries into the graph. Atomic: any error leaves every
/// parameter untouched.
template <typename Scalar>
LoadReport load_into(ModelGraph<Scalar>& graph, const NamedTensorList& entries,
                     const LoadOptions& options);

/// Every parameter tensor of the graph, in layer order, as float entries.
template <typename Scalar>
NamedTensorList graph_entries(const ModelGraph<Scalar>& graph);

}  // namespace dtk
