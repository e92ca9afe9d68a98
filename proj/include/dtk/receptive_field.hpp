#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dtk/graph.hpp"
#include "dtk/vgg.hpp"

namespace dtk {

/// One layer of a stack: kernel extents, dilation, stride.
struct LayerStep {
  int kernel_h = 3;
  int kernel_w = 3;
  int dilation = 1;
  int stride = 1;

  int effective_h() const { return kernel_h + (kernel_h - 1) * (dilation - 1); }
  int effective_w() const { return kernel_w + (kernel_w - 1) * (dilation - 1); }
  void validate() const;
  bool operator==(const LayerStep&) const = default;
};

using LayerSchedule = std::vector<LayerStep>;

/// "3x3r2", "5x5", "2x2s2", "3x3r4s1".
LayerStep parse_layer_step(const std::string& text);
/// Comma-separated steps.
LayerSchedule parse_schedule(const std::string& text);
std::string format_layer_step(const LayerStep& step);

/// Input positions contributing to one output unit, cropped to their bounding box.
struct CoverageMask {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> cells;  // row-major, 1 = contributes

  bool at(Index y, Index x) const { return cells[static_cast<std::size_t>(y * width + x)] != 0; }
  Index count() const;
  Index span_h() const { return height; }
  Index span_w() const { return width; }
  /// Contributing fraction of the bounding box.
  double density() const;
  bool operator==(const CoverageMask&) const = default;
};

/// Backward index-set propagation from the centre output through the stack.
CoverageMask coverage(const LayerSchedule& schedule);

/// Independent route: one-hot inputs through conv2d_forward with all-ones
/// double kernels; an input position counts when the centre output is nonzero.
CoverageMask coverage_brute_force(const LayerSchedule& schedule);

/// 1 + sum_l (k_l - 1) r_l prod_{m<l} s_m along each axis.
Index closed_form_span_h(const LayerSchedule& schedule);
Index closed_form_span_w(const LayerSchedule& schedule);

/// Cells of both masks overlaid on a common centre.
CoverageMask mask_union(const CoverageMask& a, const CoverageMask& b);

struct RfRow {
  std::string layer;
  Index span_h = 0;
  Index span_w = 0;
  double density = 0;
  /// Input-pixel stride between adjacent units of this layer.
  Index jump = 1;
};

/// Cumulative receptive field of every conv, pool, and concat layer of a graph.
template <typename Scalar>
std::vector<RfRow> rf_report(const ModelGraph<Scalar>& graph);
std::vector<RfRow> rf_report(const ArchConfig& config);

/// The mask behind one row of rf_report.
template <typename Scalar>
CoverageMask rf_mask(const ModelGraph<Scalar>& graph, const std::string& layer);

/// "#" for contributing cells, "." otherwise, one row per line.
std::string render_text(const CoverageMask& mask);
/// Binary PGM (P5), 255 for contributing cells.
void write_pgm(const CoverageMask& mask, const std::filesystem::path& path);
/// layer,span_h,span_w,density
void write_rf_csv(const std::vector<RfRow>& rows, std::ostream& out);

}  // namespace dtk
