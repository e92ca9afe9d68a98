#include "dtk/receptive_field.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>

#include "dtk/ops.hpp"

namespace dtk {

void LayerStep::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || dilation < 1 || stride < 1) {
    throw ConfigError("layer step " + format_layer_step(*this) + " needs positive extents");
  }
}

LayerStep parse_layer_step(const std::string& text) {
  static const std::regex pattern(R"((\d+)x(\d+)(?:r(\d+))?(?:s(\d+))?)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) {
    throw ConfigError("cannot parse layer '" + text + "' (expected e.g. 3x3r2 or 2x2s2)");
  }
  LayerStep s;
  s.kernel_h = std::stoi(m[1]);
  s.kernel_w = std::stoi(m[2]);
  if (m[3].matched) s.dilation = std::stoi(m[3]);
  if (m[4].matched) s.stride = std::stoi(m[4]);
  s.validate();
  return s;
}

LayerSchedule parse_schedule(const std::string& text) {
  LayerSchedule out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    out.push_back(parse_layer_step(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string format_layer_step(const LayerStep& s) {
  std::string out = std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w);
  if (s.dilation != 1) out += "r" + std::to_string(s.dilation);
  if (s.stride != 1) out += "s" + std::to_string(s.stride);
  return out;
}

Index CoverageMask::count() const {
  return static_cast<Index>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

double CoverageMask::density() const {
  return cells.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(cells.size());
}

namespace {

/// A mask with the input coordinate of its (0, 0) cell.
struct Anchored {
  CoverageMask mask;
  Index origin_y = 0;
  Index origin_x = 0;
  Index jump = 1;
};

CoverageMask blank(Index h, Index w) {
  return {h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0)};
}

/// Minkowski sum of `in` with the tap grid {(a * step_y, b * step_x)}.
CoverageMask dilate(const CoverageMask& in, Index kh, Index kw, Index step_y, Index step_x) {
  const Index W = in.width + (kw - 1) * step_x;
  CoverageMask row = blank(in.height, W);
  for (Index y = 0; y < in.height; ++y) {
    const std::uint8_t* src = in.cells.data() + y * in.width;
    for (Index b = 0; b < kw; ++b) {
      std::uint8_t* dst = row.cells.data() + y * W + b * step_x;
      for (Index x = 0; x < in.width; ++x) dst[x] |= src[x];
    }
  }
  const Index H = in.height + (kh - 1) * step_y;
  CoverageMask out = blank(H, W);
  for (Index a = 0; a < kh; ++a) {
    for (Index y = 0; y < in.height; ++y) {
      const std::uint8_t* src = row.cells.data() + y * W;
      std::uint8_t* dst = out.cells.data() + (y + a * step_y) * W;
      for (Index x = 0; x < W; ++x) dst[x] |= src[x];
    }
  }
  return out;
}

CoverageMask upsample(const CoverageMask& in, Index s) {
  if (s == 1) return in;
  CoverageMask out = blank((in.height - 1) * s + 1, (in.width - 1) * s + 1);
  for (Index y = 0; y < in.height; ++y)
    for (Index x = 0; x < in.width; ++x)
      out.cells[static_cast<std::size_t>(y * s * out.width + x * s)] = in.at(y, x);
  return out;
}

/// Crops to the bounding box of the marked cells, shifting the origin to match.
Anchored crop(const Anchored& a) {
  const auto& m = a.mask;
  Index y0 = m.height, y1 = -1, x0 = m.width, x1 = -1;
  for (Index y = 0; y < m.height; ++y)
    for (Index x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (y1 < 0) throw StateError("coverage mask is empty");
  Anchored out{blank(y1 - y0 + 1, x1 - x0 + 1), a.origin_y + y0,
               a.origin_x + x0, a.jump};
  for (Index y = y0; y <= y1; ++y)
    for (Index x = x0; x <= x1; ++x)
      out.mask.cells[static_cast<std::size_t>((y - y0) * out.mask.width + (x - x0))] = m.at(y, x);
  return out;
}

Anchored through_conv(const Anchored& in, const ConvSpec& c) {
  Anchored out;
  out.mask = dilate(in.mask, c.kernel_h, c.kernel_w, c.dilation_h * in.jump, c.dilation_w * in.jump);
  out.origin_y = in.origin_y - c.padding.top * in.jump;
  out.origin_x = in.origin_x - c.padding.left * in.jump;
  if (c.stride_h != c.stride_w) throw ConfigError("receptive-field analysis needs equal strides");
  out.jump = in.jump * c.stride_h;
  return out;
}

Anchored through_pool(const Anchored& in, const PoolSpec& p) {
  Anchored out;
  out.mask = dilate(in.mask, p.extent, p.extent, in.jump, in.jump);
  out.origin_y = in.origin_y;
  out.origin_x = in.origin_x;
  out.jump = in.jump * p.stride;
  return out;
}

Anchored anchored_union(const Anchored& a, const Anchored& b) {
  if (a.jump != b.jump) throw ConfigError("concatenated branches have different strides");
  const Index y0 = std::min(a.origin_y, b.origin_y), x0 = std::min(a.origin_x, b.origin_x);
  const Index y1 = std::max(a.origin_y + a.mask.height, b.origin_y + b.mask.height);
  const Index x1 = std::max(a.origin_x + a.mask.width, b.origin_x + b.mask.width);
  Anchored out{blank(y1 - y0, x1 - x0), y0, x0, a.jump};
  for (const Anchored* src : {&a, &b})
    for (Index y = 0; y < src->mask.height; ++y)
      for (Index x = 0; x < src->mask.width; ++x)
        if (src->mask.at(y, x)) {
          out.mask.cells[static_cast<std::size_t>((y + src->origin_y - y0) * out.mask.width +
                                                  (x + src->origin_x - x0))] = 1;
        }
  return out;
}

template <typename Scalar>
std::map<std::string, Anchored> propagate(const ModelGraph<Scalar>& graph,
                                          std::vector<RfRow>* rows) {
  std::map<std::string, Anchored> masks;
  masks[ModelGraph<Scalar>::kInputName] = Anchored{blank(1, 1), 0, 0, 1};
  masks[ModelGraph<Scalar>::kInputName].mask.cells[0] = 1;
  for (const auto& l : graph.layers()) {
    auto src = [&](std::size_t i) -> const Anchored* {
      const auto it = masks.find(l.inputs.at(i));
      return it == masks.end() ? nullptr : &it->second;
    };
    const Anchored* in = src(0);
    if (!in) continue;  // downstream of a flatten: not spatial
    Anchored next;
    switch (l.kind) {
      case LayerKind::conv:
        next = crop(through_conv(*in, l.conv));
        break;
      case LayerKind::maxpool:
        next = crop(through_pool(*in, l.pool));
        break;
      case LayerKind::concat: {
        const Anchored* other = src(1);
        if (!other) continue;
        next = crop(anchored_union(*in, *other));
        break;
      }
      case LayerKind::relu:
        masks[l.name] = *in;
        continue;
      default:
        continue;
    }
    if (rows) {
      rows->push_back({l.name, next.mask.span_h(), next.mask.span_w(), next.mask.density(), next.jump});
    }
    masks[l.name] = std::move(next);
  }
  return masks;
}

}  // namespace

CoverageMask coverage(const LayerSchedule& schedule) {
  if (schedule.empty()) throw ConfigError("coverage needs a nonempty schedule");
  CoverageMask m = blank(1, 1);
  m.cells[0] = 1;
  for (auto it = schedule.rbegin(); it != schedule.rend(); ++it) {
    it->validate();
    m = dilate(upsample(m, it->stride), it->kernel_h, it->kernel_w, it->dilation, it->dilation);
  }
  return crop(Anchored{m, 0, 0, 1}).mask;
}

CoverageMask coverage_brute_force(const LayerSchedule& schedule) {
  if (schedule.empty()) throw ConfigError("coverage needs a nonempty schedule");
  // Size the input so the stack produces a 3x3 output; its centre is the probe.
  Index n_h = 3, n_w = 3;
  std::vector<ConvSpec> specs;
  for (auto it = schedule.rbegin(); it != schedule.rend(); ++it) {
    it->validate();
    ConvSpec c;
    c.kernel_h = it->kernel_h;
    c.kernel_w = it->kernel_w;
    c.dilation_h = c.dilation_w = it->dilation;
    c.stride_h = c.stride_w = it->stride;
    n_h = (n_h - 1) * it->stride + c.effective_kernel_h();
    n_w = (n_w - 1) * it->stride + c.effective_kernel_w();
    specs.insert(specs.begin(), c);
  }
  const Index total = n_h * n_w;
  const Index chunk = std::max<Index>(1, std::min<Index>(total, (1 << 18) / total));
  CoverageMask full = blank(n_h, n_w);
  for (Index start = 0; start < total; start += chunk) {
    const Index count = std::min(chunk, total - start);
    Tensord x({count, 1, n_h, n_w});
    for (Index i = 0; i < count; ++i) x[i * total + start + i] = 1.0;
    for (const auto& c : specs) {
      x = conv2d_forward(x, Tensord::ones({1, 1, c.kernel_h, c.kernel_w}), Tensord::zeros({1}), c);
    }
    if (x.dim(2) != 3 || x.dim(3) != 3) throw StateError("brute-force probe has the wrong extent");
    for (Index i = 0; i < count; ++i) {
      if (x(i, 0, 1, 1) != 0.0) full.cells[static_cast<std::size_t>(start + i)] = 1;
    }
  }
  return crop(Anchored{full, 0, 0, 1}).mask;
}

Index closed_form_span_h(const LayerSchedule& schedule) {
  Index span = 1, jump = 1;
  for (const auto& s : schedule) {
    span += (s.kernel_h - 1) * s.dilation * jump;
    jump *= s.stride;
  }
  return span;
}

Index closed_form_span_w(const LayerSchedule& schedule) {
  Index span = 1, jump = 1;
  for (const auto& s : schedule) {
    span += (s.kernel_w - 1) * s.dilation * jump;
    jump *= s.stride;
  }
  return span;
}

CoverageMask mask_union(const CoverageMask& a, const CoverageMask& b) {
  // Centre both masks on the origin; odd extent differences stay exact when doubled.
  const Index ha = a.height, hb = b.height, wa = a.width, wb = b.width;
  if ((ha - hb) % 2 != 0 || (wa - wb) % 2 != 0) {
    throw ShapeError("mask_union needs extents of equal parity to share a centre");
  }
  const Anchored aa{a, -(ha - 1) / 2, -(wa - 1) / 2, 1};
  const Anchored bb{b, -(hb - 1) / 2, -(wb - 1) / 2, 1};
  return crop(anchored_union(aa, bb)).mask;
}

template <typename Scalar>
std::vector<RfRow> rf_report(const ModelGraph<Scalar>& graph) {
  std::vector<RfRow> rows;
  propagate(graph, &rows);
  return rows;
}

std::vector<RfRow> rf_report(const ArchConfig& config) {
  config.validate();
  ArchConfig narrow = config;
  narrow.width_divisor = 512;  // spans do not depend on channel counts
  return rf_report(build_vgg<float>(narrow, {0}));
}

template <typename Scalar>
CoverageMask rf_mask(const ModelGraph<Scalar>& graph, const std::string& layer) {
  const auto masks = propagate(graph, nullptr);
  const auto it = masks.find(layer);
  if (it == masks.end()) throw LookupError("no spatial receptive field for layer '" + layer + "'");
  return it->second.mask;
}

std::string render_text(const CoverageMask& mask) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mask.height * (mask.width + 1)));
  for (Index y = 0; y < mask.height; ++y) {
    for (Index x = 0; x < mask.width; ++x) out += mask.at(y, x) ? '#' : '.';
    out += '\n';
  }
  return out;
}

void write_pgm(const CoverageMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (std::uint8_t c : mask.cells) out.put(static_cast<char>(c ? 255 : 0));
}

void write_rf_csv(const std::vector<RfRow>& rows, std::ostream& out) {
  out << "layer,span_h,span_w,density\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.density);
    out << r.layer << ',' << r.span_h << ',' << r.span_w << ',' << buf << '\n';
  }
}

template std::vector<RfRow> rf_report(const ModelGraph<float>&);
template std::vector<RfRow> rf_report(const ModelGraph<double>&);
template CoverageMask rf_mask(const ModelGraph<float>&, const std::string&);
template CoverageMask rf_mask(const ModelGraph<double>&, const std::string&);

}  // namespace dtk
