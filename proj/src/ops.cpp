#include "dtk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dtk/parallel.hpp"

namespace dtk {

namespace {

template <typename Scalar>
void require_rank(const Tensor<Scalar>& t, Index rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

struct ConvGeometry {
  Index batch, channels, height, width;
  Index out_h, out_w;
  Index patch;  // C * kh * kw
  Index pixels;  // out_h * out_w
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                           const ConvSpec& spec) {
  spec.validate();
  require_rank(input, 4, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (weights.shape() != expected_w) {
    throw ShapeError("conv2d weights " + shape_string(weights.shape()) + ", spec needs " +
                     shape_string(expected_w));
  }
  if (input.dim(1) != spec.in_channels) {
    throw ShapeError("conv2d input has " + std::to_string(input.dim(1)) +
                     " channels, spec needs " + std::to_string(spec.in_channels));
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_h = spec.output_h(g.height);
  g.out_w = spec.output_w(g.width);
  g.patch = spec.in_channels * spec.kernel_h * spec.kernel_w;
  g.pixels = g.out_h * g.out_w;
  return g;
}

// Patch matrix [C*kh*kw, out_h*out_w] for one sample; padded taps are zero.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, const ConvSpec& spec, Scalar* col) {
  Index row = 0;
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = x + c * g.height * g.width;
    for (Index a = 0; a < spec.kernel_h; ++a) {
      for (Index b = 0; b < spec.kernel_w; ++b, ++row) {
        Scalar* dst = col + row * g.pixels;
        for (Index i = 0; i < g.out_h; ++i) {
          const Index y = i * spec.stride_h + a * spec.dilation_h - spec.padding.top;
          for (Index j = 0; j < g.out_w; ++j) {
            const Index xcol = j * spec.stride_w + b * spec.dilation_w - spec.padding.left;
            const bool inside = y >= 0 && y < g.height && xcol >= 0 && xcol < g.width;
            dst[i * g.out_w + j] = inside ? plane[y * g.width + xcol] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, const ConvSpec& spec, Scalar* x) {
  Index row = 0;
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = x + c * g.height * g.width;
    for (Index a = 0; a < spec.kernel_h; ++a) {
      for (Index b = 0; b < spec.kernel_w; ++b, ++row) {
        const Scalar* src = col + row * g.pixels;
        for (Index i = 0; i < g.out_h; ++i) {
          const Index y = i * spec.stride_h + a * spec.dilation_h - spec.padding.top;
          if (y < 0 || y >= g.height) continue;
          for (Index j = 0; j < g.out_w; ++j) {
            const Index xcol = j * spec.stride_w + b * spec.dilation_w - spec.padding.left;
            if (xcol < 0 || xcol >= g.width) continue;
            plane[y * g.width + xcol] += src[i * g.out_w + j];
          }
        }
      }
    }
  }
}

}  // namespace

Index ConvSpec::output_h(Index input_h) const {
  const Index span = input_h + padding.top + padding.bottom - effective_kernel_h();
  if (span < 0) {
    throw ShapeError("conv2d: padded height " + std::to_string(input_h + padding.top + padding.bottom) +
                     " smaller than effective kernel " + std::to_string(effective_kernel_h()));
  }
  return span / stride_h + 1;
}

Index ConvSpec::output_w(Index input_w) const {
  const Index span = input_w + padding.left + padding.right - effective_kernel_w();
  if (span < 0) {
    throw ShapeError("conv2d: padded width " + std::to_string(input_w + padding.left + padding.right) +
                     " smaller than effective kernel " + std::to_string(effective_kernel_w()));
  }
  return span / stride_w + 1;
}

ConvSpec& ConvSpec::with_same_padding() {
  const Index th = effective_kernel_h() - 1;
  const Index tw = effective_kernel_w() - 1;
  padding = {th / 2, th - th / 2, tw / 2, tw - tw / 2};
  return *this;
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1) {
    throw ShapeError("conv2d: channels and kernel extents must be positive");
  }
  if (dilation_h < 1 || dilation_w < 1 || stride_h < 1 || stride_w < 1) {
    throw ShapeError("conv2d: dilation and stride must be positive");
  }
  if (padding.top < 0 || padding.bottom < 0 || padding.left < 0 || padding.right < 0) {
    throw ShapeError("conv2d: padding must be nonnegative");
  }
}

Index PoolSpec::output_extent(Index input) const {
  if (extent < 1 || stride < 1) throw ShapeError("maxpool: extent and stride must be positive");
  if (input < extent) {
    throw ShapeError("maxpool: input extent " + std::to_string(input) + " smaller than window " +
                     std::to_string(extent));
  }
  if ((input - extent) % stride != 0) {
    throw ShapeError("maxpool: (" + std::to_string(input) + " - " + std::to_string(extent) +
                     ") is not divisible by stride " + std::to_string(stride));
  }
  return (input - extent) / stride + 1;
}

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                              const Tensor<Scalar>& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, weights, spec);
  if (bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv2d bias " + shape_string(bias.shape()) + ", expected [" +
                     std::to_string(spec.out_channels) + "]");
  }
  require_finite(input, "conv2d input");
  require_finite(weights, "conv2d weights");
  require_finite(bias, "conv2d bias");

  const Index K = spec.out_channels;
  Tensor<Scalar> out({g.batch, K, g.out_h, g.out_w});
  parallel_for(g.batch, [&](Index n) {
    std::vector<Scalar> col(static_cast<std::size_t>(g.patch * g.pixels));
    im2col(input.data() + n * g.channels * g.height * g.width, g, spec, col.data());
    Scalar* y = out.data() + n * K * g.pixels;
    // Each output accumulates bias first, then taps in (c, a, b) order.
    for (Index k = 0; k < K; ++k) {
      Scalar* yk = y + k * g.pixels;
      std::fill(yk, yk + g.pixels, bias[k]);
      const Scalar* wk = weights.data() + k * g.patch;
      for (Index e = 0; e < g.patch; ++e) {
        const Scalar w = wk[e];
        const Scalar* ce = col.data() + e * g.pixels;
        for (Index p = 0; p < g.pixels; ++p) yk[p] += w * ce[p];
      }
    }
  });
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input,
                                  const Tensor<Scalar>& weights, const ConvSpec& spec,
                                  ConvGradMask mask) {
  using Matrix = typename Tensor<Scalar>::RowMajorMatrix;
  using ConstMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;

  const ConvGeometry g = conv_geometry(input, weights, spec);
  const Index K = spec.out_channels;
  const Shape expected{g.batch, K, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv2d_backward: grad_out " + shape_string(grad_out.shape()) +
                     ", forward output is " + shape_string(expected));
  }

  ConvGrads<Scalar> grads;
  if (mask.input) grads.input = Tensor<Scalar>(input.shape());
  if (mask.params) {
    grads.weights = Tensor<Scalar>(weights.shape());
    grads.bias = Tensor<Scalar>({K});
  }
  const ConstMap w(weights.data(), K, g.patch);

  if (mask.params) {
  for (Index n = 0; n < g.batch; ++n) {
    const Scalar* go = grad_out.data() + n * K * g.pixels;
    for (Index k = 0; k < K; ++k) {
      Scalar acc = grads.bias[k];
      for (Index p = 0; p < g.pixels; ++p) acc += go[k * g.pixels + p];
      grads.bias[k] = acc;
    }
  }

  // Weight gradient is reduced over samples in index order.
  Map gw(grads.weights.data(), K, g.patch);
  std::vector<Scalar> col(static_cast<std::size_t>(g.patch * g.pixels));
  for (Index n = 0; n < g.batch; ++n) {
    im2col(input.data() + n * g.channels * g.height * g.width, g, spec, col.data());
    const ConstMap go(grad_out.data() + n * K * g.pixels, K, g.pixels);
    const ConstMap cm(col.data(), g.patch, g.pixels);
    gw.noalias() += go * cm.transpose();
  }
  }

  if (!mask.input) return grads;
  parallel_for(g.batch, [&](Index n) {
    Matrix grad_col(g.patch, g.pixels);
    const ConstMap go(grad_out.data() + n * K * g.pixels, K, g.pixels);
    grad_col.noalias() = w.transpose() * go;
    col2im_add(grad_col.data(), g, spec, grads.input.data() + n * g.channels * g.height * g.width);
  });
  return grads;
}

template <typename Scalar>
MaxPoolResult<Scalar> maxpool_forward(const Tensor<Scalar>& input, const PoolSpec& spec) {
  require_rank(input, 4, "maxpool input");
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index Ho = spec.output_extent(H);
  const Index Wo = spec.output_extent(W);
  MaxPoolResult<Scalar> result{Tensor<Scalar>({N, C, Ho, Wo}),
                               std::vector<Index>(static_cast<std::size_t>(N * C * Ho * Wo))};
  Index o = 0;
  for (Index plane = 0; plane < N * C; ++plane) {
    const Index base = plane * H * W;
    for (Index i = 0; i < Ho; ++i) {
      for (Index j = 0; j < Wo; ++j, ++o) {
        Index best = base + (i * spec.stride) * W + j * spec.stride;
        for (Index a = 0; a < spec.extent; ++a) {
          for (Index b = 0; b < spec.extent; ++b) {
            const Index idx = base + (i * spec.stride + a) * W + (j * spec.stride + b);
            // Strict comparison: the first maximum in row-major order wins.
            if (input[idx] > input[best]) best = idx;
          }
        }
        result.output[o] = input[best];
        result.argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Tensor<Scalar>& grad_out, const std::vector<Index>& argmax,
                                const Shape& input_shape) {
  if (static_cast<Index>(argmax.size()) != grad_out.size()) {
    throw ShapeError("maxpool_backward: " + std::to_string(argmax.size()) + " argmax entries for " +
                     std::to_string(grad_out.size()) + " gradients");
  }
  Tensor<Scalar> grad_in(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) {
    const Index idx = argmax[static_cast<std::size_t>(o)];
    if (idx < 0 || idx >= grad_in.size()) throw ShapeError("maxpool_backward: argmax out of range");
    grad_in[idx] += grad_out[o];
  }
  return grad_in;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.vec().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& x) {
  require_same_shape(grad_out, x, "relu_backward");
  Tensor<Scalar> grad_in(x.shape());
  for (Index i = 0; i < x.size(); ++i) grad_in[i] = x[i] > Scalar(0) ? grad_out[i] : Scalar(0);
  return grad_in;
}

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                             const Tensor<Scalar>& bias) {
  require_rank(x, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const Index N = x.dim(0), D = x.dim(1), M = weights.dim(1);
  if (weights.dim(0) != D) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " vs weights " +
                     shape_string(weights.shape()));
  }
  if (bias.shape() != Shape{M}) {
    throw ShapeError("dense: bias " + shape_string(bias.shape()) + " for " + std::to_string(M) +
                     " outputs");
  }
  require_finite(x, "dense input");
  require_finite(weights, "dense weights");
  Tensor<Scalar> y({N, M});
  auto ym = y.matrix(N, M);
  ym.noalias() = x.matrix(N, D) * weights.matrix(D, M);
  ym.rowwise() += bias.vec().transpose();
  return y;
}

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& x,
                                  const Tensor<Scalar>& weights) {
  require_rank(x, 2, "dense input");
  const Index N = x.dim(0), D = x.dim(1), M = weights.dim(1);
  if (grad_out.shape() != Shape{N, M} || weights.shape() != Shape{D, M}) {
    throw ShapeError("dense_backward: grad_out " + shape_string(grad_out.shape()) + ", input " +
                     shape_string(x.shape()) + ", weights " + shape_string(weights.shape()));
  }
  DenseGrads<Scalar> grads{Tensor<Scalar>({N, D}), Tensor<Scalar>({D, M}), Tensor<Scalar>({M})};
  const auto go = grad_out.matrix(N, M);
  grads.input.matrix(N, D).noalias() = go * weights.matrix(D, M).transpose();
  grads.weights.matrix(D, M).noalias() = x.matrix(N, D).transpose() * go;
  for (Index n = 0; n < N; ++n) {
    for (Index m = 0; m < M; ++m) grads.bias[m] += go(n, m);
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& x) {
  if (x.rank() < 1) throw ShapeError("flatten needs a batch axis");
  const Index n = x.dim(0);
  return x.reshaped({n, n == 0 ? 0 : x.size() / n});
}

template <typename Scalar>
Tensor<Scalar> unflatten(const Tensor<Scalar>& x, const Shape& shape) {
  return x.reshaped(shape);
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a, 4, "concat operand");
  require_rank(b, 4, "concat operand");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const Index N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const Index plane = a.dim(2) * a.dim(3);
  Tensor<Scalar> out({N, Ca + Cb, a.dim(2), a.dim(3)});
  for (Index n = 0; n < N; ++n) {
    Scalar* dst = out.data() + n * (Ca + Cb) * plane;
    std::copy_n(a.data() + n * Ca * plane, Ca * plane, dst);
    std::copy_n(b.data() + n * Cb * plane, Cb * plane, dst + Ca * plane);
  }
  return out;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> concat_channels_backward(const Tensor<Scalar>& grad_out,
                                                                    Index channels_a) {
  require_rank(grad_out, 4, "concat gradient");
  const Index N = grad_out.dim(0), C = grad_out.dim(1);
  if (channels_a < 0 || channels_a > C) {
    throw ShapeError("concat_channels_backward: split " + std::to_string(channels_a) + " of " +
                     std::to_string(C) + " channels");
  }
  const Index Cb = C - channels_a;
  const Index plane = grad_out.dim(2) * grad_out.dim(3);
  Tensor<Scalar> ga({N, channels_a, grad_out.dim(2), grad_out.dim(3)});
  Tensor<Scalar> gb({N, Cb, grad_out.dim(2), grad_out.dim(3)});
  for (Index n = 0; n < N; ++n) {
    const Scalar* src = grad_out.data() + n * C * plane;
    std::copy_n(src, channels_a * plane, ga.data() + n * channels_a * plane);
    std::copy_n(src + channels_a * plane, Cb * plane, gb.data() + n * Cb * plane);
  }
  return {std::move(ga), std::move(gb)};
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  require_rank(logits, 2, "softmax input");
  const Index N = logits.dim(0), C = logits.dim(1);
  if (C < 1) throw ShapeError("softmax needs at least one class");
  require_finite(logits, "softmax input");
  Tensor<Scalar> probs({N, C});
  for (Index n = 0; n < N; ++n) {
    const Scalar* z = logits.data() + n * C;
    Scalar* p = probs.data() + n * C;
    const Scalar top = *std::max_element(z, z + C);
    Scalar total = 0;
    for (Index c = 0; c < C; ++c) {
      p[c] = std::exp(z[c] - top);
      total += p[c];
    }
    for (Index c = 0; c < C; ++c) p[c] /= total;
  }
  return probs;
}

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& probs) {
  require_same_shape(grad_out, probs, "softmax_backward");
  require_rank(probs, 2, "softmax_backward");
  const Index N = probs.dim(0), C = probs.dim(1);
  Tensor<Scalar> grad_in({N, C});
  for (Index n = 0; n < N; ++n) {
    Scalar dot = 0;
    for (Index c = 0; c < C; ++c) dot += grad_out(n, c) * probs(n, c);
    for (Index c = 0; c < C; ++c) grad_in(n, c) = probs(n, c) * (grad_out(n, c) - dot);
  }
  return grad_in;
}

#define DTK_INSTANTIATE_OPS(S)                                                                  \
  template Tensor<S> conv2d_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,       \
                                    const ConvSpec&);                                           \
  template ConvGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                        const ConvSpec&, ConvGradMask);                         \
  template MaxPoolResult<S> maxpool_forward(const Tensor<S>&, const PoolSpec&);                 \
  template Tensor<S> maxpool_backward(const Tensor<S>&, const std::vector<Index>&, const Shape&); \
  template Tensor<S> relu_forward(const Tensor<S>&);                                            \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> dense_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);       \
  template DenseGrads<S> dense_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);  \
  template Tensor<S> flatten(const Tensor<S>&);                                                 \
  template Tensor<S> unflatten(const Tensor<S>&, const Shape&);                                 \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                       \
  template std::pair<Tensor<S>, Tensor<S>> concat_channels_backward(const Tensor<S>&, Index);   \
  template Tensor<S> softmax(const Tensor<S>&);                                                 \
  template Tensor<S> softmax_backward(const Tensor<S>&, const Tensor<S>&);

DTK_INSTANTIATE_OPS(float)
DTK_INSTANTIATE_OPS(double)

}  // namespace dtk
