#pragma once

#include <utility>
#include <vector>

#include "dtk/tensor.hpp"

namespace dtk {

struct Padding2D {
  Index top = 0;
  Index bottom = 0;
  Index left = 0;
  Index right = 0;

  bool operator==(const Padding2D&) const = default;
};

/// Dilated 2-D convolution geometry. Weights are laid out [K, C, kh, kw].
struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel_h = 3;
  Index kernel_w = 3;
  Index dilation_h = 1;
  Index dilation_w = 1;
  Index stride_h = 1;
  Index stride_w = 1;
  Padding2D padding;

  /// kh + (kh - 1)(rh - 1)
  Index effective_kernel_h() const { return kernel_h + (kernel_h - 1) * (dilation_h - 1); }
  Index effective_kernel_w() const { return kernel_w + (kernel_w - 1) * (dilation_w - 1); }

  Index output_h(Index input_h) const;
  Index output_w(Index input_w) const;

  /// Zero padding that keeps extents at stride 1: total eff_k - 1 per axis,
  /// floor on the top/left side and ceil on the bottom/right side.
  ConvSpec& with_same_padding();

  void validate() const;

  bool operator==(const ConvSpec&) const = default;
};

struct PoolSpec {
  Index extent = 2;
  Index stride = 2;

  /// (m - F) / S + 1; throws ShapeError unless the division is exact.
  Index output_extent(Index input) const;

  bool operator==(const PoolSpec&) const = default;
};

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
struct MaxPoolResult {
  Tensor<Scalar> output;
  /// Flat index into the input for every output element.
  std::vector<Index> argmax;
};

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                              const Tensor<Scalar>& bias, const ConvSpec& spec);

/// Which gradients conv2d_backward should produce; skipped ones come back empty.
struct ConvGradMask {
  bool input = true;
  bool params = true;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input,
                                  const Tensor<Scalar>& weights, const ConvSpec& spec,
                                  ConvGradMask mask = {});

template <typename Scalar>
MaxPoolResult<Scalar> maxpool_forward(const Tensor<Scalar>& input, const PoolSpec& spec);

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Tensor<Scalar>& grad_out, const std::vector<Index>& argmax,
                                const Shape& input_shape);

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x);

/// Subgradient at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& x);

/// y = xW + b with x [N,D], W [D,M], b [M].
template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                             const Tensor<Scalar>& bias);

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& x,
                                  const Tensor<Scalar>& weights);

/// [N, ...] -> [N, prod(...)], a pure row-major reshape.
template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> unflatten(const Tensor<Scalar>& x, const Shape& shape);

/// Stacks along the channel axis, a first then b.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> concat_channels_backward(const Tensor<Scalar>& grad_out,
                                                                    Index channels_a);

/// Row-wise softmax over [N,C] with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits);

/// Gradient w.r.t. the logits given the gradient w.r.t. the softmax output.
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& probs);

}  // namespace dtk
