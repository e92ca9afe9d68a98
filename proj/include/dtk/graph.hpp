#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtk/ops.hpp"
#include "dtk/random.hpp"
#include "dtk/tensor.hpp"

namespace dtk {

enum class LayerKind { conv, maxpool, relu, dense, flatten, concat, softmax };

const char* to_string(LayerKind kind);

/// One node of the layer DAG. Only the spec matching `kind` is read.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  ConvSpec conv;
  PoolSpec pool;
  Index dense_units = 0;
  std::vector<std::string> inputs;
  bool frozen = false;

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
};

template <typename Scalar>
struct Parameter {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
using ParameterMap = std::map<std::string, Parameter<Scalar>>;

/// Per-call activation record; backward needs the one produced by the matching forward.
template <typename Scalar>
struct ActivationCache {
  std::uint64_t graph_id = 0;
  std::uint64_t structure_version = 0;
  Tensor<Scalar> input;
  std::vector<Tensor<Scalar>> outputs;
  std::vector<std::vector<Index>> argmax;

  bool empty() const { return outputs.empty(); }
};

template <typename Scalar>
struct ForwardResult {
  /// Output of the graph's final layer (probabilities when it is a softmax).
  Tensor<Scalar> output;
  /// Input of the final softmax, or the output itself for graphs without one.
  Tensor<Scalar> logits;
  ActivationCache<Scalar> cache;
};

template <typename Scalar>
struct Gradients {
  /// Keyed by layer name; present exactly for non-frozen parameterized layers.
  ParameterMap<Scalar> params;
  Tensor<Scalar> input;
};

/// Layer DAG over batched inputs with a parameter registry. Layers are
/// appended in topological order; the last appended layer is the output and
/// every other layer must feed some later layer.
template <typename Scalar>
class ModelGraph {
 public:
  static constexpr const char* kInputName = "input";

  /// `sample_shape` excludes the batch axis ([C, H, W] for images); it fixes
  /// every downstream activation shape.
  explicit ModelGraph(Shape sample_shape);

  /// Appends a layer, infers its output shape, and allocates zero parameters.
  const LayerSpec& add(LayerSpec layer);

  const LayerSpec& add_conv(const std::string& name, const std::string& input, const ConvSpec& spec,
                            bool frozen = false);
  const LayerSpec& add_maxpool(const std::string& name, const std::string& input,
                               const PoolSpec& spec);
  const LayerSpec& add_relu(const std::string& name, const std::string& input);
  const LayerSpec& add_dense(const std::string& name, const std::string& input, Index units,
                             bool frozen = false);
  const LayerSpec& add_flatten(const std::string& name, const std::string& input);
  const LayerSpec& add_concat(const std::string& name, const std::string& a, const std::string& b);
  const LayerSpec& add_softmax(const std::string& name, const std::string& input);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Shape& sample_shape() const { return sample_shape_; }
  /// Per-sample output shape of a layer (no batch axis).
  const Shape& output_shape(const std::string& name) const;

  ParameterMap<Scalar>& params() { return params_; }
  const ParameterMap<Scalar>& params() const { return params_; }
  Parameter<Scalar>& param(const std::string& layer_name);
  const Parameter<Scalar>& param(const std::string& layer_name) const;

  /// Looks up "layer.weights" / "layer.bias".
  Tensor<Scalar>& tensor(const std::string& qualified_name);
  const Tensor<Scalar>& tensor(const std::string& qualified_name) const;
  /// Qualified parameter names in layer order, weights before bias.
  std::vector<std::string> parameter_names() const;

  ModelGraph& set_frozen(const std::vector<std::string>& layer_names, bool flag);
  bool is_frozen(const std::string& layer_name) const { return layer(layer_name).frozen; }

  Index param_count() const;

  /// Throws unless the graph has exactly one sink.
  void validate() const;

  ForwardResult<Scalar> forward(const Tensor<Scalar>& input) const;
  Gradients<Scalar> backward(const ActivationCache<Scalar>& cache,
                             const Tensor<Scalar>& grad_logits) const;

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void init_glorot_uniform(Rng& rng);

 private:
  std::size_t position(const std::string& name) const;
  const Shape& input_shape_of(const std::string& name) const;

  static std::uint64_t next_id();

  std::uint64_t id_;
  std::uint64_t structure_version_ = 0;
  Shape sample_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::map<std::string, std::size_t> index_;
  ParameterMap<Scalar> params_;
};

}  // namespace dtk
