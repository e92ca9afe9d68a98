#include "dtk/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <set>

namespace dtk {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::concat: return "concat";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

namespace {

std::pair<std::string, std::string> split_qualified(const std::string& qualified) {
  const auto dot = qualified.rfind('.');
  if (dot == std::string::npos) throw LookupError("parameter name without suffix: " + qualified);
  return {qualified.substr(0, dot), qualified.substr(dot + 1)};
}

}  // namespace

template <typename Scalar>
std::uint64_t ModelGraph<Scalar>::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}

template <typename Scalar>
ModelGraph<Scalar>::ModelGraph(Shape sample_shape)
    : id_(next_id()), sample_shape_(std::move(sample_shape)) {
  if (sample_shape_.empty()) throw ShapeError("graph input needs a per-sample shape");
}

template <typename Scalar>
std::size_t ModelGraph<Scalar>::position(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("no layer named '" + name + "'");
  return it->second;
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::layer(const std::string& name) const {
  return layers_[position(name)];
}

template <typename Scalar>
const Shape& ModelGraph<Scalar>::output_shape(const std::string& name) const {
  return shapes_[position(name)];
}

template <typename Scalar>
const Shape& ModelGraph<Scalar>::input_shape_of(const std::string& name) const {
  if (name == kInputName) return sample_shape_;
  return shapes_[position(name)];
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add(LayerSpec layer) {
  if (layer.name.empty() || layer.name == kInputName || index_.count(layer.name)) {
    throw ConfigError("layer name '" + layer.name + "' is empty, reserved, or already used");
  }
  const std::size_t arity = layer.kind == LayerKind::concat ? 2 : 1;
  if (layer.inputs.size() != arity) {
    throw ConfigError("layer '" + layer.name + "' (" + to_string(layer.kind) + ") needs " +
                      std::to_string(arity) + " input(s)");
  }
  for (const auto& in : layer.inputs) {
    if (in != kInputName && !index_.count(in)) {
      throw ConfigError("layer '" + layer.name + "' reads unknown layer '" + in + "'");
    }
  }
  if (layer.frozen && !layer.has_params()) {
    throw ConfigError("layer '" + layer.name + "' has no parameters to freeze");
  }

  const Shape& in = input_shape_of(layer.inputs[0]);
  Shape out;
  Parameter<Scalar> param;
  try {
    switch (layer.kind) {
      case LayerKind::conv: {
        const ConvSpec& c = layer.conv;
        c.validate();
        if (in.size() != 3 || in[0] != c.in_channels) {
          throw ShapeError("conv input " + shape_string(in) + " does not have " +
                           std::to_string(c.in_channels) + " channels");
        }
        out = {c.out_channels, c.output_h(in[1]), c.output_w(in[2])};
        param.weights = Tensor<Scalar>({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
        param.bias = Tensor<Scalar>({c.out_channels});
        break;
      }
      case LayerKind::maxpool:
        if (in.size() != 3) throw ShapeError("maxpool needs a [C,H,W] input, got " + shape_string(in));
        out = {in[0], layer.pool.output_extent(in[1]), layer.pool.output_extent(in[2])};
        break;
      case LayerKind::relu:
        out = in;
        break;
      case LayerKind::dense: {
        if (in.size() != 1) throw ShapeError("dense needs a flat input, got " + shape_string(in));
        if (layer.dense_units < 1) throw ShapeError("dense needs at least one unit");
        out = {layer.dense_units};
        param.weights = Tensor<Scalar>({in[0], layer.dense_units});
        param.bias = Tensor<Scalar>({layer.dense_units});
        break;
      }
      case LayerKind::flatten:
        out = {shape_product(in)};
        break;
      case LayerKind::concat: {
        const Shape& other = input_shape_of(layer.inputs[1]);
        if (in.size() != 3 || other.size() != 3 || in[1] != other[1] || in[2] != other[2]) {
          throw ShapeError("concat operands " + shape_string(in) + " and " + shape_string(other) +
                           " disagree spatially");
        }
        out = {in[0] + other[0], in[1], in[2]};
        break;
      }
      case LayerKind::softmax:
        if (in.size() != 1) throw ShapeError("softmax needs a flat input, got " + shape_string(in));
        out = in;
        break;
    }
  } catch (const ShapeError& e) {
    throw ShapeError("layer '" + layer.name + "': " + e.detail());
  }

  if (layer.has_params()) params_[layer.name] = std::move(param);
  index_[layer.name] = layers_.size();
  shapes_.push_back(std::move(out));
  layers_.push_back(std::move(layer));
  ++structure_version_;
  return layers_.back();
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_conv(const std::string& name, const std::string& input,
                                              const ConvSpec& spec, bool frozen) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::conv;
  l.conv = spec;
  l.inputs = {input};
  l.frozen = frozen;
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_maxpool(const std::string& name, const std::string& input,
                                                 const PoolSpec& spec) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::maxpool;
  l.pool = spec;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_relu(const std::string& name, const std::string& input) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::relu;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_dense(const std::string& name, const std::string& input,
                                               Index units, bool frozen) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::dense;
  l.dense_units = units;
  l.inputs = {input};
  l.frozen = frozen;
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_flatten(const std::string& name, const std::string& input) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::flatten;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_concat(const std::string& name, const std::string& a,
                                                const std::string& b) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::concat;
  l.inputs = {a, b};
  return add(std::move(l));
}

template <typename Scalar>
const LayerSpec& ModelGraph<Scalar>::add_softmax(const std::string& name, const std::string& input) {
  LayerSpec l;
  l.name = name;
  l.kind = LayerKind::softmax;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename Scalar>
Parameter<Scalar>& ModelGraph<Scalar>::param(const std::string& layer_name) {
  const auto it = params_.find(layer_name);
  if (it == params_.end()) throw LookupError("layer '" + layer_name + "' has no parameters");
  return it->second;
}

template <typename Scalar>
const Parameter<Scalar>& ModelGraph<Scalar>::param(const std::string& layer_name) const {
  const auto it = params_.find(layer_name);
  if (it == params_.end()) throw LookupError("layer '" + layer_name + "' has no parameters");
  return it->second;
}

template <typename Scalar>
Tensor<Scalar>& ModelGraph<Scalar>::tensor(const std::string& qualified_name) {
  const auto [layer_name, part] = split_qualified(qualified_name);
  Parameter<Scalar>& p = param(layer_name);
  if (part == "weights") return p.weights;
  if (part == "bias") return p.bias;
  throw LookupError("unknown parameter part in '" + qualified_name + "'");
}

template <typename Scalar>
const Tensor<Scalar>& ModelGraph<Scalar>::tensor(const std::string& qualified_name) const {
  return const_cast<ModelGraph*>(this)->tensor(qualified_name);
}

template <typename Scalar>
std::vector<std::string> ModelGraph<Scalar>::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& l : layers_) {
    if (!l.has_params()) continue;
    names.push_back(l.name + ".weights");
    names.push_back(l.name + ".bias");
  }
  return names;
}

template <typename Scalar>
ModelGraph<Scalar>& ModelGraph<Scalar>::set_frozen(const std::vector<std::string>& layer_names,
                                                   bool flag) {
  for (const auto& name : layer_names) {
    if (!layers_[position(name)].has_params()) {
      throw InputError("layer '" + name + "' has no parameters to freeze");
    }
  }
  for (const auto& name : layer_names) layers_[position(name)].frozen = flag;
  return *this;
}

template <typename Scalar>
Index ModelGraph<Scalar>::param_count() const {
  Index total = 0;
  for (const auto& [name, p] : params_) total += p.weights.size() + p.bias.size();
  return total;
}

template <typename Scalar>
void ModelGraph<Scalar>::validate() const {
  if (layers_.empty()) throw ConfigError("graph has no layers");
  std::set<std::string> consumed;
  for (const auto& l : layers_) consumed.insert(l.inputs.begin(), l.inputs.end());
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (!consumed.count(layers_[i].name)) {
      throw ConfigError("layer '" + layers_[i].name + "' is a second output; graphs have one sink");
    }
  }
}

template <typename Scalar>
ForwardResult<Scalar> ModelGraph<Scalar>::forward(const Tensor<Scalar>& input) const {
  validate();
  if (input.rank() != static_cast<Index>(sample_shape_.size()) + 1 ||
      !std::equal(sample_shape_.begin(), sample_shape_.end(), input.shape().begin() + 1)) {
    throw ShapeError("graph input " + shape_string(input.shape()) + " does not match [N," +
                     shape_string(sample_shape_).substr(1));
  }
  ForwardResult<Scalar> result;
  ActivationCache<Scalar>& cache = result.cache;
  cache.graph_id = id_;
  cache.structure_version = structure_version_;
  cache.input = input;
  cache.outputs.resize(layers_.size());
  cache.argmax.resize(layers_.size());

  auto value = [&](const std::string& name) -> const Tensor<Scalar>& {
    return name == kInputName ? cache.input : cache.outputs[index_.at(name)];
  };

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Tensor<Scalar>& x = value(l.inputs[0]);
    try {
      switch (l.kind) {
        case LayerKind::conv: {
          const auto& p = params_.at(l.name);
          cache.outputs[i] = conv2d_forward(x, p.weights, p.bias, l.conv);
          break;
        }
        case LayerKind::maxpool: {
          auto pooled = maxpool_forward(x, l.pool);
          cache.outputs[i] = std::move(pooled.output);
          cache.argmax[i] = std::move(pooled.argmax);
          break;
        }
        case LayerKind::relu:
          cache.outputs[i] = relu_forward(x);
          break;
        case LayerKind::dense: {
          const auto& p = params_.at(l.name);
          cache.outputs[i] = dense_forward(x, p.weights, p.bias);
          break;
        }
        case LayerKind::flatten:
          cache.outputs[i] = flatten(x);
          break;
        case LayerKind::concat:
          cache.outputs[i] = concat_channels(x, value(l.inputs[1]));
          break;
        case LayerKind::softmax:
          cache.outputs[i] = softmax(x);
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.detail());
    } catch (const NumericError& e) {
      throw NumericError("layer '" + l.name + "': " + e.detail());
    }
  }

  result.output = cache.outputs.back();
  const LayerSpec& last = layers_.back();
  result.logits = last.kind == LayerKind::softmax ? value(last.inputs[0]) : result.output;
  return result;
}

template <typename Scalar>
Gradients<Scalar> ModelGraph<Scalar>::backward(const ActivationCache<Scalar>& cache,
                                               const Tensor<Scalar>& grad_logits) const {
  if (cache.empty()) throw StateError("backward called without a forward cache");
  if (cache.graph_id != id_ || cache.structure_version != structure_version_ ||
      cache.outputs.size() != layers_.size()) {
    throw StateError("activation cache does not belong to this graph");
  }

  std::vector<std::optional<Tensor<Scalar>>> grads(layers_.size());
  std::optional<Tensor<Scalar>> grad_input;

  auto value = [&](const std::string& name) -> const Tensor<Scalar>& {
    return name == kInputName ? cache.input : cache.outputs[index_.at(name)];
  };
  auto accumulate = [&](const std::string& name, Tensor<Scalar> g) {
    auto& slot = name == kInputName ? grad_input : grads[index_.at(name)];
    if (slot) {
      slot->vec() += g.vec();
    } else {
      slot = std::move(g);
    }
  };

  // The fused softmax + cross-entropy gradient enters below a final softmax.
  std::size_t start = layers_.size();
  const LayerSpec& last = layers_.back();
  const Tensor<Scalar>& seed_target =
      last.kind == LayerKind::softmax ? value(last.inputs[0]) : cache.outputs.back();
  if (grad_logits.shape() != seed_target.shape()) {
    throw ShapeError("backward: gradient " + shape_string(grad_logits.shape()) +
                     " does not match logits " + shape_string(seed_target.shape()));
  }
  if (last.kind == LayerKind::softmax) {
    accumulate(last.inputs[0], grad_logits);
    start = layers_.size() - 1;
  } else {
    grads.back() = grad_logits;
  }

  Gradients<Scalar> out;
  for (std::size_t i = start; i-- > 0;) {
    if (!grads[i]) continue;
    const LayerSpec& l = layers_[i];
    const Tensor<Scalar>& g = *grads[i];
    const Tensor<Scalar>& x = value(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& p = params_.at(l.name);
        auto cg = conv2d_backward(g, x, p.weights, l.conv, {true, !l.frozen});
        if (!l.frozen) out.params[l.name] = {std::move(cg.weights), std::move(cg.bias)};
        accumulate(l.inputs[0], std::move(cg.input));
        break;
      }
      case LayerKind::maxpool:
        accumulate(l.inputs[0], maxpool_backward(g, cache.argmax[i], x.shape()));
        break;
      case LayerKind::relu:
        accumulate(l.inputs[0], relu_backward(g, x));
        break;
      case LayerKind::dense: {
        const auto& p = params_.at(l.name);
        auto dg = dense_backward(g, x, p.weights);
        if (!l.frozen) out.params[l.name] = {std::move(dg.weights), std::move(dg.bias)};
        accumulate(l.inputs[0], std::move(dg.input));
        break;
      }
      case LayerKind::flatten:
        accumulate(l.inputs[0], unflatten(g, x.shape()));
        break;
      case LayerKind::concat: {
        auto [ga, gb] = concat_channels_backward(g, x.dim(1));
        accumulate(l.inputs[0], std::move(ga));
        accumulate(l.inputs[1], std::move(gb));
        break;
      }
      case LayerKind::softmax:
        accumulate(l.inputs[0], softmax_backward(g, cache.outputs[i]));
        break;
    }
    grads[i].reset();
  }
  out.input = grad_input ? std::move(*grad_input) : Tensor<Scalar>(cache.input.shape());
  return out;
}

template <typename Scalar>
void ModelGraph<Scalar>::init_glorot_uniform(Rng& rng) {
  for (const auto& l : layers_) {
    if (!l.has_params()) continue;
    Parameter<Scalar>& p = params_.at(l.name);
    double fan_in, fan_out;
    if (l.kind == LayerKind::conv) {
      const double taps = static_cast<double>(l.conv.kernel_h * l.conv.kernel_w);
      fan_in = static_cast<double>(l.conv.in_channels) * taps;
      fan_out = static_cast<double>(l.conv.out_channels) * taps;
    } else {
      fan_in = static_cast<double>(p.weights.dim(0));
      fan_out = static_cast<double>(p.weights.dim(1));
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Scalar& w : p.weights.span()) w = static_cast<Scalar>(rng.uniform(-limit, limit));
    p.bias.vec().setZero();
  }
}

template class ModelGraph<float>;
template class ModelGraph<double>;

}  // namespace dtk
