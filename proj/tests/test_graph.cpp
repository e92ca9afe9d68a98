#include "doctest.h"
#include "dtk/graph.hpp"
#include "oracles.hpp"

using namespace dtk;
using namespace dtk::testing;

namespace {

// conv(r=2) -> relu -> conv -> pool -> flatten -> dense, plus a final softmax.
ModelGraph<double> toy_graph(Rng& rng) {
  ModelGraph<double> g({2, 6, 6});
  ConvSpec c1;
  c1.in_channels = 2;
  c1.out_channels = 3;
  c1.dilation_h = c1.dilation_w = 2;
  c1.with_same_padding();
  ConvSpec c2;
  c2.in_channels = 3;
  c2.out_channels = 2;
  c2.with_same_padding();
  g.add_conv("conv1", "input", c1);
  g.add_relu("relu1", "conv1");
  g.add_conv("conv2", "relu1", c2);
  g.add_maxpool("pool", "conv2", PoolSpec{2, 2});
  g.add_flatten("flatten", "pool");
  g.add_dense("fc", "flatten", 4);
  g.add_softmax("softmax", "fc");
  g.init_glorot_uniform(rng);
  for (auto& [name, p] : g.params()) {
    for (double& b : p.bias.span()) b = rng.uniform(-0.1, 0.1);
  }
  return g;
}

// Cross-entropy of the softmax output against fixed labels.
double ce_loss(const Tensord& probs, const std::vector<int>& labels) {
  double loss = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    loss -= std::log(probs(static_cast<Index>(n), labels[n]));
  }
  return loss / static_cast<double>(labels.size());
}

Tensord fused_grad(const Tensord& probs, const std::vector<int>& labels) {
  Tensord g = probs;
  for (std::size_t n = 0; n < labels.size(); ++n) g(static_cast<Index>(n), labels[n]) -= 1;
  return mul_scalar(g, 1.0 / static_cast<double>(labels.size()));
}

}  // namespace

TEST_CASE("softmax-only graph is a passthrough composition") {
  ModelGraph<double> g({5});
  g.add_softmax("softmax", "input");
  Rng rng(1);
  const auto z = random_tensor<double>({3, 5}, rng);
  const auto r = g.forward(z);
  CHECK(r.output == softmax(z));
  CHECK(r.logits == z);
}

TEST_CASE("layer construction errors") {
  ModelGraph<float> g({3, 8, 8});
  ConvSpec c;
  c.in_channels = 3;
  c.out_channels = 4;
  g.add_conv("conv", "input", c);
  CHECK_THROWS_AS(g.add_relu("conv", "conv"), ConfigError);
  CHECK_THROWS_AS(g.add_relu("r", "missing"), ConfigError);
  CHECK_THROWS_AS(g.add_maxpool("pool", "conv", PoolSpec{3, 2}), ShapeError);
  CHECK_THROWS_AS(g.add_dense("fc", "conv", 4), ShapeError);
  ConvSpec wrong = c;
  wrong.in_channels = 5;
  CHECK_THROWS_AS(g.add_conv("conv2", "conv", wrong), ShapeError);
  try {
    g.add_maxpool("badpool", "conv", PoolSpec{4, 3});
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("badpool") != std::string::npos);
  }
  g.add_relu("relu", "conv");
  g.add_relu("dangling", "conv");
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK_THROWS_AS(g.forward(Tensorf::zeros({1, 3, 8, 8})), ConfigError);
}

TEST_CASE("forward rejects an incompatible input") {
  Rng rng(2);
  auto g = toy_graph(rng);
  CHECK_THROWS_AS(g.forward(Tensord::zeros({1, 2, 5, 6})), ShapeError);
  CHECK_THROWS_AS(g.forward(Tensord::zeros({1, 3, 6, 6})), ShapeError);
}

TEST_CASE("whole-model gradient matches finite differences") {
  Rng rng(3);
  auto g = toy_graph(rng);
  const auto x = random_tensor<double>({2, 2, 6, 6}, rng);
  const std::vector<int> labels{1, 3};

  const auto fwd = g.forward(x);
  const auto grads = g.backward(fwd.cache, fused_grad(fwd.output, labels));
  CHECK(grads.params.size() == 3);

  for (const auto& name : g.parameter_names()) {
    const auto dot = name.rfind('.');
    const std::string layer = name.substr(0, dot);
    const Tensord& analytic = name.substr(dot + 1) == "weights" ? grads.params.at(layer).weights
                                                                 : grads.params.at(layer).bias;
    const Tensord base = g.tensor(name);
    const auto numeric = numeric_gradient(
        [&](const Tensord& p) {
          ModelGraph<double> probe = g;
          probe.tensor(name) = p;
          return ce_loss(probe.forward(x).output, labels);
        },
        base);
    CAPTURE(name);
    CHECK(relative_error(analytic, numeric) < 1e-5);
  }
  const auto numeric_x = numeric_gradient(
      [&](const Tensord& p) { return ce_loss(g.forward(p).output, labels); }, x);
  CHECK(relative_error(grads.input, numeric_x) < 1e-5);
}

TEST_CASE("frozen layers get no gradients but still pass gradients upstream") {
  Rng rng(4);
  auto g = toy_graph(rng);
  const auto x = random_tensor<double>({1, 2, 6, 6}, rng);
  const auto fwd = g.forward(x);
  const auto seed = fused_grad(fwd.output, {2});
  const auto open = g.backward(fwd.cache, seed);

  g.set_frozen({"conv1", "conv2", "fc"}, true);
  const auto frozen_fwd = g.forward(x);
  CHECK(frozen_fwd.output == fwd.output);
  const auto closed = g.backward(frozen_fwd.cache, seed);
  CHECK(closed.params.empty());
  CHECK(closed.input == open.input);

  g.set_frozen({"conv2"}, false);
  const auto partial = g.backward(g.forward(x).cache, seed);
  CHECK(partial.params.size() == 1);
  CHECK(partial.params.count("conv2") == 1);

  g.set_frozen({"conv1", "fc"}, false);
  for (const auto& l : g.layers()) CHECK_FALSE(l.frozen);
  CHECK_THROWS_AS(g.set_frozen({"nope"}, true), LookupError);
  CHECK_THROWS_AS(g.set_frozen({"relu1"}, true), InputError);
}

TEST_CASE("backward validates its cache") {
  Rng rng(5);
  auto g = toy_graph(rng);
  auto other = toy_graph(rng);
  const auto x = random_tensor<double>({1, 2, 6, 6}, rng);
  const auto fwd = other.forward(x);
  CHECK_THROWS_AS(g.backward(ActivationCache<double>{}, Tensord::zeros({1, 4})), StateError);
  CHECK_THROWS_AS(g.backward(fwd.cache, Tensord::zeros({1, 4})), StateError);
  CHECK_THROWS_AS(other.backward(fwd.cache, Tensord::zeros({1, 3})), ShapeError);
}

TEST_CASE("identical concatenated branches receive identical gradients") {
  ModelGraph<double> g({1, 4, 4});
  ConvSpec c;
  c.out_channels = 2;
  c.with_same_padding();
  g.add_conv("a", "input", c);
  g.add_conv("b", "input", c);
  g.add_concat("cat", "a", "b");
  g.add_flatten("flat", "cat");
  g.add_dense("fc", "flat", 3);

  Rng rng(6);
  g.init_glorot_uniform(rng);
  g.param("b") = g.param("a");
  // Mirror the dense rows so the head treats both branches alike.
  auto& w = g.param("fc").weights;
  const Index half = w.dim(0) / 2;
  for (Index i = 0; i < half; ++i)
    for (Index j = 0; j < 3; ++j) w(half + i, j) = w(i, j);

  const auto x = random_tensor<double>({2, 1, 4, 4}, rng);
  const auto fwd = g.forward(x);
  const auto grads = g.backward(fwd.cache, random_tensor<double>({2, 3}, rng));
  CHECK(grads.params.at("a").weights == grads.params.at("b").weights);
  CHECK(grads.params.at("a").bias == grads.params.at("b").bias);
}

TEST_CASE("forward is deterministic") {
  Rng rng(8);
  auto g = toy_graph(rng);
  const auto x = random_tensor<double>({3, 2, 6, 6}, rng);
  CHECK(g.forward(x).output == g.forward(x).output);
  CHECK(g.param_count() == (3 * 2 * 9 + 3) + (2 * 3 * 9 + 2) + (18 * 4 + 4));
}
