#include "dtk/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "dtk/parallel.hpp"

namespace dtk {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be at least 1");
  if (!(plateau_factor > 0 && plateau_factor < 1)) {
    throw ConfigError("plateau_factor must lie in (0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon >= 0)) throw ConfigError("adam epsilon must be nonnegative");
  augmentation.validate();
}

namespace {

void check_labels(Index rows, Index classes, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != rows) {
    throw InputError("got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= classes) {
      throw InputError("label " + std::to_string(labels[n]) + " at row " + std::to_string(n) +
                       " outside [0," + std::to_string(classes) + ")");
    }
  }
}

template <typename Scalar>
void check_matrix(const Tensor<Scalar>& probs, const char* what) {
  if (probs.rank() != 2) {
    throw ShapeError(std::string(what) + " expects [N,C] probabilities, got " +
                     shape_string(probs.shape()));
  }
}

}  // namespace

template <typename Scalar>
LossResult<Scalar> cross_entropy(const Tensor<Scalar>& probs, std::span<const int> labels) {
  check_matrix(probs, "cross_entropy");
  const Index N = probs.dim(0), C = probs.dim(1);
  check_labels(N, C, labels);
  if (N == 0) throw InputError("cross_entropy of an empty batch");
  const auto P = probs.matrix(N, C);
  for (Index n = 0; n < N; ++n) {
    double row = 0;
    for (Index c = 0; c < C; ++c) row += static_cast<double>(P(n, c));
    if (!(std::abs(row - 1.0) <= kProbabilityRowTolerance)) {
      throw InputError("probability row " + std::to_string(n) + " sums to " + std::to_string(row));
    }
  }

  LossResult<Scalar> out;
  out.grad_logits = probs;
  auto G = out.grad_logits.matrix(N, C);
  double total = 0;
  for (Index n = 0; n < N; ++n) {
    const Index y = labels[static_cast<std::size_t>(n)];
    // Clamp at the smallest normal value so a saturated softmax stays finite.
    const double p = std::max(static_cast<double>(P(n, y)),
                              static_cast<double>(std::numeric_limits<Scalar>::min()));
    total -= std::log(p);
    G(n, y) -= Scalar(1);
  }
  if (N != 1) out.grad_logits.vec() /= static_cast<Scalar>(N);
  out.loss = total / static_cast<double>(N);
  return out;
}

template <typename Scalar>
double accuracy(const Tensor<Scalar>& probs, std::span<const int> labels) {
  check_matrix(probs, "accuracy");
  const Index N = probs.dim(0), C = probs.dim(1);
  check_labels(N, C, labels);
  if (N == 0) return 0;
  const auto P = probs.matrix(N, C);
  Index correct = 0;
  for (Index n = 0; n < N; ++n) {
    Index best = 0;
    for (Index c = 1; c < C; ++c) {
      if (P(n, c) > P(n, best)) best = c;
    }
    correct += best == labels[static_cast<std::size_t>(n)];
  }
  return static_cast<double>(correct) / static_cast<double>(N);
}

template <typename Scalar>
AdamState<Scalar> AdamState<Scalar>::for_graph(const ModelGraph<Scalar>& graph) {
  AdamState s;
  for (const auto& l : graph.layers()) {
    if (!l.has_params() || l.frozen) continue;
    const auto& p = graph.param(l.name);
    s.m[l.name + ".weights"] = Tensor<Scalar>(p.weights.shape());
    s.m[l.name + ".bias"] = Tensor<Scalar>(p.bias.shape());
    s.v[l.name + ".weights"] = Tensor<Scalar>(p.weights.shape());
    s.v[l.name + ".bias"] = Tensor<Scalar>(p.bias.shape());
  }
  return s;
}

template <typename Scalar>
void adam_step(ModelGraph<Scalar>& graph, const ParameterMap<Scalar>& grads,
               AdamState<Scalar>& state, double lr, const AdamConfig& config) {
  if (!(lr > 0)) throw InputError("learning rate must be positive");

  struct Slot {
    Tensor<Scalar>* theta;
    const Tensor<Scalar>* grad;
    Tensor<Scalar>* m;
    Tensor<Scalar>* v;
  };
  std::vector<Slot> slots;
  for (const auto& [layer, g] : grads) {
    if (!graph.contains(layer)) throw StateError("gradient for unknown layer '" + layer + "'");
    if (graph.is_frozen(layer)) {
      throw StateError("gradient supplied for frozen layer '" + layer + "'");
    }
    auto& p = graph.param(layer);
    for (auto [suffix, theta, grad] :
         {std::tuple{".weights", &p.weights, &g.weights}, std::tuple{".bias", &p.bias, &g.bias}}) {
      const std::string name = layer + suffix;
      const auto mi = state.m.find(name);
      const auto vi = state.v.find(name);
      if (mi == state.m.end() || vi == state.v.end()) {
        throw StateError("no optimizer state for '" + name + "'");
      }
      if (grad->shape() != theta->shape() || mi->second.shape() != theta->shape() ||
          vi->second.shape() != theta->shape()) {
        throw StateError("optimizer state or gradient for '" + name + "' does not match " +
                         shape_string(theta->shape()));
      }
      slots.push_back({theta, grad, &mi->second, &vi->second});
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const Scalar b1 = static_cast<Scalar>(config.beta1);
  const Scalar b2 = static_cast<Scalar>(config.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(config.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(config.beta2, t));
  const Scalar step = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(config.epsilon);
  for (auto& s : slots) {
    auto m = s.m->vec().array();
    auto v = s.v->vec().array();
    const auto g = s.grad->vec().array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g * g;
    s.theta->vec().array() -= step * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor) {
  if (patience < 1) throw ConfigError("plateau patience must be at least 1");
  if (!(factor > 0 && factor < 1)) throw ConfigError("plateau factor must lie in (0, 1)");
}

double PlateauScheduler::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    wait_ = 0;
  } else if (++wait_ >= patience_) {
    lr_ *= factor_;
    wait_ = 0;
  }
  return lr_;
}

std::vector<double> lr_trace(std::span<const double> history, double base_lr, int patience,
                             double factor) {
  PlateauScheduler s(base_lr, patience, factor);
  std::vector<double> out;
  out.reserve(history.size());
  for (double loss : history) out.push_back(s.step(loss));
  return out;
}

template <typename Scalar>
Metrics evaluate(const ModelGraph<Scalar>& graph, const DatasetSplit& split, int batch_size) {
  Metrics m;
  const Index N = split.size();
  if (N == 0) return m;
  double loss = 0, correct = 0;
  std::vector<std::size_t> idx;
  for (Index start = 0; start < N; start += batch_size) {
    const Index end = std::min(N, start + batch_size);
    idx.resize(static_cast<std::size_t>(end - start));
    for (Index i = start; i < end; ++i) idx[static_cast<std::size_t>(i - start)] = i;
    const Tensorf x = gather_batch(split, idx, nullptr, 0, 0);
    const auto probs = graph.forward(x.template cast<Scalar>()).output;
    const std::span<const int> labels(split.labels.data() + start, idx.size());
    const double k = static_cast<double>(idx.size());
    loss += cross_entropy(probs, labels).loss * k;
    correct += accuracy(probs, labels) * k;
  }
  m.loss = loss / static_cast<double>(N);
  m.accuracy = correct / static_cast<double>(N);
  return m;
}

Tensorf gather_batch(const DatasetSplit& split, std::span<const std::size_t> indices,
                     const AugmentConfig* augmentation, std::uint64_t seed, int epoch) {
  Shape shape = split.images.shape();
  const Index sample = shape_product(shape) / std::max<Index>(shape[0], 1);
  Shape sample_shape(shape.begin() + 1, shape.end());
  shape[0] = static_cast<Index>(indices.size());
  Tensorf batch(shape);
  for (std::size_t i : indices) {
    if (static_cast<Index>(i) >= split.size()) throw InputError("batch index out of range");
  }
  parallel_for(indices.size(), [&](std::size_t i) {
    const float* src = split.images.data() + static_cast<Index>(indices[i]) * sample;
    float* dst = batch.data() + static_cast<Index>(i) * sample;
    if (!augmentation) {
      std::copy_n(src, sample, dst);
      return;
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), indices[i]));
    const Tensorf image = Tensorf::from_values(sample_shape, std::span<const float>(src, sample));
    const Tensorf out = augment(image, *augmentation, rng);
    std::copy_n(out.data(), sample, dst);
  });
  return batch;
}

TrainReport fit(ModelGraph<float>& graph, const DataSplits& splits, const TrainConfig& config,
                AdamState<float>* state, const FitHooks& hooks) {
  config.validate();
  graph.validate();
  if (graph.layers().empty() || graph.layers().back().kind != LayerKind::softmax) {
    throw ConfigError("fit needs a graph ending in a softmax layer");
  }
  AdamState<float> local;
  AdamState<float>& adam = state ? *state : local;
  if (adam.m.empty() && adam.t == 0) adam = AdamState<float>::for_graph(graph);

  TrainReport report;
  report.initial_validation = evaluate(graph, splits.validation, config.batch_size);
  PlateauScheduler scheduler(config.base_lr, config.plateau_patience, config.plateau_factor);
  const auto& train = splits.train;
  const std::size_t n = static_cast<std::size_t>(train.size());
  const AugmentConfig* aug = config.augment ? &config.augmentation : nullptr;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng order_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), 0xba7c4));
    const auto order = order_rng.permutation(n);
    const double lr = scheduler.lr();
    double loss_sum = 0, correct = 0;
    int batch_no = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      ++batch_no;
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train.labels[idx[i]];
      const std::string where =
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no);
      try {
        const Tensorf x = gather_batch(train, idx, aug, config.seed, epoch);
        const auto fwd = graph.forward(x);
        const auto loss = cross_entropy(fwd.output, labels);
        if (!std::isfinite(loss.loss)) throw NumericError("loss is " + std::to_string(loss.loss));
        const auto grads = graph.backward(fwd.cache, loss.grad_logits);
        adam_step(graph, grads.params, adam, lr, config.adam);
        const double k = static_cast<double>(idx.size());
        loss_sum += loss.loss * k;
        correct += accuracy(fwd.output, labels) * k;
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.detail());
      }
      if (aug) report.augmented_samples += static_cast<std::int64_t>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = n ? loss_sum / static_cast<double>(n) : 0.0;
    rec.train_acc = n ? correct / static_cast<double>(n) : 0.0;
    const Metrics val = evaluate(graph, splits.validation, config.batch_size);
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    rec.lr = lr;
    report.epochs.push_back(rec);
    report.lr_trace.push_back(scheduler.step(val.loss));
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (splits.test) report.test_acc = evaluate(graph, *splits.test, config.batch_size).accuracy;
  return report;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void write_metrics_csv(const TrainReport& report, std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  const double first_lr = report.epochs.empty() ? 0.0 : report.epochs.front().lr;
  // Epoch 0 carries the untrained validation metrics; it has no training columns.
  out << "0,,," << fmt("%.6f", report.initial_validation.loss) << ','
      << fmt("%.6f", report.initial_validation.accuracy) << ','
      << (report.epochs.empty() ? std::string() : fmt("%.6e", first_lr)) << '\n';
  for (const auto& r : report.epochs) {
    out << r.epoch << ',' << fmt("%.6f", r.train_loss) << ',' << fmt("%.6f", r.train_acc) << ','
        << fmt("%.6f", r.val_loss) << ',' << fmt("%.6f", r.val_acc) << ',' << fmt("%.6e", r.lr)
        << '\n';
  }
  if (report.test_acc) out << "test_acc," << fmt("%.6f", *report.test_acc) << '\n';
}

void write_metrics_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_metrics_csv(report, out);
}

NamedTensorList checkpoint_entries(const ModelGraph<float>& graph, const AdamState<float>& state) {
  NamedTensorList entries = graph_entries(graph);
  for (const auto& [name, m] : state.m) entries.push_back({"adam.m." + name, m});
  for (const auto& [name, v] : state.v) entries.push_back({"adam.v." + name, v});
  entries.push_back({"adam.t", Tensorf::full({}, static_cast<float>(state.t))});
  return entries;
}

template LossResult<float> cross_entropy(const Tensorf&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensord&, std::span<const int>);
template double accuracy(const Tensorf&, std::span<const int>);
template double accuracy(const Tensord&, std::span<const int>);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ModelGraph<float>&, const ParameterMap<float>&, AdamState<float>&, double,
                        const AdamConfig&);
template void adam_step(ModelGraph<double>&, const ParameterMap<double>&, AdamState<double>&,
                        double, const AdamConfig&);
template Metrics evaluate(const ModelGraph<float>&, const DatasetSplit&, int);
template Metrics evaluate(const ModelGraph<double>&, const DatasetSplit&, int);

}  // namespace dtk
