#include "dtk/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dtk/receptive_field.hpp"
#include "dtk/weights_io.hpp"

namespace dtk {

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig c = options.config.empty() ? RunConfig{} : load_run_config(options.config);
  for (const auto& o : options.overrides) apply_override(c, o);
  if (options.data_dir) c.data_dir = *options.data_dir;
  if (options.out_dir) c.out_dir = *options.out_dir;
  if (options.weights) c.weights = *options.weights;
  if (options.seed) c.train.seed = *options.seed;
  c.validate();
  return c;
}

namespace {

CifarRecords head(const CifarRecords& records, Index limit) {
  if (limit == 0 || limit >= records.size()) return records;
  std::vector<std::size_t> idx(static_cast<std::size_t>(limit));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return select(records, idx);
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

ModelGraph<float> build_for(const RunConfig& c) {
  if (c.weights.empty()) return build_vgg<float>(c.arch, {c.train.seed});
  const auto pretrained = read_ntl(c.weights);
  return build_vgg<float>(c.arch, {c.train.seed, &pretrained});
}

}  // namespace

PreparedData prepare_data(const RunConfig& config, bool with_test) {
  const CifarDataset ds = config.dataset == DatasetKind::cifar10 ? load_cifar10(config.data_dir)
                                                                 : load_cifar100(config.data_dir);
  auto [train_rec, val_rec] = split(ds.train, config.train.seed);
  PreparedData out;
  out.splits.train = to_split(head(train_rec, config.train_limit));
  out.splits.validation = to_split(head(val_rec, config.val_limit));
  out.stats = standardize(out.splits.train);
  standardize(out.splits.validation, &out.stats);
  if (with_test) {
    out.splits.test = to_split(head(ds.test, config.test_limit));
    standardize(*out.splits.test, &out.stats);
  }
  return out;
}

int cmd_train(const CommandOptions& options, std::ostream& out) {
  const RunConfig config = resolve_config(options);
  const auto data = prepare_data(config, true);
  auto graph = build_for(config);
  std::filesystem::create_directories(config.out_dir);

  out << "training " << to_string(config.arch.family) << " on " << to_string(config.dataset)
      << ": " << data.splits.train.size() << " train, " << data.splits.validation.size()
      << " val, " << data.splits.test->size() << " test, " << graph.param_count()
      << " parameters\n";
  FitHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "/" << config.train.epochs << " train_loss "
        << fixed6(r.train_loss) << " train_acc " << fixed6(r.train_acc) << " val_loss "
        << fixed6(r.val_loss) << " val_acc " << fixed6(r.val_acc) << std::endl;
  };
  AdamState<float> state;
  const auto report = fit(graph, data.splits, config.train, &state, hooks);

  write_metrics_csv(report, config.out_dir / "metrics.csv");
  write_ntl(config.out_dir / "checkpoint.ntl", checkpoint_entries(graph, state));
  std::ofstream manifest(config.out_dir / "manifest.cfg", std::ios::binary);
  manifest << "# resolved run configuration\n" << to_text(config);
  if (!manifest) throw InputError("cannot write manifest in '" + config.out_dir.string() + "'");
  if (report.test_acc) out << "test_acc " << fixed6(*report.test_acc) << "\n";
  out << "wrote " << (config.out_dir / "metrics.csv").string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommandOptions& options, std::ostream& out) {
  CommandOptions resolved = options;
  resolved.weights.reset();  // the checkpoint is loaded below, not as pretrained conv weights
  RunConfig config = resolve_config(resolved);
  config.weights.clear();
  if (options.split != "train" && options.split != "val" && options.split != "test") {
    throw ConfigError("split must be train, val, or test, got '" + options.split + "'");
  }
  auto graph = build_vgg<float>(config.arch, {config.train.seed});
  std::string source = "random-init";
  if (options.weights) {
    const auto entries = read_ntl(*options.weights);
    load_into(graph, entries, LoadOptions{true, false, false});
    source = options.weights->string();
  }
  const auto data = prepare_data(config, options.split == "test");
  const DatasetSplit& split = options.split == "train" ? data.splits.train
                              : options.split == "val" ? data.splits.validation
                                                       : *data.splits.test;
  const Metrics m = evaluate(graph, split, config.train.batch_size);
  out << options.split << " accuracy " << fixed6(m.accuracy) << " loss " << fixed6(m.loss) << " ("
      << split.size() << " records)\n";

  std::filesystem::create_directories(config.out_dir);
  const auto csv = config.out_dir / "eval.csv";
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream log(csv, std::ios::binary | std::ios::app);
  if (fresh) log << "weights,split,records,loss,accuracy\n";
  log << source << ',' << options.split << ',' << split.size() << ',' << fixed6(m.loss) << ','
      << fixed6(m.accuracy) << '\n';
  return kExitOk;
}

int cmd_rf(const CommandOptions& options, std::ostream& out) {
  if (!options.layers.empty()) {
    const auto schedule = parse_schedule(options.layers);
    std::vector<RfRow> rows;
    LayerSchedule prefix;
    for (const auto& step : schedule) {
      prefix.push_back(step);
      const auto m = coverage(prefix);
      rows.push_back({format_layer_step(step), m.span_h(), m.span_w(), m.density(), 1});
    }
    const auto mask = coverage(schedule);
    write_rf_csv(rows, out);
    out << "span " << mask.span_h() << "x" << mask.span_w() << " density " << fixed6(mask.density())
        << (mask.density() < 1.0 ? " gridding" : " full") << "\n";
    if (mask.span_h() <= 64 && mask.span_w() <= 64) out << render_text(mask);
    if (options.out_dir) {
      std::filesystem::create_directories(*options.out_dir);
      std::ofstream csv(*options.out_dir / "rf.csv", std::ios::binary);
      write_rf_csv(rows, csv);
      std::ofstream text(*options.out_dir / "rf_mask.txt", std::ios::binary);
      text << render_text(mask);
      write_pgm(mask, *options.out_dir / "rf_mask.pgm");
    }
    return kExitOk;
  }
  if (options.config.empty() && options.overrides.empty()) {
    throw ConfigError("rf needs --layers or --config");
  }
  const RunConfig config = resolve_config(options);
  ArchConfig narrow = config.arch;
  narrow.width_divisor = 512;
  const auto graph = build_vgg<float>(narrow, {0});
  const auto rows = rf_report(graph);
  write_rf_csv(rows, out);
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    std::ofstream csv(*options.out_dir / "rf.csv", std::ios::binary);
    write_rf_csv(rows, csv);
    for (int b = 1; b <= 5; ++b) {
      write_pgm(rf_mask(graph, block_output_name(b)),
                *options.out_dir / (block_output_name(b) + ".pgm"));
    }
  }
  return kExitOk;
}

int cmd_catalog(std::ostream& out) {
  out << std::left << std::setw(28) << "network";
  for (int b = 1; b <= 5; ++b) out << std::setw(8) << ("block" + std::to_string(b));
  out << "config\n";
  for (const auto& row : table1_catalog(10)) {
    out << std::setw(28) << row.label;
    for (const auto& plan : row.config.blocks) out << std::setw(8) << format_block_plan(plan);
    out << row.slug << "_{c10,c100}.cfg\n";
  }
  return kExitOk;
}

int cmd_inspect(const std::filesystem::path& file, std::ostream& out) {
  const auto entries = read_ntl(file);
  out << entries.size() << (entries.size() == 1 ? " entry\n" : " entries\n");
  for (const auto& e : entries) {
    out << e.name << ' ' << shape_string(e.tensor.shape()) << ' ' << e.tensor.size() << '\n';
  }
  return kExitOk;
}

int cmd_write_configs(const std::filesystem::path& dir, std::ostream& out) {
  std::filesystem::create_directories(dir);
  for (int classes : {10, 100}) {
    for (const auto& row : table1_catalog(classes)) {
      const RunConfig c = catalog_run_config(row);
      const auto path = dir / (row.slug + (classes == 10 ? "_c10.cfg" : "_c100.cfg"));
      std::ofstream f(path, std::ios::binary);
      f << "# " << row.label << ", " << (classes == 10 ? "CIFAR-10" : "CIFAR-100") << "\n"
        << to_text(c);
      if (!f) throw InputError("cannot write '" + path.string() + "'");
      out << path.string() << "\n";
    }
  }
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const StateError*>(&e)) {
    return kExitRuntime;
  }
  if (dynamic_cast<const Error*>(&e)) return kExitUsage;
  return kExitRuntime;
}

int run_guarded(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const std::exception& e) {
    err << "dtk: " << e.what() << std::endl;
    return exit_code_for(e);
  }
}

}  // namespace dtk
