#include "dtk/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dtk {

const char* to_string(DatasetKind kind) {
  return kind == DatasetKind::cifar10 ? "cifar10" : "cifar100";
}

void RunConfig::validate() const {
  arch.validate();
  train.validate();
  const int classes = dataset == DatasetKind::cifar10 ? 10 : 100;
  if (arch.num_classes != classes) {
    throw ConfigError("dataset " + std::string(to_string(dataset)) + " has " +
                      std::to_string(classes) + " classes but num_classes is " +
                      std::to_string(arch.num_classes));
  }
  if (train_limit < 0 || val_limit < 0 || test_limit < 0) {
    throw ConfigError("split limits must be nonnegative");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not an integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not true/false");
}

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
Field make(std::string name, std::string help, Get ref) {
  Field f;
  f.key = {name, std::move(help)};
  f.set = [name, ref](RunConfig& c, const std::string& v) {
    auto& slot = ref(c);
    using T = std::decay_t<decltype(slot)>;
    if constexpr (std::is_same_v<T, double>) {
      slot = parse_double(name, v);
    } else if constexpr (std::is_same_v<T, bool>) {
      slot = parse_bool(name, v);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      slot = v;
    } else {
      slot = parse_int<T>(name, v);
    }
  };
  f.get = [ref](const RunConfig& c) {
    const auto& slot = ref(const_cast<RunConfig&>(c));
    using T = std::decay_t<decltype(slot)>;
    if constexpr (std::is_same_v<T, double>) {
      return format_double(slot);
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(slot ? "true" : "false");
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return slot.string();
    } else {
      return std::to_string(slot);
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back({{"family", "vgg16 or vgg19"},
                 [](RunConfig& c, const std::string& v) { c.arch.family = parse_family(v); },
                 [](const RunConfig& c) { return std::string(to_string(c.arch.family)); }});
    for (int b = 1; b <= 5; ++b) {
      const auto i = static_cast<std::size_t>(b - 1);
      t.push_back({{"block" + std::to_string(b), "freeze, a dilation rate, or two rates \"a,b\""},
                   [i](RunConfig& c, const std::string& v) { c.arch.blocks[i] = parse_block_plan(v); },
                   [i](const RunConfig& c) { return format_block_plan(c.arch.blocks[i]); }});
    }
    t.push_back({{"dataset", "cifar10 or cifar100 (sets num_classes)"},
                 [](RunConfig& c, const std::string& v) {
                   if (v == "cifar10") {
                     c.dataset = DatasetKind::cifar10;
                     c.arch.num_classes = 10;
                   } else if (v == "cifar100") {
                     c.dataset = DatasetKind::cifar100;
                     c.arch.num_classes = 100;
                   } else {
                     throw ConfigError("dataset: '" + v + "' is not cifar10 or cifar100");
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.dataset)); }});
    t.push_back(make("width_divisor", "divides every conv filter count",
                     [](RunConfig& c) -> int& { return c.arch.width_divisor; }));
    t.push_back(make("epochs", "training epochs",
                     [](RunConfig& c) -> int& { return c.train.epochs; }));
    t.push_back(make("base_lr", "initial Adam learning rate",
                     [](RunConfig& c) -> double& { return c.train.base_lr; }));
    t.push_back(make("plateau_patience", "epochs without validation-loss improvement",
                     [](RunConfig& c) -> int& { return c.train.plateau_patience; }));
    t.push_back(make("plateau_factor", "learning-rate multiplier on a plateau",
                     [](RunConfig& c) -> double& { return c.train.plateau_factor; }));
    t.push_back(make("adam_beta1", "first-moment decay",
                     [](RunConfig& c) -> double& { return c.train.adam.beta1; }));
    t.push_back(make("adam_beta2", "second-moment decay",
                     [](RunConfig& c) -> double& { return c.train.adam.beta2; }));
    t.push_back(make("adam_epsilon", "denominator guard",
                     [](RunConfig& c) -> double& { return c.train.adam.epsilon; }));
    t.push_back(make("batch_size", "samples per Adam step",
                     [](RunConfig& c) -> int& { return c.train.batch_size; }));
    t.push_back(make("seed", "single source of all randomness",
                     [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    t.push_back(make("augment", "apply training augmentation",
                     [](RunConfig& c) -> bool& { return c.train.augment; }));
    t.push_back(make("horizontal_flip", "random horizontal flips",
                     [](RunConfig& c) -> bool& { return c.train.augmentation.horizontal_flip; }));
    t.push_back(make("vertical_flip", "random vertical flips",
                     [](RunConfig& c) -> bool& { return c.train.augmentation.vertical_flip; }));
    t.push_back(make("rotation_range_deg", "rotation drawn from +-range",
                     [](RunConfig& c) -> double& { return c.train.augmentation.rotation_range_deg; }));
    t.push_back(make("shift_range_fraction", "shift drawn from +-range of each extent",
                     [](RunConfig& c) -> double& {
                       return c.train.augmentation.shift_range_fraction;
                     }));
    t.push_back(make("zoom_range", "zoom drawn from [1-range, 1+range]",
                     [](RunConfig& c) -> double& { return c.train.augmentation.zoom_range; }));
    t.push_back(make("data_dir", "directory holding the CIFAR binaries",
                     [](RunConfig& c) -> std::filesystem::path& { return c.data_dir; }));
    t.push_back(make("out_dir", "directory for metrics, checkpoint, and manifest",
                     [](RunConfig& c) -> std::filesystem::path& { return c.out_dir; }));
    t.push_back(make("weights", "pretrained conv weights (NTL1); empty for random init",
                     [](RunConfig& c) -> std::filesystem::path& { return c.weights; }));
    t.push_back(make("train_limit", "keep the first N training records (0 = all)",
                     [](RunConfig& c) -> Index& { return c.train_limit; }));
    t.push_back(make("val_limit", "keep the first N validation records (0 = all)",
                     [](RunConfig& c) -> Index& { return c.val_limit; }));
    t.push_back(make("test_limit", "keep the first N test records (0 = all)",
                     [](RunConfig& c) -> Index& { return c.test_limit; }));
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key.name == key) return f;
  throw ConfigError("unknown key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_value(RunConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  set_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_value(config, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.detail());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(config) + "\n";
  return out;
}

RunConfig catalog_run_config(const CatalogEntry& entry) {
  RunConfig c;
  c.arch = entry.config;
  c.dataset = entry.config.num_classes == 100 ? DatasetKind::cifar100 : DatasetKind::cifar10;
  c.out_dir = std::filesystem::path("runs") /
              (entry.slug + (c.dataset == DatasetKind::cifar100 ? "_c100" : "_c10"));
  return c;
}

}  // namespace dtk
