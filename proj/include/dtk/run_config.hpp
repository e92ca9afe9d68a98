#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dtk/train.hpp"
#include "dtk/vgg.hpp"

namespace dtk {

enum class DatasetKind { cifar10, cifar100 };

const char* to_string(DatasetKind kind);

/// Everything a run needs: architecture, optimizer budget, data, and outputs.
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  DatasetKind dataset = DatasetKind::cifar10;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "runs/default";
  /// Pretrained conv weights (NTL1); empty means random init.
  std::filesystem::path weights;
  /// Caps on split sizes after the 40k/10k split; 0 keeps everything.
  Index train_limit = 0;
  Index val_limit = 0;
  Index test_limit = 0;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Schema order; also the order of to_text.
const std::vector<ConfigKey>& config_keys();

/// Sets one key; ConfigError for unknown keys or malformed values.
void set_value(RunConfig& config, const std::string& key, const std::string& value);
/// Splits "key=value" and applies it.
void apply_override(RunConfig& config, const std::string& assignment);

/// key = value lines; '#' starts a comment. Duplicates and unknown keys are errors.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key in schema order; parse_run_config(to_text(c)) reproduces c exactly.
std::string to_text(const RunConfig& config);

/// A catalog row as a run config for the given class count.
RunConfig catalog_run_config(const CatalogEntry& entry);

}  // namespace dtk
