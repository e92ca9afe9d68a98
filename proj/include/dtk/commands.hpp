#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dtk/run_config.hpp"

namespace dtk {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct CommandOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> weights;
  std::optional<std::uint64_t> seed;
  std::string split = "val";
  /// rf only: comma-separated schedule such as "3x3r2,3x3r2".
  std::string layers;
};

/// Config file, then --set overrides in order, then the dedicated flags.
RunConfig resolve_config(const CommandOptions& options);

struct PreparedData {
  DataSplits splits;
  ChannelStats stats;
};

/// Loads the dataset, applies the seeded 40k/10k split and limits, and
/// standardizes every split with training statistics.
PreparedData prepare_data(const RunConfig& config, bool with_test);

int cmd_train(const CommandOptions& options, std::ostream& out);
int cmd_eval(const CommandOptions& options, std::ostream& out);
int cmd_rf(const CommandOptions& options, std::ostream& out);
int cmd_catalog(std::ostream& out);
int cmd_inspect(const std::filesystem::path& file, std::ostream& out);
/// Writes one config per catalog row and class count into `dir`.
int cmd_write_configs(const std::filesystem::path& dir, std::ostream& out);

int exit_code_for(const std::exception& e);

/// Runs a command, printing any error to `err` and mapping it to an exit code.
int run_guarded(const std::function<int()>& command, std::ostream& err);

}  // namespace dtk
