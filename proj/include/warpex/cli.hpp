#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace warpex {

inline constexpr const char* kVersion = "0.1.0";

struct CommandOptions {
  std::filesystem::path config_path;
  nlohmann::json config = nlohmann::json::object();
  std::optional<std::uint64_t> seed;  // --seed overrides the config value
  unsigned threads = 1;
  std::filesystem::path out = "out";
};

void cmd_simulate(const CommandOptions& opt);
void cmd_margins(const CommandOptions& opt);
void cmd_fit(const CommandOptions& opt);
void cmd_evaluate(const CommandOptions& opt);
void cmd_bootstrap(const CommandOptions& opt);
void cmd_export(const CommandOptions& opt);

/// Entry point. Exit codes: 0 success, 2 validation error, 3 numeric failure, 1 otherwise.
int run_cli(int argc, char** argv);

}  // namespace warpex
