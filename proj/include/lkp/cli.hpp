#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace lkp::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kVerifyFailed = 3, kRuntimeFailure = 4 };

/// Every recognised configuration key with its default value. Config files
/// and flags may only set these keys, with matching types.
nlohmann::json default_config();

/// Merges a config-file object into `config`. Throws ContractViolation on an
/// unknown key or a value of the wrong type.
void merge_config(nlohmann::json& config, const nlohmann::json& overrides);

/// Parses a flag string into the type of the key's default value.
nlohmann::json parse_flag_value(const std::string& key, const std::string& text);

/// Runs `lkp <command> [flags]`; args excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

} // namespace lkp::cli
