#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "seqvessel/svsnet.hpp"
#include "seqvessel/trainer.hpp"

namespace seqvessel {

/// Fully resolved settings of a training run.
struct RunConfig {
  NetworkConfig net;
  TrainConfig train;
};

/// Flat `key=value` lines, one per setting, keys named after the CLI flags
/// (dashes become underscores). Doubles use the shortest round-trip form.
std::string to_config_text(const RunConfig& cfg);
/// Inverse of to_config_text; unknown keys and malformed values throw
/// ConfigError. Missing keys keep their defaults.
RunConfig parse_config_text(const std::string& text);
RunConfig read_config_file(const std::filesystem::path& path);

/// 12 hex digits of a 64-bit FNV-1a hash over the config text.
std::string run_id(const RunConfig& cfg);

/// Entry point for the `seqvessel` tool. `args` excludes the program name.
/// Returns 0 on success, 1 on usage errors, 2 on runtime errors (including a
/// failing gradcheck).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqvessel
