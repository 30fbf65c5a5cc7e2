#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xmixup/experiment.hpp"

namespace xmixup::cli {

/// Config resolution order, later wins: built-in defaults, the JSON config
/// file, the XMIXUP_SEED environment variable (replaces "seed"), then each
/// `--set key.path=value` flag in order. Values of --set are parsed as JSON,
/// falling back to a plain string.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides);

/// Entry point of the `xmixup` tool. Returns the process exit status:
/// 0 success, 2 config error, 3 data error, 4 numeric error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xmixup::cli
