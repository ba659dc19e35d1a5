#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hypnorm/training.hpp"

namespace hypnorm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumeric = 2, kVerification = 3 };

/// Reads key=value lines; '#' starts a comment. Throws ParseError with the
/// offending line number.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Layers a config: defaults, then the config file, then HYPNORM_SEED (when
/// `env_seed` is non-null), then explicit flags.
train::RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                                const char* env_seed,
                                const std::vector<std::pair<std::string, std::string>>& flags);

/// Entry point without argv[0]. Machine-readable JSON goes to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypnorm::cli
