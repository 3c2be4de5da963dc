// Command dispatch behind both the CLI and the C API: runs a scenario
// command and writes its reports under the scenario output directory with
// fixed names.
#pragma once

#include <optional>
#include <string>

#include "scenario.hpp"

namespace fpmv {

struct RunOptions {
    int threads = 0;           // 0 = hardware concurrency
    bool no_timestamp = false; // omit timestamped header lines
    std::optional<std::uint64_t> seed_override;  // applies to sde and suite seeds
    std::optional<std::string> out_dir;
    std::optional<int> convergence_levels;
};

extern const char* const kCommands[];
extern const int kCommandCount;
bool is_command(const std::string& name);

/// Runs one command; throws fpmv::Error on failure (a FAILED marker file is
/// left in the output directory when outputs were partially written).
void run_command(const ConfigMap& cfg, const std::string& command, const RunOptions& opts);

}  // namespace fpmv
