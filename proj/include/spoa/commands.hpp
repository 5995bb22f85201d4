#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "spoa/config.hpp"
#include "spoa/dataset.hpp"
#include "spoa/gradcheck.hpp"
#include "spoa/metrics.hpp"
#include "spoa/rl.hpp"

namespace spoa {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitValidation = 2, kExitRuntime = 3 };

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS on every step. No-op outside glibc.
void tune_allocator();

/// config.train.threads capped by SPOA_THREADS when that is set and nonzero.
std::size_t effective_threads(const RunConfig& config);

DatasetManifest cmd_synth(const RunConfig& config, std::ostream& out);
std::vector<EpisodeRecord> cmd_train(const RunConfig& config, std::ostream& out);
/// True when every suite passes.
bool cmd_gradcheck(const RunConfig& config, std::ostream& out);
SplitEvaluation cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_infer(const RunConfig& config, const std::filesystem::path& input, const std::filesystem::path& output,
               std::ostream& out);

/// Parses arguments, runs a command and maps failures to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spoa
