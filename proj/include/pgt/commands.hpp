#pragma once

#include <iosfwd>

#include "pgt/run_config.hpp"

namespace pgt::cli {

// Subcommand bodies behind the `pgt` binary; each writes human-readable
// output to `out` and throws the pgt error types on failure (the binary maps
// them to exit codes 2/3/4).
void cmd_synth(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_params(const RunConfig& cfg, std::ostream& out);
void cmd_analyze(const RunConfig& cfg, std::ostream& out);
void cmd_verify(const RunConfig& cfg, std::ostream& out);

}  // namespace pgt::cli
