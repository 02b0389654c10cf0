#pragma once

#include <string>
#include <vector>

namespace seqop {

/// Entry point behind the seqop binary; also callable in-process from tests.
/// Subcommands: gen, train, eval, predict, bench. Returns the process exit
/// code; failures print one "error: ..." line on stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace seqop
