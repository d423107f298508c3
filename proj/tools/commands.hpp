#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace volta::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 1,  // bad flags, config or data errors
    exit_io = 2,      // unreadable files, undecodable images, bad checkpoints
    exit_selfcheck = 3,
};

/// Runs one voltavision command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace volta::cli
