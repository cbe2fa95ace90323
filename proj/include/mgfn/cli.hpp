// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mgfn::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,   ///< bad data, config, checkpoint or dimensions
    kNumerical = 3,   ///< non-finite loss or gradcheck above tolerance
};

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mgfn::cli
