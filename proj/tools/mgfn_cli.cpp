// SPDX-License-Identifier: Apache-2.0

#include "mgfn/cli.hpp"
#include "mgfn/platform.hpp"

int main(int argc, char** argv) {
    mgfn::retain_freed_memory();
    return mgfn::cli::run(argc, argv);
}
