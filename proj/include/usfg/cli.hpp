#pragma once

#include <string>
#include <vector>

namespace usfg::cli {

// Runs one subcommand: synth, teach, select, augment, train, infer, boxes,
// eval or pipeline. Returns 0 on success, 1 on validation/usage errors,
// 2 on runtime failures.
int run(const std::vector<std::string>& args);

}  // namespace usfg::cli
