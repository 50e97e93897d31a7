// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lgd::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitPartialFailure = 1,
  kExitUsage = 2,
  kExitNumericAbort = 3,
};

/// Entry point of the `lgd` tool; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lgd::cli
