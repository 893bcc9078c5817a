// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmesr {

/// Runs one `dmesr` command line (without the program name). Returns the
/// process exit code; failures print one JSON line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmesr
