// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dak {

// Entry point of the `dak` tool. Returns the process exit code; 0 only when
// the requested document was fully written.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Ratios A, A+STEP, ... up to B inclusive, parsed from "A:B:STEP".
std::vector<double> parse_sweep(const std::string& spec);

// A config argument is either a file path or the name of a bundled config
// under <config dir>/<kind>/<name>.json.
std::filesystem::path resolve_config(const std::string& arg, const std::string& kind);

}  // namespace dak
