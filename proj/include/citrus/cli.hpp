// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace citrus::cli {

/// Runs one subcommand. `args` excludes the program name. Reports go to the
/// --output path or `out`; failures print {"error": {"kind", "message"}} to
/// `err` and return a nonzero code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

} // namespace citrus::cli
