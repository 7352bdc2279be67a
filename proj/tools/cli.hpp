// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace degs {

/// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
/// one-line JSON object {"error": kind, "message": text} to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace degs
