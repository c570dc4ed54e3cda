#pragma once

// The dgm command line: ingest, generate-sbm, train, eval, inspect and
// export-embeddings. Exit codes: 0 success, 2 usage/config/data errors,
// 3 training divergence.

#include <iosfwd>
#include <string>
#include <vector>

#include "dgm/error.hpp"

namespace dgm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitDiverged = 3;

int exit_code_for(ErrorKind kind);

// One machine-parsable line: error kind=<kind> message="<text>".
std::string format_error_line(const std::string& kind, const std::string& message);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dgm
