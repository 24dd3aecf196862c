#pragma once

namespace nrp::cli {

/// Exit codes: 0 success, 1 usage error, 2 data or protocol error.
int run(int argc, char** argv);

}  // namespace nrp::cli
