#pragma once

namespace depthrover {

/// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
int run_cli(int argc, char** argv);

}  // namespace depthrover
