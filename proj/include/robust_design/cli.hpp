#ifndef ROBUST_DESIGN_CLI_HPP
#define ROBUST_DESIGN_CLI_HPP

namespace robust_design {

/// Exit codes: 0 success, 1 unexpected failure, 2 bad config / input file,
/// 3 infeasible problem.
int run_cli(int argc, char** argv);

}  // namespace robust_design

#endif  // ROBUST_DESIGN_CLI_HPP
