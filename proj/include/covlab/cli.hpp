#pragma once

#include <string>
#include <vector>

namespace covlab {

/**
 * Dispatches one subcommand (gen, cover, cutoff, scaling, fit, iicg, ie,
 * mrr, selfcheck); args exclude the program name. Exit codes: 0 success,
 * 2 usage, 3 data error, 4 capacity/ceiling, 5 internal invariant violation.
 */
int run_cli(const std::vector<std::string>& args);

}  // namespace covlab
