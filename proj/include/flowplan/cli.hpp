#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowplan {

/// Exit codes: 0 success, 1 invalid workflow, 2 usage or parse error, 3 other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Parses "a,b,c" with a locale-independent number parser. Throws UsageError.
std::vector<double> parse_double_list(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

}  // namespace flowplan
