#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtbp {

/* Full command-line tool as a callable: returns the process exit code
 * (0 success; 1 computation error; 2 input error) and writes exactly what the
 * binary would print. args excludes argv[0].
 */
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}
