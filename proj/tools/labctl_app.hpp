#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vlab::labctl {

enum ExitCode { Ok = 0, RuntimeFailure = 1, ValidationFailure = 2 };

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
/// Data goes to `out`; every error is one JSON object per line on `err`.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace vlab::labctl
