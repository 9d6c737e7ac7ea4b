#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdistill {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kLibraryVersion = "0.1.0";

// Entry point of the cdistill command line tool. Returns the process exit
// code: 0 on success, 1 on partial failure, 2 on configuration errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cdistill
