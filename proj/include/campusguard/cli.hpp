#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "campusguard/error.hpp"
#include "campusguard/service.hpp"

namespace campusguard::cli {

enum ExitStatus : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitAuth = 3,
  kExitNotFound = 4,
  kExitConflict = 5,
  kExitUnavailable = 6,
};

int exit_status_for_http(int http_status);
int exit_status_for(ErrorCode code);

/// Collects CAMPUSGUARD_* variables from a process environment block.
service::Env environment(char** envp);

/// Parses `args` (without the program name) and runs one verb. Nothing is
/// read from the network or written to disk until parsing has succeeded.
int dispatch(const std::vector<std::string>& args, const service::Env& env, std::ostream& out, std::ostream& err);

}  // namespace campusguard::cli
