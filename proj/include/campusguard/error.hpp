#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace campusguard {

enum class ErrorCode {
  IllegalTransition,
  Unauthorized,
  MissingFields,
  DuplicateField,
  SourceUnavailable,
  AmbiguousLease,
  StorageUnavailable,
  AliasNotFound,
  FirewallUnreachable,
  InvalidAddress,
  IpCollision,
  CommitRejected,
  DuplicateMac,
  InvalidMac,
  DeviceNotFound,
  NotFound,
  UnknownStore,
  SchemaViolation,
  FieldAlreadySet,
  MonotonicityViolation,
  BadCredentials,
  TokenExpired,
  TokenInvalid,
  AuthRequired,
  InvalidRequest,
  ConfigMissing,
  InvalidConfig,
  DeviceNotActive,
  ProbeTimeout,
  ScenarioFailed,
  Internal,
};

std::string_view to_string(ErrorCode code);

/// HTTP status class used by the API surface for a given error.
int http_status(ErrorCode code);

/// Every failure the library reports carries a stable machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace campusguard
