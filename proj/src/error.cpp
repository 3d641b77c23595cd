#include "campusguard/error.hpp"

namespace campusguard {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::MissingFields: return "MissingFields";
    case ErrorCode::DuplicateField: return "DuplicateField";
    case ErrorCode::SourceUnavailable: return "SourceUnavailable";
    case ErrorCode::AmbiguousLease: return "AmbiguousLease";
    case ErrorCode::StorageUnavailable: return "StorageUnavailable";
    case ErrorCode::AliasNotFound: return "AliasNotFound";
    case ErrorCode::FirewallUnreachable: return "FirewallUnreachable";
    case ErrorCode::InvalidAddress: return "InvalidAddress";
    case ErrorCode::IpCollision: return "IpCollision";
    case ErrorCode::CommitRejected: return "CommitRejected";
    case ErrorCode::DuplicateMac: return "DuplicateMac";
    case ErrorCode::InvalidMac: return "InvalidMac";
    case ErrorCode::DeviceNotFound: return "DeviceNotFound";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnknownStore: return "UnknownStore";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::FieldAlreadySet: return "FieldAlreadySet";
    case ErrorCode::MonotonicityViolation: return "MonotonicityViolation";
    case ErrorCode::BadCredentials: return "BadCredentials";
    case ErrorCode::TokenExpired: return "TokenExpired";
    case ErrorCode::TokenInvalid: return "TokenInvalid";
    case ErrorCode::AuthRequired: return "AuthRequired";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::ConfigMissing: return "ConfigMissing";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DeviceNotActive: return "DeviceNotActive";
    case ErrorCode::ProbeTimeout: return "ProbeTimeout";
    case ErrorCode::ScenarioFailed: return "ScenarioFailed";
    case ErrorCode::Internal: return "Internal";
  }
  return "Internal";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadCredentials:
    case ErrorCode::TokenExpired:
    case ErrorCode::TokenInvalid:
    case ErrorCode::AuthRequired:
      return 401;
    case ErrorCode::Unauthorized:
      return 403;
    case ErrorCode::DeviceNotFound:
    case ErrorCode::AliasNotFound:
    case ErrorCode::NotFound:
    case ErrorCode::UnknownStore:
      return 404;
    case ErrorCode::IllegalTransition:
    case ErrorCode::DuplicateMac:
    case ErrorCode::IpCollision:
    case ErrorCode::AmbiguousLease:
    case ErrorCode::FieldAlreadySet:
    case ErrorCode::MonotonicityViolation:
    case ErrorCode::DeviceNotActive:
      return 409;
    case ErrorCode::InvalidMac:
    case ErrorCode::InvalidAddress:
    case ErrorCode::SchemaViolation:
    case ErrorCode::InvalidRequest:
    case ErrorCode::MissingFields:
    case ErrorCode::DuplicateField:
    case ErrorCode::InvalidConfig:
      return 422;
    case ErrorCode::FirewallUnreachable:
    case ErrorCode::StorageUnavailable:
    case ErrorCode::SourceUnavailable:
    case ErrorCode::CommitRejected:
      return 503;
    default:
      return 500;
  }
}

Error::Error(ErrorCode code, std::string message, std::string detail)
    : std::runtime_error(std::move(message)), code_(code), detail_(std::move(detail)) {}

}  // namespace campusguard
