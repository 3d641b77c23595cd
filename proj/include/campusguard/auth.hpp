#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "campusguard/domain.hpp"
#include "json.hpp"

namespace campusguard::auth {

struct AuthToken {
  Principal principal;
  Timestamp issued_at{};
  Timestamp expires_at{};
  std::string text;  // compact JWS: header.payload.signature, HS256
};

/// Issues and verifies HMAC-SHA256 signed bearer tokens carrying the subject,
/// role and institution scope.
class TokenIssuer {
 public:
  explicit TokenIssuer(std::string secret, std::chrono::seconds ttl = std::chrono::hours(1));

  AuthToken issue(const Principal& principal, Timestamp at = now()) const;
  /// Throws Error(TokenInvalid) on malformed or tampered tokens and
  /// Error(TokenExpired) once `at` reaches the expiry.
  Principal validate(std::string_view token, Timestamp at = now()) const;

 private:
  std::string sign(std::string_view signing_input) const;

  std::string secret_;
  std::chrono::seconds ttl_;
};

struct UserRecord {
  std::string username;
  std::string password_sha256;  // lowercase hex
  RoleKind role = RoleKind::Regular;
  std::set<std::string> institutions;
};

void from_json(const nlohmann::json& j, UserRecord& u);
void to_json(nlohmann::json& j, const UserRecord& u);

/// Local identity provider seeded from configuration.
class UserDirectory {
 public:
  void add(UserRecord user);
  /// Throws Error(BadCredentials) for unknown users and wrong passwords alike.
  Principal authenticate(std::string_view username, std::string_view password) const;
  std::size_t size() const noexcept { return users_.size(); }

  static std::string hash_password(std::string_view password);

 private:
  std::map<std::string, UserRecord, std::less<>> users_;
};

std::string base64url_encode(std::string_view bytes);
/// nullopt unless `text` is the canonical unpadded encoding of some bytes.
std::optional<std::string> base64url_decode(std::string_view text);

}  // namespace campusguard::auth
