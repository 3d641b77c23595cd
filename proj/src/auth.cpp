#include "campusguard/auth.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <cctype>
#include <cstdio>

#include "campusguard/error.hpp"

namespace campusguard::auth {

using nlohmann::json;

std::string base64url_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  while (!out.empty() && out.back() == '=') out.pop_back();
  for (auto& c : out) {
    if (c == '+') c = '-';
    else if (c == '/') c = '_';
  }
  return out;
}

std::optional<std::string> base64url_decode(std::string_view text) {
  if (text.size() % 4 == 1) return std::nullopt;
  std::string b64(text);
  for (auto& c : b64) {
    if (c == '-') c = '+';
    else if (c == '_') c = '/';
    else if (c == '+' || c == '/' || c == '=') return std::nullopt;
  }
  const std::size_t pad = (4 - b64.size() % 4) % 4;
  b64.append(pad, '=');
  std::string out(b64.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(b64.data()), static_cast<int>(b64.size()));
  if (n < 0) return std::nullopt;
  out.resize(static_cast<std::size_t>(n) - pad);
  // Reject non-canonical spellings so every accepted token has one encoding.
  if (base64url_encode(out) != text) return std::nullopt;
  return out;
}

TokenIssuer::TokenIssuer(std::string secret, std::chrono::seconds ttl) : secret_(std::move(secret)), ttl_(ttl) {
  if (secret_.size() < 16) throw Error(ErrorCode::InvalidConfig, "token secret must be at least 16 bytes");
  if (ttl_.count() <= 0) throw Error(ErrorCode::InvalidConfig, "token lifetime must be positive");
}

std::string TokenIssuer::sign(std::string_view input) const {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  HMAC(EVP_sha256(), secret_.data(), static_cast<int>(secret_.size()),
       reinterpret_cast<const unsigned char*>(input.data()), input.size(), mac, &len);
  return std::string(reinterpret_cast<const char*>(mac), len);
}

AuthToken TokenIssuer::issue(const Principal& principal, Timestamp at) const {
  AuthToken t{principal, at, at + ttl_, {}};
  const json header = {{"alg", "HS256"}, {"typ", "JWT"}};
  const json payload = {{"sub", principal.subject},
                        {"role", to_string(principal.role)},
                        {"inst", principal.institutions},
                        {"iat", to_micros(t.issued_at)},
                        {"exp", to_micros(t.expires_at)}};
  const auto input = base64url_encode(header.dump()) + "." + base64url_encode(payload.dump());
  t.text = input + "." + base64url_encode(sign(input));
  return t;
}

Principal TokenIssuer::validate(std::string_view token, Timestamp at) const {
  const auto invalid = [] { return Error(ErrorCode::TokenInvalid, "token rejected"); };
  const auto d1 = token.find('.');
  const auto d2 = d1 == std::string_view::npos ? d1 : token.find('.', d1 + 1);
  if (d2 == std::string_view::npos || token.find('.', d2 + 1) != std::string_view::npos) throw invalid();

  const auto sig = base64url_decode(token.substr(d2 + 1));
  const auto expected = sign(token.substr(0, d2));
  if (!sig || sig->size() != expected.size() || CRYPTO_memcmp(sig->data(), expected.data(), expected.size()) != 0)
    throw invalid();

  const auto header_text = base64url_decode(token.substr(0, d1));
  const auto payload_text = base64url_decode(token.substr(d1 + 1, d2 - d1 - 1));
  if (!header_text || !payload_text) throw invalid();
  const auto header = json::parse(*header_text, nullptr, false);
  const auto payload = json::parse(*payload_text, nullptr, false);
  if (!header.is_object() || header.value("alg", "") != "HS256" || !payload.is_object()) throw invalid();

  Principal p;
  try {
    p.subject = payload.at("sub").get<std::string>();
    auto role = parse_role(payload.at("role").get<std::string>());
    if (!role) throw invalid();
    p.role = *role;
    p.institutions = payload.at("inst").get<std::set<std::string>>();
    if (at >= from_micros(payload.at("exp").get<std::int64_t>()))
      throw Error(ErrorCode::TokenExpired, "token expired", p.subject);
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw invalid();
  }
  return p;
}

void from_json(const json& j, UserRecord& u) {
  u.username = j.at("username").get<std::string>();
  if (j.contains("password_sha256")) {
    u.password_sha256 = j.at("password_sha256").get<std::string>();
    for (auto& c : u.password_sha256) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  } else if (j.contains("password")) {
    u.password_sha256 = UserDirectory::hash_password(j.at("password").get<std::string>());
  } else {
    throw Error(ErrorCode::InvalidConfig, "user lacks a password", u.username);
  }
  auto role = parse_role(j.at("role").get<std::string>());
  if (!role || *role == RoleKind::System) throw Error(ErrorCode::InvalidConfig, "bad role", u.username);
  u.role = *role;
  u.institutions = j.value("institutions", std::set<std::string>{});
}

void to_json(json& j, const UserRecord& u) {
  j = {{"username", u.username},
       {"password_sha256", u.password_sha256},
       {"role", to_string(u.role)},
       {"institutions", u.institutions}};
}

std::string UserDirectory::hash_password(std::string_view password) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(password.data(), password.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void UserDirectory::add(UserRecord user) {
  auto name = user.username;
  users_[name] = std::move(user);
}

Principal UserDirectory::authenticate(std::string_view username, std::string_view password) const {
  const auto hash = hash_password(password);
  auto it = users_.find(username);
  if (it == users_.end() || it->second.password_sha256.size() != hash.size() ||
      CRYPTO_memcmp(it->second.password_sha256.data(), hash.data(), hash.size()) != 0)
    throw Error(ErrorCode::BadCredentials, "bad credentials");
  return Principal{it->second.username, it->second.role, it->second.institutions};
}

}  // namespace campusguard::auth
