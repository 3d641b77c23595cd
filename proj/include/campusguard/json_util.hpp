#pragma once

#include <optional>
#include <string>

#include "campusguard/error.hpp"
#include "campusguard/types.hpp"
#include "json.hpp"

// Helpers shared by the to_json/from_json overloads of the domain types.
namespace campusguard::jsonio {

inline nlohmann::json ts(Timestamp t) { return to_micros(t); }
inline Timestamp ts(const nlohmann::json& j) { return from_micros(j.get<std::int64_t>()); }

inline nlohmann::json opt_ts(const std::optional<Timestamp>& t) {
  return t ? nlohmann::json(to_micros(*t)) : nlohmann::json(nullptr);
}

inline std::optional<Timestamp> opt_ts(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return from_micros(it->get<std::int64_t>());
}

inline std::optional<std::string> opt_str(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

inline nlohmann::json opt(const std::optional<std::string>& s) {
  return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

inline Ipv4Address ip(const nlohmann::json& j) {
  auto parsed = Ipv4Address::parse(j.get<std::string>());
  if (!parsed) throw Error(ErrorCode::InvalidAddress, "invalid IPv4 address", j.dump());
  return *parsed;
}

inline std::optional<Ipv4Address> opt_ip(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return ip(*it);
}

inline MacAddress mac(const nlohmann::json& j) {
  auto parsed = MacAddress::parse(j.get<std::string>());
  if (!parsed) throw Error(ErrorCode::InvalidMac, "invalid MAC address", j.dump());
  return *parsed;
}

}  // namespace campusguard::jsonio
