#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace campusguard {

/// UTC instant at microsecond resolution.
using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

Timestamp now();
Timestamp from_micros(std::int64_t micros);
std::int64_t to_micros(Timestamp t);
Timestamp from_epoch_seconds(double seconds);
double to_epoch_seconds(Timestamp t);
/// (later - earlier) in fractional seconds; negative when reversed.
double seconds_between(Timestamp earlier, Timestamp later);
std::string format_iso8601(Timestamp t);

class Ipv4Address {
 public:
  Ipv4Address() = default;
  explicit constexpr Ipv4Address(std::uint32_t host_order) : value_(host_order) {}

  /// Strict dotted quad; rejects octets above 255, missing octets and trailing junk.
  static std::optional<Ipv4Address> parse(std::string_view text);

  std::uint32_t value() const noexcept { return value_; }
  std::string to_string() const;

  auto operator<=>(const Ipv4Address&) const = default;

 private:
  std::uint32_t value_ = 0;
};

/// 48-bit hardware address. Canonical text form is lowercase, colon separated.
class MacAddress {
 public:
  MacAddress() = default;
  explicit constexpr MacAddress(std::uint64_t bits) : bits_(bits & 0xffffffffffffULL) {}

  /// Accepts six hex pairs separated by ':' or '-', any case.
  static std::optional<MacAddress> parse(std::string_view text);

  std::uint64_t bits() const noexcept { return bits_; }
  std::string to_string() const;

  auto operator<=>(const MacAddress&) const = default;

 private:
  std::uint64_t bits_ = 0;
};

/// Canonical text of an alias member (IPv4 or MAC), or nullopt when neither.
std::optional<std::string> canonical_address(std::string_view text);

}  // namespace campusguard
