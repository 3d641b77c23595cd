#include "campusguard/types.hpp"

#include <arpa/inet.h>

#include <cctype>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace campusguard {

Timestamp now() {
  return std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
}

Timestamp from_micros(std::int64_t micros) { return Timestamp{std::chrono::microseconds{micros}}; }

std::int64_t to_micros(Timestamp t) { return t.time_since_epoch().count(); }

Timestamp from_epoch_seconds(double seconds) {
  return from_micros(static_cast<std::int64_t>(std::llround(seconds * 1e6)));
}

double to_epoch_seconds(Timestamp t) { return static_cast<double>(to_micros(t)) / 1e6; }

double seconds_between(Timestamp earlier, Timestamp later) {
  return static_cast<double>(to_micros(later) - to_micros(earlier)) / 1e6;
}

std::string format_iso8601(Timestamp t) {
  const auto micros = to_micros(t);
  std::time_t secs = static_cast<std::time_t>(micros / 1000000);
  auto frac = micros % 1000000;
  if (frac < 0) {
    frac += 1000000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(6) << std::setfill('0') << frac
      << 'Z';
  return out.str();
}

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
  if (text.empty() || text.size() > 15) return std::nullopt;
  std::string buf(text);
  in_addr addr{};
  if (inet_pton(AF_INET, buf.c_str(), &addr) != 1) return std::nullopt;
  return Ipv4Address{ntohl(addr.s_addr)};
}

std::string Ipv4Address::to_string() const {
  std::ostringstream out;
  out << ((value_ >> 24) & 0xff) << '.' << ((value_ >> 16) & 0xff) << '.' << ((value_ >> 8) & 0xff)
      << '.' << (value_ & 0xff);
  return out.str();
}

std::optional<MacAddress> MacAddress::parse(std::string_view text) {
  if (text.size() != 17) return std::nullopt;
  const char sep = text[2];
  if (sep != ':' && sep != '-') return std::nullopt;
  std::uint64_t bits = 0;
  for (std::size_t group = 0; group < 6; ++group) {
    const std::size_t pos = group * 3;
    if (group > 0 && text[pos - 1] != sep) return std::nullopt;
    for (std::size_t k = 0; k < 2; ++k) {
      const unsigned char c = static_cast<unsigned char>(text[pos + k]);
      if (!std::isxdigit(c)) return std::nullopt;
      const int nibble = std::isdigit(c) ? c - '0' : std::tolower(c) - 'a' + 10;
      bits = (bits << 4) | static_cast<std::uint64_t>(nibble);
    }
  }
  return MacAddress{bits};
}

std::string MacAddress::to_string() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(17);
  for (int group = 5; group >= 0; --group) {
    const auto byte = (bits_ >> (group * 8)) & 0xff;
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0xf]);
    if (group > 0) out.push_back(':');
  }
  return out;
}

std::optional<std::string> canonical_address(std::string_view text) {
  if (auto ip = Ipv4Address::parse(text)) return ip->to_string();
  if (auto mac = MacAddress::parse(text)) return mac->to_string();
  return std::nullopt;
}

}  // namespace campusguard
