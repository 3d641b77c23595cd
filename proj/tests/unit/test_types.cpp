#include <set>
#include <random>

#include "campusguard/error.hpp"
#include "campusguard/lease.hpp"
#include "campusguard/types.hpp"
#include "doctest.h"

using namespace campusguard;

TEST_CASE("IPv4 parsing is strict") {
  CHECK(Ipv4Address::parse("192.168.1.50")->to_string() == "192.168.1.50");
  CHECK(Ipv4Address::parse("0.0.0.0")->value() == 0u);
  CHECK(Ipv4Address::parse("255.255.255.255")->value() == 0xffffffffu);
  for (const char* bad : {"999.1.2.3", "1.2.3", "1.2.3.4.5", "1.2.3.4 ", "a.b.c.d", "", "1..2.3", "01x.1.1.1",
                          "256.0.0.1", "-1.0.0.1"})
    CHECK_MESSAGE(!Ipv4Address::parse(bad), bad);
}

TEST_CASE("IPv4 text round-trips for random addresses") {
  std::mt19937 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto v = static_cast<std::uint32_t>(rng());
    const Ipv4Address a(v);
    const auto back = Ipv4Address::parse(a.to_string());
    REQUIRE(back);
    CHECK(back->value() == v);
  }
}

TEST_CASE("MAC canonical form is lowercase colon separated") {
  CHECK(MacAddress::parse("AA-BB-CC-DD-EE-FF")->to_string() == "aa:bb:cc:dd:ee:ff");
  CHECK(MacAddress::parse("aa:bb:cc:dd:ee:ff") == MacAddress::parse("AA:BB:CC:DD:EE:FF"));
  for (const char* bad : {"zz:zz", "aa:bb:cc:dd:ee", "aa:bb:cc:dd:ee:ff:00", "aabbccddeeff", "aa:bb:cc:dd:ee:fg", ""})
    CHECK_MESSAGE(!MacAddress::parse(bad), bad);
  CHECK(MacAddress(0x0123456789abULL).to_string() == "01:23:45:67:89:ab");
}

TEST_CASE("canonical_address accepts IPv4 or MAC only") {
  CHECK(canonical_address("AA:BB:CC:DD:EE:FF") == "aa:bb:cc:dd:ee:ff");
  CHECK(canonical_address("10.0.0.1") == "10.0.0.1");
  CHECK(!canonical_address("host.example"));
}

TEST_CASE("timestamps convert at microsecond resolution") {
  const auto t = from_micros(1700000000123456);
  CHECK(to_micros(t) == 1700000000123456);
  CHECK(to_epoch_seconds(t) == doctest::Approx(1700000000.123456).epsilon(1e-12));
  CHECK(to_micros(from_epoch_seconds(1700000000.5)) == 1700000000500000);
  CHECK(seconds_between(t, t + std::chrono::milliseconds(1500)) == doctest::Approx(1.5));
  CHECK(seconds_between(t + std::chrono::seconds(1), t) == doctest::Approx(-1.0));
  CHECK(format_iso8601(from_micros(0)) == "1970-01-01T00:00:00.000000Z");
}

TEST_CASE("every error code has a distinct name and an HTTP class") {
  std::set<std::string> names;
  for (int c = 0; c <= static_cast<int>(ErrorCode::Internal); ++c) {
    const auto code = static_cast<ErrorCode>(c);
    CHECK(names.insert(std::string(to_string(code))).second);
    const int s = http_status(code);
    CHECK((s == 401 || s == 403 || s == 404 || s == 409 || s == 422 || s == 500 || s == 503));
  }
  CHECK(http_status(ErrorCode::Unauthorized) == 403);
  CHECK(http_status(ErrorCode::TokenExpired) == 401);
  CHECK(http_status(ErrorCode::DuplicateMac) == 409);
  CHECK(http_status(ErrorCode::FirewallUnreachable) == 503);
  CHECK(http_status(ErrorCode::SchemaViolation) == 422);
}

TEST_CASE("lease containment is half open") {
  const auto t0 = from_micros(1'000'000);
  LeaseRecord l{"lease-1", "dev-1", "inst-1", *Ipv4Address::parse("192.168.1.50"), t0, t0 + std::chrono::seconds(10)};
  CHECK(l.contains(t0));
  CHECK(l.contains(t0 + std::chrono::seconds(9)));
  CHECK_FALSE(l.contains(t0 + std::chrono::seconds(10)));
  CHECK_FALSE(l.contains(t0 - std::chrono::microseconds(1)));
  l.end.reset();
  CHECK(l.contains(t0 + std::chrono::hours(1000)));

  nlohmann::json j = l;
  CHECK(j.get<LeaseRecord>() == l);
}

TEST_CASE("snapshot matching uses interval containment") {
  const auto ip = *Ipv4Address::parse("192.168.1.50");
  const auto t1 = from_micros(10'000'000);
  const auto t2 = from_micros(20'000'000);
  LeaseSnapshot s{t2 + std::chrono::seconds(5),
                  {{"l1", "dev-a", "i", ip, from_micros(0), t1}, {"l2", "dev-b", "i", ip, t2, std::nullopt}}};
  CHECK(s.matching(ip, from_micros(5'000'000)).at(0).device_id == "dev-a");
  CHECK(s.matching(ip, from_micros(15'000'000)).empty());  // between the two leases
  CHECK(s.matching(ip, t2 + std::chrono::seconds(1)).at(0).device_id == "dev-b");
  CHECK(s.matching(*Ipv4Address::parse("192.168.1.51"), t2).empty());
}
