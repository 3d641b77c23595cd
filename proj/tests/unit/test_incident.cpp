#include <random>

#include "campusguard/error.hpp"
#include "campusguard/incident.hpp"
#include "doctest.h"

using namespace campusguard;
using namespace campusguard::incident;

namespace {

zeek::ZeekNotice notice(const std::string& note, const std::string& src, std::int64_t ts_micros,
                        std::string uid = "C1") {
  zeek::ZeekNotice n;
  n.ts = from_micros(ts_micros);
  n.uid = uid;
  n.src_ip = *Ipv4Address::parse(src);
  n.note = note;
  n.msg = "m";
  n.raw = note + " " + src;
  return n;
}

LeaseRecord lease(const std::string& dev, const std::string& ip, std::int64_t start, std::optional<std::int64_t> end) {
  LeaseRecord l{"lease-" + dev, dev, "inst-1", *Ipv4Address::parse(ip), from_micros(start), std::nullopt};
  if (end) l.end = from_micros(*end);
  return l;
}

struct Engine {
  persist::Store store;
  LeaseSnapshot leases{from_micros(0), {}};
  std::map<std::string, DeviceState> states;
  IncidentService svc{store, SeverityPolicy::defaults(), "inst-1", [this] { return leases; },
                      [this](const std::string& d) -> std::optional<DeviceState> {
                        auto it = states.find(d);
                        if (it == states.end()) return std::nullopt;
                        return it->second;
                      }};
};

}  // namespace

TEST_CASE("default policy classifies SQL injection as critical") {
  const auto policy = SeverityPolicy::defaults();
  // Oracle: direct lookup of the shipped rule.
  auto expected = Severity::Info;
  for (const auto& r : policy.rules)
    if (r.pattern == "HTTP::SQL_Injection_Attacker") expected = r.severity;
  CHECK(expected == Severity::Critical);
  CHECK(classify_severity(notice("HTTP::SQL_Injection_Attacker", "1.2.3.4", 1), policy) == expected);
  CHECK(classify_severity(notice("Scan::Port_Scan", "1.2.3.4", 1), policy) == Severity::Medium);
}

TEST_CASE("unmatched notes take the default and rules match first-wins") {
  auto p = SeverityPolicy::parse("default low\n");
  CHECK(classify_severity(notice("Foo::Bar", "1.2.3.4", 1), p) == Severity::Low);
  p = SeverityPolicy::parse("Scan::*  medium\n*  info  # catch-all\n");
  CHECK(classify_severity(notice("Scan::Port_Scan", "1.2.3.4", 1), p) == Severity::Medium);
  CHECK(classify_severity(notice("Weird::x", "1.2.3.4", 1), p) == Severity::Info);
}

TEST_CASE("policy text round-trips and rejects junk") {
  const auto p = SeverityPolicy::defaults();
  CHECK(SeverityPolicy::parse(p.to_text()) == p);
  CHECK_THROWS_AS(SeverityPolicy::parse("Scan::* apocalyptic\n"), Error);
  CHECK_THROWS_AS(SeverityPolicy::parse("Scan::*\n"), Error);
  CHECK_THROWS_AS(SeverityPolicy::load("/nonexistent/policy.conf"), Error);
}

TEST_CASE("correlation finds the single containing lease") {
  LeaseSnapshot s{from_micros(100), {lease("D", "192.168.1.50", 0, std::nullopt)}};
  CHECK(correlate(notice("x", "192.168.1.50", 50), s) == "D");
  CHECK(!correlate(notice("x", "10.0.0.9", 50), s));
}

TEST_CASE("correlation agrees with a linear interval scan") {
  std::mt19937_64 rng(21);
  for (int round = 0; round < 300; ++round) {
    // Back-to-back leases on one address, randomly long.
    LeaseSnapshot s{from_micros(1'000'000), {}};
    std::int64_t t = 0;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      const std::int64_t len = 1 + static_cast<std::int64_t>(rng() % 1000);
      const std::int64_t gap = static_cast<std::int64_t>(rng() % 50);
      s.leases.push_back(lease("D" + std::to_string(i), "192.168.1.50", t, t + len));
      t += len + gap;
    }
    const auto at = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(t + 10));
    std::optional<std::string> want;
    for (const auto& l : s.leases)
      if (to_micros(l.start) <= at && at < to_micros(*l.end)) want = l.device_id;
    CHECK(correlate(notice("x", "192.168.1.50", at), s) == want);
  }
}

TEST_CASE("overlapping leases are ambiguous") {
  LeaseSnapshot s{from_micros(100),
                  {lease("A", "192.168.1.50", 0, std::nullopt), lease("B", "192.168.1.50", 10, std::nullopt)}};
  try {
    correlate(notice("x", "192.168.1.50", 50), s);
    FAIL("expected AmbiguousLease");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AmbiguousLease);
  }
}

TEST_CASE("response decision") {
  IncidentRecord r;
  r.severity = Severity::Critical;
  r.device_id = "D";
  r.note = "HTTP::SQL_Injection_Attacker";
  auto active = [](const std::string&) -> std::optional<DeviceState> { return DeviceState::Active; };
  auto blocked = [](const std::string&) -> std::optional<DeviceState> { return DeviceState::Blocked; };
  const auto a = decide_response(r, active);
  CHECK(a.kind == ResponseKind::Block);
  CHECK(a.device_id == "D");
  CHECK(decide_response(r, blocked).reason == kReasonNotActive);
  r.device_id.reset();
  CHECK(decide_response(r, active).reason == kReasonNoDevice);
  r.device_id = "D";
  r.severity = Severity::Medium;
  const auto m = decide_response(r, active);
  CHECK(m.kind == ResponseKind::None);
  CHECK(m.reason == kReasonBelowThreshold);
}

TEST_CASE("saving is idempotent per notice") {
  Engine e;
  const auto n = notice("HTTP::SQL_Injection_Attacker", "192.168.1.50", 1'000'000);
  const auto first = e.svc.save_incident(n, Severity::Critical, std::string("D"));
  CHECK(first.status == IncidentStatus::New);
  CHECK(first.device_id == "D");
  CHECK(first.institution_id == "inst-1");
  const auto second = e.svc.save_incident(n, Severity::Critical, std::string("D"));
  CHECK(second.incident_id == first.incident_id);
  CHECK(e.store.count(persist::kIncidents) == 1);
  CHECK(e.store.get(persist::kIncidents, first.incident_id).get<IncidentRecord>() == first);
}

TEST_CASE("a batch of duplicate critical notices yields one block") {
  Engine e;
  e.leases.leases.push_back(lease("D", "192.168.1.50", 0, std::nullopt));
  e.states["D"] = DeviceState::Active;
  std::vector<zeek::ZeekNotice> batch;
  for (int i = 0; i < 3; ++i)
    batch.push_back(notice("HTTP::SQL_Injection_Attacker", "192.168.1.50", 1'000'000 + i, "C" + std::to_string(i)));
  batch.push_back(notice("Scan::Port_Scan", "192.168.1.50", 2'000'000));
  batch.push_back(notice("HTTP::SQL_Injection_Attacker", "10.9.9.9", 3'000'000));

  const auto out = e.svc.process_incidents(batch);
  REQUIRE(out.size() == 5);
  std::size_t blocks = 0;
  for (const auto& p : out) blocks += p.action.kind == ResponseKind::Block;
  CHECK(blocks == 1);
  CHECK(out[0].action.kind == ResponseKind::Block);
  CHECK(out[1].action.reason == kReasonAlreadyBlocking);
  CHECK(out[0].incident.status == IncidentStatus::Validated);  // critical ones are validated automatically
  CHECK(out[3].incident.severity == Severity::Medium);
  CHECK(out[3].incident.status == IncidentStatus::New);
  CHECK(out[4].action.reason == kReasonNoDevice);
  CHECK(e.store.count(persist::kIncidents) == 5);
}

TEST_CASE("storage outage keeps the rest of the batch queued") {
  Engine e;
  std::vector<zeek::ZeekNotice> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(notice("Scan::Port_Scan", "192.168.1.50", 1000 + i));
  e.store.set_available(false);
  try {
    e.svc.process_incidents(batch);
    FAIL("expected interruption");
  } catch (const BatchInterrupted& b) {
    CHECK(b.code() == ErrorCode::StorageUnavailable);
    CHECK(b.processed().empty());
  }
  CHECK(e.svc.queued() == 3);
  e.store.set_available(true);
  const auto out = e.svc.process_incidents({});
  CHECK(out.size() == 3);
  CHECK(e.svc.queued() == 0);
}

TEST_CASE("ambiguous correlation is quarantined, not fatal") {
  Engine e;
  e.leases.leases = {lease("A", "192.168.1.50", 0, std::nullopt), lease("B", "192.168.1.50", 1, std::nullopt)};
  const auto out = e.svc.process_incidents({notice("HTTP::SQL_Injection_Attacker", "192.168.1.50", 100)});
  CHECK(out.empty());
  CHECK(e.svc.quarantined().size() == 1);
}

TEST_CASE("incident status transitions") {
  CHECK(status_transition_allowed(IncidentStatus::New, IncidentStatus::Validated));
  CHECK(status_transition_allowed(IncidentStatus::Validated, IncidentStatus::Actioned));
  CHECK(status_transition_allowed(IncidentStatus::New, IncidentStatus::Dismissed));
  CHECK_FALSE(status_transition_allowed(IncidentStatus::Dismissed, IncidentStatus::Validated));
  CHECK_FALSE(status_transition_allowed(IncidentStatus::Actioned, IncidentStatus::New));

  Engine e;
  const auto r = e.svc.save_incident(notice("Scan::Port_Scan", "1.2.3.4", 5), Severity::Medium, std::nullopt);
  CHECK(e.svc.set_status(r.incident_id, IncidentStatus::Dismissed).status == IncidentStatus::Dismissed);
  CHECK_THROWS_AS(e.svc.set_status(r.incident_id, IncidentStatus::Validated), Error);
}
