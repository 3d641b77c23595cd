#include <random>

#include "campusguard/error.hpp"
#include "campusguard/registry.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace campusguard;
using namespace campusguard::registry;
using fixtures::Lab;
using fixtures::mac_for;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

bool plan_empty(const firewall::SyncPlan& p) {
  return p.alias_changes.empty() && p.mapping_upserts.empty() && p.mapping_deletes.empty();
}

}  // namespace

TEST_CASE("approval activates the device and allows its address") {
  Lab lab;
  const auto req = lab.request("aa:bb:cc:dd:ee:01");
  CHECK(req.state == DeviceState::Pending);
  CHECK(lab.allowed().empty());
  const auto d = lab.reg.approve_device(lab.admin, req.device_id, Ipv4Address::parse("192.168.1.55"));
  CHECK(d.state == DeviceState::Active);
  CHECK(d.ip == Ipv4Address::parse("192.168.1.55"));
  CHECK_FALSE(d.registration_pending);
  CHECK(lab.allowed() == std::set<std::string>{"192.168.1.55"});
  const auto fw = lab.sim.snapshot();
  REQUIRE(fw.mappings.count(d.mac) == 1);
  CHECK(fw.mappings.at(d.mac).ip == *d.ip);
  CHECK(lab.store.count(persist::kLeases) == 1);
}

TEST_CASE("approval without an address takes the lowest free pool address") {
  Lab lab;
  CHECK(lab.active(mac_for(1)).ip == Ipv4Address::parse("192.168.1.50"));
  CHECK(lab.active(mac_for(2)).ip == Ipv4Address::parse("192.168.1.51"));
  CHECK(code_of([&] { lab.active(mac_for(3), "192.168.1.50"); }) == ErrorCode::IpCollision);
}

TEST_CASE("request validation") {
  Lab lab;
  CHECK(code_of([&] { lab.request("not-a-mac"); }) == ErrorCode::InvalidMac);
  lab.request("aa:bb:cc:dd:ee:01");
  CHECK(code_of([&] { lab.request("AA-BB-CC-DD-EE-01"); }) == ErrorCode::DuplicateMac);
  CHECK(code_of([&] { lab.reg.approve_device(lab.user, "dev-000001"); }) == ErrorCode::Unauthorized);
  CHECK(code_of([&] { lab.reg.approve_device(lab.admin, "dev-424242"); }) == ErrorCode::DeviceNotFound);
}

TEST_CASE("block moves the address to iot_blocked and records feedback") {
  Lab lab;
  const auto d = lab.active(mac_for(1));
  const auto t_notice = now();
  const auto out = lab.reg.block_device(Principal::system(), d.device_id, {"critical notice", "inc-000001", t_notice, {}});
  CHECK(out.device.state == DeviceState::Blocked);
  CHECK(lab.allowed().empty());
  CHECK(lab.blocked() == std::set<std::string>{"192.168.1.50"});
  const auto fb = lab.store.get(persist::kFeedback, out.feedback_id).get<persist::BlockingFeedback>();
  CHECK(fb.t_notice == t_notice);
  CHECK(fb.t_decision == out.t_decision);
  REQUIRE(fb.t_commit);
  CHECK(*fb.t_commit >= *fb.t_decision);
  CHECK(fb.incident_id == "inc-000001");
  CHECK_NOTHROW(fb.check_monotone());
  // The open lease was closed at the decision.
  const auto leases = lab.store.all(persist::kLeases);
  REQUIRE(leases.size() == 1);
  CHECK(leases[0]["end"].is_number());
}

TEST_CASE("unblock restores access and closes the feedback window") {
  Lab lab;
  const auto d = lab.active(mac_for(1));
  const auto out = lab.reg.block_device(lab.admin, d.device_id, {"manual"});
  const auto u = lab.reg.unblock_device(lab.admin, d.device_id);
  CHECK(u.state == DeviceState::Active);
  CHECK(lab.allowed() == std::set<std::string>{"192.168.1.50"});
  CHECK(lab.blocked().empty());
  const auto fb = lab.store.get(persist::kFeedback, out.feedback_id).get<persist::BlockingFeedback>();
  CHECK(fb.unblocked_at);
  CHECK(code_of([&] { lab.reg.unblock_device(lab.admin, d.device_id); }) == ErrorCode::IllegalTransition);
}

TEST_CASE("revoke removes every firewall trace and is terminal") {
  Lab lab;
  const auto d = lab.active(mac_for(1));
  const auto r = lab.reg.revoke_device(lab.admin, d.device_id);
  CHECK(r.state == DeviceState::Revoked);
  CHECK(lab.allowed().empty());
  CHECK(lab.sim.snapshot().mappings.empty());
  CHECK(code_of([&] { lab.reg.approve_device(lab.admin, d.device_id); }) == ErrorCode::IllegalTransition);
  // The MAC may be registered again once revoked.
  CHECK_NOTHROW(lab.request(mac_for(1)));
}

TEST_CASE("system principal may block but not approve") {
  Lab lab;
  const auto d = lab.request(mac_for(1));
  CHECK(code_of([&] { lab.reg.approve_device(Principal::system(), d.device_id); }) == ErrorCode::Unauthorized);
  CHECK(code_of([&] { lab.reg.block_device(Principal::system(), d.device_id, {"x"}); }) ==
        ErrorCode::IllegalTransition);
}

TEST_CASE("a block during a firewall outage is parked and replayed to the same end state") {
  Lab direct;
  Lab flaky;
  const auto a = direct.active(mac_for(1));
  const auto b = flaky.active(mac_for(1));
  direct.reg.block_device(Principal::system(), a.device_id, {"critical notice"});

  flaky.sim.set_reachable(false);
  CHECK(code_of([&] { flaky.reg.block_device(Principal::system(), b.device_id, {"critical notice"}); }) ==
        ErrorCode::FirewallUnreachable);
  CHECK(flaky.reg.device(b.device_id).state == DeviceState::Active);
  CHECK(flaky.reg.device(b.device_id).block_pending);
  CHECK(flaky.reg.pending_count() == 1);
  CHECK(flaky.reg.retry_pending() == 0);  // still offline

  flaky.sim.set_reachable(true);
  CHECK(flaky.reg.retry_pending() == 1);
  CHECK(flaky.reg.pending_count() == 0);
  CHECK(flaky.reg.device(b.device_id).state == DeviceState::Blocked);
  CHECK_FALSE(flaky.reg.device(b.device_id).block_pending);
  CHECK(flaky.sim.snapshot().same_membership(direct.sim.snapshot()));
  CHECK(flaky.store.count(persist::kFeedback) == 1);
}

TEST_CASE("an approval during a firewall outage is finished by retry") {
  Lab lab;
  const auto d = lab.request(mac_for(1));
  lab.sim.set_reachable(false);
  CHECK(code_of([&] { lab.reg.approve_device(lab.admin, d.device_id); }) == ErrorCode::FirewallUnreachable);
  const auto parked = lab.reg.device(d.device_id);
  CHECK(parked.state == DeviceState::Approved);
  CHECK(parked.registration_pending);
  lab.sim.set_reachable(true);
  CHECK(lab.reg.retry_pending() == 1);
  CHECK(lab.reg.device(d.device_id).state == DeviceState::Active);
  CHECK(lab.allowed() == std::set<std::string>{"192.168.1.50"});
}

TEST_CASE("a storage outage after the firewall commit keeps the block in memory until retry") {
  Lab lab;
  const auto d = lab.active(mac_for(1));
  lab.store.fail_next_commit();
  CHECK(code_of([&] { lab.reg.block_device(Principal::system(), d.device_id, {"x"}); }) ==
        ErrorCode::StorageUnavailable);
  CHECK(lab.blocked() == std::set<std::string>{"192.168.1.50"});
  CHECK(lab.reg.pending_count() == 1);
  CHECK(lab.reg.retry_pending() == 1);
  CHECK(lab.reg.device(d.device_id).state == DeviceState::Blocked);
  CHECK(lab.store.count(persist::kFeedback) == 1);
}

TEST_CASE("local state and committed firewall state agree after random operations and outages") {
  std::mt19937_64 rng(99);
  for (int run = 0; run < 20; ++run) {
    Lab lab;
    std::vector<std::string> ids;
    for (int step = 0; step < 40; ++step) {
      lab.sim.set_reachable(rng() % 5 != 0);
      const auto pick = [&]() -> std::string { return ids.empty() ? "dev-000000" : ids[rng() % ids.size()]; };
      try {
        switch (rng() % 5) {
          case 0: ids.push_back(lab.request(mac_for(static_cast<int>(rng() % 12))).device_id); break;
          case 1: lab.reg.approve_device(lab.admin, pick()); break;
          case 2: lab.reg.block_device(Principal::system(), pick(), {"fuzz"}); break;
          case 3: lab.reg.unblock_device(lab.admin, pick()); break;
          case 4: lab.reg.revoke_device(lab.admin, pick()); break;
        }
      } catch (const Error&) {
      }
    }
    lab.sim.set_reachable(true);
    lab.reg.retry_pending();
    CHECK(lab.reg.pending_count() == 0);
    const auto plan = lab.reg.sync_firewall("inst-1", false).plan;
    CHECK_MESSAGE(plan_empty(plan), "run " << run << ": " << nlohmann::json(plan).dump());
    CHECK(plan.conflicts.empty());

    // No two live devices share an address and every lease is well-formed.
    std::set<Ipv4Address> ips;
    for (const auto& d : lab.reg.devices())
      if (d.ip && (d.state == DeviceState::Active || d.state == DeviceState::Blocked)) CHECK(ips.insert(*d.ip).second);
  }
}

TEST_CASE("open leases never overlap on an address") {
  Lab lab;
  std::mt19937_64 rng(3);
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i) ids.push_back(lab.active(mac_for(i)).device_id);
  for (int step = 0; step < 60; ++step) {
    const auto& id = ids[rng() % ids.size()];
    try {
      if (rng() % 2) lab.reg.block_device(lab.admin, id, {"x"});
      else lab.reg.unblock_device(lab.admin, id);
    } catch (const Error&) {
    }
  }
  const auto snap = lab.reg.lease_snapshot("inst-1", now());
  std::map<Ipv4Address, int> open;
  for (const auto& l : snap.leases)
    if (!l.end) ++open[l.ip];
  for (const auto& [ip, n] : open) CHECK_MESSAGE(n <= 1, ip.to_string());
  // Any instant maps an address to at most one lease.
  for (const auto& l : snap.leases) CHECK(snap.matching(l.ip, l.start).size() == 1);
}

TEST_CASE("lease snapshot as of an instant") {
  Lab lab;
  const auto d = lab.active(mac_for(1));
  const auto t_active = lab.reg.device(d.device_id).updated_at;
  const auto out = lab.reg.block_device(lab.admin, d.device_id, {"x"});
  // Derived case: before the block the lease is open, after it closed at the decision.
  const auto before = lab.reg.lease_snapshot("inst-1", t_active);
  REQUIRE(before.leases.size() == 1);
  CHECK_FALSE(before.leases[0].end);
  const auto after = lab.reg.lease_snapshot("inst-1", out.t_decision + std::chrono::microseconds(1));
  REQUIRE(after.leases.size() == 1);
  CHECK(after.leases[0].end == out.t_decision);
  CHECK(lab.reg.lease_snapshot("inst-1", t_active - std::chrono::microseconds(1)).leases.empty());
}

TEST_CASE("sync applies missing entries and reports unmanaged ones") {
  Lab lab;
  lab.active(mac_for(1));
  lab.sim.remove_addresses_from_alias(firewall::kAllowedAlias, {"192.168.1.50"});
  lab.sim.upsert_dhcp_mapping(*MacAddress::parse("02:ff:ff:ff:ff:ff"), *Ipv4Address::parse("192.168.1.99"), std::nullopt);
  lab.sim.apply_changes();
  const auto dry = lab.reg.sync_firewall("inst-1", false);
  CHECK_FALSE(dry.receipt);
  REQUIRE(dry.plan.alias_changes.size() == 1);
  CHECK(dry.plan.conflicts.size() == 1);
  const auto applied = lab.reg.sync_firewall("inst-1", true);
  CHECK(applied.receipt);
  CHECK(lab.allowed() == std::set<std::string>{"192.168.1.50"});
  CHECK(lab.sim.snapshot().mappings.size() == 2);  // the stranger stays
}
