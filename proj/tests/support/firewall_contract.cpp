#include "firewall_contract.hpp"

#include <sstream>
#include <stdexcept>

#include "campusguard/error.hpp"
#include "campusguard/firewall_server.hpp"
#include "campusguard/pfsense_client.hpp"
#include "campusguard/simulated_firewall.hpp"

namespace contract {

using namespace campusguard;
using namespace campusguard::firewall;

namespace {

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw CheckFailed(what);
}

template <class F>
void expect_error(ErrorCode code, F&& fn, const std::string& what) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) return;
    throw CheckFailed(what + ": expected " + std::string(to_string(code)) + ", got " +
                      std::string(to_string(e.code())));
  }
  throw CheckFailed(what + ": expected " + std::string(to_string(code)) + ", nothing thrown");
}

std::string show(const std::set<std::string>& s) {
  std::ostringstream o;
  o << '{';
  for (auto it = s.begin(); it != s.end(); ++it) o << (it == s.begin() ? "" : ",") << *it;
  o << '}';
  return o.str();
}

using Set = std::set<std::string>;
const auto kA = "192.168.1.50";
const auto kB = "192.168.1.51";
MacAddress mac1() { return *MacAddress::parse("aa:bb:cc:dd:ee:ff"); }
MacAddress mac2() { return *MacAddress::parse("aa:bb:cc:dd:ee:01"); }
Ipv4Address ip(const char* t) { return *Ipv4Address::parse(t); }

using Case = std::pair<const char*, std::function<void(FirewallFixture&)>>;

const std::vector<Case>& cases() {
  static const std::vector<Case> k = {
      {"reserved aliases exist initially",
       [](FirewallFixture& f) {
         const auto s = f.fw().snapshot();
         s.validate();
         expect(f.fw().get_alias_by_name(kAllowedAlias).addresses.empty(), "iot_allowed starts empty");
         expect(f.fw().get_alias_by_name(kBlockedAlias).addresses.empty(), "iot_blocked starts empty");
       }},
      {"unknown alias is AliasNotFound",
       [](FirewallFixture& f) {
         expect_error(ErrorCode::AliasNotFound, [&] { f.fw().get_alias_by_name("nope"); }, "get nope");
         expect_error(ErrorCode::AliasNotFound, [&] { f.fw().add_addresses_to_alias("nope", {kA}); }, "add nope");
         expect_error(ErrorCode::AliasNotFound, [&] { f.fw().remove_addresses_from_alias("nope", {kA}); },
                      "remove nope");
       }},
      {"add unions into an empty alias",
       [](FirewallFixture& f) {
         const auto staged = f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         expect(staged.addresses == Set{kA}, "staged " + show(staged.addresses));
         f.fw().apply_changes();
         expect(f.fw().get_alias_by_name(kBlockedAlias).addresses == Set{kA}, "committed contents");
       }},
      {"add is idempotent",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         const auto again = f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         expect(again.addresses == Set{kA}, "second add " + show(again.addresses));
       }},
      {"add canonicalises MAC members",
       [](FirewallFixture& f) {
         const auto a = f.fw().add_addresses_to_alias(kAllowedAlias, {"AA-BB-CC-DD-EE-FF"});
         expect(a.addresses == Set{"aa:bb:cc:dd:ee:ff"}, "canonical form " + show(a.addresses));
       }},
      {"add rejects malformed addresses without change",
       [](FirewallFixture& f) {
         expect_error(ErrorCode::InvalidAddress, [&] { f.fw().add_addresses_to_alias(kBlockedAlias, {"999.1.2.3"}); },
                      "add 999.1.2.3");
         f.fw().apply_changes();
         expect(f.fw().get_alias_by_name(kBlockedAlias).addresses.empty(), "alias untouched");
       }},
      {"remove is set difference",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA, kB});
         const auto r = f.fw().remove_addresses_from_alias(kAllowedAlias, {kA});
         expect(r.addresses == Set{kB}, "after remove " + show(r.addresses));
         const auto r2 = f.fw().remove_addresses_from_alias(kAllowedAlias, {"192.168.1.99"});
         expect(r2.addresses == Set{kB}, "absent remove " + show(r2.addresses));
       }},
      {"reads observe committed state only",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA});
         expect(f.fw().get_alias_by_name(kAllowedAlias).addresses.empty(), "staged edit visible before apply");
         expect(f.fw().snapshot().alias(kAllowedAlias)->addresses.empty(), "snapshot shows staged edit");
         f.fw().apply_changes();
         expect(f.fw().get_alias_by_name(kAllowedAlias).addresses == Set{kA}, "edit missing after apply");
       }},
      {"upsert creates then updates one mapping",
       [](FirewallFixture& f) {
         auto m = f.fw().upsert_dhcp_mapping(mac1(), ip(kA), std::string("cam-1"));
         expect(m.ip == ip(kA) && m.hostname == std::optional<std::string>("cam-1"), "created mapping");
         f.fw().upsert_dhcp_mapping(mac1(), ip(kB), std::string("cam-1"));
         f.fw().apply_changes();
         const auto s = f.fw().snapshot();
         expect(s.mappings.size() == 1, "one mapping after re-map, got " + std::to_string(s.mappings.size()));
         expect(s.mappings.at(mac1()).ip == ip(kB), "re-mapped address");
       }},
      {"upsert refuses an address held by another MAC",
       [](FirewallFixture& f) {
         f.fw().upsert_dhcp_mapping(mac1(), ip(kA), std::nullopt);
         expect_error(ErrorCode::IpCollision, [&] { f.fw().upsert_dhcp_mapping(mac2(), ip(kA), std::nullopt); },
                      "second MAC on .50");
       }},
      {"upsert refuses addresses outside the subnet",
       [](FirewallFixture& f) {
         expect_error(ErrorCode::InvalidAddress,
                      [&] { f.fw().upsert_dhcp_mapping(mac1(), ip("10.9.9.9"), std::nullopt); }, "10.9.9.9");
       }},
      {"delete removes a mapping and ignores unknown MACs",
       [](FirewallFixture& f) {
         f.fw().upsert_dhcp_mapping(mac1(), ip(kA), std::nullopt);
         f.fw().apply_changes();
         f.fw().delete_dhcp_mapping(mac2());
         f.fw().delete_dhcp_mapping(mac1());
         f.fw().apply_changes();
         expect(f.fw().snapshot().mappings.empty(), "mapping still present");
       }},
      {"apply increments generation by one",
       [](FirewallFixture& f) {
         const auto g0 = f.fw().snapshot().generation;
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA});
         const auto r = f.fw().apply_changes();
         expect(!r.noop && r.generation == g0 + 1, "generation " + std::to_string(r.generation));
         expect(f.fw().snapshot().generation == g0 + 1, "snapshot generation");
       }},
      {"apply with nothing staged is a no-op receipt",
       [](FirewallFixture& f) {
         const auto g0 = f.fw().snapshot().generation;
         const auto r = f.fw().apply_changes();
         expect(r.noop && r.generation == g0, "expected noop receipt at unchanged generation");
       }},
      {"offline reads and edits fail without partial change",
       [](FirewallFixture& f) {
         f.set_reachable(false);
         expect_error(ErrorCode::FirewallUnreachable, [&] { f.fw().get_alias_by_name(kAllowedAlias); }, "get");
         expect_error(ErrorCode::FirewallUnreachable, [&] { f.fw().add_addresses_to_alias(kAllowedAlias, {kA}); },
                      "add");
         expect_error(ErrorCode::FirewallUnreachable,
                      [&] { f.fw().remove_addresses_from_alias(kAllowedAlias, {kA}); }, "remove");
         expect_error(ErrorCode::FirewallUnreachable, [&] { f.fw().snapshot(); }, "snapshot");
         f.set_reachable(true);
         f.fw().apply_changes();
         expect(f.fw().get_alias_by_name(kAllowedAlias).addresses.empty(), "partial change leaked");
       }},
      {"offline apply keeps staged changes for retry",
       [](FirewallFixture& f) {
         const auto g0 = f.fw().snapshot().generation;
         f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         f.fw().upsert_dhcp_mapping(mac1(), ip(kA), std::nullopt);
         f.set_reachable(false);
         expect_error(ErrorCode::FirewallUnreachable, [&] { f.fw().apply_changes(); }, "apply offline");
         f.set_reachable(true);
         expect(f.fw().snapshot().generation == g0, "generation moved while offline");
         const auto r = f.fw().apply_changes();
         expect(r.generation == g0 + 1, "retry generation");
         const auto s = f.fw().snapshot();
         expect(s.alias(kBlockedAlias)->addresses == Set{kA} && s.mappings.count(mac1()) == 1,
                "retry did not land the staged set");
       }},
      {"rejected commit leaves staged set intact",
       [](FirewallFixture& f) {
         const auto g0 = f.fw().snapshot().generation;
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA});
         f.reject_next_commit("filter reload failed");
         expect_error(ErrorCode::CommitRejected, [&] { f.fw().apply_changes(); }, "apply rejected");
         expect(f.fw().snapshot().generation == g0, "generation moved on rejection");
         const auto r = f.fw().apply_changes();
         expect(!r.noop && f.fw().get_alias_by_name(kAllowedAlias).addresses == Set{kA}, "staged set lost");
       }},
      {"filter verdicts follow committed membership",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA, kB});
         f.fw().apply_changes();
         expect(f.probe(kA) == Verdict::Pass, "allowed address blocked");
         expect(f.probe("192.168.1.77") == Verdict::Block, "unregistered address passes");
         f.fw().remove_addresses_from_alias(kAllowedAlias, {kA});
         f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         expect(f.probe(kA) == Verdict::Pass, "staged block enforced before apply");
         f.fw().apply_changes();
         expect(f.probe(kA) == Verdict::Block, "blocked address passes");
         expect(f.probe(kB) == Verdict::Pass, "bystander lost access");
       }},
      {"block list wins over allow list",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA});
         f.fw().add_addresses_to_alias(kBlockedAlias, {kA});
         f.fw().apply_changes();
         expect(f.probe(kA) == Verdict::Block, "dual member passes");
       }},
      {"staging twice equals staging once",
       [](FirewallFixture& f) {
         for (int i = 0; i < 2; ++i) {
           f.fw().add_addresses_to_alias(kAllowedAlias, {kA, kB});
           f.fw().upsert_dhcp_mapping(mac1(), ip(kA), std::string("h"));
         }
         f.fw().apply_changes();
         auto want = FirewallState::initial();
         want.aliases.find(kAllowedAlias)->second.addresses = {kA, kB};
         want.mappings[mac1()] = {mac1(), ip(kA), std::string("h")};
         expect(f.fw().snapshot().same_membership(want), "state differs from a single staging");
       }},
      {"reserved aliases survive being emptied",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kA});
         f.fw().apply_changes();
         f.fw().remove_addresses_from_alias(kAllowedAlias, {kA});
         f.fw().apply_changes();
         const auto s = f.fw().snapshot();
         s.validate();
         expect(s.alias(kAllowedAlias) && s.alias(kAllowedAlias)->addresses.empty(), "iot_allowed vanished");
       }},
      {"plan application converges",
       [](FirewallFixture& f) {
         f.fw().add_addresses_to_alias(kAllowedAlias, {kB, "192.168.1.52"});
         f.fw().upsert_dhcp_mapping(mac2(), ip(kB), std::nullopt);
         f.fw().apply_changes();
         auto local = FirewallState::initial();
         local.aliases.find(kAllowedAlias)->second.addresses = {kA, kB};
         local.aliases.find(kBlockedAlias)->second.addresses = {"192.168.1.52"};
         local.mappings[mac1()] = {mac1(), ip(kA), std::nullopt};
         local.mappings[mac2()] = {mac2(), ip(kB), std::nullopt};
         const auto plan = reconcile(local, f.fw().snapshot());
         expect(plan.conflicts.empty(), "unexpected conflicts");
         apply_plan(f.fw(), plan);
         expect(f.fw().snapshot().same_membership(local), "remote differs from local after the plan");
         expect(reconcile(local, f.fw().snapshot()).empty(), "second plan not empty");
       }},
  };
  return k;
}

// ---- fixtures ---------------------------------------------------------------

SimulatedFirewallOptions options() {
  SimulatedFirewallOptions o;
  o.subnet = Subnet::parse("192.168.1.0/24");
  return o;
}

struct SimFixture final : FirewallFixture {
  SimulatedFirewall sim{options()};
  Firewall& fw() override { return sim; }
  void set_reachable(bool r) override { sim.set_reachable(r); }
  void reject_next_commit(const std::string& reason) override { sim.reject_next_commit(reason); }
  Verdict probe(const std::string& src) override { return sim.evaluate_packet(src, Ipv4Address(0x0a0a0050)); }
};

struct WireFixture final : FirewallFixture {
  SimulatedFirewall sim{options()};
  FirewallHttpServer server{sim, "contract-key"};
  std::unique_ptr<PfSenseClient> client;

  WireFixture() {
    server.start();
    PfSenseEndpoint ep;
    ep.base_url = server.base_url();
    ep.api_key = "contract-key";
    client = std::make_unique<PfSenseClient>(ep);
  }
  Firewall& fw() override { return *client; }
  void set_reachable(bool r) override { sim.set_reachable(r); }
  void reject_next_commit(const std::string& reason) override { sim.reject_next_commit(reason); }
  Verdict probe(const std::string& src) override { return sim.evaluate_packet(src, Ipv4Address(0x0a0a0050)); }
};

}  // namespace

std::vector<CaseResult> run_firewall_contract(const FixtureFactory& make) {
  std::vector<CaseResult> out;
  for (const auto& [name, body] : cases()) {
    CaseResult r{name, false, {}};
    try {
      auto fixture = make();
      body(*fixture);
      r.passed = true;
    } catch (const CheckFailed& e) {
      r.detail = e.what();
    } catch (const Error& e) {
      r.detail = std::string("unexpected ") + std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::unique_ptr<FirewallFixture> make_simulated_fixture() { return std::make_unique<SimFixture>(); }
std::unique_ptr<FirewallFixture> make_wire_fixture() { return std::make_unique<WireFixture>(); }

}  // namespace contract
