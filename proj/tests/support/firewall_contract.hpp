#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "campusguard/firewall.hpp"

namespace contract {

/// One firewall under test plus the fault switches the suite needs.
struct FirewallFixture {
  virtual ~FirewallFixture() = default;
  virtual campusguard::firewall::Firewall& fw() = 0;
  virtual void set_reachable(bool reachable) = 0;
  virtual void reject_next_commit(const std::string& reason) = 0;
  /// Verdict the filter currently enforces for `source`.
  virtual campusguard::firewall::Verdict probe(const std::string& source) = 0;
};

using FixtureFactory = std::function<std::unique_ptr<FirewallFixture>()>;

struct CaseResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Every case gets a fresh firewall on subnet 192.168.1.0/24 with no
/// activation delay.
std::vector<CaseResult> run_firewall_contract(const FixtureFactory& make);

/// Fixture over an in-process simulated firewall.
std::unique_ptr<FirewallFixture> make_simulated_fixture();
/// Fixture over the wire client talking to a local pfSense-compatible stub.
std::unique_ptr<FirewallFixture> make_wire_fixture();

}  // namespace contract
