#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "campusguard/domain.hpp"
#include "campusguard/firewall.hpp"
#include "campusguard/lease.hpp"
#include "campusguard/profiler.hpp"
#include "campusguard/store.hpp"
#include "json.hpp"

namespace campusguard::registry {

struct AccessRequest {
  std::string request_id;
  std::string requester;
  MacAddress mac;
  std::optional<Ipv4Address> requested_ip;
  std::string device_name;
  Timestamp submitted_at{};
  std::string device_id;
  std::string institution_id;
};

void to_json(nlohmann::json& j, const AccessRequest& r);
void from_json(const nlohmann::json& j, AccessRequest& r);

/// Inclusive range of addresses handed out when the approver names none.
struct AddressPool {
  Ipv4Address first;
  Ipv4Address last;

  static AddressPool parse(std::string_view first, std::string_view last);
};

struct BlockRequest {
  std::string reason;
  std::optional<std::string> incident_id;
  std::optional<Timestamp> t_notice;
  std::optional<Timestamp> t_attack_start;
};

struct SyncOutcome {
  firewall::SyncPlan plan;
  std::optional<firewall::CommitReceipt> receipt;  // set when the plan was applied
};

struct BlockOutcome {
  Device device;
  std::string feedback_id;
  Timestamp t_decision{};
  firewall::CommitReceipt receipt;
};

/// Onboarding and enforcement workflow. Every lifecycle change is mirrored on
/// the institution's firewall before it is committed locally; a firewall
/// failure leaves a retry marker on the device instead of a half-done state.
///
/// Operations on one device are serialized; firewall edits of one institution
/// go through a single writer.
class Registry {
 public:
  explicit Registry(persist::Store& store, OpProfiler* profiler = nullptr);
  ~Registry();
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  void add_institution(Institution institution, firewall::Firewall& firewall, AddressPool pool);
  std::vector<Institution> institutions() const;
  const Institution& institution(std::string_view id) const;
  firewall::Firewall& firewall_of(std::string_view institution_id) const;

  /// `institution_id` may be omitted when the user belongs to exactly one.
  Device request_access(const Principal& user, std::string_view mac, std::string device_name,
                        std::optional<Ipv4Address> requested_ip = std::nullopt,
                        std::optional<std::string> institution_id = std::nullopt);

  /// Pending -> Approved -> Active. Without `ip`, the requested address or the
  /// lowest free pool address is used.
  Device approve_device(const Principal& admin, const std::string& device_id,
                        std::optional<Ipv4Address> ip = std::nullopt);

  BlockOutcome block_device(const Principal& actor, const std::string& device_id, BlockRequest request);
  Device unblock_device(const Principal& admin, const std::string& device_id);
  Device revoke_device(const Principal& admin, const std::string& device_id);

  /// Finishes parked blocks first, then parked registrations. Returns how many
  /// completed; failures stay parked.
  std::size_t retry_pending();
  std::size_t pending_count() const;

  LeaseSnapshot lease_snapshot(std::string_view institution_id, Timestamp at) const;

  /// What the firewall must hold given local state: Active IPs allowed,
  /// Blocked IPs blocked, mappings for both.
  firewall::FirewallState desired_firewall_state(std::string_view institution_id) const;
  /// Diff of desired against committed firewall state; applied when `apply`
  /// is set and the plan has changes. Conflicts are reported, never forced.
  SyncOutcome sync_firewall(std::string_view institution_id, bool apply);
  /// MACs of every device ever registered in the institution.
  std::set<MacAddress> managed_macs(std::string_view institution_id) const;

  Device device(std::string_view device_id) const;
  std::optional<Device> find_device(std::string_view device_id) const;
  std::vector<Device> devices(std::optional<std::string> institution_id = std::nullopt) const;
  std::optional<DeviceState> device_state(const std::string& device_id) const;

 private:
  struct Binding;
  Binding& binding(std::string_view institution_id) const;
  std::shared_ptr<std::mutex> device_lock(const std::string& device_id);

  bool finish_registration(Device device, const Principal& actor);
  BlockOutcome finish_block(Device device, const Principal& actor, const BlockRequest& request);
  void restage(Binding& b, const Device& device);
  Ipv4Address pick_address(const Binding& b, const Device& device, std::optional<Ipv4Address> wanted) const;
  std::optional<LeaseRecord> open_lease(const std::string& device_id) const;

  persist::Store& store_;
  OpProfiler* profiler_;
  std::map<std::string, std::unique_ptr<Binding>, std::less<>> bindings_;
  mutable std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> device_locks_;
  // Blocks the firewall enforces but storage could not record yet.
  std::map<std::string, PendingBlock> volatile_blocks_;
};

}  // namespace campusguard::registry
