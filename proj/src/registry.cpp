#include "campusguard/registry.hpp"

#include <algorithm>

#include "campusguard/error.hpp"
#include "campusguard/json_util.hpp"

namespace campusguard::registry {

using nlohmann::json;
using firewall::kAllowedAlias;
using firewall::kBlockedAlias;

void to_json(json& j, const AccessRequest& r) {
  j = {{"id", r.request_id},
       {"requester", r.requester},
       {"mac", r.mac.to_string()},
       {"requested_ip", r.requested_ip ? json(r.requested_ip->to_string()) : json(nullptr)},
       {"device_name", r.device_name},
       {"submitted_at", jsonio::ts(r.submitted_at)},
       {"created_at", jsonio::ts(r.submitted_at)},
       {"device_id", r.device_id},
       {"institution_id", r.institution_id}};
}

void from_json(const json& j, AccessRequest& r) {
  r.request_id = j.value("id", "");
  r.requester = j.at("requester").get<std::string>();
  r.mac = jsonio::mac(j.at("mac"));
  r.requested_ip = jsonio::opt_ip(j, "requested_ip");
  r.device_name = j.value("device_name", "");
  r.submitted_at = jsonio::ts(j.at("submitted_at"));
  r.device_id = j.at("device_id").get<std::string>();
  r.institution_id = j.at("institution_id").get<std::string>();
}

AddressPool AddressPool::parse(std::string_view first, std::string_view last) {
  auto a = Ipv4Address::parse(first);
  auto b = Ipv4Address::parse(last);
  if (!a || !b || *b < *a)
    throw Error(ErrorCode::InvalidConfig, "bad address pool", std::string(first) + "-" + std::string(last));
  return {*a, *b};
}

struct Registry::Binding {
  Institution institution;
  firewall::Firewall* firewall = nullptr;
  AddressPool pool;
  std::mutex writer;  // serializes staged edits and commits
};

namespace {

bool is_firewall_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::FirewallUnreachable:
    case ErrorCode::CommitRejected:
    case ErrorCode::AliasNotFound:
    case ErrorCode::InvalidAddress:
    case ErrorCode::IpCollision:
    case ErrorCode::SchemaViolation:
      return true;
    default:
      return false;
  }
}

std::optional<std::string> hostname_for(const Device& d) {
  if (d.name.empty()) return std::nullopt;
  return d.name;
}

AuditEntry audit(const std::string& actor, std::string action, const std::string& target, std::string detail,
                 Timestamp at) {
  return AuditEntry{{}, at, actor, std::move(action), target, std::move(detail)};
}

// Internal actor for completing work an authorized caller already started.
Principal retry_actor(const std::string& institution_id) {
  return Principal{"system:retry", RoleKind::Superuser, {institution_id}};
}

}  // namespace

Registry::Registry(persist::Store& store, OpProfiler* profiler) : store_(store), profiler_(profiler) {}

Registry::~Registry() = default;

void Registry::add_institution(Institution institution, firewall::Firewall& fw, AddressPool pool) {
  auto b = std::make_unique<Binding>();
  b->institution = institution;
  b->firewall = &fw;
  b->pool = pool;
  bindings_[institution.institution_id] = std::move(b);
}

std::vector<Institution> Registry::institutions() const {
  std::vector<Institution> out;
  for (const auto& [id, b] : bindings_) out.push_back(b->institution);
  return out;
}

Registry::Binding& Registry::binding(std::string_view id) const {
  auto it = bindings_.find(id);
  if (it == bindings_.end()) throw Error(ErrorCode::NotFound, "unknown institution", std::string(id));
  return *it->second;
}

const Institution& Registry::institution(std::string_view id) const { return binding(id).institution; }

firewall::Firewall& Registry::firewall_of(std::string_view id) const { return *binding(id).firewall; }

std::shared_ptr<std::mutex> Registry::device_lock(const std::string& device_id) {
  std::lock_guard lock(locks_mu_);
  auto& m = device_locks_[device_id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

std::optional<Device> Registry::find_device(std::string_view device_id) const {
  auto record = store_.find(persist::kDevices, device_id);
  if (!record) return std::nullopt;
  return record->get<Device>();
}

Device Registry::device(std::string_view device_id) const {
  auto d = find_device(device_id);
  if (!d) throw Error(ErrorCode::DeviceNotFound, "no such device", std::string(device_id));
  return *d;
}

std::vector<Device> Registry::devices(std::optional<std::string> institution_id) const {
  persist::Filter filter;
  if (institution_id) filter = persist::field_equals("institution_id", *institution_id);
  std::vector<Device> out;
  for (const auto& r : store_.all(persist::kDevices, filter)) out.push_back(r.get<Device>());
  return out;
}

std::optional<DeviceState> Registry::device_state(const std::string& device_id) const {
  auto d = find_device(device_id);
  if (!d) return std::nullopt;
  return d->state;
}

std::optional<LeaseRecord> Registry::open_lease(const std::string& device_id) const {
  auto rows = store_.all(persist::kLeases, [&](const json& r) {
    return r.value("device_id", "") == device_id && r["end"].is_null();
  });
  if (rows.empty()) return std::nullopt;
  return rows.back().get<LeaseRecord>();
}

Device Registry::request_access(const Principal& user, std::string_view mac_text, std::string device_name,
                                std::optional<Ipv4Address> requested_ip,
                                std::optional<std::string> institution_id) {
  const auto mac = MacAddress::parse(mac_text);
  if (!mac) throw Error(ErrorCode::InvalidMac, "not a MAC address", std::string(mac_text));
  if (!institution_id) {
    if (user.institutions.size() != 1)
      throw Error(ErrorCode::InvalidRequest, "institution must be named", user.subject);
    institution_id = *user.institutions.begin();
  }
  auto& b = binding(*institution_id);
  if (authorize(user, Action::WriteDevice, {*institution_id, user.subject}) == Decision::Deny)
    throw Error(ErrorCode::Unauthorized, "may not register devices here", *institution_id);

  std::lock_guard guard(b.writer);
  for (const auto& d : devices(*institution_id))
    if (d.mac == *mac && d.state != DeviceState::Revoked)
      throw Error(ErrorCode::DuplicateMac, "MAC already registered", d.device_id);

  const auto t = now();
  Device d;
  d.mac = *mac;
  d.owner_id = user.subject;
  d.institution_id = *institution_id;
  d.name = std::move(device_name);
  d.state = DeviceState::Pending;
  d.created_at = t;
  d.updated_at = t;

  auto tx = store_.begin();
  d.device_id = tx.put(persist::kDevices, json(d));
  AccessRequest req{{}, user.subject, *mac, requested_ip, d.name, t, d.device_id, *institution_id};
  const auto req_id = tx.put(persist::kAccessRequests, json(req));
  tx.put(persist::kAudit, json(audit(user.subject, "device.request", d.device_id, req_id, t)));
  tx.commit();
  return d;
}

Ipv4Address Registry::pick_address(const Binding& b, const Device& device,
                                   std::optional<Ipv4Address> wanted) const {
  std::set<Ipv4Address> taken;
  for (const auto& d : devices(b.institution.institution_id))
    if (d.device_id != device.device_id && d.state != DeviceState::Revoked && d.ip) taken.insert(*d.ip);

  if (wanted) {
    if (taken.count(*wanted)) throw Error(ErrorCode::IpCollision, "address already assigned", wanted->to_string());
    return *wanted;
  }
  auto reqs = store_.all(persist::kAccessRequests, persist::field_equals("device_id", device.device_id));
  if (!reqs.empty()) {
    auto req = reqs.back().get<AccessRequest>();
    if (req.requested_ip && !taken.count(*req.requested_ip)) return *req.requested_ip;
  }
  for (auto v = b.pool.first.value(); v <= b.pool.last.value(); ++v) {
    if (!taken.count(Ipv4Address(v))) return Ipv4Address(v);
    if (v == 0xffffffffu) break;
  }
  throw Error(ErrorCode::IpCollision, "address pool exhausted", b.institution.institution_id);
}

void Registry::restage(Binding& b, const Device& d) {
  // Best effort: put this device's staged membership back in line with its
  // local state so a failed edit is not carried by someone else's commit.
  if (!d.ip) return;
  const std::set<std::string> ip{d.ip->to_string()};
  auto& fw = *b.firewall;
  try {
    switch (d.state) {
      case DeviceState::Active:
        fw.remove_addresses_from_alias(kBlockedAlias, ip);
        fw.add_addresses_to_alias(kAllowedAlias, ip);
        break;
      case DeviceState::Blocked:
        fw.remove_addresses_from_alias(kAllowedAlias, ip);
        fw.add_addresses_to_alias(kBlockedAlias, ip);
        break;
      default:
        fw.remove_addresses_from_alias(kAllowedAlias, ip);
        fw.remove_addresses_from_alias(kBlockedAlias, ip);
        fw.delete_dhcp_mapping(d.mac);
        break;
    }
  } catch (const Error&) {
  }
}

Device Registry::approve_device(const Principal& admin, const std::string& device_id,
                                std::optional<Ipv4Address> ip) {
  auto lock = device_lock(device_id);
  std::lock_guard guard(*lock);
  auto d = device(device_id);
  auto& b = binding(d.institution_id);
  auto step = transition_device(d, LifecycleEvent::Approve, admin);
  step.device.ip = pick_address(b, d, ip);
  step.device.registration_pending = true;
  step.audit.detail += " ip=" + step.device.ip->to_string();

  auto tx = store_.begin();
  tx.put(persist::kDevices, json(step.device));
  tx.put(persist::kAudit, json(step.audit));
  tx.commit();

  try {
    finish_registration(step.device, admin);
  } catch (const Error& e) {
    // A retry cannot fix an address the firewall refuses; hand it back.
    if (e.code() == ErrorCode::InvalidAddress || e.code() == ErrorCode::IpCollision) {
      auto tx2 = store_.begin();
      tx2.put(persist::kDevices, json(d));
      tx2.put(persist::kAudit, json(audit(admin.subject, "device.approve_rejected", device_id, e.what(), now())));
      tx2.commit();
    }
    throw;
  }
  return device(device_id);
}

bool Registry::finish_registration(Device d, const Principal& actor) {
  auto& b = binding(d.institution_id);
  const std::set<std::string> ip{d.ip->to_string()};
  {
    std::lock_guard guard(b.writer);
    auto& fw = *b.firewall;
    try {
      fw.upsert_dhcp_mapping(d.mac, *d.ip, hostname_for(d));
      fw.remove_addresses_from_alias(kBlockedAlias, ip);
      if (profiler_) {
        profiler_->run(ops::kAddAddressesToAlias, [&] { return fw.add_addresses_to_alias(kAllowedAlias, ip); });
        profiler_->run(ops::kApplyChanges, [&] { return fw.apply_changes(); });
      } else {
        fw.add_addresses_to_alias(kAllowedAlias, ip);
        fw.apply_changes();
      }
    } catch (const Error& e) {
      if (is_firewall_error(e.code())) restage(b, d);
      throw;
    }
  }

  const auto t = now();
  auto step = transition_device(d, LifecycleEvent::Activate, actor, t);
  step.device.registration_pending = false;
  LeaseRecord lease{{}, d.device_id, d.institution_id, *d.ip, step.device.updated_at, std::nullopt};

  auto tx = store_.begin();
  tx.put(persist::kDevices, json(step.device));
  tx.put(persist::kLeases, json(lease));
  tx.put(persist::kAudit, json(step.audit));
  tx.commit();
  return true;
}

BlockOutcome Registry::block_device(const Principal& actor, const std::string& device_id, BlockRequest request) {
  auto lock = device_lock(device_id);
  std::lock_guard guard(*lock);
  const auto d = device(device_id);
  transition_device(d, LifecycleEvent::Block, actor);  // authorization and legality only
  return finish_block(d, actor, request);
}

BlockOutcome Registry::finish_block(Device d, const Principal& actor, const BlockRequest& request) {
  auto& b = binding(d.institution_id);
  const std::set<std::string> ip{d.ip->to_string()};
  BlockOutcome out;
  {
    std::lock_guard guard(b.writer);
    auto& fw = *b.firewall;
    auto timed = [&](std::string_view op, auto&& fn) -> decltype(auto) {
      return profiler_ ? profiler_->run(op, fn) : fn();
    };
    try {
      timed(ops::kGetAliasByName, [&] { return fw.get_alias_by_name(kBlockedAlias); });
      fw.remove_addresses_from_alias(kAllowedAlias, ip);
      timed(ops::kAddAddressesToAlias, [&] { return fw.add_addresses_to_alias(kBlockedAlias, ip); });
      out.receipt = timed(ops::kApplyChanges, [&] {
        out.t_decision = now();
        return fw.apply_changes();
      });
    } catch (const Error& e) {
      if (!is_firewall_error(e.code())) throw;
      restage(b, d);
      if (!d.block_pending) {
        d.block_pending = PendingBlock{actor.subject, request.reason, request.incident_id, request.t_notice,
                                       request.t_attack_start};
        try {
          auto tx = store_.begin();
          tx.put(persist::kDevices, json(d));
          tx.put(persist::kAudit, json(audit(actor.subject, "device.block_deferred", d.device_id, e.what(), now())));
          tx.commit();
        } catch (const Error&) {
          std::lock_guard l(locks_mu_);
          volatile_blocks_[d.device_id] = *d.block_pending;
        }
      }
      throw;
    }
  }

  // A replayed commit is a no-op whose receipt carries the older activation time.
  const auto t_commit = out.receipt.noop ? out.t_decision : std::max(out.receipt.applied_at, out.t_decision);
  auto step = transition_device(d, LifecycleEvent::Block, actor, out.t_decision);
  step.device.block_pending.reset();
  step.audit.detail += " reason=" + request.reason;

  persist::BlockingFeedback fb;
  fb.device_id = d.device_id;
  fb.incident_id = request.incident_id;
  fb.t_decision = out.t_decision;
  fb.t_commit = t_commit;
  fb.created_at = out.t_decision;
  // Sensor and orchestrator clocks may disagree; keep only stamps that order.
  if (request.t_notice && *request.t_notice <= out.t_decision) fb.t_notice = request.t_notice;
  if (request.t_attack_start && *request.t_attack_start <= fb.t_notice.value_or(out.t_decision))
    fb.t_attack_start = request.t_attack_start;

  try {
    auto tx = store_.begin();
    tx.put(persist::kDevices, json(step.device));
    if (auto lease = open_lease(d.device_id)) {
      lease->end = std::max(out.t_decision, lease->start);
      tx.put(persist::kLeases, json(*lease));
    }
    out.feedback_id = tx.put(persist::kFeedback, json(fb));
    tx.put(persist::kAudit, json(step.audit));
    tx.commit();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::StorageUnavailable) {
      // The firewall already enforces the block; remember to record it.
      std::lock_guard l(locks_mu_);
      volatile_blocks_[d.device_id] =
          PendingBlock{actor.subject, request.reason, request.incident_id, request.t_notice, request.t_attack_start};
    }
    throw;
  }
  {
    std::lock_guard l(locks_mu_);
    volatile_blocks_.erase(d.device_id);
  }
  out.device = step.device;
  return out;
}

Device Registry::unblock_device(const Principal& admin, const std::string& device_id) {
  auto lock = device_lock(device_id);
  std::lock_guard guard(*lock);
  const auto d = device(device_id);
  auto step = transition_device(d, LifecycleEvent::Unblock, admin);
  auto& b = binding(d.institution_id);
  const std::set<std::string> ip{d.ip->to_string()};
  {
    std::lock_guard w(b.writer);
    try {
      b.firewall->remove_addresses_from_alias(kBlockedAlias, ip);
      b.firewall->add_addresses_to_alias(kAllowedAlias, ip);
      b.firewall->apply_changes();
    } catch (const Error& e) {
      if (is_firewall_error(e.code())) restage(b, d);
      throw;
    }
  }
  const auto t = step.device.updated_at;
  auto tx = store_.begin();
  tx.put(persist::kDevices, json(step.device));
  tx.put(persist::kLeases, json(LeaseRecord{{}, d.device_id, d.institution_id, *d.ip, t, std::nullopt}));
  auto open = store_.all(persist::kFeedback, [&](const json& r) {
    return r.value("device_id", "") == device_id && r["unblocked_at"].is_null();
  });
  if (!open.empty()) {
    auto fb = open.back().get<persist::BlockingFeedback>();
    fb.unblocked_at = std::max(t, fb.t_commit.value_or(t));
    tx.put(persist::kFeedback, json(fb));
  }
  tx.put(persist::kAudit, json(step.audit));
  tx.commit();
  return step.device;
}

Device Registry::revoke_device(const Principal& admin, const std::string& device_id) {
  auto lock = device_lock(device_id);
  std::lock_guard guard(*lock);
  const auto d = device(device_id);
  auto step = transition_device(d, LifecycleEvent::Revoke, admin);
  step.device.registration_pending = false;
  step.device.block_pending.reset();
  auto& b = binding(d.institution_id);
  if (d.ip && d.state != DeviceState::Pending) {
    const std::set<std::string> ip{d.ip->to_string()};
    std::lock_guard w(b.writer);
    try {
      b.firewall->remove_addresses_from_alias(kAllowedAlias, ip);
      b.firewall->remove_addresses_from_alias(kBlockedAlias, ip);
      b.firewall->delete_dhcp_mapping(d.mac);
      b.firewall->apply_changes();
    } catch (const Error& e) {
      if (is_firewall_error(e.code())) restage(b, d);
      throw;
    }
  }
  auto tx = store_.begin();
  tx.put(persist::kDevices, json(step.device));
  if (auto lease = open_lease(device_id)) {
    lease->end = std::max(step.device.updated_at, lease->start);
    tx.put(persist::kLeases, json(*lease));
  }
  tx.put(persist::kAudit, json(step.audit));
  tx.commit();
  {
    std::lock_guard l(locks_mu_);
    volatile_blocks_.erase(device_id);
  }
  return step.device;
}

std::size_t Registry::retry_pending() {
  std::size_t done = 0;
  std::map<std::string, PendingBlock> blocks;
  {
    std::lock_guard l(locks_mu_);
    blocks = volatile_blocks_;
  }
  std::vector<Device> registrations;
  for (const auto& d : devices()) {
    if (d.state == DeviceState::Active && d.block_pending) blocks[d.device_id] = *d.block_pending;
    if (d.state == DeviceState::Approved && d.registration_pending) registrations.push_back(d);
  }

  for (const auto& [id, pb] : blocks) {
    auto lock = device_lock(id);
    std::lock_guard guard(*lock);
    try {
      auto d = device(id);
      if (d.state != DeviceState::Active) {
        std::lock_guard l(locks_mu_);
        volatile_blocks_.erase(id);
        continue;
      }
      auto actor = Principal::system();
      actor.subject = pb.actor;
      finish_block(d, actor, BlockRequest{pb.reason, pb.incident_id, pb.t_notice, pb.t_attack_start});
      ++done;
    } catch (const Error&) {
    }
  }
  for (const auto& r : registrations) {
    auto lock = device_lock(r.device_id);
    std::lock_guard guard(*lock);
    try {
      auto d = device(r.device_id);
      if (d.state != DeviceState::Approved || !d.registration_pending) continue;
      finish_registration(d, retry_actor(d.institution_id));
      ++done;
    } catch (const Error&) {
    }
  }
  return done;
}

std::size_t Registry::pending_count() const {
  std::set<std::string> ids;
  {
    std::lock_guard l(locks_mu_);
    for (const auto& [id, pb] : volatile_blocks_) ids.insert(id);
  }
  for (const auto& d : devices())
    if ((d.state == DeviceState::Active && d.block_pending) ||
        (d.state == DeviceState::Approved && d.registration_pending))
      ids.insert(d.device_id);
  return ids.size();
}

LeaseSnapshot Registry::lease_snapshot(std::string_view institution_id, Timestamp at) const {
  LeaseSnapshot snap{at, {}};
  for (const auto& r : store_.all(persist::kLeases, persist::field_equals("institution_id", std::string(institution_id)))) {
    auto lease = r.get<LeaseRecord>();
    if (lease.start > at) continue;
    if (lease.end && *lease.end > at) lease.end.reset();
    snap.leases.push_back(std::move(lease));
  }
  return snap;
}

firewall::FirewallState Registry::desired_firewall_state(std::string_view institution_id) const {
  const auto& b = binding(institution_id);
  auto state = firewall::FirewallState::initial(b.institution.network_profile.interface_name);
  for (const auto& d : devices(std::string(institution_id))) {
    if (!d.ip || (d.state != DeviceState::Active && d.state != DeviceState::Blocked)) continue;
    const auto alias = d.state == DeviceState::Active ? kAllowedAlias : kBlockedAlias;
    state.aliases.find(alias)->second.addresses.insert(d.ip->to_string());
    state.mappings[d.mac] = firewall::DhcpStaticMapping{d.mac, *d.ip, hostname_for(d)};
  }
  return state;
}

SyncOutcome Registry::sync_firewall(std::string_view institution_id, bool apply) {
  auto& b = binding(institution_id);
  std::lock_guard w(b.writer);
  SyncOutcome out;
  out.plan = firewall::reconcile(desired_firewall_state(institution_id), b.firewall->snapshot(),
                                 {managed_macs(institution_id)});
  const bool changes =
      !out.plan.alias_changes.empty() || !out.plan.mapping_upserts.empty() || !out.plan.mapping_deletes.empty();
  if (apply && changes) out.receipt = firewall::apply_plan(*b.firewall, out.plan);
  return out;
}

std::set<MacAddress> Registry::managed_macs(std::string_view institution_id) const {
  std::set<MacAddress> out;
  for (const auto& d : devices(std::string(institution_id))) out.insert(d.mac);
  return out;
}

}  // namespace campusguard::registry
