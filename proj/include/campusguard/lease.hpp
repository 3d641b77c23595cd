#pragma once

#include <optional>
#include <string>
#include <vector>

#include "campusguard/types.hpp"
#include "json.hpp"

namespace campusguard {

/// Address binding of a device over [start, end). An absent end is an open lease.
struct LeaseRecord {
  std::string lease_id;
  std::string device_id;
  std::string institution_id;
  Ipv4Address ip;
  Timestamp start{};
  std::optional<Timestamp> end;

  bool contains(Timestamp t) const { return start <= t && (!end || t < *end); }

  friend bool operator==(const LeaseRecord&, const LeaseRecord&) = default;
};

/// Lease history as known at `as_of`: leases that had started by then, with
/// ends that lie after `as_of` reported as still open.
struct LeaseSnapshot {
  Timestamp as_of{};
  std::vector<LeaseRecord> leases;

  /// Leases for `ip` whose interval contains `t`.
  std::vector<LeaseRecord> matching(Ipv4Address ip, Timestamp t) const;
};

void to_json(nlohmann::json& j, const LeaseRecord& l);
void from_json(const nlohmann::json& j, LeaseRecord& l);

}  // namespace campusguard
