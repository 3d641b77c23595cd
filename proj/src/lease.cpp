#include "campusguard/lease.hpp"

#include "campusguard/json_util.hpp"

namespace campusguard {

std::vector<LeaseRecord> LeaseSnapshot::matching(Ipv4Address ip, Timestamp t) const {
  std::vector<LeaseRecord> out;
  for (const auto& lease : leases)
    if (lease.ip == ip && lease.contains(t)) out.push_back(lease);
  return out;
}

void to_json(nlohmann::json& j, const LeaseRecord& l) {
  j = {{"id", l.lease_id},
       {"device_id", l.device_id},
       {"institution_id", l.institution_id},
       {"ip", l.ip.to_string()},
       {"start", jsonio::ts(l.start)},
       {"end", jsonio::opt_ts(l.end)},
       {"created_at", jsonio::ts(l.start)}};
}

void from_json(const nlohmann::json& j, LeaseRecord& l) {
  l.lease_id = j.value("id", "");
  l.device_id = j.at("device_id").get<std::string>();
  l.institution_id = j.value("institution_id", "");
  l.ip = jsonio::ip(j.at("ip"));
  l.start = jsonio::ts(j.at("start"));
  l.end = jsonio::opt_ts(j, "end");
}

}  // namespace campusguard
