#include "campusguard/pfsense_client.hpp"

#include "campusguard/error.hpp"
#include "httplib.h"

namespace campusguard::firewall {

using nlohmann::json;

namespace {

constexpr const char* kAliasesPath = "/api/v2/firewall/aliases";
constexpr const char* kAliasPath = "/api/v2/firewall/alias";
constexpr const char* kApplyPath = "/api/v2/firewall/apply";
constexpr const char* kRulesPath = "/api/v2/firewall/rules";
constexpr const char* kMappingsPath = "/api/v2/services/dhcp_server/static_mappings";
constexpr const char* kMappingPath = "/api/v2/services/dhcp_server/static_mapping";

ErrorCode code_from_response(int status, const json& body) {
  const auto id = body.value("response_id", std::string{});
  for (auto code : {ErrorCode::AliasNotFound, ErrorCode::InvalidAddress, ErrorCode::IpCollision,
                    ErrorCode::CommitRejected, ErrorCode::FirewallUnreachable, ErrorCode::SchemaViolation,
                    ErrorCode::NotFound})
    if (id == to_string(code)) return code;
  if (status == 503 || status == 502 || status == 504) return ErrorCode::FirewallUnreachable;
  if (status == 401 || status == 403) return ErrorCode::Unauthorized;
  if (status == 404) return ErrorCode::NotFound;
  if (status == 409) return ErrorCode::IpCollision;
  if (status == 400 || status == 422) return ErrorCode::InvalidRequest;
  return ErrorCode::CommitRejected;
}

Alias alias_from_wire(const json& j) { return j.get<Alias>(); }

}  // namespace

struct PfSenseClient::Transport {
  explicit Transport(const PfSenseEndpoint& ep) : client(ep.base_url) {
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(ep.connect_timeout).count(),
                                  static_cast<time_t>((ep.connect_timeout.count() % 1000) * 1000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(ep.read_timeout).count(),
                            static_cast<time_t>((ep.read_timeout.count() % 1000) * 1000));
    client.set_keep_alive(true);
    client.set_default_headers({{"X-API-Key", ep.api_key}, {"Accept", "application/json"}});
  }
  httplib::Client client;
};

PfSenseClient::PfSenseClient(PfSenseEndpoint endpoint)
    : endpoint_(std::move(endpoint)), transport_(std::make_unique<Transport>(endpoint_)) {
  if (!transport_->client.is_valid())
    throw Error(ErrorCode::InvalidConfig, "unsupported firewall endpoint", endpoint_.base_url);
}

PfSenseClient::~PfSenseClient() = default;

json PfSenseClient::call(const std::string& method, const std::string& path, const json* body) {
  auto& cli = transport_->client;
  const std::string payload = body ? body->dump() : std::string{};
  httplib::Result res;
  if (method == "GET") res = cli.Get(path);
  else if (method == "POST") res = cli.Post(path, payload, "application/json");
  else if (method == "PATCH") res = cli.Patch(path, payload, "application/json");
  else if (method == "DELETE") res = cli.Delete(path);
  else throw Error(ErrorCode::Internal, "unsupported method", method);

  if (!res)
    throw Error(ErrorCode::FirewallUnreachable, "firewall request failed: " + httplib::to_string(res.error()),
                describe());
  auto reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) reply = json::object();
  if (res->status >= 200 && res->status < 300) return reply.value("data", json());
  throw Error(code_from_response(res->status, reply), reply.value("message", "firewall error"),
              reply.value("detail", std::string{}));
}

json PfSenseClient::aliases(bool applied) {
  return call("GET", std::string(kAliasesPath) + (applied ? "?state=applied" : ""));
}

json PfSenseClient::mappings(bool applied) {
  return call("GET", std::string(kMappingsPath) + "?parent_id=" + endpoint_.interface +
                         (applied ? "&state=applied" : ""));
}

json PfSenseClient::find_alias(const json& list, std::string_view name) {
  for (const auto& a : list)
    if (a.value("name", std::string{}) == name) return a;
  throw Error(ErrorCode::AliasNotFound, "no such alias", std::string(name));
}

Alias PfSenseClient::get_alias_by_name(std::string_view name) {
  std::lock_guard lock(mu_);
  return alias_from_wire(find_alias(aliases(true), name));
}

Alias PfSenseClient::patch_alias(const json& current, const std::set<std::string>& addresses) {
  auto alias = alias_from_wire(current);
  if (alias.addresses == addresses) return alias;
  json body = {{"id", current.at("id")}, {"address", addresses}};
  return alias_from_wire(call("PATCH", kAliasPath, &body));
}

Alias PfSenseClient::add_addresses_to_alias(std::string_view name, const std::set<std::string>& addresses) {
  std::set<std::string> canonical;
  for (const auto& a : addresses) {
    auto c = canonical_address(a);
    if (!c) throw Error(ErrorCode::InvalidAddress, "not an IPv4 or MAC address", a);
    canonical.insert(*c);
  }
  std::lock_guard lock(mu_);
  const auto current = find_alias(aliases(false), name);
  auto merged = alias_from_wire(current).addresses;
  merged.insert(canonical.begin(), canonical.end());
  return patch_alias(current, merged);
}

Alias PfSenseClient::remove_addresses_from_alias(std::string_view name, const std::set<std::string>& addresses) {
  std::lock_guard lock(mu_);
  const auto current = find_alias(aliases(false), name);
  auto remaining = alias_from_wire(current).addresses;
  for (const auto& a : addresses) remaining.erase(canonical_address(a).value_or(a));
  return patch_alias(current, remaining);
}

DhcpStaticMapping PfSenseClient::upsert_dhcp_mapping(MacAddress mac, Ipv4Address ip,
                                                     std::optional<std::string> hostname) {
  std::lock_guard lock(mu_);
  json body = {{"parent_id", endpoint_.interface},
               {"mac", mac.to_string()},
               {"ipaddr", ip.to_string()},
               {"hostname", hostname ? json(*hostname) : json("")}};
  for (const auto& m : mappings(false)) {
    if (m.value("mac", std::string{}) == mac.to_string()) {
      body["id"] = m.at("id");
      return call("PATCH", kMappingPath, &body).get<DhcpStaticMapping>();
    }
  }
  return call("POST", kMappingPath, &body).get<DhcpStaticMapping>();
}

void PfSenseClient::delete_dhcp_mapping(MacAddress mac) {
  std::lock_guard lock(mu_);
  for (const auto& m : mappings(false)) {
    if (m.value("mac", std::string{}) == mac.to_string()) {
      call("DELETE", std::string(kMappingPath) + "?parent_id=" + endpoint_.interface +
                         "&id=" + std::to_string(m.at("id").get<long>()));
      return;
    }
  }
}

CommitReceipt PfSenseClient::apply_changes() {
  std::lock_guard lock(mu_);
  const json body = json::object();
  const auto data = call("POST", kApplyPath, &body);
  CommitReceipt receipt;
  receipt.generation = data.value("generation", std::uint64_t{0});
  receipt.noop = data.value("noop", false);
  receipt.applied_at = data.contains("applied_at") ? from_micros(data.at("applied_at").get<std::int64_t>()) : now();
  return receipt;
}

FirewallState PfSenseClient::snapshot() {
  std::lock_guard lock(mu_);
  FirewallState state;
  for (const auto& a : aliases(true)) {
    auto alias = alias_from_wire(a);
    state.aliases.emplace(alias.name, std::move(alias));
  }
  for (const auto& r : call("GET", kRulesPath)) {
    FilterRule rule;
    rule.rule_id = r.value("id", std::string{});
    rule.action = r.value("type", std::string{"block"}) == "pass" ? RuleAction::Pass : RuleAction::Block;
    rule.source_alias = r.value("source", std::string{});
    rule.interface = r.value("interface", endpoint_.interface);
    rule.position = r.value("position", 0);
    state.rules.push_back(std::move(rule));
  }
  for (const auto& m : mappings(true)) {
    auto mapping = m.get<DhcpStaticMapping>();
    state.mappings[mapping.mac] = std::move(mapping);
  }
  state.generation = call("GET", kApplyPath).value("generation", std::uint64_t{0});
  return state;
}

}  // namespace campusguard::firewall
