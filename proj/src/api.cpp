#include "campusguard/api.hpp"

#include <algorithm>
#include <cctype>

#include "campusguard/error.hpp"
#include "campusguard/incident.hpp"

namespace campusguard::api {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i] == '+' ? ' ' : s[i];
    }
  }
  return out;
}

std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    auto j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.push_back(url_decode(path.substr(i, j - i)));
    i = j + 1;
  }
  return out;
}

Response error_response(const Error& e) {
  return {http_status(e.code()), {{"code", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}}};
}

Response not_found(const std::string& what) { return error_response(Error(ErrorCode::NotFound, "no such route", what)); }

std::optional<std::string> param(const Request& r, const std::string& key) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::size_t limit_param(const Request& r) {
  auto v = param(r, "limit");
  if (!v) return 100;
  try {
    auto n = std::stoul(*v);
    if (n == 0 || n > 1000) throw std::out_of_range("limit");
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidRequest, "limit must be 1..1000", *v);
  }
}

json parse_body(const Request& r) {
  if (r.body.empty()) return json::object();
  auto j = json::parse(r.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidRequest, "body must be a JSON object");
  return j;
}

std::string required_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string() || it->get<std::string>().empty())
    throw Error(ErrorCode::MissingFields, std::string("missing field ") + key, key);
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::InvalidRequest, std::string(key) + " must be a string", key);
  return it->get<std::string>();
}

std::optional<Ipv4Address> optional_ip(const json& body, const char* key) {
  auto text = optional_string(body, key);
  if (!text) return std::nullopt;
  auto ip = Ipv4Address::parse(*text);
  if (!ip) throw Error(ErrorCode::InvalidAddress, "not an IPv4 address", *text);
  return ip;
}

void require(const Principal& p, Action action, const ResourceRef& target) {
  if (authorize(p, action, target) == Decision::Deny)
    throw Error(ErrorCode::Unauthorized, std::string(to_string(action)) + " denied", target.institution_id);
}

std::string pick_institution(const Principal& p, std::optional<std::string> named) {
  if (named) return *named;
  if (p.institutions.size() == 1) return *p.institutions.begin();
  throw Error(ErrorCode::InvalidRequest, "institution must be named");
}

json page_json(const persist::PageResult& page, const std::optional<std::string>& since) {
  json items = json::array();
  for (const auto& r : page.records) items.push_back(r);
  std::optional<std::string> cursor = since;
  if (!page.records.empty()) cursor = persist::record_key(page.records.back());
  return {{"items", items},
          {"next", page.next ? json(*page.next) : json(nullptr)},
          {"cursor", cursor ? json(*cursor) : json(nullptr)}};
}

}  // namespace

Request Request::make(std::string method, std::string target, std::string body, std::optional<std::string> bearer) {
  Request r;
  r.method = std::move(method);
  const auto q = target.find('?');
  r.path = target.substr(0, q);
  if (q != std::string::npos) {
    std::string_view rest(target);
    rest.remove_prefix(q + 1);
    while (!rest.empty()) {
      auto amp = rest.find('&');
      auto pair = rest.substr(0, amp);
      auto eq = pair.find('=');
      if (eq == std::string_view::npos) r.query[url_decode(pair)] = "";
      else r.query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  r.body = std::move(body);
  if (bearer) r.headers["Authorization"] = "Bearer " + *bearer;
  return r;
}

ApiService::ApiService(registry::Registry& registry, persist::Store& store, auth::UserDirectory users,
                       auth::TokenIssuer tokens)
    : registry_(registry), store_(store), users_(std::move(users)), tokens_(std::move(tokens)) {}

Response ApiService::handle(const Request& request) {
  std::optional<Principal> who;
  Response res;
  try {
    res = route(request, who);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return error_response(Error(ErrorCode::Internal, "internal error", e.what()));
  }
  if (request.method != "GET" && res.status >= 200 && res.status < 300) {
    AuditEntry entry{{}, now(), who ? who->subject : "anonymous", "api." + lower(request.method),
                     request.path, std::to_string(res.status)};
    try {
      store_.put(persist::kAudit, json(entry));
    } catch (const Error& e) {
      return error_response(e);
    }
  }
  return res;
}

Response ApiService::route(const Request& req, std::optional<Principal>& who) {
  const auto seg = segments(req.path);
  const auto& m = req.method;
  if (seg.empty()) return not_found(req.path);

  if (seg.size() == 2 && seg[0] == "auth" && seg[1] == "token") {
    if (m != "POST") return not_found(req.path);
    const auto body = parse_body(req);
    auto principal = users_.authenticate(required_string(body, "username"), required_string(body, "password"));
    who = principal;
    const auto token = tokens_.issue(principal);
    return {200,
            {{"token", token.text},
             {"token_type", "bearer"},
             {"subject", principal.subject},
             {"role", to_string(principal.role)},
             {"institutions", principal.institutions},
             {"expires_at", to_micros(token.expires_at)}}};
  }

  static const std::set<std::string> kTop = {"devices", "incidents", "firewall", "feedback"};
  if (!kTop.count(seg[0])) return not_found(req.path);

  // Everything past this point requires a bearer token.
  std::string header;
  for (const auto& [k, v] : req.headers)
    if (lower(k) == "authorization") header = v;
  if (header.size() < 7 || lower(header.substr(0, 7)) != "bearer ")
    throw Error(ErrorCode::AuthRequired, "bearer token required");
  const Principal p = tokens_.validate(header.substr(7));
  who = p;

  if (seg[0] == "devices") {
    if (seg.size() == 1 && m == "GET") {
      const auto state = param(req, "state");
      const auto inst = param(req, "institution");
      json items = json::array();
      for (const auto& d : registry_.devices(inst)) {
        if (authorize(p, Action::ReadDevice, {d.institution_id, d.owner_id}) == Decision::Deny) continue;
        if (state && std::string(to_string(d.state)) != lower(*state)) continue;
        items.push_back(d);
      }
      return {200, {{"items", items}}};
    }
    if ((seg.size() == 1 && m == "POST") || (seg.size() == 2 && seg[1] == "request" && m == "POST")) {
      const auto body = parse_body(req);
      auto d = registry_.request_access(p, required_string(body, "mac"), body.value("name", std::string{}),
                                        optional_ip(body, "requested_ip"), optional_string(body, "institution_id"));
      return {201, d};
    }
    if (seg.size() == 2 && m == "GET") {
      const auto d = registry_.device(seg[1]);
      require(p, Action::ReadDevice, {d.institution_id, d.owner_id});
      return {200, d};
    }
    if (seg.size() == 3 && m == "POST") {
      const auto& id = seg[1];
      const auto& verb = seg[2];
      const auto body = parse_body(req);
      if (verb == "approve") return {200, registry_.approve_device(p, id, optional_ip(body, "ip"))};
      if (verb == "block") {
        registry::BlockRequest br{body.value("reason", std::string("manual")), std::nullopt, std::nullopt,
                                  std::nullopt};
        auto out = registry_.block_device(p, id, br);
        return {200, {{"device", out.device}, {"feedback_id", out.feedback_id}}};
      }
      if (verb == "unblock") return {200, registry_.unblock_device(p, id)};
      if (verb == "revoke") return {200, registry_.revoke_device(p, id)};
    }
    return not_found(req.path);
  }

  if (seg[0] == "incidents") {
    if (seg.size() == 1 && m == "GET") {
      bool any = false;
      for (const auto& inst : p.institutions)
        any = any || authorize(p, Action::ReadIncidents, {inst, std::nullopt}) == Decision::Allow;
      if (!any) throw Error(ErrorCode::Unauthorized, "incident feed denied");
      std::optional<incident::Severity> sev;
      std::optional<incident::IncidentStatus> status;
      if (auto s = param(req, "severity")) {
        sev = incident::parse_severity(*s);
        if (!sev) throw Error(ErrorCode::InvalidRequest, "unknown severity", *s);
      }
      if (auto s = param(req, "status")) {
        status = incident::parse_status(lower(*s));
        if (!status) throw Error(ErrorCode::InvalidRequest, "unknown status", *s);
      }
      const auto since = param(req, "since");
      auto filter = [&](const json& r) {
        const auto inst = r.value("institution_id", json(nullptr));
        if (!inst.is_string()) return false;
        if (authorize(p, Action::ReadIncidents, {inst.get<std::string>(), std::nullopt}) == Decision::Deny)
          return false;
        if (sev && r.value("severity", "") != to_string(*sev)) return false;
        if (status && r.value("status", "") != to_string(*status)) return false;
        return true;
      };
      return {200, page_json(store_.query(persist::kIncidents, filter, {since, limit_param(req)}), since)};
    }
    if (seg.size() == 3 && seg[2] == "status" && m == "POST") {
      auto rec = store_.get(persist::kIncidents, seg[1]).get<incident::IncidentRecord>();
      require(p, Action::Approve, {rec.institution_id.value_or(""), std::nullopt});
      const auto body = parse_body(req);
      const auto text = required_string(body, "status");
      auto to = incident::parse_status(lower(text));
      if (!to) throw Error(ErrorCode::InvalidRequest, "unknown status", text);
      if (!incident::status_transition_allowed(rec.status, *to))
        throw Error(ErrorCode::IllegalTransition,
                    std::string(to_string(rec.status)) + "->" + std::string(to_string(*to)), rec.incident_id);
      rec.status = *to;
      store_.put(persist::kIncidents, json(rec));
      return {200, rec};
    }
    return not_found(req.path);
  }

  if (seg[0] == "firewall" && seg.size() == 2) {
    if (seg[1] == "state" && m == "GET") {
      const auto inst = pick_institution(p, param(req, "institution"));
      require(p, Action::ManageFirewall, {inst, std::nullopt});
      auto committed = registry_.firewall_of(inst).snapshot();
      auto desired = registry_.desired_firewall_state(inst);
      return {200,
              {{"institution_id", inst},
               {"committed", committed},
               {"desired", desired},
               {"in_sync", committed.same_membership(desired)}}};
    }
    if (seg[1] == "sync" && m == "POST") {
      const auto body = parse_body(req);
      const auto inst = pick_institution(p, optional_string(body, "institution_id"));
      require(p, Action::ManageFirewall, {inst, std::nullopt});
      const bool apply = body.value("apply", true);
      auto out = registry_.sync_firewall(inst, apply);
      return {200,
              {{"institution_id", inst},
               {"plan", out.plan},
               {"applied", out.receipt.has_value()},
               {"generation", out.receipt ? json(out.receipt->generation) : json(nullptr)}}};
    }
    if (seg[1] == "conflicts" && m == "GET") {
      const auto inst = pick_institution(p, param(req, "institution"));
      require(p, Action::ManageFirewall, {inst, std::nullopt});
      auto out = registry_.sync_firewall(inst, false);
      return {200, {{"institution_id", inst}, {"conflicts", json(out.plan)["conflicts"]}}};
    }
    return not_found(req.path);
  }

  if (seg[0] == "feedback" && seg.size() == 1 && m == "GET") {
    const auto device_id = param(req, "device_id");
    const auto since = param(req, "since");
    // Resolve scope up front; the filter runs under the store's read lock.
    std::map<std::string, std::string> inst_of;
    for (const auto& d : registry_.devices()) inst_of[d.device_id] = d.institution_id;
    auto filter = [&](const json& r) {
      const auto id = r.value("device_id", "");
      if (device_id && id != *device_id) return false;
      auto it = inst_of.find(id);
      return it != inst_of.end() &&
             authorize(p, Action::ReadIncidents, {it->second, std::nullopt}) == Decision::Allow;
    };
    return {200, page_json(store_.query(persist::kFeedback, filter, {since, limit_param(req)}), since)};
  }
  return not_found(req.path);
}

}  // namespace campusguard::api
