#include "campusguard/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "campusguard/harness.hpp"
#include "campusguard/store.hpp"
#include "campusguard/types.hpp"
#include "httplib.h"
#include "json.hpp"

namespace campusguard::cli {

using nlohmann::json;

int exit_status_for_http(int status) {
  if (status >= 200 && status < 300) return kExitOk;
  switch (status) {
    case 400:
    case 422: return kExitUsage;
    case 401:
    case 403: return kExitAuth;
    case 404: return kExitNotFound;
    case 409: return kExitConflict;
    case 502:
    case 503:
    case 504: return kExitUnavailable;
    default: return kExitFailure;
  }
}

int exit_status_for(ErrorCode code) {
  if (code == ErrorCode::ConfigMissing) return kExitUsage;
  return exit_status_for_http(http_status(code));
}

service::Env environment(char** envp) {
  service::Env env;
  const std::string prefix = service::kEnvPrefix;
  for (char** p = envp; p && *p; ++p) {
    std::string_view kv(*p);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos || kv.substr(0, prefix.size()) != prefix) continue;
    env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return env;
}

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::optional<std::string> env_get(const service::Env& env, const char* key) {
  auto it = env.find(std::string(service::kEnvPrefix) + key);
  if (it == env.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

struct ClientOptions {
  std::string config;
  std::string endpoint;
  std::string token;
  std::string token_file;
  std::string format = "table";
};

struct Options {
  ClientOptions client;

  // serve
  std::string serve_config;
  double run_for = 0;
  int port = -1;

  // scenario
  std::string scenario_config;
  std::optional<std::uint64_t> seed;
  std::optional<int> repetitions;
  std::optional<double> probe_interval;
  std::string scenario_format = "table";
  std::string out;

  // device verbs
  std::string device;
  std::string ip;
  std::string reason = "manual";
  std::string state;
  std::string institution;

  // incidents
  std::string severity;
  std::string status;
  std::string since;
  int limit = 0;

  // sync
  bool dry_run = false;

  // export
  std::string storage;
};

void add_client_options(CLI::App& sub, ClientOptions& o) {
  sub.add_option("--config", o.config, "Client/service config file (or CAMPUSGUARD_CONFIG)");
  sub.add_option("--endpoint", o.endpoint, "API base URL (or CAMPUSGUARD_ENDPOINT)");
  sub.add_option("--token", o.token, "Bearer token (or CAMPUSGUARD_TOKEN)");
  sub.add_option("--token-file", o.token_file, "File holding the bearer token (or CAMPUSGUARD_TOKEN_FILE)");
  sub.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"table", "records"}));
}

// ---- rendering -------------------------------------------------------------

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void render_table(std::ostream& out, const std::vector<std::string>& headers, const json& rows) {
  std::vector<std::size_t> width(headers.size());
  for (std::size_t i = 0; i < headers.size(); ++i) width[i] = headers[i].size();
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line;
    for (std::size_t i = 0; i < headers.size(); ++i) {
      line.push_back(cell(r.value(headers[i], json(nullptr))));
      width[i] = std::max(width[i], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << line[i];
      if (i + 1 < line.size()) out << std::string(width[i] - line[i].size() + 2, ' ');
    }
    out << '\n';
  };
  emit(headers);
  for (const auto& line : cells) emit(line);
}

void render_items(std::ostream& out, const std::string& format, const std::vector<std::string>& headers,
                  const json& items) {
  if (format == "records") {
    for (const auto& r : items) out << r.dump() << '\n';
  } else {
    render_table(out, headers, items);
  }
}

const std::vector<std::string> kDeviceColumns = {"id", "state", "mac", "ip", "owner_id", "institution_id", "name"};
const std::vector<std::string> kIncidentColumns = {"id", "severity", "status", "src_ip", "device_id", "note"};

// ---- API client ------------------------------------------------------------

struct ApiFailure {
  int exit_status;
  std::string message;
};

class Client {
 public:
  Client(std::string endpoint, std::string token) : endpoint_(std::move(endpoint)), token_(std::move(token)) {}

  json call(const std::string& method, const std::string& path, const std::optional<json>& body = std::nullopt) {
    httplib::Client http(endpoint_);
    http.set_connection_timeout(5);
    http.set_read_timeout(30);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const std::string payload = body ? body->dump() : std::string{};
    httplib::Result res = method == "GET" ? http.Get(path, headers)
                                          : http.Post(path, headers, payload, "application/json");
    if (!res) throw ApiFailure{kExitUnavailable, "cannot reach " + endpoint_ + ": " + httplib::to_string(res.error())};
    json j = json::parse(res->body, nullptr, false);
    if (res->status < 200 || res->status >= 300) {
      std::string msg = "HTTP " + std::to_string(res->status);
      if (j.is_object()) {
        msg += ": " + j.value("code", std::string{}) + ": " + j.value("message", std::string{});
        const auto detail = j.value("detail", std::string{});
        if (!detail.empty()) msg += " (" + detail + ")";
      }
      throw ApiFailure{exit_status_for_http(res->status), msg};
    }
    if (j.is_discarded()) throw ApiFailure{kExitFailure, "malformed response body"};
    return j;
  }

  void set_token(std::string token) { token_ = std::move(token); }

 private:
  std::string endpoint_;
  std::string token_;
};

std::string url_encode(const std::string& s) {
  std::ostringstream o;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') o << c;
    else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      o << buf;
    }
  }
  return o.str();
}

std::string query_string(const std::vector<std::pair<std::string, std::string>>& params) {
  std::string q;
  for (const auto& [k, v] : params) {
    if (v.empty()) continue;
    q += (q.empty() ? "?" : "&") + k + "=" + url_encode(v);
  }
  return q;
}

/// Resolves endpoint and credentials from flags, environment and config file.
Client connect(const ClientOptions& o, const service::Env& env) {
  service::ServiceConfig cfg;
  std::string config_path = o.config;
  if (config_path.empty()) config_path = env_get(env, "CONFIG").value_or("");
  if (!config_path.empty()) cfg = service::ServiceConfig::load(config_path);
  cfg.apply_env(env);

  std::string endpoint = !o.endpoint.empty() ? o.endpoint : cfg.endpoint;
  if (endpoint.empty()) throw Error(ErrorCode::ConfigMissing, "no API endpoint (--endpoint or CAMPUSGUARD_ENDPOINT)");
  while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();

  std::string token = o.token;
  if (token.empty()) token = env_get(env, "TOKEN").value_or("");
  if (token.empty()) {
    std::optional<std::filesystem::path> file;
    if (!o.token_file.empty()) file = o.token_file;
    else if (cfg.token_file) file = cfg.token_file;
    if (file) {
      std::ifstream in(*file);
      if (!in) throw Error(ErrorCode::ConfigMissing, "cannot read token file", file->string());
      std::stringstream ss;
      ss << in.rdbuf();
      token = trim(ss.str());
    }
  }
  Client client(endpoint, token);
  if (token.empty()) {
    auto user = env_get(env, "USERNAME");
    auto pass = env_get(env, "PASSWORD");
    if (!user || !pass)
      throw Error(ErrorCode::ConfigMissing,
                  "no credentials (--token, CAMPUSGUARD_TOKEN, a token file, or CAMPUSGUARD_USERNAME/PASSWORD)");
    const auto issued = client.call("POST", "/auth/token", json{{"username", *user}, {"password", *pass}});
    client.set_token(issued.at("token").get<std::string>());
  }
  return client;
}

// ---- verbs -----------------------------------------------------------------

int run_serve(const Options& o, const service::Env& env, std::ostream& out) {
  std::string path = o.serve_config.empty() ? env_get(env, "CONFIG").value_or("") : o.serve_config;
  if (path.empty()) throw Error(ErrorCode::ConfigMissing, "serve needs --config or CAMPUSGUARD_CONFIG");
  auto cfg = service::ServiceConfig::load(path);
  cfg.apply_env(env);
  if (o.port >= 0) cfg.port = o.port;

  service::Service svc(std::move(cfg));
  g_stop = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  svc.start();
  out << "listening on " << svc.base_url() << std::endl;

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(o.run_for);
  while (!g_stop.load()) {
    if (o.run_for > 0 && std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  svc.stop();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  out << "stopped" << std::endl;
  return kExitOk;
}

int run_scenario(const Options& o, std::ostream& out, std::ostream& err) {
  auto cfg = harness::ScenarioConfig::load(o.scenario_config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.repetitions) cfg.repetitions = *o.repetitions;
  if (o.probe_interval) cfg.probe_interval = *o.probe_interval;
  cfg.validate();
  const auto format = *harness::parse_report_format(o.scenario_format);

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw Error(ErrorCode::InvalidRequest, "cannot write output file", o.out);
  }
  std::ostream& sink = o.out.empty() ? out : file;
  try {
    sink << harness::render_report(harness::run_scenario(cfg), format);
  } catch (const harness::ScenarioFailed& e) {
    err << "scenario failed in phase " << e.phase() << ": " << e.what() << '\n';
    if (!e.partial().repetitions.empty()) sink << harness::render_report(e.partial(), format);
    return kExitFailure;
  }
  return kExitOk;
}

int run_export(const Options& o, const service::Env& env, std::ostream& out) {
  std::optional<std::filesystem::path> dir;
  if (!o.storage.empty()) dir = o.storage;
  if (!dir) {
    std::string path = o.client.config.empty() ? env_get(env, "CONFIG").value_or("") : o.client.config;
    service::ServiceConfig cfg;
    if (!path.empty()) cfg = service::ServiceConfig::load(path);
    cfg.apply_env(env);
    dir = cfg.storage_path;
  }
  if (!dir) throw Error(ErrorCode::ConfigMissing, "export needs --storage or a configured storage_path");
  if (!std::filesystem::is_directory(*dir)) throw Error(ErrorCode::ConfigMissing, "no storage at", dir->string());
  persist::Store store(*dir);
  if (o.out.empty()) {
    store.export_to(out);
  } else {
    std::ofstream file(o.out);
    if (!file) throw Error(ErrorCode::InvalidRequest, "cannot write output file", o.out);
    store.export_to(file);
  }
  return kExitOk;
}

int run_client(const std::string& verb, const Options& o, const service::Env& env, std::ostream& out) {
  auto client = connect(o.client, env);
  const auto& fmt = o.client.format;
  const std::string dev = "/devices/" + url_encode(o.device);

  if (verb == "devices") {
    auto r = client.call("GET", "/devices" + query_string({{"state", o.state}, {"institution", o.institution}}));
    render_items(out, fmt, kDeviceColumns, r.at("items"));
  } else if (verb == "approve") {
    json body = json::object();
    if (!o.ip.empty()) body["ip"] = o.ip;
    render_items(out, fmt, kDeviceColumns, json::array({client.call("POST", dev + "/approve", body)}));
  } else if (verb == "block") {
    auto r = client.call("POST", dev + "/block", json{{"reason", o.reason}});
    auto row = r.at("device");
    if (fmt == "records") {
      out << r.dump() << '\n';
    } else {
      render_table(out, kDeviceColumns, json::array({row}));
      out << "feedback: " << cell(r.value("feedback_id", json(nullptr))) << '\n';
    }
  } else if (verb == "unblock") {
    render_items(out, fmt, kDeviceColumns, json::array({client.call("POST", dev + "/unblock", json::object())}));
  } else if (verb == "incidents") {
    auto r = client.call("GET", "/incidents" + query_string({{"severity", o.severity},
                                                             {"status", o.status},
                                                             {"since", o.since},
                                                             {"limit", o.limit > 0 ? std::to_string(o.limit) : ""}}));
    render_items(out, fmt, kIncidentColumns, r.at("items"));
    if (fmt == "table" && r.contains("next") && r["next"].is_string())
      out << "next: " << r["next"].get<std::string>() << '\n';
  } else if (verb == "sync") {
    json body{{"apply", !o.dry_run}};
    if (!o.institution.empty()) body["institution_id"] = o.institution;
    auto r = client.call("POST", "/firewall/sync", body);
    if (fmt == "records") {
      out << r.dump() << '\n';
    } else {
      const auto& plan = r.at("plan");
      out << "institution: " << r.value("institution_id", "") << '\n';
      for (const auto& d : plan.at("alias_changes"))
        out << "alias " << d.at("alias").get<std::string>() << ": +" << d.at("adds").size() << " -"
            << d.at("removes").size() << '\n';
      out << "mapping upserts: " << plan.at("mapping_upserts").size()
          << ", deletes: " << plan.at("mapping_deletes").size() << '\n';
      for (const auto& c : plan.at("conflicts"))
        out << "conflict " << c.value("kind", "") << ": " << c.value("subject", "") << ' ' << c.value("detail", "")
            << '\n';
      out << (r.value("applied", false) ? "applied, generation " + cell(r.value("generation", json(nullptr)))
                                        : std::string(o.dry_run ? "dry run, nothing applied" : "already in sync"))
          << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, const service::Env& env, std::ostream& out, std::ostream& err) {
  CLI::App app{"Campus IoT access control and automated incident response"};
  app.name("campusguard");
  app.require_subcommand(1, 1);
  Options o;

  auto* serve = app.add_subcommand("serve", "Run the API service and response pipelines");
  serve->add_option("--config", o.serve_config, "Service config file (or CAMPUSGUARD_CONFIG)");
  serve->add_option("--run-for", o.run_for, "Stop after this many seconds (0 = until signalled)")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--port", o.port, "Override the listen port (0 = any free port)")->check(CLI::Range(0, 65535));

  auto* scenario = app.add_subcommand("scenario", "Run an attack scenario and report latencies");
  scenario->add_option("--config", o.scenario_config, "Scenario config file")->required();
  scenario->add_option("--seed", o.seed, "Override the seed");
  scenario->add_option("--repetitions", o.repetitions, "Override the repetition count")->check(CLI::PositiveNumber);
  scenario->add_option("--probe-interval", o.probe_interval, "Override the probe interval (seconds)")
      ->check(CLI::PositiveNumber);
  scenario->add_option("--format", o.scenario_format, "Report format")->check(CLI::IsMember({"table", "records"}));
  scenario->add_option("--out", o.out, "Write the report here instead of stdout");

  auto* devices = app.add_subcommand("devices", "List devices");
  add_client_options(*devices, o.client);
  devices->add_option("--state", o.state, "Filter by state")
      ->check(CLI::IsMember({"pending", "approved", "active", "blocked", "revoked"}));
  devices->add_option("--institution", o.institution, "Filter by institution");

  auto* approve = app.add_subcommand("approve", "Approve a pending device");
  add_client_options(*approve, o.client);
  approve->add_option("--device", o.device, "Device id")->required();
  approve->add_option("--ip", o.ip, "Address to assign")->check([](const std::string& s) {
    return Ipv4Address::parse(s) ? std::string{} : "not an IPv4 address: " + s;
  });

  auto* block = app.add_subcommand("block", "Block a device");
  add_client_options(*block, o.client);
  block->add_option("--device", o.device, "Device id")->required();
  block->add_option("--reason", o.reason, "Reason recorded with the block");

  auto* unblock = app.add_subcommand("unblock", "Unblock a device");
  add_client_options(*unblock, o.client);
  unblock->add_option("--device", o.device, "Device id")->required();

  auto* incidents = app.add_subcommand("incidents", "List incidents");
  add_client_options(*incidents, o.client);
  incidents->add_option("--severity", o.severity, "Filter by severity")
      ->check(CLI::IsMember({"info", "low", "medium", "high", "critical"}));
  incidents->add_option("--status", o.status, "Filter by status")
      ->check(CLI::IsMember({"new", "validated", "dismissed", "actioned"}));
  incidents->add_option("--since", o.since, "Resume after this cursor");
  incidents->add_option("--limit", o.limit, "Page size")->check(CLI::Range(1, 1000));

  auto* sync = app.add_subcommand("sync", "Reconcile the firewall with local state");
  add_client_options(*sync, o.client);
  sync->add_flag("--dry-run", o.dry_run, "Compute the plan without applying it");
  sync->add_flag("--apply,!--no-apply", [&o](std::int64_t n) { o.dry_run = n < 0; }, "Apply the plan (default)");
  sync->add_option("--institution", o.institution, "Institution id");

  auto* exp = app.add_subcommand("export", "Dump local storage as JSON lines");
  exp->add_option("--storage", o.storage, "Storage directory (or CAMPUSGUARD_STORAGE_PATH)");
  exp->add_option("--config", o.client.config, "Service config file naming storage_path");
  exp->add_option("--out", o.out, "Write here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  const auto* chosen = app.get_subcommands().front();
  const std::string verb = chosen->get_name();
  try {
    if (verb == "serve") return run_serve(o, env, out);
    if (verb == "scenario") return run_scenario(o, out, err);
    if (verb == "export") return run_export(o, env, out);
    return run_client(verb, o, env, out);
  } catch (const ApiFailure& f) {
    err << "error: " << f.message << '\n';
    return f.exit_status;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what();
    if (!e.detail().empty()) err << " (" << e.detail() << ")";
    err << '\n';
    return exit_status_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace campusguard::cli
