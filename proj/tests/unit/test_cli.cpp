#include <fstream>
#include <sstream>

#include "campusguard/auth.hpp"
#include "campusguard/cli.hpp"
#include "campusguard/error.hpp"
#include "campusguard/harness.hpp"
#include "campusguard/service.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace campusguard;
using nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const service::Env& env = {}) {
  std::ostringstream out, err;
  const int status = cli::dispatch(args, env, out, err);
  return {status, out.str(), err.str()};
}

service::ServiceConfig service_config() {
  return service::ServiceConfig::parse(
      {{"listen", {{"host", "127.0.0.1"}, {"port", 0}}},
       {"token_secret", "cli-secret-0123456789"},
       {"users",
        {{{"username", "admin"}, {"password", "pw"}, {"role", "admin"}, {"institutions", {"inst-a"}}},
         {{"username", "alice"}, {"password", "pw"}, {"role", "regular"}, {"institutions", {"inst-a"}}}}},
       {"institutions",
        {{{"id", "inst-a"},
          {"firewall", {{"mode", "simulated"}, {"subnet", "192.168.1.0/24"}}},
          {"pool", {{"first", "192.168.1.50"}, {"last", "192.168.1.60"}}}}}}});
}

struct Server {
  service::Service svc{service_config()};
  Server() { svc.start(); }
  ~Server() { svc.stop(); }

  service::Env as(const std::string& user) const {
    return {{"CAMPUSGUARD_ENDPOINT", svc.base_url()}, {"CAMPUSGUARD_USERNAME", user}, {"CAMPUSGUARD_PASSWORD", "pw"}};
  }
};

}  // namespace

TEST_CASE("exit status classes") {
  CHECK(cli::exit_status_for_http(201) == cli::kExitOk);
  CHECK(cli::exit_status_for_http(422) == cli::kExitUsage);
  CHECK(cli::exit_status_for_http(403) == cli::kExitAuth);
  CHECK(cli::exit_status_for_http(404) == cli::kExitNotFound);
  CHECK(cli::exit_status_for_http(409) == cli::kExitConflict);
  CHECK(cli::exit_status_for_http(503) == cli::kExitUnavailable);
  CHECK(cli::exit_status_for_http(500) == cli::kExitFailure);
  CHECK(cli::exit_status_for(ErrorCode::ConfigMissing) == cli::kExitUsage);
  CHECK(cli::exit_status_for(ErrorCode::FirewallUnreachable) == cli::kExitUnavailable);
}

TEST_CASE("parse errors exit with the usage status") {
  CHECK(run({}).status == cli::kExitUsage);
  CHECK(run({"teleport"}).status == cli::kExitUsage);
  CHECK(run({"approve"}).status == cli::kExitUsage);  // --device is required
  CHECK(run({"approve", "--device", "d", "--ip", "999.1.1.1"}).status == cli::kExitUsage);
  CHECK(run({"incidents", "--severity", "apocalyptic"}).status == cli::kExitUsage);
  CHECK(run({"devices", "--format", "yaml"}).status == cli::kExitUsage);
  const auto help = run({"--help"});
  CHECK(help.status == cli::kExitOk);
  CHECK(help.out.find("scenario") != std::string::npos);
}

TEST_CASE("missing endpoint or credentials is a configuration error") {
  auto r = run({"devices"});
  CHECK(r.status == cli::kExitUsage);
  CHECK(r.err.find("ConfigMissing") != std::string::npos);
  r = run({"devices", "--endpoint", "http://127.0.0.1:1"});
  CHECK(r.status == cli::kExitUsage);
  CHECK(run({"serve"}).status == cli::kExitUsage);
  CHECK(run({"export", "--storage", "/nonexistent/cg-store"}).status == cli::kExitUsage);
}

TEST_CASE("an unreachable endpoint maps to the unavailable status") {
  const auto r = run({"devices", "--endpoint", "http://127.0.0.1:1", "--token", "t"});
  CHECK(r.status == cli::kExitUnavailable);
}

TEST_CASE("client verbs against a running service") {
  Server server;
  const auto d = server.svc.registry().request_access({"alice", RoleKind::Regular, {"inst-a"}}, "02:00:00:00:00:01", "cam");

  SUBCASE("a regular user cannot approve") {
    const auto r = run({"approve", "--device", d.device_id}, server.as("alice"));
    CHECK(r.status == cli::kExitAuth);
    CHECK(r.err.find("403") != std::string::npos);
  }
  SUBCASE("approve, block, unblock and list as admin") {
    auto r = run({"approve", "--device", d.device_id, "--ip", "192.168.1.55"}, server.as("admin"));
    REQUIRE(r.status == cli::kExitOk);
    CHECK(r.out.find("active") != std::string::npos);
    CHECK(r.out.find("192.168.1.55") != std::string::npos);

    r = run({"block", "--device", d.device_id, "--reason", "test", "--format", "records"}, server.as("admin"));
    REQUIRE(r.status == cli::kExitOk);
    const auto blocked = json::parse(r.out);
    CHECK(blocked["device"]["state"] == "blocked");
    CHECK(blocked["feedback_id"].is_string());

    r = run({"block", "--device", d.device_id}, server.as("admin"));
    CHECK(r.status == cli::kExitConflict);
    CHECK(run({"unblock", "--device", d.device_id}, server.as("admin")).status == cli::kExitOk);
    CHECK(run({"unblock", "--device", "dev-999999"}, server.as("admin")).status == cli::kExitNotFound);

    r = run({"devices", "--format", "records", "--state", "active"}, server.as("admin"));
    REQUIRE(r.status == cli::kExitOk);
    std::istringstream lines(r.out);
    std::string line;
    std::vector<json> rows;
    while (std::getline(lines, line)) rows.push_back(json::parse(line));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].get<Device>() == server.svc.registry().device(d.device_id));
  }
  SUBCASE("table output has a header row") {
    const auto r = run({"devices"}, server.as("admin"));
    CHECK(r.status == cli::kExitOk);
    CHECK(r.out.rfind("id", 0) == 0);
    CHECK(r.out.find(d.device_id) != std::string::npos);
  }
  SUBCASE("sync dry run and incidents") {
    auto r = run({"sync", "--dry-run"}, server.as("admin"));
    CHECK(r.status == cli::kExitOk);
    CHECK(r.out.find("dry run") != std::string::npos);
    r = run({"incidents", "--severity", "critical"}, server.as("admin"));
    CHECK(r.status == cli::kExitOk);
    CHECK(run({"incidents"}, server.as("alice")).status == cli::kExitAuth);
  }
  SUBCASE("explicit and file tokens") {
    const auto token = auth::TokenIssuer("cli-secret-0123456789").issue({"admin", RoleKind::Admin, {"inst-a"}}).text;
    const service::Env env = {{"CAMPUSGUARD_ENDPOINT", server.svc.base_url()}};
    CHECK(run({"devices", "--token", token}, env).status == cli::kExitOk);
    const auto dir = fixtures::temp_dir("token");
    std::ofstream(dir / "token") << token << "\n";
    CHECK(run({"devices", "--token-file", (dir / "token").string()}, env).status == cli::kExitOk);
    CHECK(run({"devices", "--token", "forged"}, env).status == cli::kExitAuth);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("export dumps a storage directory") {
  const auto dir = fixtures::temp_dir("export");
  {
    persist::Store store(dir);
    store.put(persist::kAudit, AuditEntry{"", from_micros(1), "a", "x", "t", ""});
  }
  const auto r = run({"export", "--storage", dir.string()});
  CHECK(r.status == cli::kExitOk);
  CHECK(r.out.find("\"store\":\"audit_log\"") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("scenario verb renders records that parse back") {
  const auto dir = fixtures::temp_dir("scenario");
  harness::ScenarioConfig cfg;
  cfg.probe_interval = 0.002;
  cfg.poll_interval = 0.002;
  std::ofstream(dir / "s.json") << json(cfg).dump();
  const auto r = run({"scenario", "--config", (dir / "s.json").string(), "--format", "records", "--seed", "3"});
  REQUIRE(r.status == cli::kExitOk);
  const auto s = harness::parse_records(r.out);
  CHECK(s.metrics.at("total").n == 1);
  CHECK(run({"scenario", "--config", (dir / "missing.json").string()}).status != cli::kExitOk);
  std::filesystem::remove_all(dir);
}
