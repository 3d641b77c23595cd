#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "campusguard/types.hpp"
#include "json.hpp"

namespace campusguard::persist {

inline constexpr std::string_view kDevices = "devices";
inline constexpr std::string_view kAccessRequests = "access_requests";
inline constexpr std::string_view kLeases = "leases";
inline constexpr std::string_view kIncidents = "zeek_incidents";
inline constexpr std::string_view kFeedback = "blocking_feedback_history";
inline constexpr std::string_view kAudit = "audit_log";

struct StoreDescriptor {
  std::string name;
  int schema_version = 1;
  std::string id_prefix;
};

const std::vector<StoreDescriptor>& store_descriptors();

/// Timing ledger of one block: notice, decision, firewall commit and the
/// prober-observed loss of access.
struct BlockingFeedback {
  std::string feedback_id;
  std::string device_id;
  std::optional<std::string> incident_id;
  std::optional<Timestamp> t_attack_start;
  std::optional<Timestamp> t_notice;
  std::optional<Timestamp> t_decision;
  std::optional<Timestamp> t_commit;
  std::optional<Timestamp> t_loss_of_access;
  std::optional<Timestamp> unblocked_at;
  Timestamp created_at{};

  /// Throws Error(MonotonicityViolation) when present timestamps are out of order.
  void check_monotone() const;
  /// All of notice, decision, commit and loss of access present and ordered.
  bool monotone_complete() const;

  friend bool operator==(const BlockingFeedback&, const BlockingFeedback&) = default;
};

enum class FeedbackField { AttackStart, Notice, Decision, Commit, LossOfAccess, Unblocked };

void to_json(nlohmann::json& j, const BlockingFeedback& f);
void from_json(const nlohmann::json& j, BlockingFeedback& f);

struct Page {
  std::optional<std::string> after;  // cursor returned by a previous page
  std::size_t limit = 100;
};

struct PageResult {
  std::vector<nlohmann::json> records;
  std::optional<std::string> next;  // set when more records follow
};

using Filter = std::function<bool(const nlohmann::json&)>;

/// Matches records whose top-level `field` equals `value`.
Filter field_equals(std::string field, nlohmann::json value);

class Store;

/// Multi-record write that lands in every store or in none.
class Transaction {
 public:
  /// Stages a record; returns its id (assigned now when the record has none).
  std::string put(std::string_view store, nlohmann::json record);
  void commit();
  bool committed() const noexcept { return committed_; }

 private:
  friend class Store;
  explicit Transaction(Store& store) : store_(&store) {}

  Store* store_;
  std::vector<std::pair<std::string, nlohmann::json>> staged_;
  bool committed_ = false;
};

/// Named JSON record stores. In-memory by default; file-backed when opened on a
/// directory, one append-only `<store>.jsonl` per store with a versioned header.
class Store {
 public:
  Store();
  explicit Store(std::filesystem::path directory);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  std::string put(std::string_view store, nlohmann::json record);
  nlohmann::json get(std::string_view store, std::string_view id) const;
  std::optional<nlohmann::json> find(std::string_view store, std::string_view id) const;
  /// Ordered by (created_at, id).
  PageResult query(std::string_view store, const Filter& filter = {}, const Page& page = {}) const;
  std::vector<nlohmann::json> all(std::string_view store, const Filter& filter = {}) const;
  std::size_t count(std::string_view store) const;

  Transaction begin() { return Transaction(*this); }

  std::string append_blocking_feedback(BlockingFeedback partial);
  BlockingFeedback complete_blocking_feedback(std::string_view id, FeedbackField field, Timestamp value);

  /// Every store as line-delimited JSON: a header line per store, then its records.
  void export_to(std::ostream& out) const;

  // Fault injection.
  void set_available(bool available);
  /// When armed, the next commit aborts after staging and before writing.
  void fail_next_commit(bool armed = true);

 private:
  friend class Transaction;
  struct Impl;
  std::string reserve_id(std::string_view store);
  void commit(std::vector<std::pair<std::string, nlohmann::json>>& staged);

  std::unique_ptr<Impl> impl_;
};

/// Cursor key of a record: created_at then id, in lexicographic order.
std::string record_key(const nlohmann::json& record);

}  // namespace campusguard::persist
