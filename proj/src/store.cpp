#include "campusguard/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <shared_mutex>

#include "campusguard/domain.hpp"
#include "campusguard/error.hpp"
#include "campusguard/incident.hpp"
#include "campusguard/json_util.hpp"
#include "campusguard/lease.hpp"

namespace campusguard::persist {

using nlohmann::json;

const std::vector<StoreDescriptor>& store_descriptors() {
  static const std::vector<StoreDescriptor> kStores = {
      {std::string(kDevices), 1, "dev"},     {std::string(kAccessRequests), 1, "req"},
      {std::string(kLeases), 1, "lease"},    {std::string(kIncidents), 1, "inc"},
      {std::string(kFeedback), 1, "fb"},     {std::string(kAudit), 1, "audit"},
  };
  return kStores;
}

namespace {

const StoreDescriptor& descriptor(std::string_view name) {
  for (const auto& d : store_descriptors())
    if (d.name == name) return d;
  throw Error(ErrorCode::UnknownStore, "unknown store", std::string(name));
}

template <class T>
T decode(const json& record, std::string_view store) {
  try {
    return record.get<T>();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string(store) + ": " + e.what(), record.dump());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string(store) + ": " + e.what(), record.dump());
  }
}

void validate(std::string_view store, const json& record) {
  if (!record.is_object()) throw Error(ErrorCode::SchemaViolation, "record must be an object");
  if (store == kDevices) {
    const auto d = decode<Device>(record, store);
    if ((d.state == DeviceState::Active || d.state == DeviceState::Blocked) && !d.ip)
      throw Error(ErrorCode::SchemaViolation, "active or blocked device without an address", d.device_id);
  } else if (store == kLeases) {
    const auto l = decode<LeaseRecord>(record, store);
    if (l.end && *l.end < l.start) throw Error(ErrorCode::SchemaViolation, "lease ends before it starts");
  } else if (store == kIncidents) {
    decode<incident::IncidentRecord>(record, store);
  } else if (store == kFeedback) {
    const auto f = decode<BlockingFeedback>(record, store);
    try {
      f.check_monotone();
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaViolation, e.what(), f.feedback_id);
    }
  } else if (store == kAudit) {
    decode<AuditEntry>(record, store);
  } else if (store == kAccessRequests) {
    for (const char* key : {"requester", "mac", "device_id", "institution_id"})
      if (!record.contains(key)) throw Error(ErrorCode::SchemaViolation, std::string("access request lacks ") + key);
    if (!MacAddress::parse(record.at("mac").get<std::string>()))
      throw Error(ErrorCode::SchemaViolation, "access request has an invalid MAC");
  }
}

}  // namespace

std::string record_key(const json& record) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%020lld",
                static_cast<long long>(record.value("created_at", std::int64_t{0})));
  return std::string(buf) + "|" + record.value("id", std::string{});
}

Filter field_equals(std::string field, json value) {
  return [field = std::move(field), value = std::move(value)](const json& r) {
    auto it = r.find(field);
    return it != r.end() && *it == value;
  };
}

void BlockingFeedback::check_monotone() const {
  auto require = [](const std::optional<Timestamp>& a, const std::optional<Timestamp>& b,
                    const char* what) {
    if (a && b && *b < *a) throw Error(ErrorCode::MonotonicityViolation, what);
  };
  require(t_attack_start, t_notice, "t_notice precedes t_attack_start");
  require(t_notice, t_decision, "t_decision precedes t_notice");
  require(t_decision, t_commit, "t_commit precedes t_decision");
  require(t_commit, t_loss_of_access, "t_loss_of_access precedes t_commit");
  require(t_commit, unblocked_at, "unblocked_at precedes t_commit");
}

bool BlockingFeedback::monotone_complete() const {
  if (!t_notice || !t_decision || !t_commit || !t_loss_of_access) return false;
  try {
    check_monotone();
  } catch (const Error&) {
    return false;
  }
  return true;
}

void to_json(json& j, const BlockingFeedback& f) {
  j = {{"id", f.feedback_id},
       {"device_id", f.device_id},
       {"incident_id", jsonio::opt(f.incident_id)},
       {"t_attack_start", jsonio::opt_ts(f.t_attack_start)},
       {"t_notice", jsonio::opt_ts(f.t_notice)},
       {"t_decision", jsonio::opt_ts(f.t_decision)},
       {"t_commit", jsonio::opt_ts(f.t_commit)},
       {"t_loss_of_access", jsonio::opt_ts(f.t_loss_of_access)},
       {"unblocked_at", jsonio::opt_ts(f.unblocked_at)},
       {"created_at", jsonio::ts(f.created_at)}};
}

void from_json(const json& j, BlockingFeedback& f) {
  f.feedback_id = j.value("id", "");
  f.device_id = j.at("device_id").get<std::string>();
  f.incident_id = jsonio::opt_str(j, "incident_id");
  f.t_attack_start = jsonio::opt_ts(j, "t_attack_start");
  f.t_notice = jsonio::opt_ts(j, "t_notice");
  f.t_decision = jsonio::opt_ts(j, "t_decision");
  f.t_commit = jsonio::opt_ts(j, "t_commit");
  f.t_loss_of_access = jsonio::opt_ts(j, "t_loss_of_access");
  f.unblocked_at = jsonio::opt_ts(j, "unblocked_at");
  f.created_at = j.contains("created_at") ? jsonio::ts(j.at("created_at")) : Timestamp{};
}

struct Store::Impl {
  struct Table {
    std::map<std::string, json> by_id;
    std::uint64_t next_id = 1;
  };

  std::optional<std::filesystem::path> dir;
  mutable std::shared_mutex mu;
  std::map<std::string, Table, std::less<>> tables;
  bool available = true;
  bool fail_next_commit = false;

  Table& table(std::string_view name) {
    descriptor(name);
    return tables.find(name)->second;
  }
  const Table& table(std::string_view name) const {
    descriptor(name);
    return tables.find(name)->second;
  }

  std::filesystem::path file_for(std::string_view name) const {
    return *dir / (std::string(name) + ".jsonl");
  }

  static std::uint64_t numeric_suffix(const std::string& id) {
    const auto pos = id.rfind('-');
    if (pos == std::string::npos) return 0;
    try {
      return std::stoull(id.substr(pos + 1));
    } catch (...) {
      return 0;
    }
  }

  void load() {
    std::filesystem::create_directories(*dir);
    for (const auto& d : store_descriptors()) {
      auto& t = tables[d.name];
      const auto path = file_for(d.name);
      if (!std::filesystem::exists(path)) {
        std::ofstream out(path);
        out << json{{"store", d.name}, {"schema_version", d.schema_version}}.dump() << '\n';
        continue;
      }
      std::ifstream in(path);
      std::string line;
      bool header = true;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto record = json::parse(line, nullptr, false);
        if (record.is_discarded()) continue;  // torn tail write
        if (header) {
          header = false;
          const int version = record.value("schema_version", 0);
          if (version > d.schema_version)
            throw Error(ErrorCode::SchemaViolation, "store written by a newer schema", d.name);
          continue;
        }
        const auto id = record.value("id", std::string{});
        t.next_id = std::max(t.next_id, numeric_suffix(id) + 1);
        t.by_id[id] = std::move(record);
      }
    }
  }
};

Store::Store() : impl_(std::make_unique<Impl>()) {
  for (const auto& d : store_descriptors()) impl_->tables[d.name];
}

Store::Store(std::filesystem::path directory) : Store() {
  impl_->dir = std::move(directory);
  impl_->load();
}

Store::~Store() = default;

std::string Store::reserve_id(std::string_view store) {
  std::unique_lock lock(impl_->mu);
  auto& t = impl_->table(store);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(t.next_id++));
  return descriptor(store).id_prefix + "-" + buf;
}

std::string Transaction::put(std::string_view store, json record) {
  descriptor(store);
  if (!record.is_object()) throw Error(ErrorCode::SchemaViolation, "record must be an object");
  if (!record.contains("id") || !record["id"].is_string() || record["id"].get<std::string>().empty())
    record["id"] = store_->reserve_id(store);
  if (!record.contains("created_at") || record["created_at"].is_null())
    record["created_at"] = to_micros(now());
  validate(store, record);
  auto id = record["id"].get<std::string>();
  staged_.emplace_back(std::string(store), std::move(record));
  return id;
}

void Transaction::commit() {
  if (committed_) return;
  store_->commit(staged_);
  committed_ = true;
}

void Store::commit(std::vector<std::pair<std::string, json>>& staged) {
  std::unique_lock lock(impl_->mu);
  if (!impl_->available) throw Error(ErrorCode::StorageUnavailable, "storage offline");
  if (impl_->fail_next_commit) {
    impl_->fail_next_commit = false;
    throw Error(ErrorCode::StorageUnavailable, "commit aborted", "injected failpoint");
  }
  if (impl_->dir) {
    // Group writes per file, then flush; a torn final line is dropped on load.
    std::map<std::string, std::string> lines;
    for (const auto& [store, record] : staged) lines[store] += record.dump() + "\n";
    for (const auto& [store, text] : lines) {
      std::ofstream out(impl_->file_for(store), std::ios::app);
      out << text;
      out.flush();
      if (!out) throw Error(ErrorCode::StorageUnavailable, "write failed", store);
    }
  }
  for (auto& [store, record] : staged) {
    auto& t = impl_->table(store);
    const auto id = record["id"].get<std::string>();
    t.next_id = std::max(t.next_id, Impl::numeric_suffix(id) + 1);
    t.by_id[id] = std::move(record);
  }
  staged.clear();
}

std::string Store::put(std::string_view store, json record) {
  auto tx = begin();
  auto id = tx.put(store, std::move(record));
  tx.commit();
  return id;
}

std::optional<json> Store::find(std::string_view store, std::string_view id) const {
  std::shared_lock lock(impl_->mu);
  if (!impl_->available) throw Error(ErrorCode::StorageUnavailable, "storage offline");
  const auto& t = impl_->table(store);
  auto it = t.by_id.find(std::string(id));
  if (it == t.by_id.end()) return std::nullopt;
  return it->second;
}

json Store::get(std::string_view store, std::string_view id) const {
  auto record = find(store, id);
  if (!record) throw Error(ErrorCode::NotFound, std::string(store) + " has no record", std::string(id));
  return *record;
}

PageResult Store::query(std::string_view store, const Filter& filter, const Page& page) const {
  std::vector<std::pair<std::string, const json*>> ordered;
  std::shared_lock lock(impl_->mu);
  if (!impl_->available) throw Error(ErrorCode::StorageUnavailable, "storage offline");
  const auto& t = impl_->table(store);
  ordered.reserve(t.by_id.size());
  for (const auto& [id, record] : t.by_id) {
    if (filter && !filter(record)) continue;
    auto key = record_key(record);
    if (page.after && key <= *page.after) continue;
    ordered.emplace_back(std::move(key), &record);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  PageResult result;
  const auto n = std::min(ordered.size(), page.limit);
  for (std::size_t i = 0; i < n; ++i) result.records.push_back(*ordered[i].second);
  if (n < ordered.size() && n > 0) result.next = ordered[n - 1].first;
  return result;
}

std::vector<json> Store::all(std::string_view store, const Filter& filter) const {
  Page page;
  page.limit = static_cast<std::size_t>(-1);
  return query(store, filter, page).records;
}

std::size_t Store::count(std::string_view store) const {
  std::shared_lock lock(impl_->mu);
  return impl_->table(store).by_id.size();
}

std::string Store::append_blocking_feedback(BlockingFeedback partial) {
  partial.feedback_id.clear();
  if (partial.created_at == Timestamp{}) partial.created_at = now();
  try {
    partial.check_monotone();
  } catch (const Error& e) {
    throw Error(ErrorCode::MonotonicityViolation, e.what());
  }
  json record = partial;
  record.erase("id");
  return put(kFeedback, std::move(record));
}

BlockingFeedback Store::complete_blocking_feedback(std::string_view id, FeedbackField field,
                                                   Timestamp value) {
  auto fb = get(kFeedback, id).get<BlockingFeedback>();
  std::optional<Timestamp>* slot = nullptr;
  switch (field) {
    case FeedbackField::AttackStart: slot = &fb.t_attack_start; break;
    case FeedbackField::Notice: slot = &fb.t_notice; break;
    case FeedbackField::Decision: slot = &fb.t_decision; break;
    case FeedbackField::Commit: slot = &fb.t_commit; break;
    case FeedbackField::LossOfAccess: slot = &fb.t_loss_of_access; break;
    case FeedbackField::Unblocked: slot = &fb.unblocked_at; break;
  }
  if (slot->has_value()) throw Error(ErrorCode::FieldAlreadySet, "feedback timestamp already written", std::string(id));
  *slot = value;
  fb.check_monotone();
  put(kFeedback, fb);
  return fb;
}

void Store::export_to(std::ostream& out) const {
  for (const auto& d : store_descriptors()) {
    out << json{{"store", d.name}, {"schema_version", d.schema_version}, {"records", count(d.name)}}.dump()
        << '\n';
    for (const auto& record : all(d.name)) out << record.dump() << '\n';
  }
}

void Store::set_available(bool available) {
  std::unique_lock lock(impl_->mu);
  impl_->available = available;
}

void Store::fail_next_commit(bool armed) {
  std::unique_lock lock(impl_->mu);
  impl_->fail_next_commit = armed;
}

}  // namespace campusguard::persist
