#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "campusguard/types.hpp"

namespace campusguard::zeek {

/// Layout of a Zeek TSV log as declared by its '#' preamble.
struct NoticeSchema {
  char separator = '\t';
  std::string set_separator = ",";
  std::vector<std::string> field_names;
  std::string unset_marker = "-";
  std::string empty_marker = "(empty)";

  /// Position of a field, or nullopt when the log does not carry it.
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// ts uid id.orig_h id.orig_p id.resp_h id.resp_p note msg, TAB separated.
  static NoticeSchema standard();
};

struct ZeekNotice {
  Timestamp ts{};
  std::optional<std::string> uid;
  Ipv4Address src_ip;
  std::optional<std::uint16_t> src_port;
  std::optional<Ipv4Address> dst_ip;
  std::optional<std::uint16_t> dst_port;
  std::string note;
  std::string msg;
  std::string raw;

  friend bool operator==(const ZeekNotice&, const ZeekNotice&) = default;
};

struct ParseQuarantine {
  std::size_t line_number = 0;
  std::string raw;
  std::string reason;

  friend bool operator==(const ParseQuarantine&, const ParseQuarantine&) = default;
};

struct Skip {
  friend bool operator==(const Skip&, const Skip&) = default;
};

using ParseResult = std::variant<ZeekNotice, Skip, ParseQuarantine>;

/// Builds a schema from '#' directives. Absent directives take Zeek defaults.
/// Throws Error(MissingFields) without '#fields', Error(DuplicateField) on repeats.
NoticeSchema parse_header(const std::vector<std::string>& lines);

/// Classifies one line. Never throws: malformed data becomes ParseQuarantine.
ParseResult parse_notice_line(std::string_view line, const NoticeSchema& schema,
                              std::size_t line_number = 0) noexcept;

/// Renders a notice as a data line under `schema` (used by the synthetic
/// attack writer and by tests).
std::string format_notice_line(const ZeekNotice& notice, const NoticeSchema& schema);

/// Preamble lines for a fresh log under `schema`.
std::vector<std::string> format_header(const NoticeSchema& schema, std::string_view path = "notice");

/// (file generation, line number): monotone position of a record in a source.
struct Cursor {
  std::uint64_t generation = 0;
  std::size_t line = 0;

  auto operator<=>(const Cursor&) const = default;
};

struct TailRecord {
  Cursor cursor;
  std::variant<ZeekNotice, ParseQuarantine> item;
};

/// A chunk of newly appended complete lines. `rotated` marks the first chunk of
/// a new file generation.
struct LineChunk {
  bool rotated = false;
  std::vector<std::string> lines;
};

/// Append-only line source. read() throws Error(SourceUnavailable) when the
/// source cannot be read.
class LineSource {
 public:
  virtual ~LineSource() = default;
  virtual std::vector<LineChunk> read() = 0;
  virtual std::string describe() const = 0;
};

/// Follows a file path across rotation (inode change or truncation).
class FileLineSource final : public LineSource {
 public:
  explicit FileLineSource(std::filesystem::path path);
  std::vector<LineChunk> read() override;
  std::string describe() const override { return path_.string(); }

 private:
  std::filesystem::path path_;
  std::optional<std::uint64_t> inode_;
  std::uint64_t offset_ = 0;
  std::string partial_;
};

/// In-memory feed for tests; thread-safe for one writer and one reader.
class MemoryLineSource final : public LineSource {
 public:
  void append(std::string line);
  void rotate();
  void set_available(bool available);
  std::vector<LineChunk> read() override;
  std::string describe() const override { return "memory"; }

 private:
  std::mutex mu_;
  std::vector<LineChunk> pending_;
  bool available_ = true;
};

struct TailerOptions {
  std::chrono::milliseconds poll_interval{200};
  std::chrono::milliseconds max_backoff{5000};
};

/// Turns a line source into an ordered stream of notices and quarantines.
/// Single consumer; poll() is not re-entrant.
class NoticeTailer {
 public:
  explicit NoticeTailer(std::unique_ptr<LineSource> source, TailerOptions options = {});

  /// Reads whatever is new. Throws Error(SourceUnavailable) once per outage,
  /// then returns empty batches until the backoff window allows a retry.
  std::vector<TailRecord> poll();

  std::size_t skipped() const noexcept { return skipped_; }
  Cursor cursor() const noexcept { return cursor_; }
  const TailerOptions& options() const noexcept { return options_; }
  bool outage() const noexcept { return in_outage_; }

 private:
  void consume_line(const std::string& line, std::vector<TailRecord>& out);

  std::unique_ptr<LineSource> source_;
  TailerOptions options_;
  Cursor cursor_;
  std::vector<std::string> preamble_;
  std::optional<NoticeSchema> schema_;
  bool in_preamble_ = true;
  std::size_t skipped_ = 0;

  bool in_outage_ = false;
  std::chrono::milliseconds backoff_{0};
  std::chrono::steady_clock::time_point retry_at_{};
};

}  // namespace campusguard::zeek
