#include "campusguard/zeek.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "campusguard/error.hpp"

namespace campusguard::zeek {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    const auto start = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '\t') ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Zeek escapes non-printable bytes as \xHH in header values.
std::string unescape(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 3 < text.size() && text[i + 1] == 'x') {
      const int hi = hex_value(text[i + 2]);
      const int lo = hex_value(text[i + 3]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 3;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

std::string escape_value(std::string_view value, char sep) {
  std::string out;
  for (char c : value) {
    const auto uc = static_cast<unsigned char>(c);
    if (c == sep || c == '\n' || c == '\r' || uc < 0x20 || c == '\\') {
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02x", uc);
      out += buf;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::optional<double> parse_double(std::string_view text) {
  double value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::fixed);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return value;
}

std::optional<std::uint16_t> parse_port(std::string_view text) {
  unsigned value = 0;
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), last, value);
  if (ec != std::errc{} || ptr != last || text.empty() || value > 65535) return std::nullopt;
  return static_cast<std::uint16_t>(value);
}

ParseQuarantine quarantine(std::size_t line_number, std::string_view raw, std::string reason) {
  return ParseQuarantine{line_number, std::string(raw), std::move(reason)};
}

}  // namespace

std::optional<std::size_t> NoticeSchema::index_of(std::string_view name) const {
  auto it = std::find(field_names.begin(), field_names.end(), name);
  if (it == field_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - field_names.begin());
}

NoticeSchema NoticeSchema::standard() {
  NoticeSchema s;
  s.field_names = {"ts", "uid", "id.orig_h", "id.orig_p", "id.resp_h", "id.resp_p", "note", "msg"};
  return s;
}

NoticeSchema parse_header(const std::vector<std::string>& lines) {
  NoticeSchema schema;
  // The separator has to be known before the remaining directives can be split.
  for (const auto& raw : lines) {
    const auto line = strip_cr(raw);
    if (line.rfind("#separator", 0) == 0) {
      const auto value = unescape(line.substr(std::string_view("#separator").size() + 1));
      if (value.size() == 1) schema.separator = value[0];
      else
        throw Error(ErrorCode::InvalidConfig, "separator must be a single character", value);
    }
  }

  bool saw_fields = false;
  for (const auto& raw : lines) {
    const auto line = strip_cr(raw);
    if (line.empty() || line[0] != '#' || line.rfind("#separator", 0) == 0) continue;
    auto parts = split(line, schema.separator);
    if (parts.size() == 1) parts = split_whitespace(line);
    if (parts.empty()) continue;
    const auto directive = parts.front();
    parts.erase(parts.begin());
    if (directive == "#fields") {
      std::set<std::string_view> seen;
      schema.field_names.clear();
      for (auto name : parts) {
        if (!seen.insert(name).second)
          throw Error(ErrorCode::DuplicateField, "field declared twice", std::string(name));
        schema.field_names.emplace_back(name);
      }
      saw_fields = true;
    } else if (directive == "#set_separator" && !parts.empty()) {
      schema.set_separator = unescape(parts.front());
    } else if (directive == "#unset_field" && !parts.empty()) {
      schema.unset_marker = unescape(parts.front());
    } else if (directive == "#empty_field" && !parts.empty()) {
      schema.empty_marker = unescape(parts.front());
    }
  }
  if (!saw_fields || schema.field_names.empty())
    throw Error(ErrorCode::MissingFields, "log preamble has no #fields directive");
  for (const auto* marker : {&schema.unset_marker, &schema.empty_marker}) {
    if (marker->find(schema.separator) != std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "marker contains the separator", *marker);
  }
  return schema;
}

ParseResult parse_notice_line(std::string_view raw_line, const NoticeSchema& schema,
                              std::size_t line_number) noexcept {
  try {
    const auto line = strip_cr(raw_line);
    if (line.empty() || is_blank(line)) return Skip{};
    if (line.front() == '#') return Skip{};

    const auto fields = split(line, schema.separator);
    if (fields.size() != schema.field_names.size()) {
      return quarantine(line_number, raw_line,
                        "field count " + std::to_string(fields.size()) + ", expected " +
                            std::to_string(schema.field_names.size()));
    }
    auto field = [&](std::string_view name) -> std::optional<std::string_view> {
      auto idx = schema.index_of(name);
      if (!idx) return std::nullopt;
      auto value = fields[*idx];
      if (value == schema.unset_marker) return std::nullopt;
      return value;
    };
    auto either = [&](std::string_view a, std::string_view b) {
      auto v = field(a);
      return v ? v : field(b);
    };

    ZeekNotice notice;
    notice.raw = std::string(raw_line);

    auto ts_text = field("ts");
    if (!ts_text) return quarantine(line_number, raw_line, "missing ts");
    auto ts = parse_double(*ts_text);
    if (!ts || !std::isfinite(*ts) || *ts <= 0)
      return quarantine(line_number, raw_line, "unparseable ts '" + std::string(*ts_text) + "'");
    notice.ts = from_epoch_seconds(*ts);

    if (auto uid = field("uid")) notice.uid = std::string(*uid);

    auto src = either("id.orig_h", "src");
    if (!src) return quarantine(line_number, raw_line, "missing source address");
    auto src_ip = Ipv4Address::parse(*src);
    if (!src_ip) return quarantine(line_number, raw_line, "bad source address '" + std::string(*src) + "'");
    notice.src_ip = *src_ip;

    if (auto p = field("id.orig_p")) {
      notice.src_port = parse_port(*p);
      if (!notice.src_port) return quarantine(line_number, raw_line, "bad source port");
    }
    if (auto dst = either("id.resp_h", "dst")) {
      notice.dst_ip = Ipv4Address::parse(*dst);
      if (!notice.dst_ip) return quarantine(line_number, raw_line, "bad destination address");
    }
    if (auto p = field("id.resp_p")) {
      notice.dst_port = parse_port(*p);
      if (!notice.dst_port) return quarantine(line_number, raw_line, "bad destination port");
    }

    auto note = field("note");
    if (!note || note->empty() || *note == schema.empty_marker)
      return quarantine(line_number, raw_line, "missing note");
    notice.note = std::string(*note);

    if (auto msg = field("msg"); msg && *msg != schema.empty_marker) notice.msg = unescape(*msg);
    return notice;
  } catch (const std::exception& e) {
    return quarantine(line_number, raw_line, std::string("parser failure: ") + e.what());
  } catch (...) {
    return quarantine(line_number, raw_line, "parser failure");
  }
}

std::string format_notice_line(const ZeekNotice& n, const NoticeSchema& schema) {
  std::string out;
  for (std::size_t i = 0; i < schema.field_names.size(); ++i) {
    if (i > 0) out.push_back(schema.separator);
    const auto& name = schema.field_names[i];
    std::string value = schema.unset_marker;
    if (name == "ts") {
      char buf[32];
      const auto micros = to_micros(n.ts);
      std::snprintf(buf, sizeof buf, "%lld.%06lld", static_cast<long long>(micros / 1000000),
                    static_cast<long long>(micros % 1000000));
      value = buf;
    } else if (name == "uid" && n.uid) {
      value = *n.uid;
    } else if (name == "id.orig_h" || name == "src") {
      value = n.src_ip.to_string();
    } else if (name == "id.orig_p" && n.src_port) {
      value = std::to_string(*n.src_port);
    } else if ((name == "id.resp_h" || name == "dst") && n.dst_ip) {
      value = n.dst_ip->to_string();
    } else if (name == "id.resp_p" && n.dst_port) {
      value = std::to_string(*n.dst_port);
    } else if (name == "note") {
      value = n.note;
    } else if (name == "msg") {
      value = n.msg.empty() ? schema.empty_marker : escape_value(n.msg, schema.separator);
    }
    out += value;
  }
  return out;
}

std::vector<std::string> format_header(const NoticeSchema& schema, std::string_view path) {
  char sep[8];
  std::snprintf(sep, sizeof sep, "\\x%02x", static_cast<unsigned char>(schema.separator));
  const std::string s(1, schema.separator);
  std::string fields = "#fields";
  std::string types = "#types";
  for (const auto& name : schema.field_names) {
    fields += s + name;
    std::string type = "string";
    if (name == "ts") type = "time";
    else if (name == "id.orig_h" || name == "id.resp_h" || name == "src" || name == "dst") type = "addr";
    else if (name == "id.orig_p" || name == "id.resp_p") type = "port";
    else if (name == "note") type = "enum";
    types += s + type;
  }
  return {std::string("#separator ") + sep,
          "#set_separator" + s + schema.set_separator,
          "#empty_field" + s + schema.empty_marker,
          "#unset_field" + s + schema.unset_marker,
          "#path" + s + std::string(path),
          "#open" + s + format_iso8601(now()),
          fields,
          types};
}

FileLineSource::FileLineSource(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<LineChunk> FileLineSource::read() {
  struct stat st {};
  if (::stat(path_.c_str(), &st) != 0)
    throw Error(ErrorCode::SourceUnavailable, "notice log not readable", path_.string());

  LineChunk chunk;
  const auto inode = static_cast<std::uint64_t>(st.st_ino);
  const auto size = static_cast<std::uint64_t>(st.st_size);
  if (inode_ && (*inode_ != inode || size < offset_)) {
    chunk.rotated = true;
    offset_ = 0;
    partial_.clear();
  }
  inode_ = inode;
  if (size == offset_) {
    if (chunk.rotated) return {chunk};
    return {};
  }

  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::SourceUnavailable, "notice log not readable", path_.string());
  in.seekg(static_cast<std::streamoff>(offset_));
  std::string data(size - offset_, '\0');
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  data.resize(static_cast<std::size_t>(in.gcount()));
  offset_ += data.size();

  partial_ += data;
  std::size_t start = 0;
  while (true) {
    const auto pos = partial_.find('\n', start);
    if (pos == std::string::npos) break;
    chunk.lines.push_back(partial_.substr(start, pos - start));
    start = pos + 1;
  }
  partial_.erase(0, start);
  if (chunk.lines.empty() && !chunk.rotated) return {};
  return {chunk};
}

void MemoryLineSource::append(std::string line) {
  std::lock_guard lock(mu_);
  if (pending_.empty()) pending_.emplace_back();
  pending_.back().lines.push_back(std::move(line));
}

void MemoryLineSource::rotate() {
  std::lock_guard lock(mu_);
  pending_.push_back(LineChunk{true, {}});
}

void MemoryLineSource::set_available(bool available) {
  std::lock_guard lock(mu_);
  available_ = available;
}

std::vector<LineChunk> MemoryLineSource::read() {
  std::lock_guard lock(mu_);
  if (!available_) throw Error(ErrorCode::SourceUnavailable, "memory feed offline");
  return std::exchange(pending_, {});
}

NoticeTailer::NoticeTailer(std::unique_ptr<LineSource> source, TailerOptions options)
    : source_(std::move(source)), options_(options) {}

std::vector<TailRecord> NoticeTailer::poll() {
  using clock = std::chrono::steady_clock;
  if (in_outage_ && clock::now() < retry_at_) return {};

  std::vector<LineChunk> chunks;
  try {
    chunks = source_->read();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SourceUnavailable) throw;
    if (!in_outage_) {
      in_outage_ = true;
      backoff_ = options_.poll_interval;
      retry_at_ = clock::now() + backoff_;
      throw;
    }
    backoff_ = std::min(backoff_ * 2, options_.max_backoff);
    retry_at_ = clock::now() + backoff_;
    return {};
  }
  in_outage_ = false;
  backoff_ = std::chrono::milliseconds{0};

  std::vector<TailRecord> out;
  for (auto& chunk : chunks) {
    if (chunk.rotated) {
      ++cursor_.generation;
      cursor_.line = 0;
      schema_.reset();
      preamble_.clear();
      in_preamble_ = true;
    }
    for (const auto& line : chunk.lines) consume_line(line, out);
  }
  return out;
}

void NoticeTailer::consume_line(const std::string& line, std::vector<TailRecord>& out) {
  ++cursor_.line;
  const auto trimmed = strip_cr(line);
  if (!trimmed.empty() && trimmed.front() == '#') {
    ++skipped_;
    if (trimmed.rfind("#close", 0) == 0) return;
    if (!in_preamble_) {
      // A header after data: the writer started a new log in place.
      preamble_.clear();
      in_preamble_ = true;
    }
    preamble_.push_back(line);
    if (trimmed.rfind("#fields", 0) == 0 || trimmed.rfind("#separator", 0) == 0 ||
        trimmed.rfind("#unset_field", 0) == 0 || trimmed.rfind("#empty_field", 0) == 0) {
      try {
        schema_ = parse_header(preamble_);
      } catch (const Error&) {
        schema_.reset();
      }
    }
    return;
  }
  in_preamble_ = false;
  if (!schema_) {
    if (trimmed.empty() || is_blank(trimmed)) {
      ++skipped_;
      return;
    }
    out.push_back({cursor_, ParseQuarantine{cursor_.line, line, "no valid #fields header"}});
    return;
  }
  auto parsed = parse_notice_line(line, *schema_, cursor_.line);
  if (std::holds_alternative<Skip>(parsed)) {
    ++skipped_;
  } else if (auto* n = std::get_if<ZeekNotice>(&parsed)) {
    out.push_back({cursor_, std::move(*n)});
  } else {
    out.push_back({cursor_, std::get<ParseQuarantine>(std::move(parsed))});
  }
}

}  // namespace campusguard::zeek
