#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/identifier.hpp"
#include "triage/text.hpp"
#include "triage/time.hpp"

namespace triage {

struct RawIssue {
  std::string bug_id;
  std::string summary;
  std::string description;
  std::string fixer;
  std::string priority;
  std::string status;
  Timestamp resolved_at;
  std::map<std::string, std::string> extra;

  friend bool operator==(const RawIssue&, const RawIssue&) = default;
};

/// EclipseJDT, Mozilla, or any other project name.
class SourceProject {
 public:
  SourceProject() = default;
  explicit SourceProject(std::string_view name) {
    auto lower = text::to_lower(text::trim(name));
    if (lower == "eclipsejdt" || lower == "eclipse-jdt" || lower == "eclipse jdt" || lower == "jdt") {
      name_ = "EclipseJDT";
    } else if (lower == "mozilla") {
      name_ = "Mozilla";
    } else {
      name_ = std::string(text::trim(name));
    }
  }

  bool is_eclipse_jdt() const noexcept { return name_ == "EclipseJDT"; }
  bool is_mozilla() const noexcept { return name_ == "Mozilla"; }
  const std::string& name() const noexcept { return name_; }

  friend bool operator==(const SourceProject&, const SourceProject&) = default;

 private:
  std::string name_;
};

struct IssueRecord {
  std::string bug_id;
  std::string title;
  std::string body;
  DeveloperId assignee;
  Timestamp resolved_at;
  SourceProject source_project;
  // Earlier assignees from a reassignment chain (final assignee excluded).
  // They only feed the relationship count of compute_stats.
  std::vector<DeveloperId> history;

  friend bool operator==(const IssueRecord&, const IssueRecord&) = default;
};

struct SplitConfig {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 3407;
};

struct SplitResult {
  std::vector<IssueRecord> train;
  std::vector<IssueRecord> validation;
  std::vector<IssueRecord> test;
};

struct DatasetStats {
  std::uint64_t bugs = 0;
  std::uint64_t developers = 0;
  std::uint64_t relationships = 0;
  double density = 0.0;

  /// density rounded half-up to 4 decimals, e.g. "0.0008".
  std::string density_display() const;
};

enum class ExportFormat { csv, json, jsonl };

inline ExportFormat parse_export_format(std::string_view s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "json") return ExportFormat::json;
  if (s == "jsonl") return ExportFormat::jsonl;
  throw Error(ErrorCode::InvalidArgument, "unknown export format '" + std::string(s) + "'");
}

inline constexpr std::string_view kRequiredFields[] = {"bug_id", "summary",     "description", "fixer",
                                                       "priority", "status", "resolved_at"};

// ---------------------------------------------------------------------------
// Rounding helpers shared with the evaluator

/// num/den rounded half-up to `places` decimals, rendered with exactly that
/// many digits. Integer arithmetic, so display values never depend on
/// floating-point representation.
inline std::string ratio_half_up(std::uint64_t num, std::uint64_t den, int places) {
  if (den == 0) throw Error(ErrorCode::InvalidArgument, "ratio with zero denominator");
  unsigned __int128 scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  unsigned __int128 scaled = (static_cast<unsigned __int128>(num) * scale * 2 + den) / (2 * static_cast<unsigned __int128>(den));
  auto whole = static_cast<std::uint64_t>(scaled / scale);
  auto frac = static_cast<std::uint64_t>(scaled % scale);
  std::string digits = std::to_string(frac);
  if (static_cast<int>(digits.size()) < places) digits.insert(0, places - digits.size(), '0');
  return std::to_string(whole) + (places > 0 ? "." + digits : "");
}

inline std::string DatasetStats::density_display() const {
  return ratio_half_up(relationships, bugs * developers, 4);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

namespace detail {

/// Parses RFC 4180 text into rows of fields. Quoted fields may contain
/// commas, doubled quotes, and line breaks. `line_of_row` receives the
/// 1-based physical line each row starts on.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view s, std::vector<std::size_t>* line_of_row = nullptr) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) {
      rows.push_back(std::move(row));
      if (line_of_row) line_of_row->push_back(row_line);
    }
    row.clear();
  };
  if (s.size() >= 3 && s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_quoted) {
        throw Error(ErrorCode::ParseError, "unexpected quote on line " + std::to_string(line), static_cast<long>(line));
      }
      in_quotes = true;
      field_quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      end_row();
      ++line;
      row_line = line;
    } else {
      if (field_quoted) {
        throw Error(ErrorCode::ParseError, "text after closing quote on line " + std::to_string(line), static_cast<long>(line));
      }
      field += c;
    }
  }
  if (in_quotes) throw Error(ErrorCode::ParseError, "unterminated quoted field starting on line " + std::to_string(row_line), static_cast<long>(row_line));
  if (!field.empty() || field_quoted || !row.empty()) end_row();
  return rows;
}

inline std::string json_scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

using FieldMap = std::map<std::string, std::string>;

inline RawIssue raw_issue_from_fields(FieldMap fields, std::size_t row, std::size_t line) {
  for (auto name : kRequiredFields) {
    if (!fields.contains(std::string(name))) {
      throw Error(ErrorCode::MissingField, "row " + std::to_string(row) + " is missing field '" + std::string(name) + "'",
                  static_cast<long>(row));
    }
  }
  RawIssue issue;
  auto take = [&](const char* name) {
    auto node = fields.extract(name);
    return std::move(node.mapped());
  };
  issue.bug_id = std::string(text::trim(take("bug_id")));
  if (issue.bug_id.empty()) {
    throw Error(ErrorCode::MissingField, "row " + std::to_string(row) + " has an empty 'bug_id'", static_cast<long>(row));
  }
  issue.summary = take("summary");
  issue.description = take("description");
  issue.fixer = take("fixer");
  issue.priority = take("priority");
  issue.status = take("status");
  auto resolved = take("resolved_at");
  auto ts = try_parse_timestamp(resolved);
  if (!ts) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": invalid resolved_at '" + resolved + "'", static_cast<long>(line));
  }
  issue.resolved_at = *ts;
  issue.extra = std::move(fields);
  return issue;
}

inline std::vector<RawIssue> load_csv(std::string_view content) {
  std::vector<std::size_t> lines;
  auto rows = parse_csv(content, &lines);
  std::vector<RawIssue> out;
  if (rows.empty()) return out;
  const auto& header = rows.front();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() > header.size()) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(lines[r]) + ": " + std::to_string(cells.size()) + " fields, header has " +
                      std::to_string(header.size()),
                  static_cast<long>(lines[r]));
    }
    FieldMap fields;
    for (std::size_t c = 0; c < cells.size(); ++c) fields[header[c]] = cells[c];
    out.push_back(raw_issue_from_fields(std::move(fields), r, lines[r]));
  }
  return out;
}

inline FieldMap fields_from_object(const nlohmann::json& obj, std::size_t line) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected a JSON object", static_cast<long>(line));
  }
  FieldMap fields;
  for (const auto& [key, value] : obj.items()) fields[key] = json_scalar_to_string(value);
  return fields;
}

inline std::vector<RawIssue> load_json_array(std::string_view content) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what(), 1);
  }
  if (!doc.is_array()) throw Error(ErrorCode::ParseError, "expected a top-level JSON array", 1);
  std::vector<RawIssue> out;
  std::size_t row = 0;
  for (const auto& obj : doc) {
    ++row;
    out.push_back(raw_issue_from_fields(fields_from_object(obj, row), row, row));
  }
  return out;
}

inline std::vector<RawIssue> load_jsonl(std::string_view content) {
  std::vector<RawIssue> out;
  std::size_t line_no = 0;
  std::size_t row = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    start = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    if (text::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": invalid JSON", static_cast<long>(line_no));
    }
    ++row;
    out.push_back(raw_issue_from_fields(fields_from_object(obj, line_no), row, line_no));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

}  // namespace detail

/// Parses an export already in memory. Rows keep file order.
inline std::vector<RawIssue> parse_export(std::string_view content, ExportFormat format) {
  std::vector<RawIssue> issues;
  switch (format) {
    case ExportFormat::csv: issues = detail::load_csv(content); break;
    case ExportFormat::json: issues = detail::load_json_array(content); break;
    case ExportFormat::jsonl: issues = detail::load_jsonl(content); break;
  }
  std::unordered_set<std::string> seen;
  for (const auto& issue : issues) {
    if (!seen.insert(issue.bug_id).second) {
      throw Error(ErrorCode::DuplicateBugId, "duplicate bug_id '" + issue.bug_id + "'");
    }
  }
  return issues;
}

inline std::vector<RawIssue> load_export(const std::string& path, ExportFormat format) {
  return parse_export(detail::read_file(path), format);
}

// ---------------------------------------------------------------------------
// Normalization

/// Column holding earlier assignees of a reassignment chain, separated by
/// ';' or ','.
inline constexpr std::string_view kHistoryField = "assignee_history";

/// Returns std::nullopt for issues with neither title nor body. When only the
/// title is empty, the first non-blank body line is promoted to title.
inline std::optional<IssueRecord> to_issue_record(const RawIssue& raw, const SourceProject& project) {
  IssueRecord rec;
  rec.bug_id = raw.bug_id;
  rec.title = std::string(text::trim(raw.summary));
  rec.body = std::string(text::trim(raw.description));
  if (rec.title.empty()) {
    if (rec.body.empty()) return std::nullopt;
    auto nl = rec.body.find('\n');
    rec.title = std::string(text::trim(std::string_view(rec.body).substr(0, nl)));
    rec.body = nl == std::string::npos ? std::string() : std::string(text::trim(std::string_view(rec.body).substr(nl + 1)));
  }
  rec.assignee = normalize_identifier(raw.fixer);
  rec.resolved_at = raw.resolved_at;
  rec.source_project = project;
  if (auto it = raw.extra.find(std::string(kHistoryField)); it != raw.extra.end()) {
    for (auto piece : text::split_any(it->second, ";,")) {
      if (text::trim(piece).empty()) continue;
      auto id = normalize_identifier(piece);
      if (id != rec.assignee && std::find(rec.history.begin(), rec.history.end(), id) == rec.history.end()) {
        rec.history.push_back(std::move(id));
      }
    }
  }
  return rec;
}

struct NormalizeResult {
  std::vector<IssueRecord> issues;
  std::vector<std::string> rejected_bug_ids;
};

/// `project` overrides the per-row "project"/"product" columns when non-empty.
inline NormalizeResult normalize_issues(const std::vector<RawIssue>& raws, std::string_view project = {}) {
  NormalizeResult out;
  out.issues.reserve(raws.size());
  for (const auto& raw : raws) {
    SourceProject src{project};
    if (project.empty()) {
      if (auto it = raw.extra.find("project"); it != raw.extra.end()) {
        src = SourceProject{it->second};
      } else if (auto pt = raw.extra.find("product"); pt != raw.extra.end()) {
        src = SourceProject{pt->second};
      }
    }
    if (auto rec = to_issue_record(raw, src)) {
      out.issues.push_back(std::move(*rec));
    } else {
      out.rejected_bug_ids.push_back(raw.bug_id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering, windowing, splitting

/// Drops every developer with fewer than `min_resolved` issues in `issues`,
/// together with their issues. Counts come from the whole input. With
/// `fixed_point`, recounts and repeats until no developer is below threshold.
inline std::vector<IssueRecord> filter_low_activity(std::vector<IssueRecord> issues, std::size_t min_resolved = 10,
                                                    bool fixed_point = false) {
  while (true) {
    std::unordered_map<DeveloperId, std::size_t> counts;
    for (const auto& issue : issues) ++counts[issue.assignee];
    auto before = issues.size();
    std::erase_if(issues, [&](const IssueRecord& r) { return counts[r.assignee] < min_resolved; });
    if (!fixed_point || issues.size() == before) return issues;
  }
}

/// Keeps issues resolved in [start, end).
inline std::vector<IssueRecord> window_filter(const std::vector<IssueRecord>& issues, Timestamp start, Timestamp end) {
  if (!(start < end)) {
    throw Error(ErrorCode::InvalidWindow,
                "window start " + format_timestamp(start) + " is not before end " + format_timestamp(end));
  }
  std::vector<IssueRecord> out;
  for (const auto& issue : issues) {
    if (start <= issue.resolved_at && issue.resolved_at < end) out.push_back(issue);
  }
  return out;
}

struct Window {
  Timestamp start;
  Timestamp end;
};

/// Parses "<start>..<end>" where each side is an ISO-8601 date or date-time.
/// A bare year "2015" means 2015-01-01.
inline Window parse_window(std::string_view spec) {
  auto sep = spec.find("..");
  if (sep == std::string_view::npos) {
    throw Error(ErrorCode::InvalidWindow, "window must look like <start>..<end>, got '" + std::string(spec) + "'");
  }
  auto side = [&](std::string_view s) {
    s = text::trim(s);
    std::string expanded(s);
    if (s.size() == 4) expanded += "-01-01";
    else if (s.size() == 7) expanded += "-01";
    auto ts = try_parse_timestamp(expanded);
    if (!ts) throw Error(ErrorCode::InvalidWindow, "invalid window bound '" + std::string(s) + "'");
    return *ts;
  };
  Window w{side(spec.substr(0, sep)), side(spec.substr(sep + 2))};
  if (!(w.start < w.end)) {
    throw Error(ErrorCode::InvalidWindow, "window start must precede end in '" + std::string(spec) + "'");
  }
  return w;
}

/// Position of an issue on [0, 1): stable hash of bug_id followed by the
/// decimal seed, scaled by 2^-64.
inline double split_position(std::string_view bug_id, std::uint64_t seed) {
  return unit_interval(StableHasher{}.text(bug_id).text(std::to_string(seed)).digest());
}

enum class SplitName { train, validation, test };

inline SplitName assign_split(std::string_view bug_id, const SplitConfig& cfg) {
  double u = split_position(bug_id, cfg.seed);
  if (u < cfg.train_fraction) return SplitName::train;
  if (u < cfg.train_fraction + cfg.validation_fraction) return SplitName::validation;
  return SplitName::test;
}

inline SplitResult split(const std::vector<IssueRecord>& issues, const SplitConfig& cfg = {}) {
  if (cfg.train_fraction < 0 || cfg.validation_fraction < 0 || cfg.test_fraction < 0 ||
      std::abs(cfg.train_fraction + cfg.validation_fraction + cfg.test_fraction - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must be non-negative and sum to 1");
  }
  SplitResult out;
  for (const auto& issue : issues) {
    switch (assign_split(issue.bug_id, cfg)) {
      case SplitName::train: out.train.push_back(issue); break;
      case SplitName::validation: out.validation.push_back(issue); break;
      case SplitName::test: out.test.push_back(issue); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

inline DatasetStats stats_from_counts(std::uint64_t bugs, std::uint64_t developers, std::uint64_t relationships) {
  if (bugs == 0 || developers == 0) throw Error(ErrorCode::EmptyCorpus, "statistics need at least one bug and developer");
  DatasetStats s{bugs, developers, relationships, 0.0};
  s.density = static_cast<double>(relationships) / (static_cast<double>(bugs) * static_cast<double>(developers));
  return s;
}

/// Relationships are distinct (bug, developer) assignment events: the final
/// assignee plus any earlier assignees recorded in the history column.
inline DatasetStats compute_stats(const std::vector<IssueRecord>& issues) {
  if (issues.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot compute statistics of an empty corpus");
  std::unordered_set<std::string> bugs;
  std::unordered_set<DeveloperId> developers;
  std::set<std::pair<std::string, std::string>> relationships;
  for (const auto& issue : issues) {
    bugs.insert(issue.bug_id);
    developers.insert(issue.assignee);
    relationships.emplace(issue.bug_id, issue.assignee.str());
    for (const auto& prior : issue.history) {
      developers.insert(prior);
      relationships.emplace(issue.bug_id, prior.str());
    }
  }
  return stats_from_counts(bugs.size(), developers.size(), relationships.size());
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["bugs"] = s.bugs;
  j["developers"] = s.developers;
  j["relationships"] = s.relationships;
  j["density"] = s.density_display();
  return j;
}

// ---------------------------------------------------------------------------
// Canonical corpus JSONL

inline std::string issue_to_json_line(const IssueRecord& r) {
  nlohmann::ordered_json j;
  j["bug_id"] = r.bug_id;
  j["title"] = text::sanitize_utf8(r.title);
  j["body"] = text::sanitize_utf8(r.body);
  j["assignee"] = r.assignee.str();
  j["resolved_at"] = format_timestamp(r.resolved_at);
  j["source_project"] = r.source_project.name();
  return j.dump();
}

inline std::string corpus_to_jsonl(const std::vector<IssueRecord>& issues) {
  std::string out;
  for (const auto& issue : issues) {
    out += issue_to_json_line(issue);
    out += '\n';
  }
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<IssueRecord>& issues) {
  detail::write_file(path, corpus_to_jsonl(issues));
}

inline std::vector<IssueRecord> parse_corpus(std::string_view content) {
  std::vector<IssueRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      IssueRecord r;
      r.bug_id = j.at("bug_id").get<std::string>();
      r.title = j.at("title").get<std::string>();
      r.body = j.at("body").get<std::string>();
      r.assignee = normalize_identifier(j.at("assignee").get<std::string>());
      r.resolved_at = parse_timestamp(j.at("resolved_at").get<std::string>());
      r.source_project = SourceProject{j.at("source_project").get<std::string>()};
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "corpus line " + std::to_string(line_no) + ": " + e.what(),
                  static_cast<long>(line_no));
    }
  }
  return out;
}

inline std::vector<IssueRecord> read_corpus(const std::string& path) { return parse_corpus(detail::read_file(path)); }

}  // namespace triage
