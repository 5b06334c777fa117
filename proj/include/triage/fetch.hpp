#pragma once

#include <chrono>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/detail/http.hpp"
#include "triage/error.hpp"

namespace triage {

struct FetchOptions {
  std::chrono::milliseconds timeout{30000};
  std::size_t max_pages = 100000;
};

struct FetchResult {
  std::vector<RawIssue> issues;
  std::vector<std::string> warnings;
  std::size_t pages = 0;
};

namespace detail {

inline std::string required_string(const nlohmann::json& bug, std::initializer_list<const char*> names) {
  for (auto name : names) {
    auto it = bug.find(name);
    if (it == bug.end() || it->is_null()) continue;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
    throw Error(ErrorCode::SchemaMismatch, std::string("field '") + name + "' has an unexpected type");
  }
  throw Error(ErrorCode::SchemaMismatch, std::string("missing field '") + *names.begin() + "'");
}

inline std::string optional_string(const nlohmann::json& bug, std::initializer_list<const char*> names) {
  for (auto name : names) {
    auto it = bug.find(name);
    if (it != bug.end() && it->is_string()) return it->get<std::string>();
  }
  return {};
}

/// Bugzilla REST bug object -> RawIssue.
inline RawIssue raw_issue_from_bugzilla(const nlohmann::json& bug) {
  if (!bug.is_object()) throw Error(ErrorCode::SchemaMismatch, "bug entry is not an object");
  RawIssue r;
  r.bug_id = required_string(bug, {"id", "bug_id"});
  r.summary = required_string(bug, {"summary"});
  r.description = optional_string(bug, {"description"});
  r.fixer = required_string(bug, {"assigned_to", "fixer"});
  r.priority = optional_string(bug, {"priority"});
  r.status = optional_string(bug, {"status"});
  auto resolved = required_string(bug, {"cf_last_resolved", "resolved_at", "last_change_time"});
  auto ts = try_parse_timestamp(resolved);
  if (!ts) throw Error(ErrorCode::SchemaMismatch, "field 'resolved_at' is not a timestamp: '" + resolved + "'");
  r.resolved_at = *ts;
  static const std::unordered_set<std::string> mapped{"id", "bug_id", "summary", "description", "assigned_to",
                                                      "fixer", "priority", "status", "cf_last_resolved", "resolved_at"};
  for (const auto& [key, value] : bug.items()) {
    if (mapped.contains(key)) continue;
    if (value.is_string()) r.extra[key] = value.get<std::string>();
    else if (value.is_number() || value.is_boolean()) r.extra[key] = value.dump();
  }
  return r;
}

}  // namespace detail

/// Pages through a Bugzilla-style `GET {base}/rest/bug?{query}&limit=&offset=`
/// until a page comes back short. A failure on the first page throws; a
/// failure on a later page keeps what was fetched and records a warning.
inline FetchResult fetch_remote(std::string_view base_url, std::string_view query, std::size_t page_size,
                                const FetchOptions& options = {}) {
  if (text::trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "tracker query is empty");
  if (page_size == 0) throw Error(ErrorCode::InvalidArgument, "page size must be positive");
  auto endpoint = detail::parse_endpoint(base_url);
  httplib::Client client(endpoint.origin);
  detail::configure(client, options.timeout);

  FetchResult out;
  std::unordered_set<std::string> seen;
  std::string q(text::trim(query));
  if (q.front() == '?') q.erase(0, 1);
  for (std::size_t offset = 0; out.pages < options.max_pages; offset += page_size) {
    auto path = endpoint.prefix + "/rest/bug?" + q + "&limit=" + std::to_string(page_size) + "&offset=" + std::to_string(offset);
    auto res = client.Get(path);
    const bool first = out.pages == 0;
    if (!res || res->status / 100 != 2) {
      std::string what = !res ? "transport error: " + httplib::to_string(res.error()) : "HTTP " + std::to_string(res->status);
      if (first) {
        if (!res && detail::is_transport_timeout(res.error())) throw Error(ErrorCode::Timeout, "first page: " + what);
        throw Error(ErrorCode::HttpError, "first page: " + what, res ? res->status : 0);
      }
      out.warnings.push_back("stopped after " + std::to_string(out.pages) + " page(s) at offset " + std::to_string(offset) +
                             ": " + what + "; results are partial");
      break;
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::SchemaMismatch, "page at offset " + std::to_string(offset) + " is not JSON");
    }
    auto bugs = doc.find("bugs");
    if (!doc.is_object() || bugs == doc.end() || !bugs->is_array()) {
      throw Error(ErrorCode::SchemaMismatch, "missing field 'bugs'");
    }
    ++out.pages;
    for (const auto& bug : *bugs) {
      auto issue = detail::raw_issue_from_bugzilla(bug);
      if (!seen.insert(issue.bug_id).second) {
        out.warnings.push_back("duplicate bug " + issue.bug_id + " across pages skipped");
        continue;
      }
      out.issues.push_back(std::move(issue));
    }
    if (bugs->size() < page_size) break;
  }
  return out;
}

}  // namespace triage
