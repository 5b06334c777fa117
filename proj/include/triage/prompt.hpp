#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "triage/backend.hpp"
#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/identifier.hpp"
#include "triage/text.hpp"

namespace triage {

inline constexpr std::string_view kSystemPrompt = "You are an expert bug triager.";
inline constexpr std::string_view kAnchor = "### Assignee:";
inline constexpr std::size_t kDefaultBudget = 2048;

enum class PromptKind { sft, top1, topk };

constexpr std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::sft: return "sft";
    case PromptKind::top1: return "top1";
    case PromptKind::topk: return "topk";
  }
  return "?";
}

inline PromptKind parse_prompt_kind(std::string_view s) {
  if (s == "sft") return PromptKind::sft;
  if (s == "top1") return PromptKind::top1;
  if (s == "topk") return PromptKind::topk;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt kind '" + std::string(s) + "'");
}

struct PromptBundle {
  std::string issue_id;
  std::string text;
  PromptKind kind = PromptKind::top1;
  std::string anchor{kAnchor};
  std::size_t k = 0;
  std::vector<DeveloperId> candidates;
  bool truncated = false;
};

struct ConversationRecord {
  std::string system;
  std::string user;
  std::string assistant;

  friend bool operator==(const ConversationRecord&, const ConversationRecord&) = default;
};

// ---------------------------------------------------------------------------
// Templates

/// A prompt template with `{name}` placeholders, substituted in a single
/// pass so issue text containing braces is never re-expanded.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string source) : source_(std::move(source)) {
    std::size_t pos = 0;
    while (pos < source_.size()) {
      auto open = source_.find('{', pos);
      auto close = open == std::string::npos ? std::string::npos : source_.find('}', open);
      if (open == std::string::npos || close == std::string::npos) {
        segments_.push_back({false, source_.substr(pos)});
        break;
      }
      auto name = std::string_view(source_).substr(open + 1, close - open - 1);
      bool is_name = !name.empty() && name.find_first_not_of("abcdefghijklmnopqrstuvwxyz_") == std::string_view::npos;
      if (!is_name) {
        segments_.push_back({false, source_.substr(pos, open + 1 - pos)});
        pos = open + 1;
        continue;
      }
      if (open > pos) segments_.push_back({false, source_.substr(pos, open - pos)});
      segments_.push_back({true, std::string(name)});
      pos = close + 1;
    }
  }

  const std::string& source() const noexcept { return source_; }

  bool has(std::string_view name) const {
    for (const auto& s : segments_) {
      if (s.placeholder && s.value == name) return true;
    }
    return false;
  }

  template <typename Lookup>
  std::string render(Lookup&& lookup) const {
    std::string out;
    for (const auto& s : segments_) {
      if (s.placeholder) {
        out += lookup(std::string_view(s.value));
      } else {
        out += s.value;
      }
    }
    return out;
  }

 private:
  struct Segment {
    bool placeholder;
    std::string value;
  };
  std::string source_;
  std::vector<Segment> segments_;
};

/// The three prompt templates (version "v1"). The text files under
/// templates/v1/ hold the same strings and may be overridden per run.
struct TemplateSet {
  PromptTemplate sft;
  PromptTemplate top1;
  PromptTemplate topk;

  static constexpr std::string_view kVersion = "v1";

  static TemplateSet builtin() {
    return {
        PromptTemplate(
            "Below is an issue. Suggest the single best developer to resolve it.\n\n"
            "### Issue:\n{title}\n\n{body}\n\n### Assignee: {gold}"),
        PromptTemplate(
            "Below is an issue. Suggest the single best developer to resolve it.\n\n"
            "### Issue:\n{title}\n\n{body}\n\n### Assignee:"),
        PromptTemplate(
            "Below is an issue. Suggest the single best developer to resolve it.\n\n"
            "### Issue:\n{title}\n\n{body}\n\n"
            "### Candidates:\n{candidates}\n\n"
            "Top {k} unique assignees, comma-separated, no extra words.\n\n### Assignee:"),
    };
  }

  /// Loads sft.txt, top1.txt and topk.txt from `dir`. One trailing newline
  /// per file is dropped.
  static TemplateSet load(const std::filesystem::path& dir) {
    auto read = [&](const char* file) {
      auto content = detail::read_file((dir / file).string());
      if (content.ends_with("\r\n")) content.resize(content.size() - 2);
      else if (content.ends_with('\n')) content.pop_back();
      return PromptTemplate(std::move(content));
    };
    TemplateSet set{read("sft.txt"), read("top1.txt"), read("topk.txt")};
    set.validate();
    return set;
  }

  void validate() const {
    auto need = [](const PromptTemplate& t, const char* which, std::initializer_list<const char*> names) {
      for (auto n : names) {
        if (!t.has(n)) {
          throw Error(ErrorCode::InvalidArgument, std::string(which) + " template lacks {" + n + "}");
        }
      }
    };
    need(sft, "sft", {"title", "body", "gold"});
    need(top1, "top1", {"title", "body"});
    need(topk, "topk", {"title", "body", "candidates", "k"});
    if (!sft.source().ends_with(std::string(kAnchor) + " {gold}")) {
      throw Error(ErrorCode::InvalidArgument, "sft template must end with the anchor followed by ' {gold}'");
    }
    if (!top1.source().ends_with(kAnchor) || !topk.source().ends_with(kAnchor)) {
      throw Error(ErrorCode::InvalidArgument, "inference templates must end with the anchor");
    }
  }
};

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

struct Slots {
  std::string_view title;
  std::string_view body;
  std::string_view gold;
  std::string_view candidates;
  std::string k;
};

inline std::string render_slots(const PromptTemplate& t, const Slots& s) {
  return t.render([&](std::string_view name) -> std::string {
    if (name == "title") return std::string(s.title);
    if (name == "body") return std::string(s.body);
    if (name == "gold") return std::string(s.gold);
    if (name == "candidates") return std::string(s.candidates);
    if (name == "k") return s.k;
    return "{" + std::string(name) + "}";
  });
}

struct Fitted {
  std::string text;
  std::size_t body_kept = 0;
  bool truncated = false;
};

/// Renders with the longest body prefix (cut on a UTF-8 boundary) whose full
/// prompt fits in `budget` tokens. Returns std::nullopt when even the empty
/// body does not fit.
inline std::optional<Fitted> fit_body(const PromptTemplate& t, Slots slots, std::string_view body, std::size_t budget,
                                     const Tokenizer& tok) {
  auto render_prefix = [&](std::size_t len) {
    slots.body = body.substr(0, len);
    return render_slots(t, slots);
  };
  auto full = render_prefix(body.size());
  if (tok.count_tokens(full) <= budget) return Fitted{std::move(full), body.size(), false};
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (text::is_utf8_boundary(body, i)) cuts.push_back(i);
  }
  if (tok.count_tokens(render_prefix(0)) > budget) return std::nullopt;
  // cuts[0] == 0 always fits; find the last fitting cut.
  std::size_t lo = 0, hi = cuts.size() - 1;
  while (lo < hi) {
    auto mid = lo + (hi - lo + 1) / 2;
    if (tok.count_tokens(render_prefix(cuts[mid])) <= budget) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return Fitted{render_prefix(cuts[lo]), cuts[lo], true};
}

inline void require_title(const IssueRecord& issue) {
  if (text::trim(issue.title).empty()) {
    throw Error(ErrorCode::InvalidArgument, "issue " + issue.bug_id + " has an empty title");
  }
}

}  // namespace detail

/// Training prompt ending in "### Assignee: {gold}". Only the body tail is
/// ever truncated.
inline PromptBundle render_sft(const IssueRecord& issue, const DeveloperId& gold, const Tokenizer& tok,
                               std::size_t budget = kDefaultBudget, const TemplateSet& templates = TemplateSet::builtin()) {
  detail::require_title(issue);
  if (gold.empty()) throw Error(ErrorCode::InvalidArgument, "gold assignee is empty");
  detail::Slots slots{issue.title, {}, gold.str(), {}, {}};
  auto fitted = detail::fit_body(templates.sft, slots, issue.body, budget, tok);
  if (!fitted) {
    throw Error(ErrorCode::BudgetTooSmall,
                "scaffold and title of issue " + issue.bug_id + " exceed " + std::to_string(budget) + " tokens");
  }
  PromptBundle b;
  b.issue_id = issue.bug_id;
  b.text = std::move(fitted->text);
  b.truncated = fitted->truncated;
  b.kind = PromptKind::sft;
  return b;
}

inline PromptBundle render_top1(const IssueRecord& issue, const Tokenizer& tok, std::size_t budget = kDefaultBudget,
                                const TemplateSet& templates = TemplateSet::builtin()) {
  detail::require_title(issue);
  detail::Slots slots{issue.title, {}, {}, {}, {}};
  auto fitted = detail::fit_body(templates.top1, slots, issue.body, budget, tok);
  if (!fitted) {
    throw Error(ErrorCode::BudgetTooSmall,
                "scaffold and title of issue " + issue.bug_id + " exceed " + std::to_string(budget) + " tokens");
  }
  PromptBundle b;
  b.issue_id = issue.bug_id;
  b.text = std::move(fitted->text);
  b.truncated = fitted->truncated;
  b.kind = PromptKind::top1;
  return b;
}

/// Top-K prompt embedding the full candidate list in the given order. The
/// list is never shortened: if it cannot fit even with an empty body the call
/// fails with CandidatesDoNotFit.
inline PromptBundle render_topk(const IssueRecord& issue, const std::vector<DeveloperId>& candidates, const Tokenizer& tok,
                                std::size_t k = 10, std::size_t budget = kDefaultBudget,
                                const TemplateSet& templates = TemplateSet::builtin()) {
  detail::require_title(issue);
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "candidate list is empty");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  std::vector<std::string> names;
  names.reserve(candidates.size());
  for (const auto& c : candidates) names.push_back(c.str());
  auto joined = text::join(names, ", ");
  detail::Slots slots{issue.title, {}, {}, joined, std::to_string(k)};
  auto fitted = detail::fit_body(templates.topk, slots, issue.body, budget, tok);
  if (!fitted) {
    detail::Slots bare = slots;
    bare.candidates = {};
    bare.body = {};
    if (tok.count_tokens(detail::render_slots(templates.topk, bare)) <= budget) {
      throw Error(ErrorCode::CandidatesDoNotFit, std::to_string(candidates.size()) + " candidates do not fit in " +
                                                     std::to_string(budget) + " tokens");
    }
    throw Error(ErrorCode::BudgetTooSmall,
                "scaffold and title of issue " + issue.bug_id + " exceed " + std::to_string(budget) + " tokens");
  }
  PromptBundle b;
  b.issue_id = issue.bug_id;
  b.text = std::move(fitted->text);
  b.truncated = fitted->truncated;
  b.kind = PromptKind::topk;
  b.k = k;
  b.candidates = candidates;
  return b;
}

/// The (system, user, assistant) triple for fine-tuning. The user turn holds
/// the same title and (possibly truncated) body the SFT prompt carries.
inline ConversationRecord to_conversation(const IssueRecord& issue, const Tokenizer& tok,
                                          std::size_t budget = kDefaultBudget,
                                          const TemplateSet& templates = TemplateSet::builtin()) {
  detail::require_title(issue);
  detail::Slots slots{issue.title, {}, issue.assignee.str(), {}, {}};
  auto fitted = detail::fit_body(templates.sft, slots, issue.body, budget, tok);
  if (!fitted) {
    throw Error(ErrorCode::BudgetTooSmall,
                "scaffold and title of issue " + issue.bug_id + " exceed " + std::to_string(budget) + " tokens");
  }
  return {std::string(kSystemPrompt), issue.title + "\n\n" + issue.body.substr(0, fitted->body_kept),
          issue.assignee.str()};
}

// ---------------------------------------------------------------------------
// Conversation JSONL

inline std::string conversation_to_json_line(const ConversationRecord& r) {
  nlohmann::ordered_json j;
  j["system"] = text::sanitize_utf8(r.system);
  j["user"] = text::sanitize_utf8(r.user);
  j["assistant"] = text::sanitize_utf8(r.assistant);
  return j.dump();
}

inline std::size_t emit_jsonl(const std::vector<ConversationRecord>& records, const std::string& path) {
  std::string out;
  for (const auto& r : records) {
    out += conversation_to_json_line(r);
    out += '\n';
  }
  detail::write_file(path, out);
  return records.size();
}

/// Strict parse: every non-blank line must be an object with exactly the
/// string keys system, user and assistant. Blank lines are accepted only at
/// the end of the file.
inline std::vector<ConversationRecord> parse_jsonl_text(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (line.ends_with('\r')) line.remove_suffix(1);
    lines.push_back(line);
    start = nl == std::string_view::npos ? content.size() : nl + 1;
  }
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();

  std::vector<ConversationRecord> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto n = static_cast<long>(i + 1);
    const auto where = "line " + std::to_string(n);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::MalformedLine, where + ": not valid JSON", n);
    }
    if (!j.is_object()) throw Error(ErrorCode::MalformedLine, where + ": expected a JSON object", n);
    for (const auto& [key, value] : j.items()) {
      if (key != "system" && key != "user" && key != "assistant") {
        throw Error(ErrorCode::MalformedLine, where + ": unexpected key '" + key + "'", n);
      }
      if (!value.is_string()) throw Error(ErrorCode::MalformedLine, where + ": '" + key + "' is not a string", n);
    }
    ConversationRecord r;
    for (auto [role, field] : {std::pair{"system", &r.system}, {"user", &r.user}, {"assistant", &r.assistant}}) {
      auto it = j.find(role);
      if (it == j.end()) throw Error(ErrorCode::MissingRole, where + ": missing role '" + role + "'", n);
      *field = it->get<std::string>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ConversationRecord> parse_jsonl(const std::string& path) {
  return parse_jsonl_text(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Prompt JSONL (input of `triage predict`)

inline std::string prompt_to_json_line(const PromptBundle& b) {
  nlohmann::ordered_json j;
  j["issue_id"] = b.issue_id;
  j["kind"] = to_string(b.kind);
  j["k"] = b.k;
  j["anchor"] = b.anchor;
  j["truncated"] = b.truncated;
  j["text"] = text::sanitize_utf8(b.text);
  return j.dump();
}

inline std::vector<PromptBundle> parse_prompts(std::string_view content) {
  std::vector<PromptBundle> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PromptBundle b;
      b.issue_id = j.at("issue_id").get<std::string>();
      b.kind = parse_prompt_kind(j.at("kind").get<std::string>());
      b.k = j.value("k", std::size_t{0});
      b.anchor = j.value("anchor", std::string(kAnchor));
      b.truncated = j.value("truncated", false);
      b.text = j.at("text").get<std::string>();
      out.push_back(std::move(b));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, "prompt line " + std::to_string(line_no) + ": " + e.what(),
                  static_cast<long>(line_no));
    }
  }
  return out;
}

}  // namespace triage
