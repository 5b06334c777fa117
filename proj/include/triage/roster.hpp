#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "triage/backend.hpp"
#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/identifier.hpp"

namespace triage {

enum class RosterSource { training_labels, official_list, union_ };

constexpr std::string_view to_string(RosterSource s) {
  switch (s) {
    case RosterSource::training_labels: return "training_labels";
    case RosterSource::official_list: return "official_list";
    case RosterSource::union_: return "union";
  }
  return "?";
}

/// The valid assignee set, in first-seen order.
class Roster {
 public:
  Roster() = default;
  Roster(std::vector<DeveloperId> members, RosterSource source, std::string built_from_split)
      : source_(source), built_from_split_(std::move(built_from_split)) {
    for (auto& m : members) add(std::move(m));
  }

  const std::vector<DeveloperId>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  bool contains(const DeveloperId& id) const { return index_.contains(id); }
  RosterSource source() const noexcept { return source_; }
  const std::string& built_from_split() const noexcept { return built_from_split_; }

 private:
  void add(DeveloperId id) {
    if (index_.insert(id).second) members_.push_back(std::move(id));
  }

  std::vector<DeveloperId> members_;
  std::unordered_set<DeveloperId> index_;
  RosterSource source_ = RosterSource::training_labels;
  std::string built_from_split_ = "train";
};

/// Distinct training assignees in first-seen order, followed by any official
/// identifiers not already present. Never looks at validation or test data.
inline Roster build_roster(const std::vector<IssueRecord>& train, const std::optional<std::vector<DeveloperId>>& official = std::nullopt) {
  std::vector<DeveloperId> members;
  members.reserve(train.size());
  for (const auto& issue : train) members.push_back(issue.assignee);
  RosterSource source = RosterSource::training_labels;
  if (official) {
    source = train.empty() ? RosterSource::official_list : RosterSource::union_;
    members.insert(members.end(), official->begin(), official->end());
  }
  Roster roster(std::move(members), source, "train");
  if (roster.empty()) throw Error(ErrorCode::EmptyRoster, "roster has no members");
  return roster;
}

// ---------------------------------------------------------------------------
// Roster file: one identifier per line, '#' starts a comment.

inline std::vector<DeveloperId> parse_roster_text(std::string_view content) {
  std::vector<DeveloperId> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    if (!validate_identifier(line)) {
      throw Error(ErrorCode::ParseError, "roster line " + std::to_string(line_no) + ": invalid identifier '" + std::string(line) + "'",
                  static_cast<long>(line_no));
    }
    out.push_back(normalize_identifier(line));
  }
  return out;
}

inline Roster read_roster(const std::string& path) {
  auto members = parse_roster_text(detail::read_file(path));
  if (members.empty()) throw Error(ErrorCode::EmptyRoster, "roster file '" + path + "' has no members");
  return Roster(std::move(members), RosterSource::official_list, "file");
}

inline std::string roster_to_text(const Roster& roster) {
  std::string out = "# source: " + std::string(to_string(roster.source())) + "; split: " + roster.built_from_split() +
                    "; members: " + std::to_string(roster.size()) + "\n";
  for (const auto& m : roster.members()) {
    out += m.str();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token trie

/// Prefix tree over the token sequences of roster members. Node 0 is the
/// root. A node carrying a member index is terminal; a terminal with
/// children marks an identifier that is a strict token-prefix of another.
class TokenTrie {
 public:
  static constexpr std::size_t kNoMember = static_cast<std::size_t>(-1);

  struct Node {
    std::map<TokenId, std::size_t> children;  // ordered by token id
    std::size_t member = kNoMember;

    bool terminal() const noexcept { return member != kNoMember; }
    bool prefix_terminal() const noexcept { return terminal() && !children.empty(); }
  };

  TokenTrie() : nodes_(1) {}

  const Node& root() const noexcept { return nodes_.front(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<DeveloperId>& members() const noexcept { return members_; }
  const std::string& tokenizer_name() const noexcept { return tokenizer_name_; }
  bool empty() const noexcept { return members_.empty(); }

  std::size_t terminal_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.terminal();
    return n;
  }

  /// Token path of a member as inserted.
  const TokenIds& path(std::size_t member) const { return paths_.at(member); }

  /// Member whose token sequence is exactly `ids`, if any.
  std::optional<std::size_t> find(std::span<const TokenId> ids) const {
    std::size_t at = 0;
    for (auto id : ids) {
      auto it = nodes_[at].children.find(id);
      if (it == nodes_[at].children.end()) return std::nullopt;
      at = it->second;
    }
    if (!nodes_[at].terminal()) return std::nullopt;
    return nodes_[at].member;
  }

 private:
  friend TokenTrie compile_trie(const Roster& roster, const Tokenizer& tokenizer, std::optional<TokenId> end_of_text);

  std::vector<Node> nodes_;
  std::vector<DeveloperId> members_;
  std::vector<TokenIds> paths_;
  std::string tokenizer_name_;
};

/// Inserts tokenize(member) for every roster member. Fails when a member
/// tokenizes to nothing, contains `end_of_text`, or collides with another
/// member's token sequence.
inline TokenTrie compile_trie(const Roster& roster, const Tokenizer& tokenizer,
                              std::optional<TokenId> end_of_text = std::nullopt) {
  if (roster.empty()) throw Error(ErrorCode::EmptyRoster, "cannot compile an empty roster");
  TokenTrie trie;
  trie.tokenizer_name_ = tokenizer.name();
  for (const auto& member : roster.members()) {
    TokenIds ids;
    try {
      ids = tokenizer.tokenize(member.str());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::TokenizationFailure, "'" + member.str() + "': " + e.what());
    }
    if (ids.empty()) throw Error(ErrorCode::TokenizationFailure, "'" + member.str() + "' tokenizes to nothing");
    if (end_of_text && std::find(ids.begin(), ids.end(), *end_of_text) != ids.end()) {
      throw Error(ErrorCode::TokenizationFailure, "'" + member.str() + "' contains the end-of-text token");
    }
    std::size_t at = 0;
    for (auto id : ids) {
      auto it = trie.nodes_[at].children.find(id);
      if (it == trie.nodes_[at].children.end()) {
        trie.nodes_.emplace_back();
        auto fresh = trie.nodes_.size() - 1;
        trie.nodes_[at].children.emplace(id, fresh);
        at = fresh;
      } else {
        at = it->second;
      }
    }
    if (trie.nodes_[at].terminal()) {
      throw Error(ErrorCode::TokenizationFailure, "'" + member.str() + "' has the same token sequence as '" +
                                                      trie.members_[trie.nodes_[at].member].str() + "'");
    }
    trie.nodes_[at].member = trie.members_.size();
    trie.members_.push_back(member);
    trie.paths_.push_back(std::move(ids));
  }
  return trie;
}

}  // namespace triage
