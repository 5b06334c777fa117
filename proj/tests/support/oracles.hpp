#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond the data types and the mock scorer they are checked against.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "triage/backend.hpp"
#include "triage/corpus.hpp"
#include "triage/decoder.hpp"
#include "triage/roster.hpp"

namespace oracle {

/// Count resolved issues per developer, then keep the issues of developers at
/// or above the threshold. Single pass.
inline std::vector<triage::IssueRecord> recount_filter(const std::vector<triage::IssueRecord>& issues, std::size_t min) {
  std::map<std::string, std::size_t> counts;
  for (const auto& i : issues) counts[i.assignee.str()]++;
  std::vector<triage::IssueRecord> out;
  for (const auto& i : issues) {
    if (counts[i.assignee.str()] >= min) out.push_back(i);
  }
  return out;
}

inline std::vector<triage::IssueRecord> linear_window(const std::vector<triage::IssueRecord>& issues, triage::Timestamp start,
                                                      triage::Timestamp end) {
  std::vector<triage::IssueRecord> out;
  for (const auto& i : issues) {
    auto t = i.resolved_at.time_since_epoch().count();
    if (t >= start.time_since_epoch().count() && t < end.time_since_epoch().count()) out.push_back(i);
  }
  return out;
}

struct Scored {
  std::string id;
  double score;
};

/// Scores every roster member along its full byte path (plus end-of-text when
/// another member extends it), then sorts by score descending and identifier
/// ascending.
inline std::vector<Scored> enumerate_ranking(const std::string& prompt, const std::vector<std::string>& roster,
                                             std::uint64_t seed) {
  auto to_ids = [](const std::string& s) {
    triage::TokenIds ids;
    for (unsigned char c : s) ids.push_back(static_cast<triage::TokenId>(c));
    return ids;
  };
  const auto context = to_ids(prompt);
  std::vector<Scored> all;
  for (const auto& member : roster) {
    auto path = to_ids(member);
    auto ctx = context;
    double score = 0.0;
    for (auto t : path) {
      triage::TokenId cand[] = {t};
      score += triage::mock_score(ctx, cand, seed)[0];
      ctx.push_back(t);
    }
    bool extended = std::any_of(roster.begin(), roster.end(), [&](const std::string& other) {
      return other.size() > member.size() && other.compare(0, member.size(), member) == 0;
    });
    if (extended) {
      triage::TokenId eot[] = {triage::kMockEndOfText};
      score += triage::mock_score(ctx, eot, seed)[0];
    }
    all.push_back({member, score});
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return all;
}

/// N_hit[K] by direct nested loops over predictions and ranks.
inline std::vector<std::uint64_t> nested_hits(const std::vector<std::vector<std::optional<std::string>>>& lists,
                                              const std::vector<std::string>& gold, std::size_t k_max) {
  std::vector<std::uint64_t> hits(k_max, 0);
  for (std::size_t k = 1; k <= k_max; ++k) {
    for (std::size_t i = 0; i < lists.size(); ++i) {
      bool hit = false;
      for (std::size_t r = 0; r < k; ++r) {
        if (lists[i][r] && *lists[i][r] == gold[i]) hit = true;
      }
      hits[k - 1] += hit;
    }
  }
  return hits;
}

/// Checks the ranked-list contract: only roster members, no duplicates, PAD
/// only after every identifier, exact length k.
inline bool roster_sound(const triage::RankedPrediction& p, const triage::Roster& roster, std::size_t k) {
  if (p.entries.size() != k) return false;
  std::set<std::string> seen;
  bool padding = false;
  for (const auto& e : p.entries) {
    if (!e.id) {
      padding = true;
      continue;
    }
    if (padding) return false;
    if (!roster.contains(*e.id)) return false;
    if (!seen.insert(e.id->str()).second) return false;
  }
  return true;
}

}  // namespace oracle
