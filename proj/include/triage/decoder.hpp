#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "triage/backend.hpp"
#include "triage/error.hpp"
#include "triage/identifier.hpp"
#include "triage/prompt.hpp"
#include "triage/roster.hpp"

namespace triage {

enum class DecodeMode { constrained, free_postprocessed };

constexpr std::string_view to_string(DecodeMode m) {
  return m == DecodeMode::constrained ? "constrained" : "free_postprocessed";
}

inline DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "constrained") return DecodeMode::constrained;
  if (s == "free_postprocessed" || s == "free") return DecodeMode::free_postprocessed;
  throw Error(ErrorCode::InvalidArgument, "unknown decode mode '" + std::string(s) + "'");
}

/// One rank of a prediction. An empty `id` is padding.
struct RankedEntry {
  std::optional<DeveloperId> id;
  std::optional<double> score;

  bool is_pad() const noexcept { return !id.has_value(); }
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedPrediction {
  std::string issue_id;
  std::vector<RankedEntry> entries;  // exactly k, padding only as a suffix
  std::size_t k = 0;
  DecodeMode mode = DecodeMode::constrained;
  std::vector<std::string> warnings;  // not serialized

  std::vector<DeveloperId> ids() const {
    std::vector<DeveloperId> out;
    for (const auto& e : entries) {
      if (e.id) out.push_back(*e.id);
    }
    return out;
  }
};

struct BeamConfig {
  std::size_t k = 10;
  std::size_t beam_width = 0;  // 0 means 2k

  std::size_t effective_beam() const noexcept { return beam_width == 0 ? 2 * k : beam_width; }
};

namespace detail {

inline void pad_to(RankedPrediction& p) {
  while (p.entries.size() < p.k) p.entries.push_back({});
}

/// Descending score, then ascending identifier.
inline bool ranks_before(double sa, const DeveloperId& a, double sb, const DeveloperId& b) {
  if (sa != sb) return sa > sb;
  return a < b;
}

}  // namespace detail

/// Beam search restricted to the roster trie.
///
/// At every step a hypothesis may only extend with the children of its trie
/// node. A node that completes one identifier while prefixing others also
/// offers the backend's end-of-text token, scored as "stop here". A
/// hypothesis reaching a leaf completes. Sequence score is the plain sum of
/// per-step log-probs. The search stops once k identifiers are complete and
/// no live hypothesis can still beat the k-th (log-probs are never positive),
/// or when no live hypotheses remain. Ties rank by identifier, ascending.
inline RankedPrediction rank_constrained(const PromptBundle& prompt, const TokenTrie& trie, ScoringBackend& backend,
                                         const BeamConfig& cfg = {}) {
  if (trie.empty()) throw Error(ErrorCode::EmptyTrie, "constrained decoding needs a non-empty trie");
  if (cfg.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  const std::size_t beam = cfg.effective_beam();
  if (beam < cfg.k) throw Error(ErrorCode::InvalidArgument, "beam width must be at least k");

  const TokenIds context = backend.tokenizer().tokenize(prompt.text);
  const TokenId eot = backend.end_of_text();

  struct Hypothesis {
    std::size_t node;
    TokenIds tokens;
    double score;
  };

  std::unordered_map<std::size_t, double> completed;  // member -> best score
  auto complete = [&](std::size_t member, double score) {
    auto [it, inserted] = completed.emplace(member, score);
    if (!inserted && score > it->second) it->second = score;
  };
  auto kth_completed = [&]() -> std::optional<double> {
    if (completed.size() < cfg.k) return std::nullopt;
    std::vector<double> scores;
    scores.reserve(completed.size());
    for (const auto& [_, s] : completed) scores.push_back(s);
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(cfg.k - 1), scores.end(),
                     std::greater<>());
    return scores[cfg.k - 1];
  };

  std::vector<Hypothesis> live{{0, {}, 0.0}};
  TokenIds request_context;
  TokenIds candidates;
  while (!live.empty()) {
    std::vector<Hypothesis> next;
    for (const auto& hyp : live) {
      const auto& node = trie.node(hyp.node);
      candidates.clear();
      for (const auto& [token, _] : node.children) candidates.push_back(token);
      if (node.prefix_terminal()) candidates.push_back(eot);

      request_context = context;
      request_context.insert(request_context.end(), hyp.tokens.begin(), hyp.tokens.end());
      auto logprobs = backend.score(request_context, candidates);
      if (logprobs.size() != candidates.size()) {
        throw Error(ErrorCode::ProtocolError, "backend returned " + std::to_string(logprobs.size()) + " scores for " +
                                                  std::to_string(candidates.size()) + " candidates");
      }

      std::size_t i = 0;
      for (const auto& [token, child_index] : node.children) {
        double score = hyp.score + logprobs[i++];
        const auto& child = trie.node(child_index);
        if (child.terminal() && child.children.empty()) {
          complete(child.member, score);
          continue;
        }
        Hypothesis h{child_index, hyp.tokens, score};
        h.tokens.push_back(token);
        next.push_back(std::move(h));
      }
      if (node.prefix_terminal()) complete(node.member, hyp.score + logprobs[i]);
    }

    std::sort(next.begin(), next.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    if (next.size() > beam) next.resize(beam);
    if (auto kth = kth_completed(); kth && !next.empty() && next.front().score < *kth) break;
    live = std::move(next);
  }

  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(completed.size());
  for (const auto& [member, score] : completed) ranked.emplace_back(score, member);
  const auto& members = trie.members();
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    return detail::ranks_before(a.first, members[a.second], b.first, members[b.second]);
  });

  RankedPrediction out;
  out.issue_id = prompt.issue_id;
  out.k = cfg.k;
  out.mode = DecodeMode::constrained;
  for (std::size_t r = 0; r < ranked.size() && r < cfg.k; ++r) {
    out.entries.push_back({members[ranked[r].second], ranked[r].first});
  }
  detail::pad_to(out);
  return out;
}

// ---------------------------------------------------------------------------
// Free-form decoding

inline const std::vector<std::string>& free_decode_stops() {
  static const std::vector<std::string> stops{"\n\n", "###"};
  return stops;
}

struct FreeDecodeResult {
  std::string text;
  bool truncated = false;  // generation hit max_new_tokens
};

inline FreeDecodeResult free_decode(const PromptBundle& prompt, ScoringBackend& backend, std::size_t max_new_tokens = 64) {
  if (prompt.kind == PromptKind::sft) {
    throw Error(ErrorCode::InvalidArgument, "free decoding needs a top1 or topk prompt");
  }
  auto resp = backend.complete({prompt.text, max_new_tokens, free_decode_stops()});
  return {std::move(resp.text), resp.truncated};
}

/// Comma/whitespace split, normalize, keep valid roster members, dedup in
/// first-seen order, cut to k and pad. Order is the model's order; scores are
/// absent.
inline RankedPrediction postprocess_topk(std::string_view raw, const Roster& roster, std::size_t k,
                                         std::string issue_id = {}) {
  RankedPrediction out;
  out.issue_id = std::move(issue_id);
  out.k = k;
  out.mode = DecodeMode::free_postprocessed;
  std::unordered_set<DeveloperId> seen;
  for (auto piece : text::split_any(raw, ", \t\r\n\f\v")) {
    if (out.entries.size() >= k) break;
    if (!validate_identifier(piece)) continue;
    auto id = normalize_identifier(piece);
    if (!roster.contains(id) || !seen.insert(id).second) continue;
    out.entries.push_back({std::move(id), std::nullopt});
  }
  if (out.entries.empty()) out.warnings.push_back("no valid roster identifier in model output");
  detail::pad_to(out);
  return out;
}

struct Top1Extraction {
  std::optional<DeveloperId> id;
  bool anchor_found = false;
};

/// Takes the text after the last `anchor` (or the whole text when the anchor
/// is missing), then its first whitespace-delimited token, normalized and
/// validated.
inline Top1Extraction extract_top1(std::string_view raw, std::string_view anchor = kAnchor) {
  Top1Extraction out;
  auto pos = anchor.empty() ? std::string_view::npos : raw.rfind(anchor);
  std::string_view tail = raw;
  if (pos != std::string_view::npos) {
    out.anchor_found = true;
    tail = raw.substr(pos + anchor.size());
  }
  tail = text::trim(tail);
  auto end = std::find_if(tail.begin(), tail.end(), text::is_space);
  auto first = tail.substr(0, static_cast<std::size_t>(end - tail.begin()));
  if (validate_identifier(first)) out.id = normalize_identifier(first);
  return out;
}

/// Free-form Top-1 prediction: extraction over prompt + completion so the
/// prompt's own anchor frames the answer.
inline RankedPrediction top1_prediction(const PromptBundle& prompt, std::string_view completion, const Roster& roster,
                                        std::size_t k) {
  RankedPrediction out;
  out.issue_id = prompt.issue_id;
  out.k = k;
  out.mode = DecodeMode::free_postprocessed;
  auto extracted = extract_top1(prompt.text + std::string(completion), prompt.anchor);
  if (!extracted.anchor_found) out.warnings.push_back("anchor missing; used first token of output");
  if (extracted.id && roster.contains(*extracted.id)) {
    out.entries.push_back({*extracted.id, std::nullopt});
  } else {
    out.warnings.push_back("no valid roster identifier after anchor");
  }
  detail::pad_to(out);
  return out;
}

// ---------------------------------------------------------------------------
// Predictions JSONL: {"issue_id","mode","predictions","scores"}; null is PAD.

inline std::string prediction_to_json_line(const RankedPrediction& p) {
  nlohmann::ordered_json j;
  j["issue_id"] = p.issue_id;
  j["mode"] = to_string(p.mode);
  auto preds = nlohmann::ordered_json::array();
  auto scores = nlohmann::ordered_json::array();
  for (const auto& e : p.entries) {
    preds.push_back(e.id ? nlohmann::ordered_json(e.id->str()) : nlohmann::ordered_json(nullptr));
    scores.push_back(e.score ? nlohmann::ordered_json(*e.score) : nlohmann::ordered_json(nullptr));
  }
  j["predictions"] = std::move(preds);
  j["scores"] = std::move(scores);
  return j.dump();
}

inline std::string predictions_to_jsonl(const std::vector<RankedPrediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += prediction_to_json_line(p);
    out += '\n';
  }
  return out;
}

inline std::vector<RankedPrediction> parse_predictions(std::string_view content) {
  std::vector<RankedPrediction> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    auto line = content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "predictions line " + std::to_string(line_no);
    try {
      auto j = nlohmann::json::parse(line);
      RankedPrediction p;
      p.issue_id = j.at("issue_id").get<std::string>();
      p.mode = parse_decode_mode(j.at("mode").get<std::string>());
      const auto& preds = j.at("predictions");
      const auto& scores = j.at("scores");
      if (!preds.is_array() || !scores.is_array() || preds.size() != scores.size()) {
        throw Error(ErrorCode::MalformedLine, where + ": predictions and scores must be arrays of equal length",
                    static_cast<long>(line_no));
      }
      bool seen_pad = false;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        RankedEntry e;
        if (!preds[i].is_null()) {
          if (seen_pad) {
            throw Error(ErrorCode::MalformedLine, where + ": identifier after padding", static_cast<long>(line_no));
          }
          e.id = normalize_identifier(preds[i].get<std::string>());
        } else {
          seen_pad = true;
        }
        if (!scores[i].is_null()) e.score = scores[i].get<double>();
        p.entries.push_back(std::move(e));
      }
      p.k = p.entries.size();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, where + ": " + e.what(), static_cast<long>(line_no));
    }
  }
  return out;
}

}  // namespace triage
