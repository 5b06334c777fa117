#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/error.hpp"
#include "triage/hash.hpp"
#include "triage/text.hpp"

namespace triage {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

/// Tokenizer exposed by a scoring backend. Implementations must be safe to
/// call concurrently.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string name() const = 0;
  virtual TokenIds tokenize(std::string_view s) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;

  virtual std::size_t count_tokens(std::string_view s) const { return tokenize(s).size(); }
};

/// One token per byte, ids 0..255. Lossless on any input.
class ByteTokenizer final : public Tokenizer {
 public:
  std::string name() const override { return "byte"; }

  TokenIds tokenize(std::string_view s) const override {
    TokenIds ids;
    ids.reserve(s.size());
    for (char c : s) ids.push_back(static_cast<unsigned char>(c));
    return ids;
  }

  std::string detokenize(std::span<const TokenId> ids) const override {
    std::string out;
    out.reserve(ids.size());
    for (auto id : ids) {
      if (id < 0 || id > 255) throw Error(ErrorCode::TokenizationFailure, "byte token out of range: " + std::to_string(id));
      out.push_back(static_cast<char>(id));
    }
    return out;
  }

  std::size_t count_tokens(std::string_view s) const override { return s.size(); }
};

struct CompletionRequest {
  std::string prompt;
  std::size_t max_new_tokens = 64;
  std::vector<std::string> stop;
};

struct CompletionResponse {
  std::string text;
  // Generation ended because max_new_tokens was reached.
  bool truncated = false;
};

/// Cuts `text` at the earliest occurrence of any stop string.
inline bool apply_stop_strings(std::string& text, const std::vector<std::string>& stop) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  text.erase(cut);
  return true;
}

/// The language model seen as a next-token scorer plus a text completer.
///
/// `score` returns natural-log probabilities normalized over the backend's
/// full vocabulary, one per candidate and in candidate order. Because the
/// normalization is over the whole vocabulary, a candidate's score does not
/// depend on which other candidates share the request.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::vector<double> score(std::span<const TokenId> context, std::span<const TokenId> candidates) = 0;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
  /// Token scored as "stop here" when a roster identifier is a strict
  /// token-prefix of another.
  virtual TokenId end_of_text() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mock

inline constexpr std::size_t kMockVocabSize = 256;
inline constexpr std::size_t kMockContextWindow = 4;
/// NUL doubles as end-of-text in the byte vocabulary; identifiers never
/// contain it.
inline constexpr TokenId kMockEndOfText = 0;

namespace detail {

inline double mock_raw(std::uint64_t seed, std::span<const TokenId> tail, TokenId candidate) {
  StableHasher h;
  h.u64(seed);
  for (auto t : tail) h.i32(t);
  h.i32(candidate);
  return open_unit_interval(h.digest());
}

}  // namespace detail

/// raw(c) = hash(seed, last four context tokens, c) mapped into (0, 1);
/// result = log(raw(c) / sum of raw over all 256 byte tokens).
/// Hash input layout: seed as 8 little-endian bytes, then each of the (up to
/// four) trailing context tokens and finally the candidate as 4
/// little-endian bytes.
inline std::vector<double> mock_score(std::span<const TokenId> context, std::span<const TokenId> candidates,
                                      std::uint64_t seed) {
  auto tail = context.size() > kMockContextWindow ? context.subspan(context.size() - kMockContextWindow) : context;
  double total = 0.0;
  for (std::size_t t = 0; t < kMockVocabSize; ++t) total += detail::mock_raw(seed, tail, static_cast<TokenId>(t));
  const double log_total = std::log(total);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (auto c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= kMockVocabSize) {
      throw Error(ErrorCode::InvalidArgument, "mock vocabulary has no token " + std::to_string(c));
    }
    out.push_back(std::log(detail::mock_raw(seed, tail, c)) - log_total);
  }
  return out;
}

/// In-process backend over ByteTokenizer and mock_score. Pure: safe to share
/// between threads.
///
/// Completions default to a deterministic echo of the prompt's candidate list
/// (the line after "### Candidates:"), ordered by mock score of each
/// identifier; prompts without candidates complete to "None". A custom
/// completion function can be supplied for scripted tests.
class MockBackend final : public ScoringBackend {
 public:
  using CompletionFn = std::function<std::string(const CompletionRequest&)>;

  explicit MockBackend(std::uint64_t seed = 7, CompletionFn completion = {})
      : seed_(seed), completion_(std::move(completion)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  const Tokenizer& tokenizer() const override { return tokenizer_; }

  std::vector<double> score(std::span<const TokenId> context, std::span<const TokenId> candidates) override {
    return mock_score(context, candidates, seed_);
  }

  TokenId end_of_text() const override { return kMockEndOfText; }

  CompletionResponse complete(const CompletionRequest& request) override {
    std::string text = completion_ ? completion_(request) : echo_candidates(request.prompt);
    CompletionResponse resp;
    apply_stop_strings(text, request.stop);
    if (text.size() > request.max_new_tokens) {
      text.resize(request.max_new_tokens);
      resp.truncated = true;
    }
    resp.text = std::move(text);
    return resp;
  }

 private:
  std::string echo_candidates(std::string_view prompt) const {
    static constexpr std::string_view marker = "### Candidates:\n";
    auto pos = prompt.rfind(marker);
    if (pos == std::string_view::npos) return " None";
    auto rest = prompt.substr(pos + marker.size());
    auto line = rest.substr(0, rest.find('\n'));
    std::vector<std::pair<double, std::string>> ranked;
    for (auto piece : text::split_any(line, ", ")) {
      auto ids = tokenizer_.tokenize(piece);
      double total = 0.0;
      TokenIds ctx;
      for (auto id : ids) {
        total += mock_score(ctx, std::span<const TokenId>(&id, 1), seed_)[0];
        ctx.push_back(id);
      }
      ranked.emplace_back(total, std::string(piece));
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> names;
    for (auto& [_, name] : ranked) names.push_back(std::move(name));
    return " " + text::join(names, ", ");
  }

  std::uint64_t seed_;
  CompletionFn completion_;
  ByteTokenizer tokenizer_;
};

}  // namespace triage
