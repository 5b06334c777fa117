#pragma once

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "triage/backend.hpp"
#include "triage/error.hpp"

/// JSON bodies of the scoring wire protocol, shared by the HTTP client and
/// the server so both sides agree byte for byte.
namespace triage::wire {

inline constexpr std::string_view kScorePath = "/v1/score";
inline constexpr std::string_view kCompletePath = "/v1/complete";
inline constexpr std::string_view kTokenizePath = "/v1/tokenize";
inline constexpr std::string_view kContentType = "application/json";

struct ScoreRequest {
  TokenIds context;
  TokenIds candidates;
};

inline std::string encode(const ScoreRequest& r) {
  nlohmann::ordered_json j;
  j["context"] = r.context;
  j["candidates"] = r.candidates;
  return j.dump();
}

inline std::string encode(const CompletionRequest& r) {
  nlohmann::ordered_json j;
  j["prompt"] = r.prompt;
  j["max_new_tokens"] = r.max_new_tokens;
  j["stop"] = r.stop;
  return j.dump();
}

inline std::string encode_logprobs(const std::vector<double>& logprobs) {
  nlohmann::ordered_json j;
  j["logprobs"] = logprobs;
  return j.dump();
}

inline std::string encode_text(const std::string& text) {
  nlohmann::ordered_json j;
  j["text"] = text;
  return j.dump();
}

inline std::string encode_ids(const TokenIds& ids) {
  nlohmann::ordered_json j;
  j["ids"] = ids;
  return j.dump();
}

inline std::string encode_error(std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = message;
  return j.dump();
}

namespace detail {

inline nlohmann::json parse_object(std::string_view body, std::string_view what) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorCode::ProtocolError, std::string(what) + ": malformed JSON body");
  }
  if (!j.is_object()) throw Error(ErrorCode::ProtocolError, std::string(what) + ": body is not a JSON object");
  return j;
}

inline TokenIds int_array(const nlohmann::json& j, const char* key, std::string_view what) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw Error(ErrorCode::ProtocolError, std::string(what) + ": missing '" + key + "' array");
  }
  TokenIds out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_integer()) throw Error(ErrorCode::ProtocolError, std::string(what) + ": non-integer in '" + key + "'");
    out.push_back(v.get<TokenId>());
  }
  return out;
}

}  // namespace detail

inline ScoreRequest decode_score_request(std::string_view body) {
  auto j = detail::parse_object(body, kScorePath);
  return {detail::int_array(j, "context", kScorePath), detail::int_array(j, "candidates", kScorePath)};
}

inline CompletionRequest decode_complete_request(std::string_view body) {
  auto j = detail::parse_object(body, kCompletePath);
  auto prompt = j.find("prompt");
  auto max_new = j.find("max_new_tokens");
  auto stop = j.find("stop");
  if (prompt == j.end() || !prompt->is_string()) throw Error(ErrorCode::ProtocolError, "/v1/complete: missing 'prompt' string");
  if (max_new == j.end() || !max_new->is_number_unsigned()) {
    throw Error(ErrorCode::ProtocolError, "/v1/complete: missing non-negative 'max_new_tokens'");
  }
  CompletionRequest r{prompt->get<std::string>(), max_new->get<std::size_t>(), {}};
  if (stop != j.end()) {
    if (!stop->is_array()) throw Error(ErrorCode::ProtocolError, "/v1/complete: 'stop' is not an array");
    for (const auto& s : *stop) {
      if (!s.is_string()) throw Error(ErrorCode::ProtocolError, "/v1/complete: non-string stop entry");
      r.stop.push_back(s.get<std::string>());
    }
  }
  return r;
}

/// Validates one logprob per candidate, each finite and not above 0.
inline std::vector<double> decode_logprobs(std::string_view body, std::size_t expected) {
  auto j = detail::parse_object(body, kScorePath);
  auto it = j.find("logprobs");
  if (it == j.end() || !it->is_array()) throw Error(ErrorCode::ProtocolError, "/v1/score: missing 'logprobs' array");
  if (it->size() != expected) {
    throw Error(ErrorCode::ProtocolError,
                "/v1/score: " + std::to_string(it->size()) + " logprobs for " + std::to_string(expected) + " candidates");
  }
  std::vector<double> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number()) throw Error(ErrorCode::ProtocolError, "/v1/score: non-numeric logprob");
    double lp = v.get<double>();
    if (!std::isfinite(lp) || lp > 1e-9) throw Error(ErrorCode::ProtocolError, "/v1/score: logprob out of range");
    out.push_back(lp);
  }
  return out;
}

/// `truncated` is set when the server reports finish_reason "length".
inline CompletionResponse decode_completion(std::string_view body) {
  auto j = detail::parse_object(body, kCompletePath);
  auto it = j.find("text");
  if (it == j.end() || !it->is_string()) throw Error(ErrorCode::ProtocolError, "/v1/complete: missing 'text' string");
  CompletionResponse out;
  out.text = it->get<std::string>();
  if (auto fr = j.find("finish_reason"); fr != j.end() && fr->is_string()) out.truncated = *fr == "length";
  return out;
}

inline TokenIds decode_ids(std::string_view body) {
  auto j = detail::parse_object(body, kTokenizePath);
  return detail::int_array(j, "ids", kTokenizePath);
}

}  // namespace triage::wire
