#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "triage/backend.hpp"
#include "triage/detail/http.hpp"
#include "triage/error.hpp"
#include "triage/wire.hpp"

namespace triage {

struct HttpBackendOptions {
  std::string endpoint;                                 // e.g. http://127.0.0.1:8080
  int max_retries = 3;                                  // /v1/score only
  std::chrono::milliseconds initial_backoff{100};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::milliseconds timeout{30000};
  std::ptrdiff_t max_in_flight = 8;
  TokenId end_of_text = 0;                              // not part of the wire protocol
};

/// Client for a model server speaking the scoring wire protocol:
///   POST /v1/score     {"context":[int],"candidates":[int]} -> {"logprobs":[float]}
///   POST /v1/complete  {"prompt":str,"max_new_tokens":int,"stop":[str]} -> {"text":str}
///   GET  /v1/tokenize?s=...                                  -> {"ids":[int]}
///
/// /v1/score and /v1/tokenize are idempotent and retried on transport errors,
/// 429 and 5xx with exponential backoff. /v1/complete is retried only when
/// the connection could not be established at all.
class HttpBackend final : public ScoringBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options)
      : options_(std::move(options)),
        endpoint_(detail::parse_endpoint(options_.endpoint)),
        in_flight_(std::max<std::ptrdiff_t>(1, options_.max_in_flight)),
        tokenizer_(*this) {}

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  TokenId end_of_text() const override { return options_.end_of_text; }

  std::vector<double> score(std::span<const TokenId> context, std::span<const TokenId> candidates) override {
    const auto body = wire::encode(wire::ScoreRequest{TokenIds(context.begin(), context.end()),
                                                      TokenIds(candidates.begin(), candidates.end())});
    auto resp = send_idempotent([&](httplib::Client& c) {
      return c.Post(endpoint_.prefix + std::string(wire::kScorePath), body, std::string(wire::kContentType));
    }, wire::kScorePath);
    return wire::decode_logprobs(resp, candidates.size());
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    const auto payload = wire::encode(request);
    std::string response_body;
    for (int attempt = 0;; ++attempt) {
      Slot slot(in_flight_);
      auto client = make_client();
      auto res = client.Post(endpoint_.prefix + std::string(wire::kCompletePath), payload, std::string(wire::kContentType));
      if (!res) {
        if (res.error() == httplib::Error::Connection && attempt < options_.max_retries) {
          sleep_backoff(attempt);
          continue;
        }
        throw transport_error(res.error(), wire::kCompletePath);
      }
      if (res->status / 100 != 2) {
        throw Error(ErrorCode::HttpError, "/v1/complete returned " + std::to_string(res->status), res->status);
      }
      response_body = res->body;
      break;
    }
    auto out = wire::decode_completion(response_body);
    apply_stop_strings(out.text, request.stop);
    return out;
  }

  TokenIds remote_tokenize(std::string_view s) const {
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = cache_.find(std::string(s)); it != cache_.end()) return it->second;
    }
    httplib::Params params{{"s", std::string(s)}};
    auto resp = send_idempotent(
        [&](httplib::Client& c) { return c.Get(endpoint_.prefix + std::string(wire::kTokenizePath), params, httplib::Headers{}); },
        wire::kTokenizePath);
    auto ids = wire::decode_ids(resp);
    std::lock_guard lock(cache_mutex_);
    if (cache_.size() > 4096) cache_.clear();
    cache_.emplace(std::string(s), ids);
    return ids;
  }

 private:
  class RemoteTokenizer final : public Tokenizer {
   public:
    explicit RemoteTokenizer(const HttpBackend& owner) : owner_(owner) {}
    std::string name() const override { return "http:" + owner_.options_.endpoint; }
    TokenIds tokenize(std::string_view s) const override { return owner_.remote_tokenize(s); }
    std::string detokenize(std::span<const TokenId>) const override {
      throw Error(ErrorCode::ProtocolError, "the scoring protocol does not expose detokenization");
    }

   private:
    const HttpBackend& owner_;
  };

  struct Slot {
    explicit Slot(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~Slot() { sem.release(); }
    std::counting_semaphore<>& sem;
  };

  httplib::Client make_client() const {
    httplib::Client client(endpoint_.origin);
    detail::configure(client, options_.timeout);
    return client;
  }

  void sleep_backoff(int attempt) const {
    auto delay = std::chrono::duration<double, std::milli>(options_.initial_backoff) *
                 std::pow(options_.backoff_multiplier, attempt);
    auto capped = std::min(std::chrono::duration_cast<std::chrono::milliseconds>(delay), options_.max_backoff);
    std::this_thread::sleep_for(capped);
  }

  static bool retryable_status(int status) { return status == 429 || status == 500 || status == 502 || status == 503 || status == 504; }

  static Error transport_error(httplib::Error err, std::string_view what) {
    if (detail::is_transport_timeout(err)) return Error(ErrorCode::Timeout, std::string(what) + " timed out");
    return Error(ErrorCode::HttpError, std::string(what) + ": " + httplib::to_string(err), 0);
  }

  template <typename Send>
  std::string send_idempotent(Send&& send, std::string_view what) const {
    for (int attempt = 0;; ++attempt) {
      const bool last = attempt >= options_.max_retries;
      httplib::Result res = [&] {
        Slot slot(in_flight_);
        auto client = make_client();
        return send(client);
      }();
      if (!res) {
        if (last) throw transport_error(res.error(), what);
      } else if (res->status / 100 == 2) {
        return res->body;
      } else if (last || !retryable_status(res->status)) {
        throw Error(ErrorCode::HttpError, std::string(what) + " returned " + std::to_string(res->status), res->status);
      }
      sleep_backoff(attempt);
    }
  }

  HttpBackendOptions options_;
  detail::Endpoint endpoint_;
  mutable std::counting_semaphore<> in_flight_;
  RemoteTokenizer tokenizer_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, TokenIds> cache_;
};

}  // namespace triage
