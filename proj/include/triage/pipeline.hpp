#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "triage/backend.hpp"
#include "triage/corpus.hpp"
#include "triage/decoder.hpp"
#include "triage/fetch.hpp"
#include "triage/http_backend.hpp"
#include "triage/manifest.hpp"
#include "triage/metrics.hpp"
#include "triage/prompt.hpp"
#include "triage/roster.hpp"

// Stage functions behind the `triage` subcommands. Each reads its inputs from
// files, writes its outputs and records a manifest next to them.

namespace triage::pipeline {

namespace fs = std::filesystem;

/// Seed from TRIAGE_SEED when set, else `fallback`.
inline std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("TRIAGE_SEED");
  if (!env || !*env) return fallback;
  try {
    std::size_t used = 0;
    auto v = std::stoull(env, &used);
    if (used != std::string_view(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("TRIAGE_SEED is not an unsigned integer: '") + env + "'");
  }
}

inline std::string endpoint_from_env(const std::string& explicit_endpoint) {
  if (!explicit_endpoint.empty()) return explicit_endpoint;
  const char* env = std::getenv("TRIAGE_ENDPOINT");
  return env ? env : "";
}

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. The first
/// exception thrown is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::string input;  // file path or http(s) URL
  ExportFormat format = ExportFormat::csv;
  std::string query;  // tracker query when input is a URL
  std::size_t page_size = 100;
  std::optional<std::string> window;
  std::size_t min_resolved = 10;
  bool fixed_point = false;
  std::uint64_t seed = 3407;
  std::string project;
  fs::path out_dir;
};

struct IngestResult {
  std::size_t loaded = 0;
  std::size_t rejected = 0;
  std::size_t after_window = 0;
  std::size_t after_filter = 0;
  SplitResult splits;
  DatasetStats stats;
  std::vector<std::string> warnings;
};

inline bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

inline IngestResult run_ingest(const IngestOptions& opt) {
  std::optional<Window> window;
  if (opt.window) window = parse_window(*opt.window);

  RunManifest manifest;
  manifest.stage = "ingest";
  IngestResult result;
  std::vector<RawIssue> raws;
  if (is_url(opt.input)) {
    auto fetched = fetch_remote(opt.input, opt.query, opt.page_size);
    raws = std::move(fetched.issues);
    result.warnings = std::move(fetched.warnings);
    manifest.inputs[opt.input] = "remote:" + opt.query;
  } else {
    raws = load_export(opt.input, opt.format);
    manifest.add_input(opt.input);
  }
  result.loaded = raws.size();

  auto normalized = normalize_issues(raws, opt.project);
  result.rejected = normalized.rejected_bug_ids.size();
  for (const auto& id : normalized.rejected_bug_ids) result.warnings.push_back("issue " + id + " has neither title nor body; dropped");
  auto issues = std::move(normalized.issues);
  if (window) issues = window_filter(issues, window->start, window->end);
  result.after_window = issues.size();
  issues = filter_low_activity(std::move(issues), opt.min_resolved, opt.fixed_point);
  result.after_filter = issues.size();
  SplitConfig cfg;
  cfg.seed = opt.seed;
  result.splits = split(issues, cfg);
  result.stats = compute_stats(issues);

  fs::create_directories(opt.out_dir);
  auto out = [&](const char* name) { return (opt.out_dir / name).string(); };
  write_corpus(out("corpus.jsonl"), issues);
  write_corpus(out("train.jsonl"), result.splits.train);
  write_corpus(out("validation.jsonl"), result.splits.validation);
  write_corpus(out("test.jsonl"), result.splits.test);
  auto stats = stats_to_json(result.stats);
  stats["train"] = result.splits.train.size();
  stats["validation"] = result.splits.validation.size();
  stats["test"] = result.splits.test.size();
  detail::write_file(out("stats.json"), stats.dump(2) + "\n");

  manifest.config = {{"input", opt.input},
                     {"format", opt.format == ExportFormat::csv ? "csv" : opt.format == ExportFormat::json ? "json" : "jsonl"},
                     {"window", opt.window ? nlohmann::ordered_json(*opt.window) : nlohmann::ordered_json(nullptr)},
                     {"min_resolved", opt.min_resolved},
                     {"fixed_point", opt.fixed_point},
                     {"project", opt.project}};
  manifest.seed = opt.seed;
  manifest.outputs = {"corpus.jsonl", "train.jsonl", "validation.jsonl", "test.jsonl", "stats.json"};
  manifest.summary = {{"loaded", result.loaded},         {"rejected", result.rejected},
                      {"after_window", result.after_window}, {"after_filter", result.after_filter},
                      {"warnings", result.warnings}};
  manifest.write(opt.out_dir);
  return result;
}

// ---------------------------------------------------------------------------
// roster build

struct RosterOptions {
  std::string train;
  std::optional<std::string> official;
  fs::path out;
};

inline Roster run_roster_build(const RosterOptions& opt) {
  auto train = read_corpus(opt.train);
  std::optional<std::vector<DeveloperId>> official;
  if (opt.official) official = parse_roster_text(detail::read_file(*opt.official));
  auto roster = build_roster(train, official);
  auto dir = opt.out.has_parent_path() ? opt.out.parent_path() : fs::path(".");
  fs::create_directories(dir);
  detail::write_file(opt.out.string(), roster_to_text(roster));
  RunManifest manifest;
  manifest.stage = "roster";
  manifest.add_input(opt.train);
  if (opt.official) manifest.add_input(*opt.official);
  manifest.config = {{"train", opt.train}, {"official", opt.official ? *opt.official : ""}};
  manifest.outputs = {opt.out.filename().string()};
  manifest.summary = {{"members", roster.size()}, {"source", to_string(roster.source())}};
  manifest.write(dir);
  return roster;
}

// ---------------------------------------------------------------------------
// shape

struct ShapeOptions {
  fs::path corpus_dir;
  std::optional<std::string> split_name;  // default: train for sft, test otherwise
  PromptKind mode = PromptKind::top1;
  std::size_t k = 10;
  std::size_t budget = kDefaultBudget;
  std::optional<std::string> roster;  // required for topk
  std::optional<fs::path> template_dir;
  fs::path out;
};

struct ShapeResult {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t truncated = 0;
};

inline ShapeResult run_shape(const ShapeOptions& opt, const Tokenizer& tok) {
  auto split_name = opt.split_name.value_or(opt.mode == PromptKind::sft ? "train" : "test");
  auto corpus_path = (opt.corpus_dir / (split_name + ".jsonl")).string();
  auto issues = read_corpus(corpus_path);
  auto templates = opt.template_dir ? TemplateSet::load(*opt.template_dir) : TemplateSet::builtin();
  std::optional<Roster> roster;
  if (opt.mode == PromptKind::topk) {
    if (!opt.roster) throw Error(ErrorCode::InvalidArgument, "topk shaping needs --roster");
    roster = read_roster(*opt.roster);
  }

  ShapeResult result;
  std::string out;
  std::vector<ConversationRecord> conversations;
  for (const auto& issue : issues) {
    try {
      switch (opt.mode) {
        case PromptKind::sft: {
          auto bundle = render_sft(issue, issue.assignee, tok, opt.budget, templates);
          result.truncated += bundle.truncated;
          conversations.push_back(to_conversation(issue, tok, opt.budget, templates));
          break;
        }
        case PromptKind::top1: {
          auto bundle = render_top1(issue, tok, opt.budget, templates);
          result.truncated += bundle.truncated;
          out += prompt_to_json_line(bundle) + "\n";
          break;
        }
        case PromptKind::topk: {
          auto bundle = render_topk(issue, roster->members(), tok, opt.k, opt.budget, templates);
          result.truncated += bundle.truncated;
          out += prompt_to_json_line(bundle) + "\n";
          break;
        }
      }
      ++result.written;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BudgetTooSmall) throw;
      ++result.skipped;
    }
  }
  auto dir = opt.out.has_parent_path() ? opt.out.parent_path() : fs::path(".");
  fs::create_directories(dir);
  if (opt.mode == PromptKind::sft) {
    emit_jsonl(conversations, opt.out.string());
  } else {
    detail::write_file(opt.out.string(), out);
  }

  RunManifest manifest;
  manifest.stage = "shape-" + std::string(to_string(opt.mode));
  manifest.add_input(corpus_path);
  if (opt.roster) manifest.add_input(*opt.roster);
  manifest.config = {{"corpus", opt.corpus_dir.string()},
                     {"split", split_name},
                     {"mode", to_string(opt.mode)},
                     {"k", opt.k},
                     {"budget", opt.budget},
                     {"tokenizer", tok.name()},
                     {"template_version", opt.template_dir ? opt.template_dir->string() : std::string(TemplateSet::kVersion)}};
  manifest.outputs = {opt.out.filename().string()};
  manifest.summary = {{"written", result.written}, {"skipped_budget", result.skipped}, {"truncated", result.truncated}};
  manifest.write(dir);
  return result;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string prompts;
  std::optional<std::string> roster;
  std::string backend = "mock";  // mock | http
  std::string endpoint;
  DecodeMode mode = DecodeMode::constrained;
  std::size_t k = 10;
  std::size_t beam = 0;  // 0 means 2k
  std::uint64_t mock_seed = 7;
  std::size_t max_new_tokens = 256;
  std::size_t workers = 8;
  fs::path out;
};

struct PredictResult {
  std::vector<RankedPrediction> predictions;
  std::size_t warnings = 0;
};

inline std::unique_ptr<ScoringBackend> make_backend(const PredictOptions& opt) {
  if (opt.backend == "mock") return std::make_unique<MockBackend>(opt.mock_seed);
  if (opt.backend == "http") {
    auto endpoint = endpoint_from_env(opt.endpoint);
    if (endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "http backend needs --endpoint or TRIAGE_ENDPOINT");
    HttpBackendOptions ho;
    ho.endpoint = endpoint;
    ho.max_in_flight = static_cast<std::ptrdiff_t>(opt.workers);
    return std::make_unique<HttpBackend>(ho);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown backend '" + opt.backend + "'");
}

/// Predictions for every prompt, in prompt-file order regardless of which
/// worker finishes first.
inline std::vector<RankedPrediction> predict_all(const std::vector<PromptBundle>& prompts, const Roster& roster,
                                                 ScoringBackend& backend, DecodeMode mode, const BeamConfig& cfg,
                                                 std::size_t max_new_tokens, std::size_t workers) {
  std::optional<TokenTrie> trie;
  if (mode == DecodeMode::constrained) trie = compile_trie(roster, backend.tokenizer(), backend.end_of_text());
  std::vector<RankedPrediction> out(prompts.size());
  parallel_for(prompts.size(), workers, [&](std::size_t i) {
    const auto& prompt = prompts[i];
    if (mode == DecodeMode::constrained) {
      out[i] = rank_constrained(prompt, *trie, backend, cfg);
      return;
    }
    auto raw = free_decode(prompt, backend, max_new_tokens);
    out[i] = prompt.kind == PromptKind::topk ? postprocess_topk(raw.text, roster, cfg.k, prompt.issue_id)
                                             : top1_prediction(prompt, raw.text, roster, cfg.k);
    if (raw.truncated) out[i].warnings.push_back("completion hit max_new_tokens");
  });
  return out;
}

inline PredictResult run_predict(const PredictOptions& opt) {
  if (!opt.roster) throw Error(ErrorCode::InvalidArgument, "predict needs --roster");
  auto prompts = parse_prompts(detail::read_file(opt.prompts));
  auto roster = read_roster(*opt.roster);
  auto backend = make_backend(opt);
  BeamConfig cfg{opt.k, opt.beam};
  PredictResult result;
  result.predictions = predict_all(prompts, roster, *backend, opt.mode, cfg, opt.max_new_tokens, opt.workers);
  for (const auto& p : result.predictions) result.warnings += p.warnings.size();

  auto dir = opt.out.has_parent_path() ? opt.out.parent_path() : fs::path(".");
  fs::create_directories(dir);
  detail::write_file(opt.out.string(), predictions_to_jsonl(result.predictions));

  RunManifest manifest;
  manifest.stage = "predict";
  manifest.add_input(opt.prompts);
  manifest.add_input(*opt.roster);
  manifest.config = {{"backend", opt.backend},
                     {"endpoint", opt.backend == "http" ? endpoint_from_env(opt.endpoint) : ""},
                     {"mode", to_string(opt.mode)},
                     {"k", opt.k},
                     {"beam", cfg.effective_beam()},
                     {"max_new_tokens", opt.max_new_tokens},
                     {"workers", opt.workers}};
  if (opt.backend == "mock") manifest.seed = opt.mock_seed;
  manifest.outputs = {opt.out.filename().string()};
  manifest.summary = {{"predictions", result.predictions.size()}, {"warnings", result.warnings}};
  manifest.write(dir);
  return result;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string preds;
  std::string gold;  // canonical corpus JSONL
  std::optional<std::string> roster;
  std::string project;  // default: source_project of the gold corpus
  std::string window = "all";
  std::size_t k_max = 10;
  fs::path out;
};

inline MetricsReport run_eval(const EvalOptions& opt) {
  auto preds = parse_predictions(detail::read_file(opt.preds));
  auto gold_issues = read_corpus(opt.gold);
  auto gold = gold_from_corpus(gold_issues);
  std::optional<Roster> roster;
  if (opt.roster) roster = read_roster(*opt.roster);
  auto report = hit_at_k(preds, gold, opt.k_max, roster ? &*roster : nullptr);
  report.project = opt.project;
  if (report.project.empty() && !gold_issues.empty()) report.project = gold_issues.front().source_project.name();
  report.window_label = opt.window;

  auto dir = opt.out.has_parent_path() ? opt.out.parent_path() : fs::path(".");
  fs::create_directories(dir);
  detail::write_file(opt.out.string(), metrics_to_json(report).dump(2) + "\n");
  auto csv = opt.out;
  csv.replace_extension(".csv");
  detail::write_file(csv.string(), metrics_to_csv(report));

  RunManifest manifest;
  manifest.stage = "eval";
  manifest.add_input(opt.preds);
  manifest.add_input(opt.gold);
  if (opt.roster) manifest.add_input(*opt.roster);
  manifest.config = {{"project", report.project}, {"window", opt.window}, {"k_max", opt.k_max}};
  manifest.outputs = {opt.out.filename().string(), csv.filename().string()};
  manifest.summary = {{"n_pred", report.n_pred}, {"top1", report.top1_display()}};
  manifest.write(dir);
  return report;
}

}  // namespace triage::pipeline
