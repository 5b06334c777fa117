#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>

#include "triage/mock_server.hpp"
#include "triage/pipeline.hpp"

namespace {

namespace pl = triage::pipeline;
using triage::Error;
using triage::ErrorCode;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_error(std::string_view code, std::string_view message, int status = 0) {
  nlohmann::json j{{"error", code}, {"message", message}};
  if (status != 0) j["status"] = status;
  std::cerr << j.dump() << "\n";
}

int exit_code_for(ErrorCode code) { return code == ErrorCode::InvalidWindow ? kExitUsage : kExitRuntime; }

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

triage::BackendServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bug triage toolchain: ingest, shape, roster, predict, eval, report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(triage::kToolVersion));

  // ingest
  pl::IngestOptions ingest;
  std::string ingest_format = "csv";
  std::string ingest_window;
  std::optional<std::uint64_t> ingest_seed;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load an export, filter, split and write the canonical corpus");
  ingest_cmd->add_option("--input", ingest.input, "Export file or tracker base URL")->required();
  ingest_cmd->add_option("--format", ingest_format, "csv | json | jsonl")->check(CLI::IsMember({"csv", "json", "jsonl"}));
  ingest_cmd->add_option("--query", ingest.query, "Tracker query string when --input is a URL");
  ingest_cmd->add_option("--page-size", ingest.page_size, "Tracker page size")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--window", ingest_window, "<start>..<end>, end exclusive");
  ingest_cmd->add_option("--min-resolved", ingest.min_resolved, "Drop developers with fewer resolved issues");
  ingest_cmd->add_flag("--fixed-point", ingest.fixed_point, "Repeat the activity filter until nothing changes");
  ingest_cmd->add_option("--seed", ingest_seed, "Split seed (default: TRIAGE_SEED or 3407)");
  ingest_cmd->add_option("--project", ingest.project, "Source project for every row");
  ingest_cmd->add_option("--out", ingest.out_dir, "Output directory")->required();

  // shape
  pl::ShapeOptions shape;
  std::string shape_mode = "top1";
  std::string shape_template_dir;
  std::string shape_split;
  std::string shape_roster;
  auto* shape_cmd = app.add_subcommand("shape", "Render training conversations or inference prompts");
  shape_cmd->add_option("--corpus", shape.corpus_dir, "Directory written by ingest")->required();
  shape_cmd->add_option("--mode", shape_mode, "sft | top1 | topk")->check(CLI::IsMember({"sft", "top1", "topk"}));
  shape_cmd->add_option("--split", shape_split, "train | validation | test (default: train for sft, test otherwise)");
  shape_cmd->add_option("--k", shape.k, "K stated in top-K prompts")->check(CLI::PositiveNumber);
  shape_cmd->add_option("--budget", shape.budget, "Token budget per prompt")->check(CLI::PositiveNumber);
  shape_cmd->add_option("--roster", shape_roster, "Roster file (topk)");
  shape_cmd->add_option("--template-dir", shape_template_dir, "Directory with sft.txt, top1.txt, topk.txt");
  shape_cmd->add_option("--out", shape.out, "Output JSONL")->required();

  // roster build
  pl::RosterOptions roster;
  std::string roster_official;
  auto* roster_cmd = app.add_subcommand("roster", "Roster operations");
  roster_cmd->require_subcommand(1);
  auto* roster_build = roster_cmd->add_subcommand("build", "Build the candidate roster from training labels");
  roster_build->add_option("--train", roster.train, "train.jsonl")->required();
  roster_build->add_option("--official", roster_official, "Official developer list to union with");
  roster_build->add_option("--out", roster.out, "Roster file")->required();

  // predict
  pl::PredictOptions predict;
  std::string predict_mode = "constrained";
  std::string predict_roster;
  auto* predict_cmd = app.add_subcommand("predict", "Rank developers for each prompt");
  predict_cmd->add_option("--prompts", predict.prompts, "Prompt JSONL from shape")->required();
  predict_cmd->add_option("--roster", predict_roster, "Roster file");
  predict_cmd->add_option("--backend", predict.backend, "mock | http")->check(CLI::IsMember({"mock", "http"}));
  predict_cmd->add_option("--endpoint", predict.endpoint, "Scoring server URL (default: TRIAGE_ENDPOINT)");
  predict_cmd->add_option("--mode", predict_mode, "constrained | free | free_postprocessed")->check(CLI::IsMember({"constrained", "free", "free_postprocessed"}));
  predict_cmd->add_option("--k", predict.k, "Ranked list length")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--beam", predict.beam, "Beam width (default 2k)");
  predict_cmd->add_option("--mock-seed", predict.mock_seed, "Mock backend seed");
  predict_cmd->add_option("--max-new-tokens", predict.max_new_tokens, "Free-mode generation cap")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--workers", predict.workers, "Concurrent issues")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--out", predict.out, "Predictions JSONL")->required();

  // eval
  pl::EvalOptions eval;
  std::string eval_roster;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold assignees");
  eval_cmd->add_option("--preds", eval.preds, "Predictions JSONL")->required();
  eval_cmd->add_option("--gold", eval.gold, "Corpus JSONL with gold assignees")->required();
  eval_cmd->add_option("--roster", eval_roster, "Roster, to count gold outside it");
  eval_cmd->add_option("--project", eval.project, "Project label (default: from the gold corpus)");
  eval_cmd->add_option("--window", eval.window, "Window label");
  eval_cmd->add_option("--k-max", eval.k_max, "Largest K")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "metrics.json (a .csv is written beside it)")->required();

  // report
  std::vector<std::string> report_metrics;
  std::string report_baseline;
  std::vector<std::string> report_compare;
  std::string report_csv;
  auto* report_cmd = app.add_subcommand("report", "Markdown tables from metrics files");
  report_cmd->add_option("--metrics", report_metrics, "metrics.json (repeatable)")->required();
  auto* baseline_opt = report_cmd->add_option("--baseline", report_baseline, "Baseline vectors, e.g. data/baselines/ncgbt.json");
  auto* compare_opt = report_cmd->add_option("--compare", report_compare, "Second-window metrics, paired with --metrics");
  baseline_opt->excludes(compare_opt);
  report_cmd->add_option("--csv", report_csv, "Also write the table as CSV");

  // mock-server
  std::string server_host = "127.0.0.1";
  int server_port = 8080;
  std::uint64_t server_seed = 7;
  auto* server_cmd = app.add_subcommand("mock-server", "Serve the mock backend over the scoring protocol");
  server_cmd->add_option("--host", server_host, "Bind address");
  server_cmd->add_option("--port", server_port, "Port (0 picks one)");
  server_cmd->add_option("--seed", server_seed, "Mock seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return kExitUsage;
  }

  try {
    if (*ingest_cmd) {
      ingest.format = triage::parse_export_format(ingest_format);
      if (!ingest_window.empty()) ingest.window = ingest_window;
      ingest.seed = ingest_seed ? *ingest_seed : pl::seed_from_env(3407);
      auto r = pl::run_ingest(ingest);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      print_json({{"loaded", r.loaded},
                  {"rejected", r.rejected},
                  {"after_window", r.after_window},
                  {"after_filter", r.after_filter},
                  {"train", r.splits.train.size()},
                  {"validation", r.splits.validation.size()},
                  {"test", r.splits.test.size()},
                  {"density", r.stats.density_display()}});
    } else if (*shape_cmd) {
      shape.mode = triage::parse_prompt_kind(shape_mode);
      if (shape.mode == triage::PromptKind::topk && shape_roster.empty()) throw UsageError("--mode topk needs --roster");
      if (!shape_roster.empty()) shape.roster = shape_roster;
      if (!shape_split.empty()) shape.split_name = shape_split;
      if (!shape_template_dir.empty()) shape.template_dir = shape_template_dir;
      triage::ByteTokenizer tok;
      auto r = pl::run_shape(shape, tok);
      if (r.skipped) std::cerr << "warning: " << r.skipped << " issue(s) skipped: scaffold exceeds the budget\n";
      print_json({{"written", r.written}, {"skipped", r.skipped}, {"truncated", r.truncated}});
    } else if (*roster_cmd) {
      if (!roster_official.empty()) roster.official = roster_official;
      auto r = pl::run_roster_build(roster);
      print_json({{"members", r.size()}, {"source", triage::to_string(r.source())}});
    } else if (*predict_cmd) {
      predict.mode = triage::parse_decode_mode(predict_mode);
      if (predict_roster.empty()) throw UsageError("predict needs --roster");
      predict.roster = predict_roster;
      auto r = pl::run_predict(predict);
      print_json({{"predictions", r.predictions.size()}, {"warnings", r.warnings}});
    } else if (*eval_cmd) {
      if (!eval_roster.empty()) eval.roster = eval_roster;
      auto r = pl::run_eval(eval);
      nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
      for (std::size_t k = 1; k <= r.k_max(); ++k) ratios.push_back(r.ratio_display(k));
      print_json({{"project", r.project}, {"n_pred", r.n_pred}, {"top1", r.top1_display()}, {"hit_at_k", ratios}});
    } else if (*report_cmd) {
      std::string markdown, csv;
      if (!report_baseline.empty()) {
        auto baseline = triage::read_baseline(report_baseline);
        for (const auto& path : report_metrics) {
          auto m = triage::read_metrics(path);
          auto table = triage::compare_report(m, baseline.for_project(m.project), baseline.name);
          markdown += triage::comparison_to_markdown(table);
          auto part = triage::comparison_to_csv(table);
          csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
        }
      } else if (!report_compare.empty()) {
        if (report_compare.size() != report_metrics.size()) {
          throw UsageError("--compare must be given once per --metrics");
        }
        std::vector<triage::WindowRow> rows;
        for (std::size_t i = 0; i < report_metrics.size(); ++i) {
          rows.push_back(triage::window_report(triage::read_metrics(report_metrics[i]), triage::read_metrics(report_compare[i])));
        }
        markdown = triage::window_table_to_markdown(rows);
        csv = triage::window_table_to_csv(rows);
      } else {
        for (const auto& path : report_metrics) {
          auto m = triage::read_metrics(path);
          markdown += "| Project | Window | n | Top-1 |";
          std::string rule = "| --- | --- | --- | --- |", row = "| " + m.project + " | " + m.window_label + " | " +
                                                                std::to_string(m.n_pred) + " | " + m.top1_display() + " |";
          for (std::size_t k = 1; k <= m.k_max(); ++k) {
            markdown += " Hit@" + std::to_string(k) + " |";
            rule += " --- |";
            row += " " + m.ratio_display(k) + " |";
          }
          markdown += "\n" + rule + "\n" + row + "\n";
          auto part = triage::metrics_to_csv(m);
          csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
        }
      }
      std::cout << markdown;
      if (!report_csv.empty()) triage::detail::write_file(report_csv, csv);
    } else if (*server_cmd) {
      triage::MockBackend backend(server_seed);
      triage::BackendServer server(backend);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving mock backend (seed " << server_seed << ") on " << server_host << ":" << server_port << "\n";
      server.run(server_host, server_port);
      g_server = nullptr;
    }
  } catch (const UsageError& e) {
    print_error("UsageError", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    print_error(triage::to_string(e.code()), e.detail(), e.status());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
