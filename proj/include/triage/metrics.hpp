#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <unordered_map>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/decoder.hpp"
#include "triage/error.hpp"
#include "triage/identifier.hpp"
#include "triage/roster.hpp"

namespace triage {

using GoldLabels = std::unordered_map<std::string, DeveloperId>;

struct MetricsReport {
  std::string project;
  std::string window_label;
  std::string mode;
  std::uint64_t n_pred = 0;
  std::vector<std::uint64_t> hits;  // hits[K-1] = N_hit at K
  std::uint64_t top1_hits = 0;
  std::uint64_t misses_gold_not_in_roster = 0;

  std::size_t k_max() const noexcept { return hits.size(); }

  double ratio(std::size_t k) const {
    check_k(k);
    return static_cast<double>(hits[k - 1]) / static_cast<double>(n_pred);
  }
  /// Half-up, 3 decimals: "0.156".
  std::string ratio_display(std::size_t k) const {
    check_k(k);
    return ratio_half_up(hits[k - 1], n_pred, 3);
  }
  /// Display ratio as an exact count of thousandths.
  std::int64_t ratio_milli(std::size_t k) const {
    check_k(k);
    return static_cast<std::int64_t>((hits[k - 1] * 2000 + n_pred) / (2 * n_pred));
  }
  double top1_accuracy() const { return static_cast<double>(top1_hits) / static_cast<double>(n_pred); }
  std::string top1_display() const { return ratio_half_up(top1_hits, n_pred, 3); }

 private:
  void check_k(std::size_t k) const {
    if (k == 0 || k > hits.size()) throw Error(ErrorCode::InvalidArgument, "K=" + std::to_string(k) + " outside 1.." + std::to_string(hits.size()));
    if (n_pred == 0) throw Error(ErrorCode::EmptyCorpus, "report has no predictions");
  }
};

namespace detail {

inline const DeveloperId& gold_for(const GoldLabels& gold, const RankedPrediction& p) {
  auto it = gold.find(p.issue_id);
  if (it == gold.end()) throw Error(ErrorCode::MissingGold, "no gold label for issue '" + p.issue_id + "'");
  return it->second;
}

inline bool top1_hit(const RankedPrediction& p, const DeveloperId& gold) {
  return !p.entries.empty() && p.entries.front().id && *p.entries.front().id == gold;
}

}  // namespace detail

/// Exact match of rank 1 against gold; padding at rank 1 is a miss.
inline double top1_accuracy(const std::vector<RankedPrediction>& preds, const GoldLabels& gold) {
  if (preds.empty()) throw Error(ErrorCode::EmptyCorpus, "no predictions");
  std::uint64_t hits = 0;
  for (const auto& p : preds) hits += detail::top1_hit(p, detail::gold_for(gold, p));
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Hit@K for K = 1..k_max. Issues whose gold label is outside `roster` stay in
/// the denominator as guaranteed misses and are tallied separately.
inline MetricsReport hit_at_k(const std::vector<RankedPrediction>& preds, const GoldLabels& gold, std::size_t k_max = 10,
                              const Roster* roster = nullptr) {
  if (preds.empty()) throw Error(ErrorCode::EmptyCorpus, "no predictions");
  if (k_max == 0) throw Error(ErrorCode::InvalidArgument, "k_max must be at least 1");
  MetricsReport r;
  r.n_pred = preds.size();
  r.hits.assign(k_max, 0);
  for (const auto& p : preds) {
    const auto& g = detail::gold_for(gold, p);
    if (p.entries.size() < k_max) {
      throw Error(ErrorCode::InvalidArgument, "prediction for '" + p.issue_id + "' has " + std::to_string(p.entries.size()) +
                                                  " entries, fewer than k_max=" + std::to_string(k_max));
    }
    if (roster && !roster->contains(g)) ++r.misses_gold_not_in_roster;
    r.top1_hits += detail::top1_hit(p, g);
    std::size_t first_hit = k_max;
    for (std::size_t i = 0; i < k_max; ++i) {
      if (p.entries[i].id && *p.entries[i].id == g) {
        first_hit = i;
        break;
      }
    }
    for (std::size_t i = first_hit; i < k_max; ++i) ++r.hits[i];
  }
  for (std::size_t i = 1; i < k_max; ++i) {
    if (r.hits[i] < r.hits[i - 1]) throw Error(ErrorCode::InvalidArgument, "hit counts are not monotone");
  }
  if (!preds.empty()) r.mode = std::string(to_string(preds.front().mode));
  return r;
}

/// Report with given counts, e.g. to reproduce published tables.
inline MetricsReport report_from_counts(std::string project, std::string window, std::uint64_t n_pred,
                                        std::vector<std::uint64_t> hits, std::string mode = "constrained") {
  if (n_pred == 0 || hits.empty()) throw Error(ErrorCode::InvalidArgument, "report needs n_pred > 0 and at least one K");
  for (std::size_t i = 1; i < hits.size(); ++i) {
    if (hits[i] < hits[i - 1]) throw Error(ErrorCode::InvalidArgument, "hit counts are not monotone");
  }
  if (hits.back() > n_pred) throw Error(ErrorCode::InvalidArgument, "more hits than predictions");
  MetricsReport r;
  r.project = std::move(project);
  r.window_label = std::move(window);
  r.mode = std::move(mode);
  r.n_pred = n_pred;
  r.top1_hits = hits.front();
  r.hits = std::move(hits);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["project"] = r.project;
  j["window"] = r.window_label;
  j["mode"] = r.mode;
  j["n_pred"] = r.n_pred;
  j["hits"] = r.hits;
  auto ratios = nlohmann::ordered_json::array();
  for (std::size_t k = 1; k <= r.k_max(); ++k) ratios.push_back(r.ratio(k));
  j["ratios"] = std::move(ratios);
  j["top1"] = r.top1_accuracy();
  j["top1_hits"] = r.top1_hits;
  j["misses_gold_not_in_roster"] = r.misses_gold_not_in_roster;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.project = j.at("project").get<std::string>();
    r.window_label = j.at("window").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.n_pred = j.at("n_pred").get<std::uint64_t>();
    r.hits = j.at("hits").get<std::vector<std::uint64_t>>();
    r.misses_gold_not_in_roster = j.value("misses_gold_not_in_roster", std::uint64_t{0});
    if (r.n_pred == 0 || r.hits.empty()) throw Error(ErrorCode::ParseError, "metrics need n_pred > 0 and hits");
    r.top1_hits = j.at("top1_hits").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("metrics JSON: ") + e.what());
  }
}

inline MetricsReport read_metrics(const std::string& path) {
  try {
    return metrics_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, "'" + path + "': " + e.what());
  }
}

inline std::string metrics_to_csv(const MetricsReport& r) {
  std::string out = "project,window,mode,K,hits,n_pred,ratio\n";
  for (std::size_t k = 1; k <= r.k_max(); ++k) {
    out += r.project + "," + r.window_label + "," + r.mode + "," + std::to_string(k) + "," + std::to_string(r.hits[k - 1]) +
           "," + std::to_string(r.n_pred) + "," + r.ratio_display(k) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison against a baseline (per-K deltas in percentage points)

struct ComparisonRow {
  std::size_t k;
  std::string ours_display;  // "0.156"
  double baseline;
  double delta_pp;

  std::string delta_display() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", delta_pp);
    return buf;
  }
};

struct ComparisonTable {
  std::string project;
  std::string baseline_name;
  std::vector<ComparisonRow> rows;
};

/// delta[K] = (ours[K] - baseline[K]) * 100, with ours taken at its published
/// 3-decimal precision.
inline ComparisonTable compare_report(const MetricsReport& ours, const std::vector<double>& baseline, std::string baseline_name) {
  if (baseline.size() != ours.k_max()) {
    throw Error(ErrorCode::LengthMismatch, "baseline has " + std::to_string(baseline.size()) + " values, report has " +
                                               std::to_string(ours.k_max()));
  }
  ComparisonTable t{ours.project, std::move(baseline_name), {}};
  for (std::size_t k = 1; k <= ours.k_max(); ++k) {
    double ours_ratio = static_cast<double>(ours.ratio_milli(k)) / 1000.0;
    t.rows.push_back({k, ours.ratio_display(k), baseline[k - 1], (ours_ratio - baseline[k - 1]) * 100.0});
  }
  return t;
}

inline std::string format_baseline(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string comparison_to_markdown(const ComparisonTable& t) {
  std::string head = "| Project | Method |";
  std::string rule = "| --- | --- |";
  std::string base = "| " + t.project + " | " + t.baseline_name + " |";
  std::string ours = "| " + t.project + " | Ours |";
  std::string delta = "| " + t.project + " | Delta (pp) |";
  for (const auto& row : t.rows) {
    head += " top-" + std::to_string(row.k) + " |";
    rule += " --- |";
    base += " " + format_baseline(row.baseline) + " |";
    ours += " " + row.ours_display + " |";
    delta += " " + row.delta_display() + " |";
  }
  return head + "\n" + rule + "\n" + base + "\n" + ours + "\n" + delta + "\n";
}

inline std::string comparison_to_csv(const ComparisonTable& t) {
  std::string out = "project,K,ours," + t.baseline_name + ",delta_pp\n";
  for (const auto& row : t.rows) {
    out += t.project + "," + std::to_string(row.k) + "," + row.ours_display + "," + format_baseline(row.baseline) + "," +
           row.delta_display() + "\n";
  }
  return out;
}

struct Baseline {
  std::string name;
  std::map<std::string, std::vector<double>> projects;

  const std::vector<double>& for_project(const std::string& project) const {
    auto it = projects.find(project);
    if (it == projects.end()) throw Error(ErrorCode::ProjectMismatch, "baseline " + name + " has no values for '" + project + "'");
    return it->second;
  }
};

/// {"name": "...", "projects": {"EclipseJDT": [r1, ..., r10], ...}}
inline Baseline read_baseline(const std::string& path) {
  try {
    auto j = nlohmann::json::parse(detail::read_file(path));
    Baseline b;
    b.name = j.at("name").get<std::string>();
    for (const auto& [project, values] : j.at("projects").items()) {
      b.projects[project] = values.get<std::vector<double>>();
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "baseline '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Window effect: Top-1 and Hit@10 of two windows side by side

struct WindowRow {
  std::string project;
  std::string label_a;
  std::string label_b;
  std::string top1_a, hit_a, top1_b, hit_b;
  std::size_t hit_k = 10;
};

inline WindowRow window_report(const MetricsReport& a, const MetricsReport& b) {
  if (a.project != b.project) {
    throw Error(ErrorCode::ProjectMismatch, "cannot compare '" + a.project + "' with '" + b.project + "'");
  }
  auto k = std::min<std::size_t>({10, a.k_max(), b.k_max()});
  return {a.project, a.window_label, b.window_label, a.top1_display(), a.ratio_display(k), b.top1_display(),
          b.ratio_display(k), k};
}

inline std::string window_table_to_markdown(const std::vector<WindowRow>& rows) {
  if (rows.empty()) return {};
  const auto& f = rows.front();
  for (const auto& r : rows) {
    if (r.label_a != f.label_a || r.label_b != f.label_b || r.hit_k != f.hit_k) {
      throw Error(ErrorCode::InvalidArgument, "window rows disagree on column labels");
    }
  }
  auto hit = "Hit@" + std::to_string(f.hit_k);
  std::string out = "| Project | " + f.label_a + " Top-1 | " + f.label_a + " " + hit + " | " + f.label_b + " Top-1 | " +
                    f.label_b + " " + hit + " |\n";
  out += "| --- | --- | --- | --- | --- |\n";
  for (const auto& r : rows) {
    out += "| " + r.project + " | " + r.top1_a + " | " + r.hit_a + " | " + r.top1_b + " | " + r.hit_b + " |\n";
  }
  return out;
}

inline std::string window_table_to_csv(const std::vector<WindowRow>& rows) {
  std::string out = "project,window,top1,hit_at_k\n";
  for (const auto& r : rows) {
    out += r.project + "," + r.label_a + "," + r.top1_a + "," + r.hit_a + "\n";
    out += r.project + "," + r.label_b + "," + r.top1_b + "," + r.hit_b + "\n";
  }
  return out;
}

/// Gold labels from a canonical corpus (bug_id -> assignee).
inline GoldLabels gold_from_corpus(const std::vector<IssueRecord>& issues) {
  GoldLabels gold;
  for (const auto& issue : issues) gold.emplace(issue.bug_id, issue.assignee);
  return gold;
}

}  // namespace triage
