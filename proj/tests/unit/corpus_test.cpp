#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "triage/corpus.hpp"

using namespace triage;

namespace {

const char* kHeader = "bug_id,summary,description,fixer,priority,status,resolved_at\n";

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

std::vector<std::string> ids(const std::vector<IssueRecord>& v) {
  std::vector<std::string> out;
  for (const auto& i : v) out.push_back(i.bug_id);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// load_export

TEST(LoadExport, CsvRowsInOrder) {
  std::string csv = std::string(kHeader) +
                    "3,First,\"multi\nline, with \"\"quotes\"\"\",a@x.org,P1,FIXED,2020-01-01\n"
                    "1,Second,,b@x.org,P2,FIXED,2020-01-02T03:04:05Z\n"
                    "2,Third,body,c@x.org,P3,FIXED,2020-01-03\n";
  auto raws = parse_export(csv, ExportFormat::csv);
  ASSERT_EQ(raws.size(), 3u);
  EXPECT_EQ(raws[0].bug_id, "3");
  EXPECT_EQ(raws[0].description, "multi\nline, with \"quotes\"");
  EXPECT_EQ(raws[1].bug_id, "1");
  EXPECT_EQ(raws[1].description, "");
  EXPECT_EQ(format_timestamp(raws[1].resolved_at), "2020-01-02T03:04:05Z");
  EXPECT_EQ(raws[2].summary, "Third");
}

TEST(LoadExport, CrlfAndBomAreAccepted) {
  std::string csv = "\xEF\xBB\xBF" "bug_id,summary,description,fixer,priority,status,resolved_at\r\n"
                    "1,T,B,a@x.org,P1,FIXED,2020-01-01\r\n";
  auto raws = parse_export(csv, ExportFormat::csv);
  ASSERT_EQ(raws.size(), 1u);
  EXPECT_EQ(raws[0].resolved_at, parse_timestamp("2020-01-01"));
}

TEST(LoadExport, ExtraColumnsLandInExtra) {
  std::string csv = "bug_id,summary,description,fixer,priority,status,resolved_at,product\n"
                    "1,T,B,a@x.org,P1,FIXED,2020-01-01,JDT\n";
  auto raws = parse_export(csv, ExportFormat::csv);
  EXPECT_EQ(raws[0].extra.at("product"), "JDT");
}

TEST(LoadExport, MissingFixerNamesTheRow) {
  std::string csv = "bug_id,summary,description,priority,status,resolved_at\n1,T,B,P1,FIXED,2020-01-01\n";
  try {
    parse_export(csv, ExportFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingField);
    EXPECT_EQ(e.status(), 1);
    EXPECT_NE(std::string(e.what()).find("fixer"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(LoadExport, ShortRowIsMissingField) {
  std::string csv = std::string(kHeader) + "1,T,B,a@x.org,P1,FIXED,2020-01-01\n2,T,B\n";
  try {
    parse_export(csv, ExportFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingField);
    EXPECT_EQ(e.status(), 2);
  }
}

TEST(LoadExport, DuplicateBugId) {
  std::string csv = std::string(kHeader) + "42,A,B,a@x.org,P1,FIXED,2020-01-01\n42,C,D,b@x.org,P1,FIXED,2020-01-02\n";
  try {
    parse_export(csv, ExportFormat::csv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateBugId);
    EXPECT_NE(std::string(e.what()).find("'42'"), std::string::npos);
  }
}

TEST(LoadExport, BadTimestampAndBadQuoting) {
  EXPECT_EQ(code_of([] { parse_export(std::string(kHeader) + "1,T,B,a@x.org,P1,FIXED,someday\n", ExportFormat::csv); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_export(std::string(kHeader) + "1,\"open,B,a@x.org,P1,FIXED,2020-01-01\n", ExportFormat::csv); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_export(std::string(kHeader) + "1,T\"x\",B,a@x.org,P1,FIXED,2020-01-01\n", ExportFormat::csv); }),
            ErrorCode::ParseError);
}

TEST(LoadExport, JsonAndJsonlFormats) {
  std::string arr = R"([{"bug_id":7,"summary":"S","description":"D","fixer":"a@x.org","priority":"P1","status":"FIXED","resolved_at":"2020-01-01","votes":3}])";
  auto a = parse_export(arr, ExportFormat::json);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].bug_id, "7");
  EXPECT_EQ(a[0].extra.at("votes"), "3");

  std::string lines = R"({"bug_id":"1","summary":"S","description":"D","fixer":"a@x.org","priority":"P1","status":"FIXED","resolved_at":"2020-01-01"})"
                      "\n\n"
                      R"({"bug_id":"2","summary":"S","description":"D","fixer":"b@x.org","priority":"P1","status":"FIXED","resolved_at":"2020-01-02"})"
                      "\n";
  auto l = parse_export(lines, ExportFormat::jsonl);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[1].fixer, "b@x.org");

  EXPECT_EQ(code_of([] { parse_export("{not json", ExportFormat::json); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_export("{\"a\":1}", ExportFormat::json); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_export("[1]", ExportFormat::json); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_export("{\"bug_id\":\"1\"}\n", ExportFormat::jsonl); }), ErrorCode::MissingField);
  EXPECT_EQ(code_of([] { parse_export("oops\n", ExportFormat::jsonl); }), ErrorCode::ParseError);
}

TEST(LoadExport, EmptyInputs) {
  EXPECT_TRUE(parse_export("", ExportFormat::csv).empty());
  EXPECT_TRUE(parse_export(kHeader, ExportFormat::csv).empty());
  EXPECT_TRUE(parse_export("[]", ExportFormat::json).empty());
  EXPECT_TRUE(parse_export("", ExportFormat::jsonl).empty());
}

TEST(LoadExport, FormatNames) {
  EXPECT_EQ(parse_export_format("csv"), ExportFormat::csv);
  EXPECT_EQ(parse_export_format("json"), ExportFormat::json);
  EXPECT_EQ(parse_export_format("jsonl"), ExportFormat::jsonl);
  EXPECT_EQ(code_of([] { parse_export_format("xml"); }), ErrorCode::InvalidArgument);
}

TEST(LoadExport, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_export("/nonexistent/export.csv", ExportFormat::csv); }), ErrorCode::IoError);
}

TEST(LoadExport, TwentyIssueFixture) {
  auto raws = load_export(fixture::path("issues20.csv"), ExportFormat::csv);
  ASSERT_EQ(raws.size(), 20u);
  EXPECT_EQ(raws.front().bug_id, "1001");
  EXPECT_EQ(raws.front().description, "Steps:\n1. Open prefs\n2. Click \"Advanced\"\nResult: crash.");
  EXPECT_EQ(raws.back().bug_id, "1020");
}

// ---------------------------------------------------------------------------
// normalize

TEST(Normalize, IssueRecordFields) {
  RawIssue raw;
  raw.bug_id = "9";
  raw.summary = "  Crash  ";
  raw.description = "details\n";
  raw.fixer = " Bob@X.org";
  raw.resolved_at = parse_timestamp("2020-05-05");
  auto rec = to_issue_record(raw, SourceProject{"mozilla"});
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->title, "Crash");
  EXPECT_EQ(rec->body, "details");
  EXPECT_EQ(rec->assignee.str(), "bob@x.org");
  EXPECT_EQ(rec->source_project.name(), "Mozilla");
}

TEST(Normalize, EmptyTitlePromotesFirstBodyLine) {
  RawIssue raw;
  raw.bug_id = "1";
  raw.description = "\n  First line \nrest\nmore";
  raw.fixer = "a@x.org";
  auto rec = to_issue_record(raw, SourceProject{"x"});
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->title, "First line");
  EXPECT_EQ(rec->body, "rest\nmore");
}

TEST(Normalize, NeitherTitleNorBodyIsRejected) {
  RawIssue a, b;
  a.bug_id = "1";
  a.summary = "  ";
  a.fixer = "a@x.org";
  b.bug_id = "2";
  b.summary = "ok";
  b.fixer = "a@x.org";
  auto result = normalize_issues({a, b}, "EclipseJDT");
  ASSERT_EQ(result.issues.size(), 1u);
  EXPECT_EQ(result.issues[0].bug_id, "2");
  EXPECT_EQ(result.rejected_bug_ids, std::vector<std::string>{"1"});
}

TEST(Normalize, ProjectFromColumnUnlessOverridden) {
  RawIssue raw;
  raw.bug_id = "1";
  raw.summary = "t";
  raw.fixer = "a@x.org";
  raw.extra["product"] = "Eclipse JDT";
  EXPECT_EQ(normalize_issues({raw}).issues[0].source_project.name(), "EclipseJDT");
  EXPECT_EQ(normalize_issues({raw}, "Mozilla").issues[0].source_project.name(), "Mozilla");
  raw.extra.clear();
  raw.extra["project"] = "Firefox";
  EXPECT_EQ(normalize_issues({raw}).issues[0].source_project.name(), "Firefox");
}

TEST(Normalize, HistoryColumnFeedsRelationships) {
  RawIssue raw;
  raw.bug_id = "1";
  raw.summary = "t";
  raw.fixer = "c@x.org";
  raw.extra["assignee_history"] = "a@x.org; B@x.org,c@x.org;a@x.org";
  auto rec = to_issue_record(raw, SourceProject{"x"});
  ASSERT_EQ(rec->history.size(), 2u);
  EXPECT_EQ(rec->history[0].str(), "a@x.org");
  EXPECT_EQ(rec->history[1].str(), "b@x.org");
  auto stats = compute_stats({*rec});
  EXPECT_EQ(stats.bugs, 1u);
  EXPECT_EQ(stats.developers, 3u);
  EXPECT_EQ(stats.relationships, 3u);
}

// ---------------------------------------------------------------------------
// filter_low_activity

TEST(FilterLowActivity, StrictThreshold) {
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 10; ++i) issues.push_back(fixture::issue("a" + std::to_string(i), "a@x.org"));
  for (int i = 0; i < 9; ++i) issues.push_back(fixture::issue("b" + std::to_string(i), "b@x.org"));
  auto kept = filter_low_activity(issues, 10);
  ASSERT_EQ(kept.size(), 10u);
  for (const auto& k : kept) EXPECT_EQ(k.assignee.str(), "a@x.org");
}

TEST(FilterLowActivity, IdentityWhenAllActive) {
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 20; ++i) issues.push_back(fixture::issue(std::to_string(i), i % 2 ? "a@x.org" : "b@x.org"));
  EXPECT_EQ(filter_low_activity(issues, 10), issues);
}

TEST(FilterLowActivity, MatchesRecountOracle) {
  // 100 issues over 12 developers with fixed counts.
  const std::size_t counts[] = {20, 15, 12, 10, 10, 9, 8, 6, 4, 3, 2, 1};
  std::vector<IssueRecord> issues;
  int n = 0;
  for (std::size_t d = 0; d < 12; ++d) {
    for (std::size_t i = 0; i < counts[d]; ++i) {
      issues.push_back(fixture::issue(std::to_string(n++), "dev" + std::to_string(d) + "@x.org"));
    }
  }
  ASSERT_EQ(issues.size(), 100u);
  std::mt19937_64 rng(11);
  std::shuffle(issues.begin(), issues.end(), rng);
  auto kept = filter_low_activity(issues, 10);
  EXPECT_EQ(kept, oracle::recount_filter(issues, 10));
  EXPECT_EQ(kept.size(), 67u);
}

TEST(FilterLowActivity, RandomizedAgainstOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> dev(0, 15);
    std::uniform_int_distribution<std::size_t> size(0, 300);
    std::vector<IssueRecord> issues;
    for (std::size_t i = 0, n = size(rng); i < n; ++i) {
      issues.push_back(fixture::issue(std::to_string(i), "d" + std::to_string(dev(rng)) + "@x.org"));
    }
    std::uniform_int_distribution<std::size_t> threshold(0, 30);
    auto t = threshold(rng);
    EXPECT_EQ(filter_low_activity(issues, t), oracle::recount_filter(issues, t));
  }
}

TEST(FilterLowActivity, FixedPointRepeatsOnlyWhenAsked) {
  // Single pass already converges for per-developer counts on a fixed input,
  // so the fixed-point result equals the single-pass result here.
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 12; ++i) issues.push_back(fixture::issue("a" + std::to_string(i), "a@x.org"));
  for (int i = 0; i < 3; ++i) issues.push_back(fixture::issue("b" + std::to_string(i), "b@x.org"));
  EXPECT_EQ(filter_low_activity(issues, 10, true), filter_low_activity(issues, 10, false));
}

TEST(FilterLowActivity, FilterFixtureKnownSizes) {
  auto raws = load_export(fixture::path("filter42.csv"), ExportFormat::csv);
  auto issues = normalize_issues(raws, "Mozilla").issues;
  ASSERT_EQ(issues.size(), 42u);
  EXPECT_EQ(filter_low_activity(issues, 10).size(), 32u);  // alice 12, bob 10, eve 10
  auto windowed = window_filter(issues, parse_timestamp("2019-01-01"), parse_timestamp("2021-01-01"));
  EXPECT_EQ(windowed.size(), 40u);
  EXPECT_EQ(filter_low_activity(windowed, 10).size(), 22u);  // eve drops to 8
}

// ---------------------------------------------------------------------------
// window_filter

TEST(WindowFilter, HalfOpen) {
  std::vector<IssueRecord> issues{fixture::issue("1", "a@x.org", "2015-01-01"), fixture::issue("2", "a@x.org", "2015-06-30T23:59:59Z"),
                                  fixture::issue("3", "a@x.org", "2015-07-01")};
  auto out = window_filter(issues, parse_timestamp("2015-01-01"), parse_timestamp("2015-07-01"));
  EXPECT_EQ(ids(out), (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(window_filter(issues, parse_timestamp("2000-01-01"), parse_timestamp("2030-01-01")), issues);
}

TEST(WindowFilter, InvalidWindow) {
  EXPECT_EQ(code_of([] { window_filter({}, parse_timestamp("2020-01-01"), parse_timestamp("2019-01-01")); }),
            ErrorCode::InvalidWindow);
  EXPECT_EQ(code_of([] { window_filter({}, parse_timestamp("2020-01-01"), parse_timestamp("2020-01-01")); }),
            ErrorCode::InvalidWindow);
}

TEST(WindowFilter, MatchesLinearScanOracle) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> secs(1'000'000'000, 1'700'000'000);
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 500; ++i) {
    auto r = fixture::issue(std::to_string(i), "a@x.org");
    r.resolved_at = Timestamp{std::chrono::seconds{secs(rng)}};
    issues.push_back(r);
  }
  for (int trial = 0; trial < 50; ++trial) {
    auto a = secs(rng), b = secs(rng);
    if (a == b) continue;
    Timestamp start{std::chrono::seconds{std::min(a, b)}}, end{std::chrono::seconds{std::max(a, b)}};
    EXPECT_EQ(window_filter(issues, start, end), oracle::linear_window(issues, start, end));
  }
}

TEST(WindowFilter, ParseWindowSpec) {
  auto w = parse_window("2007-11..2015-12");
  EXPECT_EQ(format_timestamp(w.start), "2007-11-01T00:00:00Z");
  EXPECT_EQ(format_timestamp(w.end), "2015-12-01T00:00:00Z");
  auto y = parse_window("2025..2026");
  EXPECT_EQ(format_timestamp(y.start), "2025-01-01T00:00:00Z");
  auto d = parse_window("2025-01-01T00:00:00Z..2025-07-01");
  EXPECT_EQ(format_timestamp(d.end), "2025-07-01T00:00:00Z");
  EXPECT_EQ(code_of([] { parse_window("2020..2019"); }), ErrorCode::InvalidWindow);
  EXPECT_EQ(code_of([] { parse_window("2020"); }), ErrorCode::InvalidWindow);
  EXPECT_EQ(code_of([] { parse_window("abc..2020"); }), ErrorCode::InvalidWindow);
}

// ---------------------------------------------------------------------------
// split

TEST(Split, SingleIssueLandsInExactlyOneSplit) {
  auto r = split({fixture::issue("1", "a@x.org")});
  EXPECT_EQ(r.train.size() + r.validation.size() + r.test.size(), 1u);
}

TEST(Split, PartitionAndOrderIndependence) {
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 2000; ++i) issues.push_back(fixture::issue("JDT-" + std::to_string(i * 7), "a@x.org"));
  auto a = split(issues);
  auto shuffled = issues;
  std::mt19937_64 rng(5);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto b = split(shuffled);
  auto sorted_ids = [](std::vector<IssueRecord> v) {
    auto out = ids(v);
    std::sort(out.begin(), out.end());
    return out;
  };
  EXPECT_EQ(sorted_ids(a.train), sorted_ids(b.train));
  EXPECT_EQ(sorted_ids(a.validation), sorted_ids(b.validation));
  EXPECT_EQ(sorted_ids(a.test), sorted_ids(b.test));
  std::vector<std::string> all = sorted_ids(a.train);
  for (const auto& v : {a.validation, a.test}) {
    auto s = ids(v);
    all.insert(all.end(), s.begin(), s.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, sorted_ids(issues));
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
}

TEST(Split, SeedChangesAssignment) {
  std::vector<IssueRecord> issues;
  for (int i = 0; i < 200; ++i) issues.push_back(fixture::issue(std::to_string(i), "a@x.org"));
  SplitConfig other;
  other.seed = 1;
  EXPECT_NE(ids(split(issues).test), ids(split(issues, other).test));
}

TEST(Split, PinnedCountsForTenThousandIds) {
  // Counts from tests/oracle/pin_values.py, an independent reimplementation.
  std::size_t train = 0, validation = 0, test = 0;
  SplitConfig cfg;
  for (int i = 1; i <= 10000; ++i) {
    switch (assign_split(std::to_string(i), cfg)) {
      case SplitName::train: ++train; break;
      case SplitName::validation: ++validation; break;
      case SplitName::test: ++test; break;
    }
  }
  EXPECT_EQ(train, 7983u);
  EXPECT_EQ(validation, 1004u);
  EXPECT_EQ(test, 1013u);
  EXPECT_NEAR(train / 100.0, 80.0, 1.5);
  EXPECT_NEAR(validation / 100.0, 10.0, 1.5);
  EXPECT_NEAR(test / 100.0, 10.0, 1.5);
}

TEST(Split, FixtureAssignments) {
  // Oracle output for bug ids 1001..1020 with seed 3407.
  SplitConfig cfg;
  EXPECT_EQ(assign_split("1003", cfg), SplitName::validation);
  EXPECT_EQ(assign_split("1004", cfg), SplitName::test);
  EXPECT_EQ(assign_split("1006", cfg), SplitName::validation);
  EXPECT_EQ(assign_split("1007", cfg), SplitName::validation);
  EXPECT_EQ(assign_split("1012", cfg), SplitName::test);
  EXPECT_EQ(assign_split("1001", cfg), SplitName::train);
}

TEST(Split, RejectsBadFractions) {
  SplitConfig cfg;
  cfg.train_fraction = 0.7;
  EXPECT_EQ(code_of([&] { split({}, cfg); }), ErrorCode::InvalidArgument);
  cfg.train_fraction = 1.1;
  cfg.validation_fraction = -0.1;
  cfg.test_fraction = 0.0;
  EXPECT_EQ(code_of([&] { split({}, cfg); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// stats

TEST(Stats, PublishedDensities) {
  EXPECT_EQ(stats_from_counts(16106, 4017, 53985).density_display(), "0.0008");
  EXPECT_EQ(stats_from_counts(110467, 37371, 569289).density_display(), "0.0001");
  EXPECT_EQ(stats_from_counts(1, 1, 1).density_display(), "1.0000");
  EXPECT_DOUBLE_EQ(stats_from_counts(1, 1, 1).density, 1.0);
}

TEST(Stats, ComputedFromIssues) {
  std::vector<IssueRecord> issues{fixture::issue("1", "a@x.org"), fixture::issue("2", "a@x.org"), fixture::issue("3", "b@x.org")};
  auto s = compute_stats(issues);
  EXPECT_EQ(s.bugs, 3u);
  EXPECT_EQ(s.developers, 2u);
  EXPECT_EQ(s.relationships, 3u);
  EXPECT_EQ(s.density_display(), "0.5000");
  EXPECT_EQ(code_of([] { compute_stats({}); }), ErrorCode::EmptyCorpus);
  EXPECT_EQ(code_of([] { stats_from_counts(0, 1, 0); }), ErrorCode::EmptyCorpus);
}

TEST(Stats, HalfUpRounding) {
  EXPECT_EQ(ratio_half_up(1, 8, 2), "0.13");    // 0.125
  EXPECT_EQ(ratio_half_up(3, 8, 2), "0.38");    // 0.375
  EXPECT_EQ(ratio_half_up(1, 2000, 3), "0.001");  // 0.0005
  EXPECT_EQ(ratio_half_up(1, 2001, 3), "0.000");
  EXPECT_EQ(ratio_half_up(2, 2, 3), "1.000");
  EXPECT_EQ(ratio_half_up(7, 3, 0), "2");
  EXPECT_EQ(code_of([] { ratio_half_up(1, 0, 3); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// canonical corpus JSONL

TEST(CorpusJsonl, RoundTripAndKeyOrder) {
  auto r = fixture::issue("1", "a@x.org", "2020-02-03T04:05:06Z", "Title \"q\"", "multi\nline \xC3\xA9", "Mozilla");
  auto line = issue_to_json_line(r);
  EXPECT_EQ(line.rfind("{\"bug_id\":\"1\",\"title\":", 0), 0u);
  EXPECT_NE(line.find("\"resolved_at\":\"2020-02-03T04:05:06Z\",\"source_project\":\"Mozilla\"}"), std::string::npos);
  auto back = parse_corpus(corpus_to_jsonl({r, r}));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);
}

TEST(CorpusJsonl, BadLineReportsLineNumber) {
  auto good = issue_to_json_line(fixture::issue("1", "a@x.org"));
  try {
    parse_corpus(good + "\n{\"bug_id\":\"2\"}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_EQ(e.status(), 2);
  }
}
