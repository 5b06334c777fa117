#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "triage/prompt.hpp"

using namespace triage;

namespace {

ByteTokenizer tok;

IssueRecord example_issue() {
  return fixture::issue("1", "dev@example.com", "2020-01-01", "App crashes when saving.", "Steps to reproduce...");
}

DeveloperId id(std::string_view s) { return normalize_identifier(s); }

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

std::string random_text(std::mt19937_64& rng, std::size_t n) {
  static const std::string pieces[] = {"a", "b", " ", "\n", "{x}", "\xC3\xA9", "\xE2\x82\xAC", "Z", "#", "\""};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(pieces) - 1);
  std::string s;
  while (s.size() < n) s += pieces[pick(rng)];
  return s;
}

}  // namespace

TEST(RenderSft, MatchesGolden) {
  auto b = render_sft(example_issue(), id("dev@example.com"), tok);
  EXPECT_EQ(b.text, fixture::read(fixture::golden("sft_example.txt")));
  EXPECT_EQ(b.kind, PromptKind::sft);
  EXPECT_FALSE(b.truncated);
  EXPECT_TRUE(b.text.ends_with("### Assignee: dev@example.com"));
}

TEST(RenderTop1, MatchesGoldenAndEndsAtAnchor) {
  auto b = render_top1(example_issue(), tok);
  EXPECT_EQ(b.text, fixture::read(fixture::golden("top1_example.txt")));
  EXPECT_TRUE(b.text.ends_with(kAnchor));
  EXPECT_EQ(b.anchor, kAnchor);
}

TEST(RenderSft, EmptyBodyKeepsBlankSlot) {
  auto issue = example_issue();
  issue.body.clear();
  auto b = render_sft(issue, id("dev@example.com"), tok);
  EXPECT_NE(b.text.find("### Issue:\nApp crashes when saving.\n\n\n\n### Assignee: dev@example.com"), std::string::npos);
}

TEST(RenderSft, HugeBodyIsTailTruncatedUnderBudget) {
  auto issue = example_issue();
  issue.body = std::string(10000, 'x');
  auto b = render_sft(issue, id("dev@example.com"), tok, 2048);
  EXPECT_TRUE(b.truncated);
  EXPECT_EQ(tok.count_tokens(b.text), 2048u);
  EXPECT_TRUE(b.text.ends_with("### Assignee: dev@example.com"));
  EXPECT_NE(b.text.find("### Issue:\nApp crashes when saving.\n\nxxx"), std::string::npos);
}

TEST(RenderSft, BudgetTooSmallWhenScaffoldAloneOverflows) {
  EXPECT_EQ(code_of([] { render_sft(example_issue(), id("dev@example.com"), tok, 20); }), ErrorCode::BudgetTooSmall);
  EXPECT_EQ(code_of([] { render_top1(example_issue(), tok, 20); }), ErrorCode::BudgetTooSmall);
}

TEST(RenderTop1, EmptyTitleIsContractError) {
  auto issue = example_issue();
  issue.title = "  ";
  EXPECT_EQ(code_of([&] { render_top1(issue, tok); }), ErrorCode::InvalidArgument);
}

TEST(RenderTop1, BracesInIssueTextAreNotExpanded) {
  auto issue = example_issue();
  issue.title = "Crash in {body} handling";
  issue.body = "see {gold} and {title}";
  auto b = render_top1(issue, tok);
  EXPECT_NE(b.text.find("Crash in {body} handling\n\nsee {gold} and {title}"), std::string::npos);
}

// Property: for untruncated inputs, sft == top1 + " " + gold.
TEST(TemplateLaws, SftExtendsTop1ByGold) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    auto issue = fixture::issue("x", "a@x.org", "2020-01-01", "T" + random_text(rng, 20), random_text(rng, 300));
    auto gold = id("dev" + std::to_string(i) + "@example.com");
    auto sft = render_sft(issue, gold, tok);
    auto top1 = render_top1(issue, tok);
    ASSERT_FALSE(sft.truncated);
    EXPECT_EQ(sft.text, top1.text + " " + gold.str());
  }
}

// Property: any body under any feasible budget yields a prompt within budget,
// with the scaffold and title intact and the body cut on a UTF-8 boundary.
TEST(TemplateLaws, BudgetAndAnchorHold) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> len(0, 3000);
  std::uniform_int_distribution<std::size_t> budget(140, 2500);
  for (int i = 0; i < 300; ++i) {
    auto issue = fixture::issue("x", "a@x.org", "2020-01-01", "Some title", random_text(rng, len(rng)));
    auto b = budget(rng);
    auto p = render_top1(issue, tok, b);
    EXPECT_LE(tok.count_tokens(p.text), b);
    EXPECT_TRUE(p.text.ends_with("\n\n### Assignee:"));
    EXPECT_EQ(p.text.rfind("Below is an issue. Suggest the single best developer to resolve it.\n\n### Issue:\nSome title\n\n", 0), 0u);
    EXPECT_EQ(text::sanitize_utf8(p.text), p.text);
    auto body_start = p.text.find("Some title\n\n") + 12;
    auto kept = p.text.substr(body_start, p.text.size() - body_start - std::string("\n\n### Assignee:").size());
    EXPECT_EQ(issue.body.substr(0, kept.size()), kept);
    EXPECT_EQ(p.truncated, kept.size() < issue.body.size());
    if (p.truncated) {
      // The next boundary would overflow the budget.
      auto next = kept.size() + 1;
      while (next < issue.body.size() && !text::is_utf8_boundary(issue.body, next)) ++next;
      auto longer = p.text;
      longer.insert(body_start + kept.size(), issue.body.substr(kept.size(), next - kept.size()));
      EXPECT_GT(tok.count_tokens(longer), b);
    }
  }
}

TEST(RenderTopk, ListsCandidatesAndStatesK) {
  auto b = render_topk(example_issue(), {id("a@x.org"), id("b@x.org"), id("c@x.org")}, tok, 3);
  EXPECT_NE(b.text.find("### Candidates:\na@x.org, b@x.org, c@x.org\n\n"), std::string::npos);
  EXPECT_NE(b.text.find("Top 3 unique assignees"), std::string::npos);
  EXPECT_EQ(b.k, 3u);
  EXPECT_EQ(b.candidates.size(), 3u);
  EXPECT_TRUE(b.text.ends_with(kAnchor));
}

TEST(RenderTopk, DefaultInstructionIsVerbatim) {
  auto b = render_topk(example_issue(), {id("dev@example.com"), id("alice.dev@mozilla.org"), id("bob")}, tok);
  EXPECT_NE(b.text.find("\nTop 10 unique assignees, comma-separated, no extra words.\n"), std::string::npos);
  EXPECT_EQ(b.text, fixture::read(fixture::golden("topk_example.txt")));
}

TEST(RenderTopk, CandidatesNeverDropped) {
  std::vector<DeveloperId> roster;
  for (int i = 0; i < 4017; ++i) roster.push_back(id("developer" + std::to_string(i) + "@eclipse.org"));
  std::size_t roster_chars = 0;
  for (const auto& r : roster) roster_chars += r.str().size() + 2;
  ASSERT_GT(roster_chars, 2048u);
  EXPECT_EQ(code_of([&] { render_topk(example_issue(), roster, tok, 10, 2048); }), ErrorCode::CandidatesDoNotFit);
  // With room for the list, the body is what gets cut.
  auto issue = example_issue();
  issue.body = std::string(50000, 'y');
  auto b = render_topk(issue, roster, tok, 10, 120000);
  EXPECT_TRUE(b.truncated);
  EXPECT_NE(b.text.find(roster.back().str() + "\n\nTop 10"), std::string::npos);
  EXPECT_LE(tok.count_tokens(b.text), 120000u);
}

TEST(RenderTopk, PreconditionErrors) {
  EXPECT_EQ(code_of([] { render_topk(example_issue(), {}, tok); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { render_topk(example_issue(), {id("a@x.org")}, tok, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { render_topk(example_issue(), {id("a@x.org")}, tok, 10, 30); }), ErrorCode::BudgetTooSmall);
}

TEST(Templates, AssetsMatchBuiltins) {
  auto dir = std::filesystem::path(TRIAGE_SOURCE_DIR) / "templates" / "v1";
  auto loaded = TemplateSet::load(dir);
  auto builtin = TemplateSet::builtin();
  EXPECT_EQ(loaded.sft.source(), builtin.sft.source());
  EXPECT_EQ(loaded.top1.source(), builtin.top1.source());
  EXPECT_EQ(loaded.topk.source(), builtin.topk.source());
}

TEST(Templates, OverrideDirectory) {
  fixture::TempDir dir;
  triage::detail::write_file(dir / "sft.txt", "Issue {title}: {body}\n### Assignee: {gold}\n");
  triage::detail::write_file(dir / "top1.txt", "Issue {title}: {body}\n### Assignee:");
  triage::detail::write_file(dir / "topk.txt", "{title} {body} [{candidates}] top {k}\n### Assignee:");
  auto set = TemplateSet::load(dir.path());
  auto b = render_sft(example_issue(), id("dev@example.com"), tok, 2048, set);
  EXPECT_EQ(b.text, "Issue App crashes when saving.: Steps to reproduce...\n### Assignee: dev@example.com");
}

TEST(Templates, InvalidOverridesRejected) {
  fixture::TempDir dir;
  triage::detail::write_file(dir / "sft.txt", "{title} {body} ### Assignee: {gold}");
  triage::detail::write_file(dir / "top1.txt", "{title} ### Assignee:");
  triage::detail::write_file(dir / "topk.txt", "{title} {body} {candidates} {k} ### Assignee:");
  EXPECT_EQ(code_of([&] { TemplateSet::load(dir.path()); }), ErrorCode::InvalidArgument);
  triage::detail::write_file(dir / "top1.txt", "{title} {body} ### Assignee: trailing");
  EXPECT_EQ(code_of([&] { TemplateSet::load(dir.path()); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { TemplateSet::load("/nonexistent"); }), ErrorCode::IoError);
}

TEST(PromptKinds, Names) {
  EXPECT_EQ(parse_prompt_kind("sft"), PromptKind::sft);
  EXPECT_EQ(parse_prompt_kind("top1"), PromptKind::top1);
  EXPECT_EQ(parse_prompt_kind("topk"), PromptKind::topk);
  EXPECT_EQ(to_string(PromptKind::topk), "topk");
  EXPECT_EQ(code_of([] { parse_prompt_kind("top2"); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Conversation records and JSONL

TEST(Conversation, UserTurnIsTitleBlankLineBody) {
  auto r = to_conversation(example_issue(), tok);
  EXPECT_EQ(r.system, "You are an expert bug triager.");
  EXPECT_EQ(r.user, "App crashes when saving.\n\nSteps to reproduce...");
  EXPECT_EQ(r.assistant, "dev@example.com");
}

TEST(Conversation, UserTurnCarriesTruncatedBody) {
  auto issue = example_issue();
  issue.body = std::string(5000, 'z');
  auto r = to_conversation(issue, tok, 1024);
  auto sft = render_sft(issue, issue.assignee, tok, 1024);
  auto kept = r.user.size() - issue.title.size() - 2;
  EXPECT_LT(kept, issue.body.size());
  EXPECT_NE(sft.text.find(r.user + "\n\n### Assignee:"), std::string::npos);
}

TEST(Jsonl, EmptyWritesEmptyFile) {
  fixture::TempDir dir;
  EXPECT_EQ(emit_jsonl({}, dir / "out.jsonl"), 0u);
  EXPECT_EQ(fixture::read(dir / "out.jsonl"), "");
  EXPECT_TRUE(parse_jsonl(dir / "out.jsonl").empty());
}

TEST(Jsonl, SingleRecordRoundTrip) {
  fixture::TempDir dir;
  ConversationRecord r{std::string(kSystemPrompt), "T\n\nB \"q\" \xC3\xA9", "dev@example.com"};
  EXPECT_EQ(emit_jsonl({r}, dir / "one.jsonl"), 1u);
  auto content = fixture::read(dir / "one.jsonl");
  EXPECT_EQ(content.rfind("{\"system\":", 0), 0u);
  EXPECT_TRUE(content.ends_with("}\n"));
  EXPECT_EQ(std::count(content.begin(), content.end(), '\n'), 1);
  auto back = parse_jsonl(dir / "one.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
}

TEST(Jsonl, ThousandRecordRoundTrip) {
  std::mt19937_64 rng(1000);
  std::vector<ConversationRecord> records;
  for (int i = 0; i < 1000; ++i) {
    records.push_back({std::string(kSystemPrompt), random_text(rng, 5) + "\n\n" + random_text(rng, 200),
                       "dev" + std::to_string(i) + "@example.com"});
  }
  fixture::TempDir dir;
  EXPECT_EQ(emit_jsonl(records, dir / "many.jsonl"), 1000u);
  EXPECT_EQ(parse_jsonl(dir / "many.jsonl"), records);
}

TEST(Jsonl, ExampleRecordParses) {
  auto records = parse_jsonl(fixture::path("example_record.jsonl"));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].system, "You are an expert bug triager.");
  EXPECT_EQ(records[0].user, "Title: App crashes when saving.\nDescription: Steps to reproduce...");
  EXPECT_EQ(records[0].assistant, "dev@example.com");
}

TEST(Jsonl, StrictErrorsCarryLineNumbers) {
  auto err = [](std::string_view content) {
    try {
      parse_jsonl_text(content);
    } catch (const Error& e) {
      return std::pair{e.code(), e.status()};
    }
    return std::pair{ErrorCode::InvalidArgument, -1L};
  };
  const std::string good = R"({"system":"s","user":"u","assistant":"a@x.org"})";
  EXPECT_EQ(err(good + "\n" + R"({"system":"s","user":"u"})" + "\n"), std::pair(ErrorCode::MissingRole, 2L));
  EXPECT_EQ(err(R"({"system":"s","user":"u","assistant":"a","extra":1})"), std::pair(ErrorCode::MalformedLine, 1L));
  EXPECT_EQ(err(good + "\nnot json\n"), std::pair(ErrorCode::MalformedLine, 2L));
  EXPECT_EQ(err(R"(["system","user","assistant"])"), std::pair(ErrorCode::MalformedLine, 1L));
  EXPECT_EQ(err(R"({"system":1,"user":"u","assistant":"a"})"), std::pair(ErrorCode::MalformedLine, 1L));
  EXPECT_EQ(err(good + "\n\n" + good + "\n"), std::pair(ErrorCode::MalformedLine, 2L));
  EXPECT_EQ(parse_jsonl_text(good + "\n\n\n").size(), 1u);
  EXPECT_EQ(parse_jsonl_text(good + "\r\n" + good).size(), 2u);
}

TEST(PromptJsonl, RoundTrip) {
  auto b = render_topk(example_issue(), {id("a@x.org")}, tok, 5);
  b.issue_id = "77";
  auto back = parse_prompts(prompt_to_json_line(b) + "\n\n");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].issue_id, "77");
  EXPECT_EQ(back[0].kind, PromptKind::topk);
  EXPECT_EQ(back[0].k, 5u);
  EXPECT_EQ(back[0].text, b.text);
  EXPECT_EQ(back[0].anchor, kAnchor);
  EXPECT_EQ(code_of([] { parse_prompts("{\"issue_id\":\"1\"}\n"); }), ErrorCode::MalformedLine);
}
