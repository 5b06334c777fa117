#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "triage/corpus.hpp"

namespace fixture {

inline triage::IssueRecord issue(std::string id, std::string_view assignee, std::string_view when = "2020-01-01",
                                 std::string title = "Title", std::string body = "Body",
                                 std::string_view project = "EclipseJDT") {
  triage::IssueRecord r;
  r.bug_id = std::move(id);
  r.title = std::move(title);
  r.body = std::move(body);
  r.assignee = triage::normalize_identifier(assignee);
  r.resolved_at = triage::parse_timestamp(when);
  r.source_project = triage::SourceProject{project};
  return r;
}

inline std::string path(std::string_view name) { return std::string(TRIAGE_FIXTURES) + "/" + std::string(name); }
inline std::string golden(std::string_view name) { return std::string(TRIAGE_GOLDEN) + "/" + std::string(name); }
inline std::string read(const std::string& p) { return triage::detail::read_file(p); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("triage-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string operator/(std::string_view name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Random lowercase identifier over a small alphabet so prefixes collide often.
inline std::string random_id(std::mt19937_64& rng, std::string_view alphabet = "abc", std::size_t max_len = 4) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  for (std::size_t i = 0, n = len(rng); i < n; ++i) s += alphabet[pick(rng)];
  return s;
}

}  // namespace fixture
