#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <regex>
#include <string>
#include <string_view>

#include "triage/error.hpp"
#include "triage/text.hpp"

namespace triage {

/// A normalized assignee identifier (email address or handle).
/// Only `normalize_identifier` constructs one from untrusted text.
class DeveloperId {
 public:
  DeveloperId() = default;

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const DeveloperId&, const DeveloperId&) = default;
  friend std::ostream& operator<<(std::ostream& os, const DeveloperId& id) { return os << id.value_; }

 private:
  explicit DeveloperId(std::string v) : value_(std::move(v)) {}
  friend DeveloperId normalize_identifier(std::string_view raw);

  std::string value_;
};

/// Trim and lowercase. Distinct addresses are never merged.
inline DeveloperId normalize_identifier(std::string_view raw) {
  auto trimmed = text::trim(raw);
  if (trimmed.empty()) throw Error(ErrorCode::EmptyIdentifier, "identifier is empty after trimming");
  return DeveloperId(text::to_lower(trimmed));
}

/// The Top-K padding sentinel; it never validates.
inline constexpr std::string_view kPadToken = "None";

/// Email `local@domain` or a 2-64 character handle, checked on the
/// normalized form. "none" is denied so padding can never pass as a developer.
inline bool validate_identifier(std::string_view s) {
  static const std::regex email(R"([a-z0-9._%+-]+@([a-z0-9-]+\.)*[a-z0-9-]{2,})");
  static const std::regex handle(R"([a-z0-9][a-z0-9._-]{1,63})");
  auto trimmed = text::trim(s);
  if (trimmed.empty()) return false;
  auto norm = text::to_lower(trimmed);
  if (norm == "none") return false;
  return std::regex_match(norm, email) || std::regex_match(norm, handle);
}

}  // namespace triage

template <>
struct std::hash<triage::DeveloperId> {
  std::size_t operator()(const triage::DeveloperId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
