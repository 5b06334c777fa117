#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "triage/error.hpp"
#include "triage/text.hpp"

namespace triage {

using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline bool read_digits(std::string_view s, std::size_t& pos, int count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (int i = 0; i < count; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += count;
  out = v;
  return true;
}

}  // namespace detail

/// Parses the ISO-8601 subset found in tracker exports:
///   YYYY-MM-DD
///   YYYY-MM-DD[T ]hh:mm[:ss[.fff]][Z|+hh:mm|-hh:mm|+hhmm]
/// A missing offset is taken as UTC. Fractional seconds are dropped.
inline std::optional<Timestamp> try_parse_timestamp(std::string_view raw) {
  using namespace std::chrono;
  auto s = text::trim(raw);
  std::size_t pos = 0;
  int y, mo, d;
  if (!detail::read_digits(s, pos, 4, y) || pos >= s.size() || s[pos++] != '-' ||
      !detail::read_digits(s, pos, 2, mo) || pos >= s.size() || s[pos++] != '-' ||
      !detail::read_digits(s, pos, 2, d)) {
    return std::nullopt;
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  long offset_minutes = 0;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ') return std::nullopt;
    ++pos;
    if (!detail::read_digits(s, pos, 2, hh) || pos >= s.size() || s[pos++] != ':' ||
        !detail::read_digits(s, pos, 2, mm)) {
      return std::nullopt;
    }
    if (pos < s.size() && s[pos] == ':') {
      ++pos;
      if (!detail::read_digits(s, pos, 2, ss)) return std::nullopt;
      if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
        ++pos;
        std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
      }
    }
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    if (pos < s.size()) {
      char z = s[pos];
      if (z == 'Z' || z == 'z') {
        ++pos;
      } else if (z == '+' || z == '-') {
        ++pos;
        int oh = 0, om = 0;
        if (!detail::read_digits(s, pos, 2, oh)) return std::nullopt;
        if (pos < s.size() && s[pos] == ':') ++pos;
        if (!detail::read_digits(s, pos, 2, om)) return std::nullopt;
        offset_minutes = (oh * 60 + om) * (z == '-' ? -1 : 1);
      } else {
        return std::nullopt;
      }
    }
    if (pos != s.size()) return std::nullopt;
  }
  auto t = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_minutes};
  return time_point_cast<seconds>(t);
}

inline Timestamp parse_timestamp(std::string_view raw) {
  if (auto t = try_parse_timestamp(raw)) return *t;
  throw Error(ErrorCode::ParseError, "invalid ISO-8601 timestamp '" + std::string(raw) + "'");
}

/// Canonical rendering: YYYY-MM-DDThh:mm:ssZ.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<unsigned>(hms.hours().count()) % 24u, static_cast<unsigned>(hms.minutes().count()) % 60u,
                static_cast<unsigned>(hms.seconds().count()) % 60u);
  return buf;
}

}  // namespace triage
