#pragma once

// Every translation unit must see the same httplib configuration, so the
// library is only ever included through this header.
#ifndef CPPHTTPLIB_REQUEST_URI_MAX_LENGTH
#define CPPHTTPLIB_REQUEST_URI_MAX_LENGTH 1048576
#endif
#include <httplib.h>

#include <chrono>
#include <string>
#include <string_view>

#include "triage/error.hpp"
#include "triage/text.hpp"

namespace triage::detail {

/// "http://host:port/prefix" split into the origin httplib connects to and
/// a path prefix prepended to every request.
struct Endpoint {
  std::string origin;
  std::string prefix;
};

inline Endpoint parse_endpoint(std::string_view url) {
  url = text::trim(url);
  auto scheme = url.find("://");
  if (scheme == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "endpoint needs a scheme: '" + std::string(url) + "'");
  auto path = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = std::string(url.substr(0, path));
  if (path != std::string_view::npos) e.prefix = std::string(url.substr(path));
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

inline bool is_transport_timeout(httplib::Error err) {
  return err == httplib::Error::ConnectionTimeout;
}

inline void configure(httplib::Client& client, std::chrono::milliseconds timeout) {
  auto sec = static_cast<time_t>(timeout.count() / 1000);
  auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

}  // namespace triage::detail
