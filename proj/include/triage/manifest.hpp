#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/time.hpp"

namespace triage {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string file_digest(const std::string& path) { return "sha256:" + sha256_hex(detail::read_file(path)); }

/// Record of one pipeline stage: its flags, seed, input digests and outputs.
/// All stages writing into one directory share that directory's
/// manifest.json, keyed by stage name.
struct RunManifest {
  std::string stage;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::optional<std::uint64_t> seed;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  std::vector<std::string> outputs;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  Timestamp started_at = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());

  void add_input(const std::string& path) { inputs[path] = file_digest(path); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["config"] = config;
    j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["summary"] = summary;
    j["started_at"] = format_timestamp(started_at);
    j["finished_at"] = format_timestamp(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
    return j;
  }

  /// Merges this stage into `<dir>/manifest.json`.
  void write(const std::filesystem::path& dir) const {
    auto path = dir / "manifest.json";
    nlohmann::ordered_json doc;
    if (std::filesystem::exists(path)) {
      try {
        doc = nlohmann::ordered_json::parse(detail::read_file(path.string()));
      } catch (const nlohmann::json::parse_error&) {
        doc = nlohmann::ordered_json::object();
      }
    }
    doc["tool"] = "triage";
    doc["version"] = kToolVersion;
    doc["stages"][stage] = to_json();
    detail::write_file(path.string(), doc.dump(2) + "\n");
  }
};

}  // namespace triage
