#pragma once

#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "triage/error.hpp"
#include "triage/text.hpp"

/// Files exchanged with the fine-tuning side: its configuration and the
/// per-step training log it writes.
namespace triage::train {

struct TrainConfig {
  std::string base_model = "DeepSeek-R1-Distill-Llama-8B";
  int lora_r = 16;
  int lora_alpha = 16;
  double lora_dropout = 0.0;
  std::vector<std::string> target_modules{"q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"};
  std::string quantization = "nf4";
  int quant_bits = 4;
  std::string compute_dtype = "float16";
  int per_device_batch_size = 2;
  int gradient_accumulation_steps = 4;
  int max_steps = 500;
  double learning_rate = 2e-4;
  double weight_decay = 0.01;
  double warmup_ratio = 0.03;
  std::string optimizer = "adamw";
  std::string lr_scheduler = "linear";
  int max_seq_length = 2048;
  std::uint64_t seed = 3407;
  std::string anchor = "### Assignee:";

  int effective_batch_size() const noexcept { return per_device_batch_size * gradient_accumulation_steps; }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["base_model"] = c.base_model;
  j["lora_r"] = c.lora_r;
  j["lora_alpha"] = c.lora_alpha;
  j["lora_dropout"] = c.lora_dropout;
  j["target_modules"] = c.target_modules;
  j["quantization"] = c.quantization;
  j["quant_bits"] = c.quant_bits;
  j["compute_dtype"] = c.compute_dtype;
  j["per_device_batch_size"] = c.per_device_batch_size;
  j["gradient_accumulation_steps"] = c.gradient_accumulation_steps;
  j["max_steps"] = c.max_steps;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["warmup_ratio"] = c.warmup_ratio;
  j["optimizer"] = c.optimizer;
  j["lr_scheduler"] = c.lr_scheduler;
  j["max_seq_length"] = c.max_seq_length;
  j["seed"] = c.seed;
  j["anchor"] = c.anchor;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "train config is not a JSON object");
  TrainConfig c;
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::ParseError, "train config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end()) field = it->get<std::remove_reference_t<decltype(field)>>();
    };
    get("base_model", c.base_model);
    get("lora_r", c.lora_r);
    get("lora_alpha", c.lora_alpha);
    get("lora_dropout", c.lora_dropout);
    get("target_modules", c.target_modules);
    get("quantization", c.quantization);
    get("quant_bits", c.quant_bits);
    get("compute_dtype", c.compute_dtype);
    get("per_device_batch_size", c.per_device_batch_size);
    get("gradient_accumulation_steps", c.gradient_accumulation_steps);
    get("max_steps", c.max_steps);
    get("learning_rate", c.learning_rate);
    get("weight_decay", c.weight_decay);
    get("warmup_ratio", c.warmup_ratio);
    get("optimizer", c.optimizer);
    get("lr_scheduler", c.lr_scheduler);
    get("max_seq_length", c.max_seq_length);
    get("seed", c.seed);
    get("anchor", c.anchor);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  if (c.lora_r <= 0 || c.per_device_batch_size <= 0 || c.gradient_accumulation_steps <= 0 || c.max_steps <= 0 ||
      c.max_seq_length <= 0 || !(c.learning_rate > 0.0) || c.lora_dropout < 0.0 || c.lora_dropout >= 1.0 ||
      c.warmup_ratio < 0.0 || c.warmup_ratio > 1.0) {
    throw Error(ErrorCode::ParseError, "train config: value out of range");
  }
  return c;
}

struct LogEntry {
  std::uint64_t step;
  double loss;
  double lr;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

inline std::string to_jsonl(const std::vector<LogEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["loss"] = e.loss;
    j["lr"] = e.lr;
    out += j.dump() + "\n";
  }
  return out;
}

/// One {step, loss, lr} object per line, steps strictly increasing, loss and
/// lr finite and non-negative. Blank lines are skipped.
inline std::vector<LogEntry> parse_log(std::string_view text) {
  std::vector<LogEntry> out;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(text)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::ParseError, "training log line " + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw fail("malformed JSON");
    }
    if (!j.is_object()) throw fail("not an object");
    auto step = j.find("step");
    auto loss = j.find("loss");
    auto lr = j.find("lr");
    if (step == j.end() || !step->is_number_unsigned()) throw fail("missing non-negative integer 'step'");
    if (loss == j.end() || !loss->is_number()) throw fail("missing numeric 'loss'");
    if (lr == j.end() || !lr->is_number()) throw fail("missing numeric 'lr'");
    LogEntry e{step->get<std::uint64_t>(), loss->get<double>(), lr->get<double>()};
    if (!std::isfinite(e.loss) || e.loss < 0.0) throw fail("loss out of range");
    if (!std::isfinite(e.lr) || e.lr < 0.0) throw fail("lr out of range");
    if (!out.empty() && e.step <= out.back().step) throw fail("step not increasing");
    out.push_back(e);
  }
  return out;
}

/// Learning rate of the linear warmup then linear decay schedule at `step`.
inline double scheduled_lr(const TrainConfig& c, std::uint64_t step) {
  auto warmup = static_cast<std::uint64_t>(std::ceil(c.warmup_ratio * c.max_steps));
  auto total = static_cast<std::uint64_t>(c.max_steps);
  if (step < warmup) return c.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  return c.learning_rate * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace triage::train
