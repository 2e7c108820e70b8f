// Copyright 2026 The nmt-recycle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recycle/error.hpp"
#include "recycle/io.hpp"

namespace recycle::nmt {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int ffn_dim = 256;
  int vocab_size = 512;
  int max_len = 256;
  double dropout = 0.1;
  bool share_embeddings = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_dim <= 0 || vocab_size <= 2 || max_len <= 1) {
      throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double base_lr = 0.05;
  int warmup_steps = 400;
  int batch_tokens = 1024;
  int max_steps = 4000;
  int eval_every = 100;
  int length_limit = 100;
  double stop_rel_threshold = 0.005;
  double stop_window_frac = 0.5;
  int min_steps = 1000;

  void validate() const {
    if (base_lr <= 0.0) throw ConfigError("base_lr must be positive");
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
    if (batch_tokens < 1 || max_steps < 0 || eval_every < 1 || length_limit < 1 || min_steps < 0) {
      throw ConfigError("batch_tokens, eval_every and length_limit must be positive; step counts non-negative");
    }
    if (!(stop_rel_threshold > 0.0 && stop_rel_threshold < 1.0)) {
      throw ConfigError("stop_rel_threshold must lie in (0, 1)");
    }
    if (!(stop_window_frac > 0.0 && stop_window_frac <= 1.0)) {
      throw ConfigError("stop_window_frac must lie in (0, 1]");
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class Component { kEmbeddings = 0, kEncoder = 1, kDecoder = 2, kAttention = 3 };

inline constexpr std::array<Component, 4> kAllComponents = {Component::kEmbeddings, Component::kEncoder,
                                                            Component::kDecoder, Component::kAttention};

inline std::string_view to_string(Component c) {
  switch (c) {
    case Component::kEmbeddings: return "embeddings";
    case Component::kEncoder: return "encoder";
    case Component::kDecoder: return "decoder";
    case Component::kAttention: return "attention";
  }
  return "?";
}

inline Component parse_component(std::string_view s) {
  for (auto c : kAllComponents) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown model component '" + std::string(s) + "'");
}

// Every parameter name maps to exactly one component: embedding tables,
// any attention projection, and the remaining encoder/decoder weights
// (feed-forward sublayers and layer norms).
inline Component component_of(std::string_view param_name) {
  if (param_name.starts_with("embed")) return Component::kEmbeddings;
  if (param_name.find("_attn.") != std::string_view::npos) return Component::kAttention;
  if (param_name.starts_with("enc.")) return Component::kEncoder;
  if (param_name.starts_with("dec.")) return Component::kDecoder;
  throw ConfigError("parameter '" + std::string(param_name) + "' belongs to no component");
}

struct FreezeMask {
  std::array<bool, 4> frozen{};

  static FreezeMask none() { return {}; }
  static FreezeMask all() { return FreezeMask{{true, true, true, true}}; }
  static FreezeMask only(Component c) {
    FreezeMask m;
    m.frozen[static_cast<int>(c)] = true;
    return m;
  }
  static FreezeMask all_but(Component c) {
    FreezeMask m = all();
    m.frozen[static_cast<int>(c)] = false;
    return m;
  }

  bool is_frozen(Component c) const { return frozen[static_cast<int>(c)]; }
  bool is_frozen(std::string_view param_name) const { return is_frozen(component_of(param_name)); }
  bool all_frozen() const { return frozen[0] && frozen[1] && frozen[2] && frozen[3]; }

  // Comma separated component names; "" or "none" is the empty mask.
  static FreezeMask parse(std::string_view list) {
    FreezeMask m;
    if (list.empty() || list == "none") return m;
    if (list == "all") return all();
    std::size_t start = 0;
    while (start <= list.size()) {
      std::size_t end = list.find(',', start);
      if (end == std::string_view::npos) end = list.size();
      m.frozen[static_cast<int>(parse_component(list.substr(start, end - start)))] = true;
      start = end + 1;
    }
    return m;
  }

  std::string str() const {
    std::string out;
    for (auto c : kAllComponents) {
      if (!is_frozen(c)) continue;
      if (!out.empty()) out += ",";
      out += to_string(c);
    }
    return out.empty() ? "none" : out;
  }

  friend bool operator==(const FreezeMask&, const FreezeMask&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},   {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"ffn_dim", c.ffn_dim},   {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"dropout", c.dropout},   {"share_embeddings", c.share_embeddings}, {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"base_lr", c.base_lr},
          {"warmup_steps", c.warmup_steps},
          {"batch_tokens", c.batch_tokens},
          {"max_steps", c.max_steps},
          {"eval_every", c.eval_every},
          {"length_limit", c.length_limit},
          {"stop_rel_threshold", c.stop_rel_threshold},
          {"stop_window_frac", c.stop_window_frac},
          {"min_steps", c.min_steps}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout = j.value("dropout", c.dropout);
  c.share_embeddings = j.value("share_embeddings", c.share_embeddings);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_tokens = j.value("batch_tokens", c.batch_tokens);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.length_limit = j.value("length_limit", c.length_limit);
  c.stop_rel_threshold = j.value("stop_rel_threshold", c.stop_rel_threshold);
  c.stop_window_frac = j.value("stop_window_frac", c.stop_window_frac);
  c.min_steps = j.value("min_steps", c.min_steps);
  return c;
}

inline constexpr std::array<std::string_view, 18> kConfigKeys = {
    "d_model",      "n_layers",    "n_heads",      "ffn_dim",            "vocab_size",       "max_len",
    "dropout",      "share_embeddings", "seed",    "base_lr",            "warmup_steps",     "batch_tokens",
    "max_steps",    "eval_every",  "length_limit", "stop_rel_threshold", "stop_window_frac", "min_steps"};

// Declarative "key = value" file. '#' starts a comment; blank lines are
// ignored. Keys are the ModelConfig/TrainConfig field names.
struct ConfigFile {
  std::map<std::string, std::string> values;

  static ConfigFile parse(std::string_view text) {
    ConfigFile f;
    std::size_t start = 0;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    while (start <= text.size()) {
      ++line_no;
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string line(text.substr(start, end - start));
      start = end + 1;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError("empty key", line_no);
      if (!f.values.emplace(key, trim(line.substr(eq + 1))).second) throw ParseError("duplicate key '" + key + "'", line_no);
      if (end == text.size()) break;
    }
    return f;
  }

  static ConfigFile load(const std::filesystem::path& p) { return parse(read_file(p)); }

  // Applies the recognised keys; unknown keys are a configuration error.
  void apply(ModelConfig& m, TrainConfig& t) const {
    for (const auto& [key, value] : values) {
      try {
        if (key == "d_model") m.d_model = std::stoi(value);
        else if (key == "n_layers") m.n_layers = std::stoi(value);
        else if (key == "n_heads") m.n_heads = std::stoi(value);
        else if (key == "ffn_dim") m.ffn_dim = std::stoi(value);
        else if (key == "vocab_size") m.vocab_size = std::stoi(value);
        else if (key == "max_len") m.max_len = std::stoi(value);
        else if (key == "dropout") m.dropout = std::stod(value);
        else if (key == "share_embeddings") m.share_embeddings = (value == "true" || value == "1");
        else if (key == "seed") m.seed = std::stoull(value);
        else if (key == "base_lr") t.base_lr = std::stod(value);
        else if (key == "warmup_steps") t.warmup_steps = std::stoi(value);
        else if (key == "batch_tokens") t.batch_tokens = std::stoi(value);
        else if (key == "max_steps") t.max_steps = std::stoi(value);
        else if (key == "eval_every") t.eval_every = std::stoi(value);
        else if (key == "length_limit") t.length_limit = std::stoi(value);
        else if (key == "stop_rel_threshold") t.stop_rel_threshold = std::stod(value);
        else if (key == "stop_window_frac") t.stop_window_frac = std::stod(value);
        else if (key == "min_steps") t.min_steps = std::stoi(value);
        else throw ConfigError("unknown config key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ConfigError("bad value '" + value + "' for config key '" + key + "'");
      }
    }
  }
};

}  // namespace recycle::nmt
