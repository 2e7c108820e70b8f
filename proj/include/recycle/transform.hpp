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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recycle/error.hpp"
#include "recycle/rng.hpp"
#include "recycle/unicode.hpp"
#include "recycle/vocab.hpp"

namespace recycle {

// How child-only subwords are paired with parent-only slots. random_all also
// shuffles shared subwords (everything except <pad>/<EOS>) and exists only to
// replicate that variant's negative result.
enum class AssignStrategy { kOrdered, kFrequency, kRandom, kLevenshtein, kRandomAll };

inline std::string_view to_string(AssignStrategy s) {
  switch (s) {
    case AssignStrategy::kOrdered: return "ordered";
    case AssignStrategy::kFrequency: return "frequency";
    case AssignStrategy::kRandom: return "random";
    case AssignStrategy::kLevenshtein: return "levenshtein";
    case AssignStrategy::kRandomAll: return "random_all";
  }
  return "?";
}

inline AssignStrategy parse_strategy(std::string_view s) {
  for (auto v : {AssignStrategy::kOrdered, AssignStrategy::kFrequency, AssignStrategy::kRandom,
                 AssignStrategy::kLevenshtein, AssignStrategy::kRandomAll}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown assignment strategy '" + std::string(s) + "'");
}

struct Assignment {
  std::string subword;
  TokenId slot;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct VocabMapping {
  Vocabulary transformed;
  std::vector<TokenId> shared_indices;  // ascending
  std::vector<Assignment> assignment;   // ascending by slot
  AssignStrategy strategy = AssignStrategy::kFrequency;
  std::uint64_t seed = 0;
};

struct MappingStats {
  double shared_fraction = 0.0;
  std::size_t reassigned_count = 0;
};

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Occurrence count of every vocabulary entry when the corpus is segmented
// with that vocabulary; feeds the frequency strategy.
inline std::vector<std::uint64_t> subword_frequencies(std::span<const std::string> corpus, const Vocabulary& vocab) {
  std::vector<std::uint64_t> freq(vocab.size(), 0);
  for (const auto& s : corpus) {
    for (TokenId t : vocab.segment(s).token_ids) ++freq[static_cast<std::size_t>(t)];
  }
  return freq;
}

// Keeps every subword common to parent and child at its parent index and
// fills the parent-only slots with the child-only subwords. `child_frequency`
// (indexed by child id) orders the frequency strategy; when empty the child
// vocabulary order is used, which is already frequency-ranked for
// vocabularies from build_vocabulary.
inline VocabMapping transform_vocabulary(const Vocabulary& parent, const Vocabulary& child, AssignStrategy strategy,
                                         std::uint64_t seed = 0,
                                         std::span<const std::uint64_t> child_frequency = {}) {
  if (parent.size() != child.size()) {
    throw ConfigError("parent and child vocabularies differ in size (" + std::to_string(parent.size()) + " vs " +
                      std::to_string(child.size()) + ")");
  }
  if (!child_frequency.empty() && child_frequency.size() != child.size()) {
    throw ConfigError("child frequency table does not match the child vocabulary size");
  }
  const std::size_t n = parent.size();
  std::vector<std::string> slots(n);
  VocabMapping m;
  m.strategy = strategy;
  m.seed = seed;

  if (strategy == AssignStrategy::kRandomAll) {
    std::vector<std::string> pool;
    for (const auto& e : child.entries()) {
      if (e != kPadToken && e != kEosToken) pool.push_back(e);
    }
    Rng rng(seed);
    rng.shuffle(pool);
    slots[kPadId] = kPadToken;
    slots[kEosId] = kEosToken;
    std::copy(pool.begin(), pool.end(), slots.begin() + 2);
    for (std::size_t i = 0; i < n; ++i) {
      if (slots[i] == parent[static_cast<TokenId>(i)]) {
        m.shared_indices.push_back(static_cast<TokenId>(i));
      } else {
        m.assignment.push_back({slots[i], static_cast<TokenId>(i)});
      }
    }
    m.transformed = Vocabulary(std::move(slots));
    return m;
  }

  std::vector<TokenId> free_slots;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = parent[static_cast<TokenId>(i)];
    if (child.contains(s)) {
      slots[i] = s;
      m.shared_indices.push_back(static_cast<TokenId>(i));
    } else {
      free_slots.push_back(static_cast<TokenId>(i));
    }
  }
  std::vector<TokenId> child_only;
  for (std::size_t i = 0; i < n; ++i) {
    if (!parent.contains(child[static_cast<TokenId>(i)])) child_only.push_back(static_cast<TokenId>(i));
  }
  // Equal sizes and unique entries force |child_only| == |free_slots|.

  std::vector<std::pair<TokenId, TokenId>> pairs;  // (child id, slot)
  switch (strategy) {
    case AssignStrategy::kOrdered:
      for (std::size_t k = 0; k < child_only.size(); ++k) pairs.emplace_back(child_only[k], free_slots[k]);
      break;
    case AssignStrategy::kFrequency: {
      if (!child_frequency.empty()) {
        std::stable_sort(child_only.begin(), child_only.end(), [&](TokenId a, TokenId b) {
          return child_frequency[static_cast<std::size_t>(a)] > child_frequency[static_cast<std::size_t>(b)];
        });
      }
      for (std::size_t k = 0; k < child_only.size(); ++k) pairs.emplace_back(child_only[k], free_slots[k]);
      break;
    }
    case AssignStrategy::kRandom: {
      Rng rng(seed);
      rng.shuffle(child_only);
      for (std::size_t k = 0; k < child_only.size(); ++k) pairs.emplace_back(child_only[k], free_slots[k]);
      break;
    }
    case AssignStrategy::kLevenshtein: {
      // Greedy in child order: each child-only subword takes the free slot
      // whose former parent subword is closest; ties go to the lower slot.
      std::vector<std::u32string> former;
      former.reserve(free_slots.size());
      for (TokenId s : free_slots) former.push_back(utf8::decode(parent[s]));
      std::vector<bool> used(free_slots.size(), false);
      for (TokenId c : child_only) {
        const std::u32string word = utf8::decode(child[c]);
        std::size_t best = free_slots.size();
        std::size_t best_dist = 0;
        for (std::size_t k = 0; k < free_slots.size(); ++k) {
          if (used[k]) continue;
          const std::size_t d = levenshtein(word, former[k]);
          if (best == free_slots.size() || d < best_dist) {
            best = k;
            best_dist = d;
          }
        }
        used[best] = true;
        pairs.emplace_back(c, free_slots[best]);
      }
      break;
    }
    case AssignStrategy::kRandomAll:
      break;
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  for (auto [c, slot] : pairs) {
    slots[static_cast<std::size_t>(slot)] = child[c];
    m.assignment.push_back({child[c], slot});
  }
  m.transformed = Vocabulary(std::move(slots));
  return m;
}

inline MappingStats mapping_stats(const VocabMapping& m) {
  MappingStats s;
  s.shared_fraction = m.transformed.size() == 0
                          ? 0.0
                          : static_cast<double>(m.shared_indices.size()) / static_cast<double>(m.transformed.size());
  s.reassigned_count = m.assignment.size();
  return s;
}

// Sidecar report written next to the transformed vocabulary.
inline nlohmann::json mapping_report(const VocabMapping& m) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& a : m.assignment) pairs.push_back({a.subword, a.slot});
  const auto stats = mapping_stats(m);
  return {{"strategy", to_string(m.strategy)},
          {"seed", m.seed},
          {"size", m.transformed.size()},
          {"shared_fraction", stats.shared_fraction},
          {"shared_indices", m.shared_indices},
          {"assignment", pairs},
          {"transformed_vocab_hash", m.transformed.hash()}};
}

// Rebuilds a mapping from its sidecar and the transformed vocabulary file.
inline VocabMapping mapping_from_report(const nlohmann::json& j, Vocabulary transformed) {
  try {
    if (j.at("transformed_vocab_hash").get<std::string>() != transformed.hash()) {
      throw DataError("mapping report does not belong to the given transformed vocabulary");
    }
    VocabMapping m;
    m.strategy = parse_strategy(j.at("strategy").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.shared_indices = j.at("shared_indices").get<std::vector<TokenId>>();
    for (const auto& p : j.at("assignment")) m.assignment.push_back({p.at(0).get<std::string>(), p.at(1).get<TokenId>()});
    m.transformed = std::move(transformed);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mapping report: ") + e.what());
  }
}

}  // namespace recycle
