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

#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recycle/error.hpp"
#include "recycle/vocab.hpp"

namespace recycle {

struct FragmentationReport {
  double tokens_per_sentence = 0.0;
  double tokens_per_word = 0.0;
  std::size_t sentence_count = 0;
  std::size_t word_count = 0;
  std::size_t token_count = 0;
  std::size_t filtered_count = 0;
};

// Sentences over the length limit still count toward the averages;
// filtered_count only reports how many the trainer would drop.
inline FragmentationReport fragmentation(std::span<const std::string> corpus, const Vocabulary& vocab,
                                         std::optional<std::size_t> length_limit = std::nullopt) {
  if (corpus.empty()) throw DataError("fragmentation of an empty corpus");
  FragmentationReport r;
  for (const auto& sentence : corpus) {
    const auto seg = vocab.segment(sentence);
    r.token_count += seg.token_count;
    r.word_count += seg.word_count;
    if (length_limit && seg.token_count > *length_limit) ++r.filtered_count;
  }
  r.sentence_count = corpus.size();
  r.tokens_per_sentence = static_cast<double>(r.token_count) / static_cast<double>(r.sentence_count);
  r.tokens_per_word = r.word_count == 0 ? 0.0 : static_cast<double>(r.token_count) / static_cast<double>(r.word_count);
  return r;
}

struct SentencePair {
  std::string source;
  std::string target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using ParallelCorpus = std::vector<SentencePair>;

inline ParallelCorpus zip_corpus(std::span<const std::string> source, std::span<const std::string> target) {
  if (source.size() != target.size()) {
    throw DataError("parallel corpus sides differ in length: " + std::to_string(source.size()) + " vs " +
                    std::to_string(target.size()));
  }
  ParallelCorpus out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.push_back({source[i], target[i]});
  return out;
}

// Keeps pairs whose source AND target segment to at most length_limit tokens.
inline ParallelCorpus filter_long(std::span<const SentencePair> corpus, const Vocabulary& vocab,
                                  std::size_t length_limit) {
  if (length_limit < 1) throw ConfigError("length limit must be at least 1");
  ParallelCorpus kept;
  for (const auto& pair : corpus) {
    if (vocab.segment(pair.source).token_count <= length_limit &&
        vocab.segment(pair.target).token_count <= length_limit) {
      kept.push_back(pair);
    }
  }
  return kept;
}

struct NamedReport {
  std::string vocab_name;
  FragmentationReport report;
};

inline std::string fragmentation_tsv(std::span<const NamedReport> rows) {
  std::string out = "vocab_name\ttokens_per_sentence\ttokens_per_word\tsentence_count\tfiltered_count\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.vocab_name;
    std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f", r.report.tokens_per_sentence, r.report.tokens_per_word);
    out += buf;
    out += "\t" + std::to_string(r.report.sentence_count) + "\t" + std::to_string(r.report.filtered_count) + "\n";
  }
  return out;
}

inline nlohmann::json fragmentation_json(std::span<const NamedReport> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"vocab_name", r.vocab_name},
                   {"tokens_per_sentence", r.report.tokens_per_sentence},
                   {"tokens_per_word", r.report.tokens_per_word},
                   {"sentence_count", r.report.sentence_count},
                   {"word_count", r.report.word_count},
                   {"token_count", r.report.token_count},
                   {"filtered_count", r.report.filtered_count}});
  }
  return out;
}

}  // namespace recycle
