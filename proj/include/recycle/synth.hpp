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
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recycle/corpus_stats.hpp"
#include "recycle/error.hpp"
#include "recycle/io.hpp"
#include "recycle/rng.hpp"
#include "recycle/unicode.hpp"

namespace recycle::synth {

enum class Script { kLatin, kCyrillic, kPrivateUse };

inline std::string_view to_string(Script s) {
  switch (s) {
    case Script::kLatin: return "latin";
    case Script::kCyrillic: return "cyrillic";
    case Script::kPrivateUse: return "private-use";
  }
  return "?";
}

inline Script parse_script(std::string_view s) {
  for (auto v : {Script::kLatin, Script::kCyrillic, Script::kPrivateUse}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown script '" + std::string(s) + "' (latin, cyrillic, private-use)");
}

// Latin a-z, Cyrillic U+0430..U+044F, and 32 private-use codepoints from
// U+E000 that stand in for a script no other vocabulary contains.
inline std::vector<char32_t> alphabet(Script s) {
  std::vector<char32_t> a;
  switch (s) {
    case Script::kLatin:
      for (char32_t c = U'a'; c <= U'z'; ++c) a.push_back(c);
      break;
    case Script::kCyrillic:
      for (char32_t c = 0x0430; c <= 0x044F; ++c) a.push_back(c);
      break;
    case Script::kPrivateUse:
      for (char32_t c = 0xE000; c < 0xE020; ++c) a.push_back(c);
      break;
  }
  return a;
}

inline constexpr std::size_t kMinLexiconSize = 8;
inline constexpr int kMinSentenceWords = 3;
inline constexpr int kMaxSentenceWords = 12;

// Pronounceable consonant-vowel words, 2 to 4 syllables, all distinct.
inline std::vector<std::string> base_lexicon(std::uint64_t seed, std::size_t size) {
  if (size < kMinLexiconSize) {
    throw ConfigError("source lexicon needs at least " + std::to_string(kMinLexiconSize) + " words");
  }
  static constexpr std::string_view kCons = "bdfgklmnprstvz";
  static constexpr std::string_view kVow = "aeiou";
  Rng rng(derive_seed(seed, 0x1e71c0));
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::size_t attempts = 0;
  while (words.size() < size) {
    if (++attempts > size * 1000) throw ConfigError("cannot generate a lexicon of the requested size");
    std::string w;
    const auto syllables = rng.between(1, 3);
    for (std::int64_t s = 0; s < syllables; ++s) {
      w.push_back(kCons[rng.below(kCons.size())]);
      w.push_back(kVow[rng.below(kVow.size())]);
    }
    if (rng.below(2) == 0) w.push_back(kCons[rng.below(kCons.size())]);
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

// A target language: every base word maps to a distinct random word over the
// script's alphabet.
struct CipherLang {
  std::string name;
  Script script = Script::kLatin;
  std::vector<char32_t> alphabet;
  std::map<std::string, std::string> word_map;
  std::uint64_t seed = 0;

  std::string translate(std::string_view source) const {
    std::string out;
    for (const auto& w : utf8::split_words(source)) {
      auto it = word_map.find(w);
      if (it == word_map.end()) throw DataError("word '" + w + "' is not in the cipher lexicon");
      if (!out.empty()) out.push_back(' ');
      out += it->second;
    }
    return out;
  }
};

inline CipherLang make_cipher(std::string name, Script script, const std::vector<std::string>& lexicon,
                              std::uint64_t seed) {
  CipherLang lang;
  lang.name = std::move(name);
  lang.script = script;
  lang.alphabet = alphabet(script);
  lang.seed = seed;
  Rng rng(derive_seed(seed, 0xc1fe));
  std::set<std::string> used;
  std::set<char32_t> chars;
  for (const auto& base : lexicon) {
    std::string word;
    std::size_t attempts = 0;
    do {
      if (++attempts > 10000) throw ConfigError("cipher alphabet too small for the lexicon");
      std::u32string cps;
      const auto len = rng.between(2, 6);
      for (std::int64_t i = 0; i < len; ++i) cps.push_back(lang.alphabet[rng.below(lang.alphabet.size())]);
      word = utf8::encode(cps);
    } while (used.contains(word));
    used.insert(word);
    for (char32_t c : utf8::decode(word)) chars.insert(c);
    lang.word_map.emplace(base, word);
  }
  // Keep exactly the characters the cipher words use.
  lang.alphabet.assign(chars.begin(), chars.end());
  return lang;
}

struct Task {
  ParallelCorpus train, dev, test;
  nlohmann::json manifest;
};

struct SplitSizes {
  std::size_t train, dev, test;
};

// 90/5/5: train = floor(0.9 n), dev = floor(0.05 n), test = the remainder.
inline SplitSizes split_sizes(std::size_t n_pairs) {
  const std::size_t train = n_pairs * 9 / 10;
  const std::size_t dev = n_pairs / 20;
  return {train, dev, n_pairs - train - dev};
}

// Source sentences depend only on (base_seed, lexicon size, sentence_stream);
// targets are the word-by-word cipher translation. All source sentences are
// distinct, so the splits are disjoint at the sentence level.
inline Task make_task(std::uint64_t base_seed, std::size_t n_pairs, std::size_t source_lexicon_size,
                      const CipherLang& target, std::uint64_t sentence_stream = 0) {
  if (n_pairs < 30) throw ConfigError("a task needs at least 30 sentence pairs");
  const auto lexicon = base_lexicon(base_seed, source_lexicon_size);
  for (const auto& w : lexicon) {
    if (!target.word_map.contains(w)) {
      throw ConfigError("target language '" + target.name + "' does not cover the source lexicon");
    }
  }
  Rng rng(derive_seed(base_seed, 0x5e47 + sentence_stream));
  std::set<std::string> seen;
  ParallelCorpus all;
  std::size_t attempts = 0;
  while (all.size() < n_pairs) {
    if (++attempts > n_pairs * 100) throw ConfigError("lexicon too small for the requested number of distinct sentences");
    const auto len = rng.between(kMinSentenceWords, kMaxSentenceWords);
    std::string src;
    for (std::int64_t i = 0; i < len; ++i) {
      if (!src.empty()) src.push_back(' ');
      src += lexicon[rng.below(lexicon.size())];
    }
    if (!seen.insert(src).second) continue;
    all.push_back({src, target.translate(src)});
  }
  const auto sizes = split_sizes(n_pairs);
  Task task;
  task.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  task.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                  all.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.dev));
  task.test.assign(all.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.dev), all.end());
  task.manifest = {{"base_seed", base_seed},
                   {"target_seed", target.seed},
                   {"target_name", target.name},
                   {"target_script", to_string(target.script)},
                   {"sentence_stream", sentence_stream},
                   {"n_pairs", n_pairs},
                   {"source_lexicon_size", source_lexicon_size},
                   {"sentence_words", {kMinSentenceWords, kMaxSentenceWords}},
                   {"split", {{"train", sizes.train}, {"dev", sizes.dev}, {"test", sizes.test}}}};
  return task;
}

inline Task make_task(std::uint64_t base_seed, std::size_t n_pairs, std::size_t source_lexicon_size,
                      std::string name, Script script, std::uint64_t target_seed,
                      std::uint64_t sentence_stream = 0) {
  const auto lang = make_cipher(std::move(name), script, base_lexicon(base_seed, source_lexicon_size), target_seed);
  return make_task(base_seed, n_pairs, source_lexicon_size, lang, sentence_stream);
}

// <dir>/{train,dev,test}.{src,tgt} plus manifest.json.
inline void write_task(const Task& task, const std::filesystem::path& dir) {
  auto write_split = [&](const ParallelCorpus& c, const std::string& split) {
    std::vector<std::string> src, tgt;
    for (const auto& p : c) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
    write_lines(dir / (split + ".src"), src);
    write_lines(dir / (split + ".tgt"), tgt);
  };
  write_split(task.train, "train");
  write_split(task.dev, "dev");
  write_split(task.test, "test");
  write_file(dir / "manifest.json", task.manifest.dump(2) + "\n");
}

inline ParallelCorpus read_split(const std::filesystem::path& dir, const std::string& split) {
  const auto src = read_lines(dir / (split + ".src"));
  const auto tgt = read_lines(dir / (split + ".tgt"));
  return zip_corpus(src, tgt);
}

inline Task read_task(const std::filesystem::path& dir) {
  Task t;
  t.train = read_split(dir, "train");
  t.dev = read_split(dir, "dev");
  t.test = read_split(dir, "test");
  if (std::filesystem::exists(dir / "manifest.json")) t.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  return t;
}

}  // namespace recycle::synth
