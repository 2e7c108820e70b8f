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

#include "recycle/synth.hpp"

#include <gtest/gtest.h>

#include <set>

#include "recycle/io.hpp"
#include "test_util.hpp"

namespace recycle::synth {
namespace {

TEST(Synth, SplitOfThirtyPairs) {
  const auto s = split_sizes(30);
  EXPECT_EQ(s.train, 27u);
  EXPECT_EQ(s.dev, 1u);
  EXPECT_EQ(s.test, 2u);
  const auto task = make_task(1, 30, 40, "lat", Script::kLatin, 2);
  EXPECT_EQ(task.train.size(), 27u);
  EXPECT_EQ(task.dev.size(), 1u);
  EXPECT_EQ(task.test.size(), 2u);
}

TEST(Synth, SplitSizesAddUp) {
  for (std::size_t n = 30; n < 400; n += 7) {
    const auto s = split_sizes(n);
    EXPECT_EQ(s.train + s.dev + s.test, n);
    EXPECT_EQ(s.train, n * 9 / 10);
    EXPECT_EQ(s.dev, n / 20);
  }
}

TEST(Synth, TooFewPairsIsConfigError) {
  EXPECT_THROW(make_task(1, 29, 40, "lat", Script::kLatin, 2), ConfigError);
}

TEST(Synth, LexiconTooSmallForDistinctSentencesIsConfigError) {
  EXPECT_THROW(base_lexicon(1, 3), ConfigError);
}

TEST(Synth, SameSeedsAreByteIdentical) {
  const auto dir = testing::scratch_dir("synth_det");
  write_task(make_task(5, 200, 60, "cyr", Script::kCyrillic, 9), dir / "a");
  write_task(make_task(5, 200, 60, "cyr", Script::kCyrillic, 9), dir / "b");
  for (const char* f : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt", "manifest.json"}) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
}

TEST(Synth, SourceSideIndependentOfTargetScript) {
  const auto lat = make_task(3, 100, 50, "lat", Script::kLatin, 1);
  const auto cyr = make_task(3, 100, 50, "cyr", Script::kCyrillic, 2);
  ASSERT_EQ(lat.train.size(), cyr.train.size());
  for (std::size_t i = 0; i < lat.train.size(); ++i) EXPECT_EQ(lat.train[i].source, cyr.train[i].source);
  EXPECT_NE(lat.train[0].target, cyr.train[0].target);
}

TEST(Synth, SplitsAreDisjointAndSentencesInRange) {
  const auto t = make_task(4, 300, 40, "pua", Script::kPrivateUse, 3);
  std::set<std::string> train;
  for (const auto& p : t.train) {
    train.insert(p.source);
    const auto words = utf8::split_words(std::string_view(p.source));
    EXPECT_GE(words.size(), 3u);
    EXPECT_LE(words.size(), 12u);
    EXPECT_EQ(utf8::split_words(std::string_view(p.target)).size(), words.size());
  }
  for (const auto& p : t.dev) EXPECT_FALSE(train.contains(p.source));
  for (const auto& p : t.test) EXPECT_FALSE(train.contains(p.source));
}

TEST(Synth, CipherIsInjectiveAndAlphabetIsExact) {
  for (auto script : {Script::kLatin, Script::kCyrillic, Script::kPrivateUse}) {
    const auto lang = make_cipher("x", script, base_lexicon(7, 150), 11);
    std::set<std::string> images;
    std::set<char32_t> used;
    const auto full = alphabet(script);
    const std::set<char32_t> allowed(full.begin(), full.end());
    for (const auto& [src, tgt] : lang.word_map) {
      EXPECT_TRUE(images.insert(tgt).second);
      for (char32_t c : utf8::decode(tgt)) {
        EXPECT_TRUE(allowed.contains(c));
        used.insert(c);
      }
    }
    EXPECT_EQ(std::set<char32_t>(lang.alphabet.begin(), lang.alphabet.end()), used);
    EXPECT_EQ(lang.word_map.size(), 150u);
  }
}

TEST(Synth, PrivateUseScriptSharesNoCharacterWithLatin) {
  const auto a = alphabet(Script::kPrivateUse);
  const auto b = alphabet(Script::kLatin);
  for (char32_t c : a) EXPECT_EQ(std::find(b.begin(), b.end(), c), b.end());
}

TEST(Synth, SentenceStreamsGiveDifferentSentencesOverTheSameLexicon) {
  const auto a = make_task(1, 100, 50, "lat", Script::kLatin, 1, 0);
  const auto b = make_task(1, 100, 50, "lat", Script::kLatin, 1, 1);
  EXPECT_NE(a.train[0].source, b.train[0].source);
  const auto lex = base_lexicon(1, 50);
  const std::set<std::string> words(lex.begin(), lex.end());
  for (const auto& p : b.train) {
    for (const auto& w : utf8::split_words(std::string_view(p.source))) EXPECT_TRUE(words.contains(w));
  }
}

TEST(Synth, WriteReadRoundTrip) {
  const auto dir = testing::scratch_dir("synth_rt");
  const auto t = make_task(2, 60, 30, "cyr", Script::kCyrillic, 4);
  write_task(t, dir);
  const auto back = read_task(dir);
  EXPECT_EQ(back.train, t.train);
  EXPECT_EQ(back.dev, t.dev);
  EXPECT_EQ(back.test, t.test);
  EXPECT_EQ(back.manifest, t.manifest);
}

}  // namespace
}  // namespace recycle::synth
