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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <string>

#include "recycle/io.hpp"
#include "recycle/vocab.hpp"
#include "test_util.hpp"

namespace recycle {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto err_file = dir / "stderr.txt";
  const std::string cmd = std::string(RECYCLE_CLI_PATH) + " " + args + " 2>" + err_file.string();
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_file);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

TEST(Cli, VocabIsByteIdenticalAcrossRuns) {
  const auto dir = testing::scratch_dir("cli_vocab");
  write_lines(dir / "c.txt", {"the cat sat on the mat", "Сьерра-Леоне", "a_b\\c"});
  const auto a = cli("vocab --corpus " + q(dir / "c.txt") + " --size 40 --out " + q(dir / "a.vocab"), dir);
  const auto b = cli("vocab --corpus " + q(dir / "c.txt") + " --size 40 --out " + q(dir / "b.vocab"), dir);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read_file(dir / "a.vocab"), read_file(dir / "b.vocab"));
  EXPECT_EQ(load_vocabulary(dir / "a.vocab").size(), 40u);
}

TEST(Cli, SegmentThenDecodeRoundTrips) {
  const auto dir = testing::scratch_dir("cli_segment");
  const std::vector<std::string> lines = {"hello world", "Сьерра-Леоне", "x_y \\ z"};
  write_lines(dir / "c.txt", lines);
  ASSERT_EQ(cli("vocab --corpus " + q(dir / "c.txt") + " --size 30 --out " + q(dir / "v"), dir).code, 0);
  auto r = cli("segment --ids --vocab " + q(dir / "v") + " --input " + q(dir / "c.txt") + " --output " +
                   q(dir / "ids.txt"),
               dir);
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli("segment --decode --vocab " + q(dir / "v") + " --input " + q(dir / "ids.txt") + " --output " +
              q(dir / "back.txt"),
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_lines(dir / "back.txt"), lines);
}

TEST(Cli, TransformReproducesTracedExample) {
  const auto dir = testing::scratch_dir("cli_transform");
  auto pe = mandatory_entries();
  auto ce = mandatory_entries();
  for (auto s : {"a", "b", "c", "d"}) pe.push_back(s);
  for (auto s : {"b", "e", "c", "f"}) ce.push_back(s);
  save_vocabulary(Vocabulary(pe), dir / "p.vocab");
  save_vocabulary(Vocabulary(ce), dir / "c.vocab");
  const auto r = cli("transform --strategy ordered --parent " + q(dir / "p.vocab") + " --child " +
                         q(dir / "c.vocab") + " --out " + q(dir / "t.vocab"),
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = load_vocabulary(dir / "t.vocab");
  const auto& e = t.entries();
  EXPECT_EQ(std::vector<std::string>(e.end() - 4, e.end()), (std::vector<std::string>{"e", "b", "c", "f"}));
  EXPECT_TRUE(fs::exists(dir / "t.vocab.json"));
}

TEST(Cli, BleuPrintsScoreAndSignature) {
  const auto dir = testing::scratch_dir("cli_bleu");
  write_lines(dir / "r.txt", {"the cat is on the mat", "there is a cat here"});
  const auto r = cli("bleu --hyp " + q(dir / "r.txt") + " --ref " + q(dir / "r.txt"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("BLEU = 100.00"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("signature: "), std::string::npos);
}

TEST(Cli, SignificanceOfSelfComparisonIsNotSignificant) {
  const auto dir = testing::scratch_dir("cli_sig");
  Rng rng(5);
  std::vector<std::string> ref, hyp;
  for (int i = 0; i < 40; ++i) {
    ref.push_back(testing::random_sentence(rng, 10));
    hyp.push_back(testing::random_sentence(rng, 10));
  }
  write_lines(dir / "r.txt", ref);
  write_lines(dir / "h.txt", hyp);
  const auto r = cli("significance --hyp-a " + q(dir / "h.txt") + " --hyp-b " + q(dir / "h.txt") + " --refs " +
                         q(dir / "r.txt"),
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("not significantly better"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("signature: "), std::string::npos);
}

TEST(Cli, SynthWritesTheSplits) {
  const auto dir = testing::scratch_dir("cli_synth");
  const auto r = cli("synth --script cyrillic --pairs 100 --out-dir " + q(dir / "task"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_lines(dir / "task" / "train.src").size(), 90u);
  EXPECT_EQ(read_lines(dir / "task" / "dev.tgt").size(), 5u);
  EXPECT_EQ(read_lines(dir / "task" / "test.tgt").size(), 5u);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const auto dir = testing::scratch_dir("cli_usage");
  const auto r = cli("bleu --no-such-flag", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
}

TEST(Cli, MissingSubcommandIsUsageError) {
  const auto dir = testing::scratch_dir("cli_nosub");
  EXPECT_EQ(cli("", dir).code, 2);
}

TEST(Cli, MalformedVocabularyIsUsageErrorWithOneLine) {
  const auto dir = testing::scratch_dir("cli_badvocab");
  write_file(dir / "bad.vocab", "<pad>\n<EOS>\nab_cd\n");
  write_lines(dir / "c.txt", {"x"});
  const auto r = cli("segment --vocab " + q(dir / "bad.vocab") + " --input " + q(dir / "c.txt") + " --output " +
                         q(dir / "o.txt"),
                     dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: parse: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, BadConfigValueIsUsageError) {
  const auto dir = testing::scratch_dir("cli_badcfg");
  write_lines(dir / "c.txt", {"a b"});
  ASSERT_EQ(cli("vocab --corpus " + q(dir / "c.txt") + " --size 20 --out " + q(dir / "v"), dir).code, 0);
  const auto r = cli("train --vocab " + q(dir / "v") + " --train-src " + q(dir / "c.txt") + " --train-tgt " +
                         q(dir / "c.txt") + " --dev-src " + q(dir / "c.txt") + " --dev-tgt " + q(dir / "c.txt") +
                         " --out-dir " + q(dir / "o") + " --d-model banana",
                     dir);
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto dir = testing::scratch_dir("cli_runtime");
  write_lines(dir / "a.txt", {"one", "two"});
  write_lines(dir / "b.txt", {"one"});
  const auto r = cli("bleu --hyp " + q(dir / "a.txt") + " --ref " + q(dir / "b.txt"), dir);
  EXPECT_EQ(r.code, 1) << r.err;
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
}

}  // namespace
}  // namespace recycle
