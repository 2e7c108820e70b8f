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

#include "recycle/checkpoint.hpp"

#include <gtest/gtest.h>

#include <limits>

#include "recycle/io.hpp"
#include "recycle/nmt/train.hpp"
#include "recycle/transform.hpp"
#include "test_util.hpp"

namespace recycle {
namespace {

Vocabulary vocab_of(std::initializer_list<std::string> extra) {
  auto e = mandatory_entries();
  e.insert(e.end(), extra.begin(), extra.end());
  return Vocabulary(std::move(e));
}

// A small trained-looking checkpoint: random parameters and moments.
Checkpoint sample_checkpoint(const Vocabulary& vocab, std::uint64_t seed = 1) {
  nmt::ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.ffn_dim = 16;
  cfg.vocab_size = static_cast<int>(vocab.size());
  cfg.max_len = 32;
  nmt::Transformer<float> model(cfg);
  model.init_random(seed);
  nmt::Adam<float> adam(model.params());
  auto grads = model.params().zeros_like();
  const std::vector<nmt::Example> batch = {{{3, 4}, {5}}};
  model.forward(batch, {}, &grads);
  adam.update(model.params(), grads, 1e-3, 1, nmt::FreezeMask::none());
  auto ck = nmt::to_checkpoint(model, &adam, 1234, vocab);
  return ck;
}

TEST(Checkpoint, SaveLoadRoundTripIsBitExact) {
  const auto vocab = vocab_of({"ab", "cd"});
  const auto ck = sample_checkpoint(vocab);
  const auto dir = testing::scratch_dir("ckpt_roundtrip");
  save_checkpoint(ck, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_TRUE(same_state(ck, back));
  EXPECT_EQ(back.step, 1234);
  EXPECT_EQ(back.metadata, ck.metadata);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ck));
}

TEST(Checkpoint, TruncationIsLoadError) {
  const auto bytes = serialize_checkpoint(sample_checkpoint(vocab_of({"ab"})));
  for (std::size_t cut : {std::size_t{1}, std::size_t{8}, std::size_t{100}, bytes.size() - 10}) {
    EXPECT_THROW(parse_checkpoint(std::string_view(bytes).substr(0, bytes.size() - cut)), LoadError) << cut;
  }
}

TEST(Checkpoint, FlippedPayloadByteIsChecksumError) {
  auto bytes = serialize_checkpoint(sample_checkpoint(vocab_of({"ab"})));
  bytes[bytes.size() - 20] ^= 0x01;
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Checkpoint, UnknownVersionIsLoadError) {
  auto bytes = serialize_checkpoint(sample_checkpoint(vocab_of({"ab"})));
  const auto at = bytes.find("\"format_version\":1");
  ASSERT_NE(at, std::string::npos);
  bytes[at + std::string("\"format_version\":").size()] = '7';
  EXPECT_THROW(parse_checkpoint(bytes), LoadError);
}

TEST(Checkpoint, BadMagicIsLoadError) { EXPECT_THROW(parse_checkpoint("not a checkpoint at all"), LoadError); }

TEST(Checkpoint, NonFiniteValuesAreRejectedOnSave) {
  auto ck = sample_checkpoint(vocab_of({"ab"}));
  ck.tensors.begin()->second.data[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(serialize_checkpoint(ck), ValidationError);
  auto inf = sample_checkpoint(vocab_of({"ab"}));
  inf.optimizer_state.begin()->second[1].data[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(serialize_checkpoint(inf), ValidationError);
}

TEST(Checkpoint, EmbeddingRowsMustMatchVocabularySize) {
  auto ck = sample_checkpoint(vocab_of({"ab"}));
  ck.metadata["vocab_size"] = 3;
  EXPECT_THROW(ck.validate(), ValidationError);
}

TEST(Checkpoint, HeaderIsLittleEndianJson) {
  const auto bytes = serialize_checkpoint(sample_checkpoint(vocab_of({"ab"})));
  ASSERT_EQ(bytes.substr(0, 8), "NMTRCKPT");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  EXPECT_EQ(header["format_version"], 1);
  EXPECT_EQ(header["step"], 1234);
}

TEST(Transfer, DirectWithoutResetsIsVerbatim) {
  const auto ck = sample_checkpoint(vocab_of({"ab"}));
  const auto child = transfer_init(ck, {TransferMode::kDirect, std::nullopt, false, false});
  EXPECT_TRUE(same_state(child, ck));
  EXPECT_EQ(child.metadata, ck.metadata);
  EXPECT_EQ(serialize_checkpoint(child), serialize_checkpoint(ck));
}

TEST(Transfer, ResetFlags) {
  const auto ck = sample_checkpoint(vocab_of({"ab"}));
  const auto child = transfer_init(ck, {TransferMode::kDirect, std::nullopt, true, true});
  EXPECT_EQ(child.step, 0);
  EXPECT_TRUE(child.optimizer_state.empty());
  for (const auto& [name, t] : ck.tensors) EXPECT_TRUE(bitwise_equal(t, child.tensors.at(name)));
}

TEST(Transfer, IdentityMappingIsVerbatimTensors) {
  const auto v = vocab_of({"ab", "cd"});
  const auto ck = sample_checkpoint(v);
  const auto m = transform_vocabulary(v, v, AssignStrategy::kOrdered);
  const auto child = transfer_init(ck, {TransferMode::kTransformed, m, false, false});
  EXPECT_TRUE(same_state(child, ck));
  EXPECT_EQ(child.metadata["vocab_hash"], v.hash());
}

TEST(Transfer, TracedExampleKeepsRowsAndUpdatesHash) {
  const auto parent = vocab_of({"a", "b", "c", "d"});
  const auto child_vocab = vocab_of({"b", "e", "c", "f"});
  const auto ck = sample_checkpoint(parent);
  const auto m = transform_vocabulary(parent, child_vocab, AssignStrategy::kOrdered);
  const auto child = transfer_init(ck, {TransferMode::kTransformed, m, false, false});
  EXPECT_TRUE(same_state(child, ck));
  EXPECT_EQ(child.metadata["vocab_hash"], m.transformed.hash());
  EXPECT_EQ(child.metadata["parent_vocab_hash"], parent.hash());
  // Shared subwords retrieve the same embedding through either vocabulary.
  for (const std::string s : {"b", "c", "\\", "7"}) {
    const auto a = embedding_row(ck, parent, s);
    const auto b = embedding_row(child, m.transformed, s);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << s;
  }
  // Child-only "e" sits in the slot "a" used to occupy.
  const auto a = embedding_row(ck, parent, "a");
  const auto e = embedding_row(child, m.transformed, "e");
  EXPECT_TRUE(std::equal(a.begin(), a.end(), e.begin(), e.end()));
}

TEST(Transfer, EmbeddingPreservationOverRandomVocabularies) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> pbody, cbody;
    for (int i = 0; i < 30; ++i) {
      pbody.push_back("w" + std::to_string(rng.below(60)));
      cbody.push_back("w" + std::to_string(rng.below(60)));
    }
    std::sort(pbody.begin(), pbody.end());
    pbody.erase(std::unique(pbody.begin(), pbody.end()), pbody.end());
    std::sort(cbody.begin(), cbody.end());
    cbody.erase(std::unique(cbody.begin(), cbody.end()), cbody.end());
    while (cbody.size() < pbody.size()) cbody.push_back("<pad_" + std::to_string(cbody.size()) + ">");
    while (pbody.size() < cbody.size()) pbody.push_back("<pad_" + std::to_string(pbody.size()) + ">");
    auto pe = mandatory_entries();
    auto ce = mandatory_entries();
    pe.insert(pe.end(), pbody.begin(), pbody.end());
    ce.insert(ce.end(), cbody.begin(), cbody.end());
    const Vocabulary parent(pe), child_vocab(ce);
    const auto ck = sample_checkpoint(parent, static_cast<std::uint64_t>(trial));
    const auto m = transform_vocabulary(parent, child_vocab, AssignStrategy::kRandom, 3);
    const auto child = transfer_init(ck, {TransferMode::kTransformed, m, false, false});
    EXPECT_TRUE(same_state(child, ck));
    for (const auto& s : parent.entries()) {
      if (!child_vocab.contains(s)) continue;
      const auto a = embedding_row(ck, parent, s);
      const auto b = embedding_row(child, m.transformed, s);
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << s;
    }
  }
}

TEST(Transfer, TransformedNeedsMatchingMapping) {
  const auto ck = sample_checkpoint(vocab_of({"ab"}));
  EXPECT_THROW(transfer_init(ck, {TransferMode::kTransformed, std::nullopt, false, false}), TransferError);
  const auto big = vocab_of({"ab", "cd", "ef"});
  const auto m = transform_vocabulary(big, big, AssignStrategy::kOrdered);
  EXPECT_THROW(transfer_init(ck, {TransferMode::kTransformed, m, false, false}), TransferError);
}

}  // namespace
}  // namespace recycle
