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

#include "recycle/nmt/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "recycle/nmt/optim.hpp"

namespace recycle::nmt {
namespace {

ModelConfig micro_config(bool shared = true) {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.vocab_size = 20;
  c.max_len = 16;
  c.dropout = 0.0;
  c.share_embeddings = shared;
  return c;
}

std::vector<Example> micro_batch() {
  return {{{3, 4, 5, 6}, {7, 8, 9}}, {{10, 11}, {12, 13, 14, 15, 16}}};
}

// Central differences on every scalar of every parameter.
void check_gradients(bool shared) {
  Transformer<double> model(micro_config(shared));
  model.init_random(7);
  const auto batch = micro_batch();
  ForwardOptions opt;
  opt.label_smoothing = 0.1;
  auto grads = model.params().zeros_like();
  model.forward(batch, opt, &grads);

  auto& params = model.params();
  const double h = 1e-5;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<double> numeric(params[i].rows(), params[i].cols());
    for (Eigen::Index k = 0; k < params[i].size(); ++k) {
      double& x = params[i].data()[k];
      const double orig = x;
      x = orig + h;
      const double up = model.forward(batch, opt, nullptr).mean_loss();
      x = orig - h;
      const double down = model.forward(batch, opt, nullptr).mean_loss();
      x = orig;
      numeric.data()[k] = (up - down) / (2 * h);
    }
    const double diff = (numeric - grads[i]).norm();
    // Key biases have an exactly zero gradient (softmax shift invariance), so
    // the denominator gets an absolute floor.
    const double scale = std::max(numeric.norm() + grads[i].norm(), 1e-6);
    EXPECT_LE(diff / scale, 1e-3) << params.name(i);
  }
}

TEST(Transformer, GradientsMatchFiniteDifferencesSharedEmbeddings) { check_gradients(true); }

TEST(Transformer, GradientsMatchFiniteDifferencesSeparateEmbeddings) { check_gradients(false); }

TEST(Transformer, ParametersPartitionIntoComponents) {
  for (bool shared : {true, false}) {
    Transformer<float> model(micro_config(shared));
    std::array<std::size_t, 4> per_component{};
    std::set<std::string> seen;
    const auto& p = model.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_TRUE(seen.insert(p.name(i)).second);
      per_component[static_cast<std::size_t>(component_of(p.name(i)))] += static_cast<std::size_t>(p[i].size());
    }
    EXPECT_EQ(per_component[0] + per_component[1] + per_component[2] + per_component[3], p.scalar_count());
    for (auto n : per_component) EXPECT_GT(n, 0u);
  }
}

TEST(Transformer, ComponentNames) {
  EXPECT_EQ(component_of("embed"), Component::kEmbeddings);
  EXPECT_EQ(component_of("embed_src"), Component::kEmbeddings);
  EXPECT_EQ(component_of("enc.0.self_attn.q.w"), Component::kAttention);
  EXPECT_EQ(component_of("dec.1.cross_attn.o.b"), Component::kAttention);
  EXPECT_EQ(component_of("enc.0.ffn.1.w"), Component::kEncoder);
  EXPECT_EQ(component_of("dec.ln_f.g"), Component::kDecoder);
}

TEST(Transformer, LossWithoutDropoutIsDeterministic) {
  Transformer<float> model(micro_config());
  model.init_random(1);
  const auto batch = micro_batch();
  const auto a = model.forward(batch, {}, nullptr);
  const auto b = model.forward(batch, {}, nullptr);
  EXPECT_EQ(a.loss_sum, b.loss_sum);
  EXPECT_EQ(a.tokens, 10u);  // 3 + 5 targets, each with end-of-sequence
  // Untrained model: loss close to log(V).
  EXPECT_NEAR(a.mean_nll(), std::log(20.0), 1.5);
}

TEST(Transformer, DropoutIsSeededAndChangesLoss) {
  auto cfg = micro_config();
  cfg.dropout = 0.3;
  Transformer<float> model(cfg);
  model.init_random(1);
  const auto batch = micro_batch();
  Rng r1(5), r2(5);
  ForwardOptions o1, o2;
  o1.dropout_rng = &r1;
  o2.dropout_rng = &r2;
  const auto a = model.forward(batch, o1, nullptr);
  const auto b = model.forward(batch, o2, nullptr);
  EXPECT_EQ(a.loss_sum, b.loss_sum);
  EXPECT_NE(a.loss_sum, model.forward(batch, {}, nullptr).loss_sum);
}

TEST(Transformer, FloatAndDoubleAgree) {
  Transformer<float> f(micro_config());
  Transformer<double> d(micro_config());
  f.init_random(3);
  d.init_random(3);
  const auto batch = micro_batch();
  EXPECT_NEAR(f.forward(batch, {}, nullptr).mean_loss(), d.forward(batch, {}, nullptr).mean_loss(), 1e-4);
}

TEST(Transformer, OverlongSequenceIsRejected) {
  Transformer<float> model(micro_config());
  model.init_random(1);
  const std::vector<Example> batch = {{std::vector<TokenId>(16, 3), {4}}};
  EXPECT_THROW(model.forward(batch, {}, nullptr), DataError);
}

TEST(Transformer, OutOfRangeTokenIsRejected) {
  Transformer<float> model(micro_config());
  const std::vector<Example> batch = {{{25}, {4}}};
  EXPECT_THROW(model.forward(batch, {}, nullptr), DataError);
}

TEST(Decode, GreedyAgreesWithTeacherForcedArgmax) {
  // Feeding the greedy output back as the target, every position's argmax
  // must reproduce it, including the final end-of-sequence when emitted.
  Transformer<double> model(micro_config());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model.init_random(seed);
    const std::vector<std::vector<TokenId>> sources = {{3, 4, 5}, {6}, {}};
    const auto out = model.decode(sources, 1, 10);
    ASSERT_EQ(out.size(), sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const std::vector<Example> one = {{sources[i], out[i]}};
      const auto r = model.forward(one, {}, nullptr);
      if (out[i].size() < 10) {
        EXPECT_EQ(r.correct, r.tokens) << "seed " << seed << " sentence " << i;
      } else {
        EXPECT_GE(r.correct + 1, r.tokens);
      }
    }
  }
}

TEST(Decode, DeterministicAndBatchIndependent) {
  Transformer<float> model(micro_config());
  model.init_random(11);
  const std::vector<std::vector<TokenId>> sources = {{3, 4, 5}, {6, 7}, {8}};
  const auto all = model.decode(sources, 1, 12);
  EXPECT_EQ(all, model.decode(sources, 1, 12));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::vector<std::vector<TokenId>> one = {sources[i]};
    EXPECT_EQ(model.decode(one, 1, 12)[0], all[i]);
  }
}

TEST(Decode, BeamOutputsAreWellFormed) {
  Transformer<double> model(micro_config());
  const std::vector<std::vector<TokenId>> sources = {{3, 4, 5}, {9, 9}};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    model.init_random(seed);
    const auto beam = model.decode(sources, 4, 8);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      for (auto t : beam[i]) {
        EXPECT_GE(t, 0);
        EXPECT_LT(t, 20);
      }
      EXPECT_LE(beam[i].size(), 8u);
    }
  }
}

TEST(Decode, NeverEmitsReservedIdsInsideOutput) {
  Transformer<float> model(micro_config());
  model.init_random(2);
  const std::vector<std::vector<TokenId>> sources = {{3, 4}, {5}};
  for (const auto& out : model.decode(sources, 1, 10)) {
    for (auto t : out) EXPECT_NE(t, kEosId);
  }
}

TEST(Schedule, ClosedForm) {
  const double base = 0.05;
  const std::int64_t w = 400;
  for (std::int64_t s : {1, 2, 50, 399, 400, 401, 1000, 123456}) {
    const double expected =
        s < w ? base * static_cast<double>(s) / static_cast<double>(w) / std::sqrt(static_cast<double>(w))
              : base / std::sqrt(static_cast<double>(s));
    EXPECT_NEAR(lr_schedule(s, base, w), expected, 1e-12) << s;
  }
}

TEST(Adam, FrozenParametersAreUntouched) {
  Transformer<float> model(micro_config());
  model.init_random(4);
  const auto before = model.params();
  auto grads = model.params().zeros_like();
  model.forward(micro_batch(), {}, &grads);
  Adam<float> adam(model.params());
  const auto mask = FreezeMask::only(Component::kAttention);
  adam.update(model.params(), grads, 1e-2, 1, mask);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool same = before[i] == model.params()[i];
    EXPECT_EQ(same, mask.is_frozen(before.name(i))) << before.name(i);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps') per scalar.
  ParamStore<double> p;
  p.add("enc.x.w", 1, 3);
  p[0] << 1.0, 2.0, 3.0;
  auto g = p.zeros_like();
  g[0] << 0.5, -2.0, 0.0;
  Adam<double> adam(p);
  adam.update(p, g, 0.1, 1, FreezeMask::none());
  EXPECT_NEAR(p[0](0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p[0](0, 1), 2.1, 1e-6);
  EXPECT_NEAR(p[0](0, 2), 3.0, 1e-12);
}

}  // namespace
}  // namespace recycle::nmt
