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

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recycle/checkpoint.hpp"
#include "recycle/corpus_stats.hpp"
#include "recycle/error.hpp"
#include "recycle/eval.hpp"
#include "recycle/nmt/config.hpp"
#include "recycle/nmt/model.hpp"
#include "recycle/nmt/optim.hpp"
#include "recycle/rng.hpp"
#include "recycle/vocab.hpp"

namespace recycle::nmt {

struct TrajectoryPoint {
  int step = 0;                  // updates applied in this run
  std::int64_t global_step = 0;  // optimizer step counter (carried across transfer)
  double bleu = 0.0;             // dev BLEU
  double loss = 0.0;             // dev per-token cross entropy
  double accuracy = 0.0;         // dev token accuracy under teacher forcing
  double lr = 0.0;               // learning rate of the most recent update

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

// True iff the run has reached min_steps and the best dev BLEU inside the
// most recent ceil(window_frac * n) evaluations does not exceed the best
// BLEU before that window by more than rel_threshold (relative).
inline bool early_stop(std::span<const TrajectoryPoint> trajectory, double rel_threshold, double window_frac,
                       int min_steps) {
  if (trajectory.empty() || trajectory.back().step < min_steps) return false;
  const std::size_t n = trajectory.size();
  const auto window = static_cast<std::size_t>(std::ceil(window_frac * static_cast<double>(n)));
  if (window >= n) return false;  // nothing before the window to compare with
  double before = trajectory.front().bleu;
  for (std::size_t i = 0; i < n - window; ++i) before = std::max(before, trajectory[i].bleu);
  double recent = trajectory[n - window].bleu;
  for (std::size_t i = n - window; i < n; ++i) recent = std::max(recent, trajectory[i].bleu);
  return recent <= before * (1.0 + rel_threshold);
}

inline std::string trajectory_tsv(std::span<const TrajectoryPoint> trajectory) {
  std::string out = "step\tglobal_step\tbleu\tloss\taccuracy\tlr\n";
  char buf[256];
  for (const auto& p : trajectory) {
    std::snprintf(buf, sizeof(buf), "%d\t%lld\t%.4f\t%.6f\t%.6f\t%.9g\n", p.step,
                  static_cast<long long>(p.global_step), p.bleu, p.loss, p.accuracy, p.lr);
    out += buf;
  }
  return out;
}

inline constexpr double kLabelSmoothing = 0.1;

// Copies model parameters (and optionally Adam moments) into a checkpoint.
template <typename T>
Checkpoint to_checkpoint(const Transformer<T>& model, const Adam<T>* adam, std::int64_t step,
                         const Vocabulary& vocab) {
  Checkpoint ck;
  ck.step = step;
  auto to_tensor = [](const Mat<T>& m) {
    Tensor t;
    t.shape = {m.rows(), m.cols()};
    t.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
    return t;
  };
  const auto& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    ck.tensors[p.name(i)] = to_tensor(p[i]);
    if (adam) ck.optimizer_state[p.name(i)] = {to_tensor(adam->first_moment()[i]), to_tensor(adam->second_moment()[i])};
  }
  ck.metadata = {{"vocab_hash", vocab.hash()},
                 {"vocab_size", vocab.size()},
                 {"model", to_json(model.config())},
                 {"optimizer", adam ? adam->config().to_json() : AdamConfig{}.to_json()}};
  return ck;
}

template <typename T>
void copy_tensor(const Tensor& t, Mat<T>& m, const std::string& name) {
  if (t.shape.size() != 2 || t.shape[0] != m.rows() || t.shape[1] != m.cols()) {
    throw ConfigError("checkpoint tensor " + name + " has the wrong shape for this model");
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(t.data[static_cast<std::size_t>(i)]);
}

template <typename T>
void load_parameters(Transformer<T>& model, const Checkpoint& ck) {
  auto& p = model.params();
  if (ck.tensors.size() != p.size()) throw ConfigError("checkpoint does not match the model architecture");
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto it = ck.tensors.find(p.name(i));
    if (it == ck.tensors.end()) throw ConfigError("checkpoint lacks parameter " + p.name(i));
    copy_tensor(it->second, p[i], p.name(i));
  }
}

inline ModelConfig model_config_of(const Checkpoint& ck) {
  if (!ck.metadata.contains("model")) throw ConfigError("checkpoint has no model config");
  return model_config_from_json(ck.metadata["model"]);
}

inline std::vector<Example> encode_pairs(std::span<const SentencePair> pairs, const Vocabulary& vocab) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({vocab.encode(p.source), vocab.encode(p.target)});
  return out;
}

inline std::vector<std::string> translate_with(const Transformer<float>& model, const Vocabulary& vocab,
                                               std::span<const std::string> sentences, int beam, int max_output_len) {
  std::vector<std::vector<TokenId>> sources;
  sources.reserve(sentences.size());
  for (const auto& s : sentences) sources.push_back(vocab.encode(s));
  std::vector<std::string> out;
  for (const auto& ids : model.decode(sources, beam, max_output_len)) out.push_back(vocab.detokenize(ids));
  return out;
}

// Greedy decoding for beam == 1, beam search otherwise.
inline std::vector<std::string> translate(const Checkpoint& ck, const Vocabulary& vocab,
                                          std::span<const std::string> sentences, int beam = 1,
                                          int max_output_len = 0) {
  Transformer<float> model(model_config_of(ck));
  if (static_cast<std::size_t>(model.config().vocab_size) != vocab.size()) {
    throw ConfigError("vocabulary size does not match the checkpoint");
  }
  load_parameters(model, ck);
  return translate_with(model, vocab, sentences, beam, max_output_len > 0 ? max_output_len : model.config().max_len);
}

struct TrainResult {
  Checkpoint best;  // checkpoint with the highest dev BLEU (earliest on ties)
  Checkpoint last;
  std::vector<TrajectoryPoint> trajectory;
  int best_step = 0;
  double best_bleu = 0.0;
  double first_lr = 0.0;  // learning rate applied by the first update
  bool early_stopped = false;
  std::size_t train_pairs_used = 0;
  std::size_t train_pairs_filtered = 0;
};

// Carries the last finite checkpoint of a run that diverged.
struct TrainingAborted : TrainingError {
  TrainingAborted(const std::string& what, Checkpoint diagnostic)
      : TrainingError(what), checkpoint(std::move(diagnostic)) {}
  Checkpoint checkpoint;
};

struct TrainOptions {
  std::function<void(const TrajectoryPoint&)> on_eval;  // progress hook, may be empty
};

// Trains from `init` (or a fresh model seeded with model_cfg.seed) with Adam,
// the warm-up/rsqrt schedule, label smoothing 0.1 and token-budget batches.
// The dev set is evaluated before the first update and every eval_every
// updates; the run ends at max_steps or when early_stop fires.
inline TrainResult train(const std::optional<Checkpoint>& init, std::span<const SentencePair> train_pairs,
                         std::span<const SentencePair> dev_pairs, const Vocabulary& vocab, ModelConfig model_cfg,
                         const TrainConfig& cfg, const FreezeMask& freeze, const TrainOptions& options = {}) {
  cfg.validate();
  if (init) {
    const std::uint64_t seed = model_cfg.seed;
    const double dropout = model_cfg.dropout;
    const int max_len = model_cfg.max_len;
    model_cfg = model_config_of(*init);
    model_cfg.seed = seed;
    model_cfg.dropout = dropout;
    model_cfg.max_len = max_len;  // positions are not parameters
    if (init->metadata.value("vocab_hash", "") != vocab.hash()) {
      throw ConfigError("checkpoint was trained with a different vocabulary (hash mismatch)");
    }
  }
  model_cfg.validate();
  if (static_cast<std::size_t>(model_cfg.vocab_size) != vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(model_cfg.vocab_size) + " does not match vocabulary size " +
                      std::to_string(vocab.size()));
  }
  if (cfg.length_limit + 1 > model_cfg.max_len) {
    throw ConfigError("length_limit + 1 must not exceed max_len");
  }
  if (dev_pairs.empty()) throw DataError("empty development set");

  Transformer<float> model(model_cfg);
  Adam<float> adam(model.params());
  std::int64_t global_step = 0;
  if (init) {
    load_parameters(model, *init);
    global_step = init->step;
    const bool same_optimizer = init->metadata.contains("optimizer") &&
                                init->metadata["optimizer"] == adam.config().to_json();
    if (!init->optimizer_state.empty() && same_optimizer) {
      for (std::size_t i = 0; i < model.params().size(); ++i) {
        const auto& name = model.params().name(i);
        const auto& moments = init->optimizer_state.at(name);
        copy_tensor(moments.at(0), adam.first_moment()[i], name);
        copy_tensor(moments.at(1), adam.second_moment()[i], name);
      }
    } else if (!init->optimizer_state.empty()) {
      std::cerr << "warning: checkpoint optimizer differs from adam" << " (" << init->metadata.value("optimizer", nlohmann::json{}).dump()
                << "); resetting moments\n";
    }
  } else {
    model.init_random(model_cfg.seed);
  }

  const auto kept = filter_long(train_pairs, vocab, static_cast<std::size_t>(cfg.length_limit));
  if (kept.empty()) throw DataError("no training pairs left after length filtering");
  const auto examples = encode_pairs(kept, vocab);
  // Dev loss over pairs within the length limit; dev BLEU over all of them.
  const auto dev_kept = filter_long(dev_pairs, vocab, static_cast<std::size_t>(cfg.length_limit));
  if (dev_kept.empty()) throw DataError("no dev pairs left after length filtering");
  const auto dev_examples = encode_pairs(dev_kept, vocab);
  std::vector<std::string> dev_sources, dev_refs;
  for (const auto& p : dev_pairs) {
    dev_sources.push_back(p.source);
    dev_refs.push_back(p.target);
  }

  TrainResult result;
  result.train_pairs_used = kept.size();
  result.train_pairs_filtered = train_pairs.size() - kept.size();
  double last_lr = 0.0;

  auto evaluate = [&](int step) {
    TrajectoryPoint pt;
    pt.step = step;
    pt.global_step = global_step;
    pt.lr = last_lr;
    const std::size_t chunk = 64;
    LossResult total;
    for (std::size_t i = 0; i < dev_examples.size(); i += chunk) {
      const auto part = std::span<const Example>(dev_examples).subspan(i, std::min(chunk, dev_examples.size() - i));
      const auto r = model.forward(part, {}, nullptr);
      total.nll_sum += r.nll_sum;
      total.tokens += r.tokens;
      total.correct += r.correct;
    }
    pt.loss = total.mean_nll();
    pt.accuracy = total.accuracy();
    const auto hyps = translate_with(model, vocab, dev_sources, 1, cfg.length_limit + 1);
    pt.bleu = bleu(hyps, dev_refs).score;
    result.trajectory.push_back(pt);
    if (options.on_eval) options.on_eval(pt);
    if (result.trajectory.size() == 1 || pt.bleu > result.best_bleu) {
      result.best_bleu = pt.bleu;
      result.best_step = step;
      result.best = to_checkpoint(model, &adam, global_step, vocab);
    }
  };

  ParamStore<float> grads = model.params().zeros_like();
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  auto next_batch = [&]() {
    std::vector<Example> batch;
    std::size_t tokens = 0;
    while (true) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(model_cfg.seed, epoch++));
        rng.shuffle(order);
        cursor = 0;
      }
      const Example& ex = examples[order[cursor]];
      const std::size_t cost = std::max(ex.source.size(), ex.target.size()) + 1;
      if (!batch.empty() && tokens + cost > static_cast<std::size_t>(cfg.batch_tokens)) break;
      batch.push_back(ex);
      tokens += cost;
      ++cursor;
    }
    return batch;
  };

  evaluate(0);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    ++global_step;
    last_lr = lr_schedule(global_step, cfg.base_lr, cfg.warmup_steps);
    if (step == 1) result.first_lr = last_lr;
    const auto batch = next_batch();
    if (!freeze.all_frozen()) {
      grads.set_zero();
      Rng dropout_rng(derive_seed(model_cfg.seed ^ 0x5eedULL, static_cast<std::uint64_t>(global_step)));
      const auto r = model.forward(batch, {kLabelSmoothing, model_cfg.dropout > 0 ? &dropout_rng : nullptr}, &grads);
      if (!std::isfinite(r.loss_sum)) {
        throw TrainingAborted("non-finite training loss at step " + std::to_string(step),
                              to_checkpoint(model, &adam, global_step - 1, vocab));
      }
      adam.update(model.params(), grads, last_lr, global_step, freeze);
    }
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      evaluate(step);
      if (early_stop(result.trajectory, cfg.stop_rel_threshold, cfg.stop_window_frac, cfg.min_steps)) {
        result.early_stopped = true;
        break;
      }
    }
  }
  result.last = to_checkpoint(model, &adam, global_step, vocab);
  return result;
}

}  // namespace recycle::nmt
