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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "recycle/nmt/config.hpp"
#include "recycle/nmt/layers.hpp"
#include "recycle/rng.hpp"
#include "recycle/vocab.hpp"

namespace recycle::nmt {

// One training pair in token ids, without the end-of-sequence symbol.
struct Example {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

struct LossResult {
  double loss_sum = 0.0;       // summed per-token loss (label-smoothed when requested)
  double nll_sum = 0.0;        // summed per-token negative log-likelihood
  std::size_t tokens = 0;
  std::size_t correct = 0;     // argmax hits under teacher forcing

  double mean_loss() const { return tokens ? loss_sum / static_cast<double>(tokens) : 0.0; }
  double mean_nll() const { return tokens ? nll_sum / static_cast<double>(tokens) : 0.0; }
  double accuracy() const { return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0; }
};

struct ForwardOptions {
  double label_smoothing = 0.0;
  Rng* dropout_rng = nullptr;  // dropout is active iff set
};

// Pre-norm transformer encoder-decoder with sinusoidal positions and an
// embedding table shared between encoder input, decoder input and the output
// projection (a separate source table when share_embeddings is off).
template <typename T>
class Transformer {
 public:
  explicit Transformer(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const Eigen::Index d = cfg_.d_model;
    const Eigen::Index v = cfg_.vocab_size;
    embed_ = params_.add("embed", v, d);
    embed_src_ = cfg_.share_embeddings ? embed_ : params_.add("embed_src", v, d);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "enc." + std::to_string(l) + ".";
      EncoderRefs e;
      e.ln1 = add_norm(p + "ln1");
      e.attn = add_attention(p + "self_attn");
      e.ln2 = add_norm(p + "ln2");
      e.ff1 = add_linear(p + "ffn.1", d, cfg_.ffn_dim);
      e.ff2 = add_linear(p + "ffn.2", cfg_.ffn_dim, d);
      enc_.push_back(e);
    }
    enc_norm_ = add_norm("enc.ln_f");
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "dec." + std::to_string(l) + ".";
      DecoderRefs r;
      r.ln1 = add_norm(p + "ln1");
      r.self = add_attention(p + "self_attn");
      r.ln2 = add_norm(p + "ln2");
      r.cross = add_attention(p + "cross_attn");
      r.ln3 = add_norm(p + "ln3");
      r.ff1 = add_linear(p + "ffn.1", d, cfg_.ffn_dim);
      r.ff2 = add_linear(p + "ffn.2", cfg_.ffn_dim, d);
      dec_.push_back(r);
    }
    dec_norm_ = add_norm("dec.ln_f");
    positions_ = ops::sinusoidal_positions<T>(cfg_.max_len, d);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Embeddings ~ N(0, d^-1/2); projections Glorot-normal; norms at identity.
  void init_random(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& n = params_.name(i);
      Mat<T>& m = params_[i];
      double stddev = 0.0;
      if (n.starts_with("embed")) {
        stddev = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
      } else if (n.ends_with(".w")) {
        stddev = std::sqrt(2.0 / static_cast<double>(m.rows() + m.cols()));
      }
      if (n.ends_with(".g")) {
        m.setOnes();
      } else if (stddev > 0.0) {
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(rng.normal() * stddev);
      } else {
        m.setZero();
      }
    }
  }

  // Teacher-forced loss over a batch. When `grads` is given, the gradient of
  // the mean per-token loss is accumulated into it.
  LossResult forward(std::span<const Example> batch, const ForwardOptions& opt, ParamStore<T>* grads) const {
    const Eigen::Index d = cfg_.d_model;
    const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
    std::vector<Span> src_spans, tgt_spans;
    std::vector<TokenId> src_ids, dec_ids, labels;
    std::vector<Eigen::Index> src_pos, tgt_pos;
    for (const auto& ex : batch) {
      const auto sl = static_cast<Eigen::Index>(ex.source.size()) + 1;
      const auto tl = static_cast<Eigen::Index>(ex.target.size()) + 1;
      if (sl > cfg_.max_len || tl > cfg_.max_len) {
        throw DataError("sequence of length " + std::to_string(std::max(sl, tl)) + " exceeds max_len " +
                        std::to_string(cfg_.max_len));
      }
      src_spans.push_back({static_cast<Eigen::Index>(src_ids.size()), sl});
      tgt_spans.push_back({static_cast<Eigen::Index>(dec_ids.size()), tl});
      for (Eigen::Index i = 0; i < sl; ++i) {
        src_ids.push_back(i + 1 < sl ? ex.source[static_cast<std::size_t>(i)] : kEosId);
        src_pos.push_back(i);
      }
      for (Eigen::Index i = 0; i < tl; ++i) {
        dec_ids.push_back(i == 0 ? kEosId : ex.target[static_cast<std::size_t>(i - 1)]);
        labels.push_back(i + 1 < tl ? ex.target[static_cast<std::size_t>(i)] : kEosId);
        tgt_pos.push_back(i);
      }
    }
    check_ids(src_ids);
    check_ids(dec_ids);
    const bool train = grads != nullptr;
    const double rate = opt.dropout_rng ? cfg_.dropout : 0.0;

    // Encoder.
    Mat<T> x = embed(src_ids, src_pos, params_[embed_src_], emb_scale);
    Mat<T> src_drop = ops::dropout_mask<T>(x.rows(), d, rate, opt.dropout_rng);
    ops::apply_mask(x, src_drop);
    std::vector<EncoderCache> ec(train ? enc_.size() : 0);
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      EncoderCache* c = train ? &ec[l] : nullptr;
      const auto& r = enc_[l];
      Mat<T> h = ops::layer_norm(x, params_, r.ln1, c ? &c->ln1 : nullptr);
      Mat<T> a = ops::attention(h, h, src_spans, src_spans, false, cfg_.n_heads, params_, r.attn,
                                c ? &c->attn : nullptr);
      Mat<T> m1 = ops::dropout_mask<T>(a.rows(), d, rate, opt.dropout_rng);
      ops::apply_mask(a, m1);
      x += a;
      Mat<T> h2 = ops::layer_norm(x, params_, r.ln2, c ? &c->ln2 : nullptr);
      Mat<T> hidden = ops::linear(h2, params_, r.ff1).cwiseMax(T(0));
      Mat<T> f = ops::linear(hidden, params_, r.ff2);
      Mat<T> m2 = ops::dropout_mask<T>(f.rows(), d, rate, opt.dropout_rng);
      ops::apply_mask(f, m2);
      x += f;
      if (c) {
        c->drop1 = std::move(m1);
        c->drop2 = std::move(m2);
        c->ff_in = std::move(h2);
        c->hidden = std::move(hidden);
      }
    }
    ops::NormCache<T> enc_norm_cache;
    const Mat<T> memory = ops::layer_norm(x, params_, enc_norm_, train ? &enc_norm_cache : nullptr);

    // Decoder.
    Mat<T> y = embed(dec_ids, tgt_pos, params_[embed_], emb_scale);
    Mat<T> tgt_drop = ops::dropout_mask<T>(y.rows(), d, rate, opt.dropout_rng);
    ops::apply_mask(y, tgt_drop);
    std::vector<DecoderCache> dc(train ? dec_.size() : 0);
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      DecoderCache* c = train ? &dc[l] : nullptr;
      const auto& r = dec_[l];
      Mat<T> h = ops::layer_norm(y, params_, r.ln1, c ? &c->ln1 : nullptr);
      Mat<T> a = ops::attention(h, h, tgt_spans, tgt_spans, true, cfg_.n_heads, params_, r.self,
                                c ? &c->self : nullptr);
      Mat<T> m1 = ops::dropout_mask<T>(a.rows(), d, rate, opt.dropout_rng);
      ops::apply_mask(a, m1);
      y += a;
      Mat<T> h2 = ops::layer_norm(y, params_, r.ln2, c ? &c->ln2 : nullptr);
      Mat<T> b = ops::attention(h2, memory, tgt_spans, src_spans, false, cfg_.n_heads, params_, r.cross,
                                c ? &c->cross : nullptr);
      Mat<T> m2 = ops::dropout_mask<T>(b.rows(), d, rate, opt.dropout_rng);
      ops::apply_mask(b, m2);
      y += b;
      Mat<T> h3 = ops::layer_norm(y, params_, r.ln3, c ? &c->ln3 : nullptr);
      Mat<T> hidden = ops::linear(h3, params_, r.ff1).cwiseMax(T(0));
      Mat<T> f = ops::linear(hidden, params_, r.ff2);
      Mat<T> m3 = ops::dropout_mask<T>(f.rows(), d, rate, opt.dropout_rng);
      ops::apply_mask(f, m3);
      y += f;
      if (c) {
        c->drop1 = std::move(m1);
        c->drop2 = std::move(m2);
        c->drop3 = std::move(m3);
        c->ff_in = std::move(h3);
        c->hidden = std::move(hidden);
      }
    }
    ops::NormCache<T> dec_norm_cache;
    const Mat<T> out = ops::layer_norm(y, params_, dec_norm_, train ? &dec_norm_cache : nullptr);
    Mat<T> logits = out * params_[embed_].transpose();

    // Loss: cross entropy against (1 - eps) one-hot + eps / V uniform.
    LossResult res;
    const auto n_tok = static_cast<Eigen::Index>(labels.size());
    const double eps = opt.label_smoothing;
    const double vocab = static_cast<double>(cfg_.vocab_size);
    res.tokens = labels.size();
    for (Eigen::Index i = 0; i < n_tok; ++i) {
      auto row = logits.row(i);
      Eigen::Index arg = 0;
      const T mx = row.maxCoeff(&arg);
      const double lse = static_cast<double>(mx) + std::log(static_cast<double>((row.array() - mx).exp().sum()));
      const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
      const double nll = lse - static_cast<double>(row(label));
      const double mean_nll_all = lse - static_cast<double>(row.sum()) / vocab;
      res.nll_sum += nll;
      res.loss_sum += (1.0 - eps) * nll + eps * mean_nll_all;
      if (arg == label) ++res.correct;
      if (train) {
        row = (row.array() - static_cast<T>(lse)).exp();
        row.array() -= static_cast<T>(eps / vocab);
        row(label) -= static_cast<T>(1.0 - eps);
        row /= static_cast<T>(n_tok);
      }
    }
    if (!train) return res;

    ParamStore<T>& g = *grads;
    // logits now hold d loss / d logits.
    g[embed_].noalias() += logits.transpose() * out;
    Mat<T> dy = ops::layer_norm_backward<T>(logits * params_[embed_], dec_norm_cache, params_, g, dec_norm_);
    Mat<T> dmemory = Mat<T>::Zero(memory.rows(), d);
    for (std::size_t l = dec_.size(); l-- > 0;) {
      const auto& r = dec_[l];
      const auto& c = dc[l];
      Mat<T> df = dy;
      ops::apply_mask(df, c.drop3);
      Mat<T> dhidden = ops::linear_backward(df, c.hidden, params_, g, r.ff2);
      dhidden.array() *= (c.hidden.array() > T(0)).template cast<T>();
      dy += ops::layer_norm_backward<T>(ops::linear_backward(dhidden, c.ff_in, params_, g, r.ff1), c.ln3,
                                        params_, g, r.ln3);
      Mat<T> db = dy;
      ops::apply_mask(db, c.drop2);
      auto [dq2, dmem] = ops::attention_backward(db, c.cross, tgt_spans, src_spans, cfg_.n_heads, params_, g, r.cross);
      dmemory += dmem;
      dy += ops::layer_norm_backward<T>(dq2, c.ln2, params_, g, r.ln2);
      Mat<T> da = dy;
      ops::apply_mask(da, c.drop1);
      auto [dq1, dkv1] = ops::attention_backward(da, c.self, tgt_spans, tgt_spans, cfg_.n_heads, params_, g, r.self);
      dq1 += dkv1;
      dy += ops::layer_norm_backward<T>(dq1, c.ln1, params_, g, r.ln1);
    }
    ops::apply_mask(dy, tgt_drop);
    scatter_embedding(g[embed_], dec_ids, dy, emb_scale);

    Mat<T> dx = ops::layer_norm_backward<T>(dmemory, enc_norm_cache, params_, g, enc_norm_);
    for (std::size_t l = enc_.size(); l-- > 0;) {
      const auto& r = enc_[l];
      const auto& c = ec[l];
      Mat<T> df = dx;
      ops::apply_mask(df, c.drop2);
      Mat<T> dhidden = ops::linear_backward(df, c.hidden, params_, g, r.ff2);
      dhidden.array() *= (c.hidden.array() > T(0)).template cast<T>();
      dx += ops::layer_norm_backward<T>(ops::linear_backward(dhidden, c.ff_in, params_, g, r.ff1), c.ln2,
                                        params_, g, r.ln2);
      Mat<T> da = dx;
      ops::apply_mask(da, c.drop1);
      auto [dq, dkv] = ops::attention_backward(da, c.attn, src_spans, src_spans, cfg_.n_heads, params_, g, r.attn);
      dq += dkv;
      dx += ops::layer_norm_backward<T>(dq, c.ln1, params_, g, r.ln1);
    }
    ops::apply_mask(dx, src_drop);
    scatter_embedding(g[embed_src_], src_ids, dx, emb_scale);
    return res;
  }

  // Beam search (greedy when beam == 1) with incremental decoder state.
  // Output sequences exclude the end-of-sequence symbol. Finished beam
  // hypotheses are ranked by log-probability / ((5 + len) / 6)^0.6.
  std::vector<std::vector<TokenId>> decode(std::span<const std::vector<TokenId>> sources, int beam,
                                           int max_output_len) const {
    if (beam < 1) throw ConfigError("beam size must be at least 1");
    std::vector<std::vector<TokenId>> results(sources.size());
    if (sources.empty()) return results;
    const int limit = std::clamp(max_output_len, 1, cfg_.max_len);
    const Eigen::Index d = cfg_.d_model;

    // Encode every source once.
    std::vector<Span> spans;
    std::vector<TokenId> ids;
    std::vector<Eigen::Index> pos;
    for (const auto& s : sources) {
      const auto keep = std::min<Eigen::Index>(static_cast<Eigen::Index>(s.size()), cfg_.max_len - 1);
      spans.push_back({static_cast<Eigen::Index>(ids.size()), keep + 1});
      for (Eigen::Index i = 0; i < keep; ++i) {
        ids.push_back(s[static_cast<std::size_t>(i)]);
        pos.push_back(i);
      }
      ids.push_back(kEosId);
      pos.push_back(keep);
    }
    check_ids(ids);
    const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
    Mat<T> x = embed(ids, pos, params_[embed_src_], emb_scale);
    for (const auto& r : enc_) {
      Mat<T> h = ops::layer_norm<T>(x, params_, r.ln1, nullptr);
      x += ops::attention<T>(h, h, spans, spans, false, cfg_.n_heads, params_, r.attn, nullptr);
      Mat<T> h2 = ops::layer_norm<T>(x, params_, r.ln2, nullptr);
      x += ops::linear(Mat<T>(ops::linear(h2, params_, r.ff1).cwiseMax(T(0))), params_, r.ff2);
    }
    const Mat<T> memory = ops::layer_norm<T>(x, params_, enc_norm_, nullptr);
    std::vector<Mat<T>> cross_k, cross_v;
    for (const auto& r : dec_) {
      cross_k.push_back(ops::linear(memory, params_, r.cross.k));
      cross_v.push_back(ops::linear(memory, params_, r.cross.v));
    }

    struct Hyp {
      std::size_t sentence = 0;
      std::vector<TokenId> tokens;
      double logprob = 0.0;
      std::vector<Mat<T>> k, v;  // per layer, limit rows
    };
    struct Done {
      std::vector<TokenId> tokens;
      double score;
    };
    std::vector<Hyp> live;
    std::vector<std::vector<Done>> done(sources.size());
    for (std::size_t s = 0; s < sources.size(); ++s) {
      Hyp h;
      h.sentence = s;
      for (std::size_t l = 0; l < dec_.size(); ++l) {
        h.k.push_back(Mat<T>::Zero(limit, d));
        h.v.push_back(Mat<T>::Zero(limit, d));
      }
      live.push_back(std::move(h));
    }
    auto penalty = [](std::size_t len) { return std::pow((5.0 + static_cast<double>(len)) / 6.0, 0.6); };

    for (int t = 0; t < limit && !live.empty(); ++t) {
      const auto n = static_cast<Eigen::Index>(live.size());
      Mat<T> y(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& hy = live[static_cast<std::size_t>(i)];
        const TokenId last = hy.tokens.empty() ? kEosId : hy.tokens.back();
        y.row(i) = params_[embed_].row(last) * emb_scale + positions_.row(t);
      }
      for (std::size_t l = 0; l < dec_.size(); ++l) {
        const auto& r = dec_[l];
        Mat<T> h = ops::layer_norm<T>(y, params_, r.ln1, nullptr);
        Mat<T> q = ops::linear(h, params_, r.self.q);
        Mat<T> k = ops::linear(h, params_, r.self.k);
        Mat<T> v = ops::linear(h, params_, r.self.v);
        Mat<T> o(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
          auto& hy = live[static_cast<std::size_t>(i)];
          hy.k[l].row(t) = k.row(i);
          hy.v[l].row(t) = v.row(i);
          attend_row(q.row(i), hy.k[l].topRows(t + 1), hy.v[l].topRows(t + 1), o.row(i));
        }
        y += ops::linear(o, params_, r.self.o);
        Mat<T> h2 = ops::layer_norm<T>(y, params_, r.ln2, nullptr);
        Mat<T> q2 = ops::linear(h2, params_, r.cross.q);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto sp = spans[live[static_cast<std::size_t>(i)].sentence];
          attend_row(q2.row(i), cross_k[l].middleRows(sp.offset, sp.length),
                     cross_v[l].middleRows(sp.offset, sp.length), o.row(i));
        }
        y += ops::linear(o, params_, r.cross.o);
        Mat<T> h3 = ops::layer_norm<T>(y, params_, r.ln3, nullptr);
        y += ops::linear(Mat<T>(ops::linear(h3, params_, r.ff1).cwiseMax(T(0))), params_, r.ff2);
      }
      Mat<T> logits = ops::layer_norm<T>(y, params_, dec_norm_, nullptr) * params_[embed_].transpose();

      // Candidates per sentence: (score, live index, token).
      struct Cand {
        double logprob;
        std::size_t from;
        TokenId token;
      };
      std::vector<std::vector<Cand>> per_sentence(sources.size());
      for (Eigen::Index i = 0; i < n; ++i) {
        auto row = logits.row(i);
        const double mx = static_cast<double>(row.maxCoeff());
        const double lse = mx + std::log(static_cast<double>((row.array() - static_cast<T>(mx)).exp().sum()));
        const auto& hy = live[static_cast<std::size_t>(i)];
        std::vector<TokenId> order(static_cast<std::size_t>(cfg_.vocab_size));
        std::iota(order.begin(), order.end(), 0);
        const auto take = static_cast<std::ptrdiff_t>(std::min<std::size_t>(static_cast<std::size_t>(beam), order.size()));
        std::partial_sort(order.begin(), order.begin() + take, order.end(), [&](TokenId a, TokenId b) {
          return row(a) != row(b) ? row(a) > row(b) : a < b;
        });
        for (std::ptrdiff_t k = 0; k < take; ++k) {
          const TokenId tok = order[static_cast<std::size_t>(k)];
          if (tok == kPadId) continue;
          per_sentence[hy.sentence].push_back(
              {hy.logprob + static_cast<double>(row(tok)) - lse, static_cast<std::size_t>(i), tok});
        }
      }
      std::vector<Hyp> next;
      for (std::size_t s = 0; s < sources.size(); ++s) {
        auto& cands = per_sentence[s];
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Cand& a, const Cand& b) { return a.logprob > b.logprob; });
        int kept = 0;
        for (const auto& c : cands) {
          if (kept >= beam || static_cast<int>(done[s].size()) >= beam) break;
          const Hyp& parent = live[c.from];
          if (c.token == kEosId || t + 1 == limit) {
            std::vector<TokenId> toks = parent.tokens;
            if (c.token != kEosId) toks.push_back(c.token);
            const double score = beam == 1 ? c.logprob : c.logprob / penalty(toks.size());
            done[s].push_back({std::move(toks), score});
            if (beam == 1) break;
            continue;
          }
          Hyp h = parent;
          h.tokens.push_back(c.token);
          h.logprob = c.logprob;
          next.push_back(std::move(h));
          ++kept;
        }
        if (static_cast<int>(done[s].size()) >= beam) {
          std::erase_if(next, [s](const Hyp& h) { return h.sentence == s; });
        }
      }
      live = std::move(next);
    }
    for (std::size_t s = 0; s < sources.size(); ++s) {
      if (done[s].empty()) continue;
      std::stable_sort(done[s].begin(), done[s].end(), [](const Done& a, const Done& b) { return a.score > b.score; });
      results[s] = done[s].front().tokens;
    }
    return results;
  }

 private:
  struct EncoderRefs {
    NormRef ln1, ln2;
    AttentionRef attn;
    LinearRef ff1, ff2;
  };
  struct DecoderRefs {
    NormRef ln1, ln2, ln3;
    AttentionRef self, cross;
    LinearRef ff1, ff2;
  };
  struct EncoderCache {
    ops::NormCache<T> ln1, ln2;
    ops::AttentionCache<T> attn;
    Mat<T> drop1, drop2, ff_in, hidden;
  };
  struct DecoderCache {
    ops::NormCache<T> ln1, ln2, ln3;
    ops::AttentionCache<T> self, cross;
    Mat<T> drop1, drop2, drop3, ff_in, hidden;
  };

  LinearRef add_linear(const std::string& name, Eigen::Index in, Eigen::Index out) {
    return {params_.add(name + ".w", in, out), params_.add(name + ".b", 1, out)};
  }
  NormRef add_norm(const std::string& name) {
    return {params_.add(name + ".g", 1, cfg_.d_model), params_.add(name + ".b", 1, cfg_.d_model)};
  }
  AttentionRef add_attention(const std::string& name) {
    const Eigen::Index d = cfg_.d_model;
    return {add_linear(name + ".q", d, d), add_linear(name + ".k", d, d), add_linear(name + ".v", d, d),
            add_linear(name + ".o", d, d)};
  }

  void check_ids(const std::vector<TokenId>& ids) const {
    for (TokenId t : ids) {
      if (t < 0 || t >= cfg_.vocab_size) {
        throw DataError("token id " + std::to_string(t) + " outside model vocabulary of size " +
                          std::to_string(cfg_.vocab_size));
      }
    }
  }

  Mat<T> embed(const std::vector<TokenId>& ids, const std::vector<Eigen::Index>& pos, const Mat<T>& table,
               T scale) const {
    Mat<T> x(static_cast<Eigen::Index>(ids.size()), cfg_.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]) * scale + positions_.row(pos[i]);
    }
    return x;
  }

  static void scatter_embedding(Mat<T>& grad, const std::vector<TokenId>& ids, const Mat<T>& dx, T scale) {
    for (std::size_t i = 0; i < ids.size(); ++i) grad.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i)) * scale;
  }

  template <typename Q, typename K, typename V, typename O>
  void attend_row(const Q& q, const K& k, const V& v, O&& out) const {
    const Eigen::Index dk = cfg_.d_model / cfg_.n_heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Eigen::Matrix<T, 1, Eigen::Dynamic> s = (q.segment(h * dk, dk) * k.middleCols(h * dk, dk).transpose()) * scale;
      s = (s.array() - s.maxCoeff()).exp().matrix();
      s /= s.sum();
      out.segment(h * dk, dk) = s * v.middleCols(h * dk, dk);
    }
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
  std::size_t embed_ = 0;
  std::size_t embed_src_ = 0;
  std::vector<EncoderRefs> enc_;
  std::vector<DecoderRefs> dec_;
  NormRef enc_norm_, dec_norm_;
  Mat<T> positions_;
};

}  // namespace recycle::nmt
