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
#include <cstddef>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "recycle/error.hpp"
#include "recycle/rng.hpp"

namespace recycle::nmt {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Named parameter matrices in a fixed registration order. Vectors (biases,
// norm gains) are stored as 1 x n matrices.
template <typename T>
class ParamStore {
 public:
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(Mat<T>::Zero(rows, cols));
    return names_.size() - 1;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Mat<T>& operator[](std::size_t i) { return values_[i]; }
  const Mat<T>& operator[](std::size_t i) const { return values_[i]; }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  // Same names and shapes, all zeros.
  ParamStore zeros_like() const {
    ParamStore z = *this;
    for (auto& v : z.values_) v.setZero();
    return z;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct LinearRef {
  std::size_t w = 0;
  std::size_t b = 0;
};

struct NormRef {
  std::size_t g = 0;
  std::size_t b = 0;
};

struct AttentionRef {
  LinearRef q, k, v, o;
};

// Row ranges of one sentence inside a flattened batch.
struct Span {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

namespace ops {

template <typename T>
Mat<T> linear(const Mat<T>& x, const ParamStore<T>& p, LinearRef r) {
  Mat<T> y = x * p[r.w];
  y.rowwise() += p[r.b].row(0);
  return y;
}

// Accumulates parameter gradients and returns the input gradient.
template <typename T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const ParamStore<T>& p, ParamStore<T>& g, LinearRef r) {
  g[r.w].noalias() += x.transpose() * dy;
  g[r.b].row(0) += dy.colwise().sum();
  return dy * p[r.w].transpose();
}

template <typename T>
struct NormCache {
  Mat<T> xhat;
  ColVec<T> rstd;
};

inline constexpr double kNormEps = 1e-6;

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const ParamStore<T>& p, NormRef r, NormCache<T>* cache) {
  const Eigen::Index d = x.cols();
  ColVec<T> mean = x.rowwise().mean();
  Mat<T> xc = x.colwise() - mean;
  ColVec<T> var = xc.cwiseAbs2().rowwise().sum() / static_cast<T>(d);
  ColVec<T> rstd = (var.array() + static_cast<T>(kNormEps)).rsqrt().matrix();
  Mat<T> xhat = xc.array().colwise() * rstd.array();
  Mat<T> y = xhat.array().rowwise() * p[r.g].row(0).array();
  y.rowwise() += p[r.b].row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const NormCache<T>& c, const ParamStore<T>& p, ParamStore<T>& g,
                           NormRef r) {
  const T d = static_cast<T>(dy.cols());
  g[r.g].row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g[r.b].row(0) += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * p[r.g].row(0).array();
  ColVec<T> mean_dxhat = dxhat.rowwise().sum() / d;
  ColVec<T> mean_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix() / d;
  Mat<T> dx = dxhat.colwise() - mean_dxhat;
  dx.array() -= c.xhat.array().colwise() * mean_dxhat_xhat.array();
  dx.array().colwise() *= c.rstd.array();
  return dx;
}

template <typename T>
struct AttentionCache {
  Mat<T> xq, xkv, q, k, v, o;
  std::vector<Mat<T>> probs;  // per (sentence, head)
};

// Multi-head scaled dot-product attention over per-sentence blocks. Query
// rows of sentence i attend only to key rows of sentence i; with `causal`
// the query and key blocks coincide and position t sees positions <= t.
template <typename T>
Mat<T> attention(const Mat<T>& xq, const Mat<T>& xkv, const std::vector<Span>& q_spans,
                 const std::vector<Span>& k_spans, bool causal, int n_heads, const ParamStore<T>& p,
                 const AttentionRef& r, AttentionCache<T>* cache) {
  Mat<T> q = linear(xq, p, r.q);
  Mat<T> k = linear(xkv, p, r.k);
  Mat<T> v = linear(xkv, p, r.v);
  const Eigen::Index d = q.cols();
  const Eigen::Index dk = d / n_heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  Mat<T> o = Mat<T>::Zero(q.rows(), d);
  if (cache) cache->probs.clear();
  for (std::size_t s = 0; s < q_spans.size(); ++s) {
    const auto [qo, ql] = q_spans[s];
    const auto [ko, kl] = k_spans[s];
    for (int h = 0; h < n_heads; ++h) {
      Mat<T> scores = (q.block(qo, h * dk, ql, dk) * k.block(ko, h * dk, kl, dk).transpose()) * scale;
      for (Eigen::Index i = 0; i < ql; ++i) {
        const Eigen::Index visible = causal ? std::min<Eigen::Index>(i + 1, kl) : kl;
        const T mx = scores.row(i).head(visible).maxCoeff();
        T sum = 0;
        for (Eigen::Index j = 0; j < kl; ++j) {
          const T e = j < visible ? std::exp(scores(i, j) - mx) : T(0);
          scores(i, j) = e;
          sum += e;
        }
        scores.row(i) /= sum;
      }
      o.block(qo, h * dk, ql, dk).noalias() = scores * v.block(ko, h * dk, kl, dk);
      if (cache) cache->probs.push_back(std::move(scores));
    }
  }
  Mat<T> out = linear(o, p, r.o);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
  }
  return out;
}

// Returns (d xq, d xkv); for self-attention the caller adds the two.
template <typename T>
std::pair<Mat<T>, Mat<T>> attention_backward(const Mat<T>& dout, const AttentionCache<T>& c,
                                             const std::vector<Span>& q_spans, const std::vector<Span>& k_spans,
                                             int n_heads, const ParamStore<T>& p, ParamStore<T>& g,
                                             const AttentionRef& r) {
  Mat<T> d_o = linear_backward(dout, c.o, p, g, r.o);
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dk = d / n_heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  Mat<T> dq = Mat<T>::Zero(c.q.rows(), d);
  Mat<T> dk_m = Mat<T>::Zero(c.k.rows(), d);
  Mat<T> dv = Mat<T>::Zero(c.v.rows(), d);
  std::size_t pi = 0;
  for (std::size_t s = 0; s < q_spans.size(); ++s) {
    const auto [qo, ql] = q_spans[s];
    const auto [ko, kl] = k_spans[s];
    for (int h = 0; h < n_heads; ++h, ++pi) {
      const Mat<T>& P = c.probs[pi];
      const auto doh = d_o.block(qo, h * dk, ql, dk);
      dv.block(ko, h * dk, kl, dk).noalias() += P.transpose() * doh;
      Mat<T> dp = doh * c.v.block(ko, h * dk, kl, dk).transpose();
      ColVec<T> row_dot = (dp.array() * P.array()).rowwise().sum().matrix();
      Mat<T> ds = (P.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
      dq.block(qo, h * dk, ql, dk).noalias() += ds * c.k.block(ko, h * dk, kl, dk);
      dk_m.block(ko, h * dk, kl, dk).noalias() += ds.transpose() * c.q.block(qo, h * dk, ql, dk);
    }
  }
  Mat<T> dxq = linear_backward(dq, c.xq, p, g, r.q);
  Mat<T> dxkv = linear_backward(dk_m, c.xkv, p, g, r.k);
  dxkv += linear_backward(dv, c.xkv, p, g, r.v);
  return {std::move(dxq), std::move(dxkv)};
}

// Inverted dropout; returns the scaled keep mask (empty when inactive).
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < rate ? T(0) : keep;
  return m;
}

template <typename T>
void apply_mask(Mat<T>& x, const Mat<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

template <typename T>
Mat<T> sinusoidal_positions(Eigen::Index max_len, Eigen::Index d) {
  Mat<T> pe(max_len, d);
  for (Eigen::Index pos = 0; pos < max_len; ++pos) {
    for (Eigen::Index i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

}  // namespace ops
}  // namespace recycle::nmt
