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

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recycle/error.hpp"
#include "recycle/rng.hpp"
#include "recycle/unicode.hpp"

namespace recycle {

inline constexpr int kBleuOrder = 4;

// Whitespace split after isolating every punctuation character as its own
// token. Case is preserved.
inline std::vector<std::u32string> bleu_tokenize(std::string_view text) {
  std::u32string spaced;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_punct(cp)) {
      spaced.push_back(U' ');
      spaced.push_back(cp);
      spaced.push_back(U' ');
    } else {
      spaced.push_back(cp);
    }
  }
  return utf8::split_words(std::u32string_view(spaced));
}

// Sufficient statistics of one sentence pair; corpus BLEU is a function of
// their sum.
struct BleuStats {
  std::array<std::int64_t, kBleuOrder> matches{};
  std::array<std::int64_t, kBleuOrder> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

inline BleuStats sentence_stats(std::string_view hypothesis, std::string_view reference) {
  const auto hyp = bleu_tokenize(hypothesis);
  const auto ref = bleu_tokenize(reference);
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (int n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::u32string>, std::int64_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<std::u32string>(ref.begin() + i, ref.begin() + i + n)];
    }
    std::map<std::vector<std::u32string>, std::int64_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<std::u32string>(hyp.begin() + i, hyp.begin() + i + n)];
    }
    std::int64_t total = 0;
    std::int64_t clipped = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    s.matches[n - 1] = clipped;
    s.totals[n - 1] = total;
  }
  return s;
}

struct BleuScore {
  double score = 0.0;
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 1.0;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
  int effective_order = 0;
  bool smoothed = false;
};

// Corpus BLEU from summed statistics. Orders with no hypothesis n-grams at all
// (hypotheses shorter than n) are left out of the geometric mean; any order
// with n-grams but no match zeroes the score unless smoothing is on.
inline BleuScore bleu_from_stats(const BleuStats& s, bool smooth = false) {
  BleuScore b;
  b.hyp_len = s.hyp_len;
  b.ref_len = s.ref_len;
  b.smoothed = smooth;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (s.totals[n] == 0) break;
    ++b.effective_order;
    double m = static_cast<double>(s.matches[n]);
    double t = static_cast<double>(s.totals[n]);
    if (smooth && n >= 1) {
      m += 1.0;
      t += 1.0;
    }
    b.precisions[n] = m / t;
    if (m == 0.0) {
      zero = true;
    } else {
      log_sum += std::log(m / t);
    }
  }
  if (s.hyp_len == 0) {
    b.brevity_penalty = 0.0;
    return b;
  }
  b.brevity_penalty = s.hyp_len < s.ref_len
                          ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len))
                          : 1.0;
  if (zero || b.effective_order == 0) return b;
  b.score = 100.0 * b.brevity_penalty * std::exp(log_sum / b.effective_order);
  return b;
}

inline BleuScore bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                      bool smooth = false) {
  if (hypotheses.size() != references.size()) {
    throw DataError("BLEU needs equal sentence counts (" + std::to_string(hypotheses.size()) + " hypotheses, " +
                    std::to_string(references.size()) + " references)");
  }
  if (hypotheses.empty()) throw DataError("BLEU of an empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) total += sentence_stats(hypotheses[i], references[i]);
  return bleu_from_stats(total, smooth);
}

inline std::string bleu_signature(bool smooth) {
  return std::string("nrefs:1|case:mixed|tok:punct-split|smooth:") + (smooth ? "add-one" : "none") +
         "|ngram:4|effective-order:yes";
}

struct SignificanceResult {
  double p_like = 1.0;  // fraction of resamples where B does not beat A
  bool significant = false;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  double bleu_a = 0.0;
  double bleu_b = 0.0;

  friend bool operator==(const SignificanceResult&, const SignificanceResult&) = default;
};

// Paired bootstrap: every resample draws L sentence indices with replacement
// from a stream derived from (seed, resample index), so the result does not
// depend on evaluation order. Ties count against B.
inline SignificanceResult paired_bootstrap(std::span<const std::string> hyp_a, std::span<const std::string> hyp_b,
                                           std::span<const std::string> references, std::size_t n_samples = 1000,
                                           double alpha = 0.05, std::uint64_t seed = 12345, bool smooth = false) {
  if (hyp_a.size() != references.size() || hyp_b.size() != references.size()) {
    throw DataError("paired bootstrap needs equally long system outputs and references");
  }
  if (references.size() < 2) throw DataError("paired bootstrap needs at least 2 sentences");
  if (n_samples == 0) throw ConfigError("paired bootstrap needs at least one sample");
  const std::size_t len = references.size();
  std::vector<BleuStats> sa(len), sb(len);
  BleuStats full_a, full_b;
  for (std::size_t i = 0; i < len; ++i) {
    sa[i] = sentence_stats(hyp_a[i], references[i]);
    sb[i] = sentence_stats(hyp_b[i], references[i]);
    full_a += sa[i];
    full_b += sb[i];
  }
  std::size_t not_better = 0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng rng(derive_seed(seed, k));
    BleuStats ra, rb;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t idx = rng.below(len);
      ra += sa[idx];
      rb += sb[idx];
    }
    if (bleu_from_stats(rb, smooth).score <= bleu_from_stats(ra, smooth).score) ++not_better;
  }
  SignificanceResult r;
  r.n_samples = n_samples;
  r.seed = seed;
  r.alpha = alpha;
  r.p_like = static_cast<double>(not_better) / static_cast<double>(n_samples);
  r.significant = r.p_like < alpha;
  r.bleu_a = bleu_from_stats(full_a, smooth).score;
  r.bleu_b = bleu_from_stats(full_b, smooth).score;
  return r;
}

}  // namespace recycle
