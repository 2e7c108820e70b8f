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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "recycle/error.hpp"
#include "recycle/io.hpp"
#include "recycle/unicode.hpp"

namespace recycle {

using TokenId = std::int32_t;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kEosToken = "<EOS>";
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr char32_t kEndOfWord = U'_';
inline constexpr std::size_t kMaxCandidateLength = 20;

// Entries every vocabulary carries: the two reserved model symbols at ids 0
// and 1, then the characters that spell any escape sequence.
inline const std::vector<std::string>& mandatory_entries() {
  static const std::vector<std::string> kEntries = [] {
    std::vector<std::string> e = {std::string(kPadToken), std::string(kEosToken), "\\", ";", "_", "u"};
    for (char d = '0'; d <= '9'; ++d) e.emplace_back(1, d);
    return e;
  }();
  return kEntries;
}

inline std::size_t mandatory_size() { return mandatory_entries().size(); }

// "<pad>", "<EOS>" and the "<pad_k>" fillers. They never match text.
inline bool is_reserved_entry(std::string_view e) {
  if (e == kPadToken || e == kEosToken) return true;
  if (e.size() < 7 || !e.starts_with("<pad_") || e.back() != '>') return false;
  const auto digits = e.substr(5, e.size() - 6);
  return !digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
}

namespace escaping {

inline void append_codepoint_escape(std::u32string& out, char32_t cp) {
  out.push_back(U'\\');
  for (char c : std::to_string(static_cast<std::uint32_t>(cp))) out.push_back(static_cast<char32_t>(c));
  out.push_back(U';');
}

// Escapes only the two characters that collide with the escape machinery.
inline std::u32string base(std::u32string_view word) {
  std::u32string out;
  out.reserve(word.size() + 2);
  for (char32_t cp : word) {
    if (cp == U'_') {
      out += U"\\u";
    } else if (cp == U'\\') {
      out += U"\\\\";
    } else {
      out.push_back(cp);
    }
  }
  return out;
}

// Full escape relative to a character set: characters outside it become
// "\<decimal codepoint>;".
template <typename InCharset>
std::string escape(std::string_view text, InCharset&& in_charset) {
  std::u32string out;
  for (char32_t cp : utf8::decode(text)) {
    if (cp == U'_') {
      out += U"\\u";
    } else if (cp == U'\\') {
      out += U"\\\\";
    } else if (in_charset(cp)) {
      out.push_back(cp);
    } else {
      append_codepoint_escape(out, cp);
    }
  }
  return utf8::encode(out);
}

// Inverse of escape. Malformed escapes (possible in model output) are dropped.
inline std::string unescape(std::string_view escaped) {
  const std::u32string in = utf8::decode(escaped);
  std::u32string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != U'\\') {
      out.push_back(in[i]);
      continue;
    }
    if (i + 1 >= in.size()) break;
    const char32_t next = in[i + 1];
    if (next == U'\\') {
      out.push_back(U'\\');
      ++i;
    } else if (next == U'u') {
      out.push_back(U'_');
      ++i;
    } else if (next >= U'0' && next <= U'9') {
      std::size_t j = i + 1;
      std::uint64_t cp = 0;
      while (j < in.size() && in[j] >= U'0' && in[j] <= U'9' && cp <= 0x10FFFF) {
        cp = cp * 10 + (in[j] - U'0');
        ++j;
      }
      if (j < in.size() && in[j] == U';' && utf8::is_valid_scalar(static_cast<char32_t>(cp))) {
        out.push_back(static_cast<char32_t>(cp));
        i = j;
      } else {
        i = j - 1;
      }
    }
  }
  return utf8::encode(out);
}

}  // namespace escaping

struct SegmentedSentence {
  std::vector<TokenId> token_ids;
  std::size_t token_count = 0;
  std::size_t word_count = 0;
};

// An immutable, ordered list of escaped subwords. The index of an entry is
// its embedding row.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Throws DataError when entries are duplicated, malformed, or the mandatory
  // alphabet is incomplete.
  explicit Vocabulary(std::vector<std::string> entries) : entries_(std::move(entries)) {
    if (entries_.size() < 2 || entries_[0] != kPadToken || entries_[1] != kEosToken) {
      throw DataError("vocabulary must start with " + std::string(kPadToken) + " and " + std::string(kEosToken));
    }
    index_.reserve(entries_.size() * 2);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i], static_cast<TokenId>(i)).second) {
        throw DataError("duplicate vocabulary entry '" + entries_[i] + "' at index " + std::to_string(i));
      }
    }
    for (const auto& m : mandatory_entries()) {
      if (!index_.contains(m)) throw DataError("vocabulary lacks mandatory entry '" + m + "'");
    }
    build_trie();
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& operator[](TokenId id) const { return entries_.at(static_cast<std::size_t>(id)); }

  std::optional<TokenId> find(std::string_view entry) const {
    auto it = index_.find(std::string(entry));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view entry) const { return find(entry).has_value(); }

  bool in_charset(char32_t cp) const { return charset_.contains(cp); }

  std::string escape(std::string_view text) const {
    return escaping::escape(text, [this](char32_t cp) { return in_charset(cp); });
  }

  // Greedy longest match, left to right, over each word's escaped form with a
  // trailing end-of-word marker. A position no entry can start is rewritten
  // to the "\<codepoint>;" escape of its character and matching resumes.
  SegmentedSentence segment(std::string_view sentence) const {
    SegmentedSentence out;
    const auto words = utf8::split_words(std::u32string_view(utf8::decode(sentence)));
    out.word_count = words.size();
    for (const auto& word : words) {
      std::u32string buf = escaping::base(word);
      buf.push_back(kEndOfWord);
      segment_escaped(buf, out.token_ids);
    }
    out.token_count = out.token_ids.size();
    return out;
  }

  std::vector<TokenId> encode(std::string_view sentence) const { return segment(sentence).token_ids; }

  // Reserved entries (padding, EOS) are skipped. Throws DataError on an
  // out-of-range id.
  std::string detokenize(std::span<const TokenId> tokens) const {
    std::string escaped;
    for (TokenId t : tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= entries_.size()) {
        throw DataError("token id " + std::to_string(t) + " out of range for vocabulary of size " +
                        std::to_string(entries_.size()));
      }
      if (reserved_[static_cast<std::size_t>(t)]) continue;
      escaped += entries_[static_cast<std::size_t>(t)];
    }
    std::string out;
    std::size_t start = 0;
    while (start < escaped.size()) {
      std::size_t end = escaped.find('_', start);
      const std::size_t stop = end == std::string::npos ? escaped.size() : end;
      std::string word = escaping::unescape(std::string_view(escaped).substr(start, stop - start));
      if (!word.empty()) {
        if (!out.empty()) out.push_back(' ');
        out += word;
      }
      start = stop + 1;
    }
    return out;
  }

  /// Serialized file bytes: one entry per line, LF terminated.
  std::string serialize() const {
    std::string data;
    for (const auto& e : entries_) {
      data += e;
      data.push_back('\n');
    }
    return data;
  }

  std::string hash() const { return hex64(fnv1a64(serialize())); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.entries_ == b.entries_; }

 private:
  struct Node {
    TokenId id = -1;
  };

  static std::uint64_t edge_key(std::size_t node, char32_t cp) {
    return (static_cast<std::uint64_t>(node) << 21) | cp;
  }

  void build_trie() {
    nodes_.assign(1, Node{});
    edges_.clear();
    charset_.clear();
    reserved_.assign(entries_.size(), false);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (is_reserved_entry(entries_[i])) {
        reserved_[i] = true;
        continue;
      }
      std::size_t node = 0;
      for (char32_t cp : utf8::decode(entries_[i])) {
        if (cp != U'\\' && cp != kEndOfWord) charset_.insert(cp);
        auto [it, inserted] = edges_.emplace(edge_key(node, cp), nodes_.size());
        if (inserted) nodes_.push_back(Node{});
        node = it->second;
      }
      nodes_[node].id = static_cast<TokenId>(i);
    }
  }

  void segment_escaped(std::u32string& buf, std::vector<TokenId>& out) const {
    std::size_t i = 0;
    while (i < buf.size()) {
      TokenId best = -1;
      std::size_t best_len = 0;
      std::size_t node = 0;
      for (std::size_t j = i; j < buf.size(); ++j) {
        auto it = edges_.find(edge_key(node, buf[j]));
        if (it == edges_.end()) break;
        node = it->second;
        if (nodes_[node].id >= 0) {
          best = nodes_[node].id;
          best_len = j - i + 1;
        }
      }
      if (best < 0) {
        std::u32string esc;
        escaping::append_codepoint_escape(esc, buf[i]);
        buf.replace(i, 1, esc);
        continue;
      }
      out.push_back(best);
      i += best_len;
    }
  }

  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, std::size_t> edges_;
  std::unordered_set<char32_t> charset_;
  std::vector<bool> reserved_;
};

// Deterministic frequency induction: every substring (up to 20 codepoints)
// of every escaped word is a candidate scored by occurrence count times
// length; the best target_size - mandatory candidates are kept, ties broken
// lexicographically. Short results are padded with "<pad_k>" entries so the
// size is exact.
inline Vocabulary build_vocabulary(std::span<const std::string> corpus, std::size_t target_size) {
  if (target_size < mandatory_size()) {
    throw ConfigError("target vocabulary size " + std::to_string(target_size) +
                      " is smaller than the mandatory alphabet (" + std::to_string(mandatory_size()) + ")");
  }
  std::unordered_map<std::u32string, std::uint64_t> word_freq;
  for (const auto& sentence : corpus) {
    for (auto& w : utf8::split_words(std::u32string_view(utf8::decode(sentence)))) ++word_freq[w];
  }
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& [word, freq] : word_freq) {
    std::u32string esc = escaping::base(word);
    esc.push_back(kEndOfWord);
    for (std::size_t i = 0; i < esc.size(); ++i) {
      std::string piece;
      for (std::size_t len = 1; len <= kMaxCandidateLength && i + len <= esc.size(); ++len) {
        utf8::append(piece, esc[i + len - 1]);
        counts[piece] += freq;
      }
    }
  }
  for (const auto& m : mandatory_entries()) counts.erase(m);

  struct Candidate {
    std::string text;
    std::uint64_t score;
  };
  std::vector<Candidate> ranked;
  ranked.reserve(counts.size());
  for (auto& [text, count] : counts) {
    ranked.push_back({text, count * utf8::decode(text).size()});
  }
  const std::size_t keep = std::min(ranked.size(), target_size - mandatory_size());
  auto by_rank = [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.text < b.text;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), by_rank);

  std::vector<std::string> entries = mandatory_entries();
  for (std::size_t i = 0; i < keep; ++i) entries.push_back(std::move(ranked[i].text));
  for (std::size_t k = 0; entries.size() < target_size; ++k) entries.push_back("<pad_" + std::to_string(k) + ">");
  return Vocabulary(std::move(entries));
}

inline Vocabulary build_vocabulary(const std::filesystem::path& corpus, std::size_t target_size) {
  const auto lines = read_lines(corpus);
  return build_vocabulary(std::span<const std::string>(lines), target_size);
}

// Validates the file format and reports the first problem with its line.
inline Vocabulary parse_vocabulary(std::string_view data) {
  if (data.empty()) throw ParseError("empty vocabulary file (mandatory alphabet missing)", 1);
  std::vector<std::string> entries;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t start = 0;
  std::size_t line = 0;
  while (start < data.size()) {
    ++line;
    std::size_t end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    std::string entry(data.substr(start, end - start));
    start = end + 1;
    if (entry.empty()) throw ParseError("blank line", line);
    const std::u32string cps = utf8::decode(entry);
    if (std::any_of(cps.begin(), cps.end(), utf8::is_space)) throw ParseError("whitespace inside entry", line);
    if (!is_reserved_entry(entry)) {
      for (std::size_t i = 0; i + 1 < cps.size(); ++i) {
        if (cps[i] == kEndOfWord) throw ParseError("end-of-word marker inside entry '" + entry + "'", line);
      }
    }
    if (auto [it, inserted] = seen.emplace(entry, line); !inserted) {
      throw ParseError("duplicate entry '" + entry + "' (first seen on line " + std::to_string(it->second) + ")",
                       line);
    }
    entries.push_back(std::move(entry));
  }
  try {
    return Vocabulary(std::move(entries));
  } catch (const DataError& e) {
    throw ParseError(e.what(), line + 1);
  }
}

inline void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file(path, vocab.serialize());
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) { return parse_vocabulary(read_file(path)); }

}  // namespace recycle
