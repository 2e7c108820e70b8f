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

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recycle/error.hpp"
#include "recycle/io.hpp"
#include "recycle/transform.hpp"
#include "recycle/vocab.hpp"

namespace recycle {

// Dense row-major float32 tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto s : shape) n *= static_cast<std::size_t>(s);
    return n;
  }

  bool all_finite() const {
    for (float v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data.size() == b.data.size() &&
         (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

inline constexpr std::string_view kEmbeddingTensor = "embed";
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'N', 'M', 'T', 'R', 'C', 'K', 'P', 'T'};

// Parameters, optimizer moments (per parameter, in slot order) and the
// global step counter. `metadata` carries at least vocab_hash, vocab_size,
// the model config and the optimizer description.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::int64_t step = 0;
  std::map<std::string, std::vector<Tensor>> optimizer_state;
  nlohmann::json metadata = nlohmann::json::object();

  // Throws ValidationError on non-finite values, shape inconsistencies or an
  // embedding table that disagrees with the recorded vocabulary size.
  void validate() const {
    if (step < 0) throw ValidationError("negative step counter");
    for (const auto& [name, t] : tensors) {
      if (t.numel() != t.data.size()) throw ValidationError("tensor " + name + " has inconsistent shape");
      if (!t.all_finite()) throw ValidationError("tensor " + name + " contains NaN or Inf");
    }
    for (const auto& [name, moments] : optimizer_state) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw ValidationError("optimizer state for unknown tensor " + name);
      for (const auto& m : moments) {
        if (m.shape != it->second.shape || m.numel() != m.data.size()) {
          throw ValidationError("optimizer moment of " + name + " has the wrong shape");
        }
        if (!m.all_finite()) throw ValidationError("optimizer moment of " + name + " contains NaN or Inf");
      }
    }
    if (auto it = tensors.find(std::string(kEmbeddingTensor)); it != tensors.end() && metadata.contains("vocab_size")) {
      if (it->second.shape.empty() || it->second.shape[0] != metadata["vocab_size"].get<std::int64_t>()) {
        throw ValidationError("embedding rows do not match the recorded vocabulary size");
      }
    }
  }
};

inline bool same_state(const Checkpoint& a, const Checkpoint& b) {
  if (a.step != b.step || a.tensors.size() != b.tensors.size() || a.optimizer_state.size() != b.optimizer_state.size()) {
    return false;
  }
  for (const auto& [name, t] : a.tensors) {
    auto it = b.tensors.find(name);
    if (it == b.tensors.end() || !bitwise_equal(t, it->second)) return false;
  }
  for (const auto& [name, ms] : a.optimizer_state) {
    auto it = b.optimizer_state.find(name);
    if (it == b.optimizer_state.end() || it->second.size() != ms.size()) return false;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      if (!bitwise_equal(ms[k], it->second[k])) return false;
    }
  }
  return true;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline void put_floats(std::string& out, const std::vector<float>& data) {
  const std::size_t start = out.size();
  out.resize(start + data.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    if (!data.empty()) std::memcpy(out.data() + start, data.data(), data.size() * 4);
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) out[start + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
}

inline std::vector<float> get_floats(std::string_view in, std::size_t at, std::size_t count) {
  std::vector<float> data(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count) std::memcpy(data.data(), in.data() + at, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 4 * i + b])) << (8 * b);
      }
      data[i] = std::bit_cast<float>(bits);
    }
  }
  return data;
}

}  // namespace detail

// Layout: 8-byte magic "NMTRCKPT", u64 header length, JSON header (format
// version, step, tensor directory with name/shape/offset, metadata), raw
// little-endian float32 payload, u64 FNV-1a checksum of the payload. All
// integers little-endian.
inline std::string serialize_checkpoint(const Checkpoint& ck) {
  ck.validate();
  std::string payload;
  nlohmann::json dir = nlohmann::json::array();
  auto add = [&](const Tensor& t, nlohmann::json entry) {
    entry["shape"] = t.shape;
    entry["offset"] = payload.size();
    entry["count"] = t.data.size();
    dir.push_back(std::move(entry));
    detail::put_floats(payload, t.data);
  };
  for (const auto& [name, t] : ck.tensors) add(t, {{"name", name}, {"role", "param"}});
  for (const auto& [name, moments] : ck.optimizer_state) {
    for (std::size_t k = 0; k < moments.size(); ++k) add(moments[k], {{"name", name}, {"role", "moment"}, {"slot", k}});
  }
  const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                 {"step", ck.step},
                                 {"tensors", dir},
                                 {"metadata", ck.metadata},
                                 {"payload_bytes", payload.size()}};
  const std::string header_text = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u64(out, header_text.size());
  out += header_text;
  out += payload;
  detail::put_u64(out, fnv1a64(payload));
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw LoadError("not a checkpoint file (bad magic)");
  }
  const std::uint64_t header_len = detail::get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw LoadError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw LoadError("unknown checkpoint format version " + std::to_string(version));
    }
    const std::size_t payload_at = 16 + header_len;
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() != payload_at + payload_bytes + 8) {
      throw LoadError("checkpoint size mismatch: expected " + std::to_string(payload_at + payload_bytes + 8) +
                      " bytes, found " + std::to_string(bytes.size()));
    }
    const std::string_view payload = bytes.substr(payload_at, payload_bytes);
    if (fnv1a64(payload) != detail::get_u64(bytes, payload_at + payload_bytes)) {
      throw LoadError("checkpoint checksum mismatch");
    }
    ck.step = header.at("step").get<std::int64_t>();
    ck.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& e : header.at("tensors")) {
      Tensor t;
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (offset % 4 != 0 || offset + count * 4 > payload_bytes || t.numel() != count) {
        throw LoadError("tensor " + e.at("name").get<std::string>() + " lies outside the payload");
      }
      t.data = detail::get_floats(payload, offset, count);
      const auto name = e.at("name").get<std::string>();
      if (e.at("role") == "param") {
        ck.tensors[name] = std::move(t);
      } else {
        auto& slots = ck.optimizer_state[name];
        const auto slot = e.at("slot").get<std::size_t>();
        if (slots.size() <= slot) slots.resize(slot + 1);
        slots[slot] = std::move(t);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  }
  try {
    ck.validate();
  } catch (const ValidationError& e) {
    throw LoadError(e.what());
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

enum class TransferMode { kDirect, kTransformed };

struct TransferPlan {
  TransferMode mode = TransferMode::kDirect;
  std::optional<VocabMapping> mapping;
  bool reset_step = false;
  bool reset_moments = false;
};

// Direct: the parent as is. Transformed: every tensor row-for-row, with row i
// now standing for mapping.transformed[i]; only the vocabulary metadata
// changes. Either mode can optionally drop the step counter or moments.
inline Checkpoint transfer_init(const Checkpoint& parent, const TransferPlan& plan) {
  Checkpoint child = parent;
  if (plan.mode == TransferMode::kTransformed) {
    if (!plan.mapping) throw TransferError("transformed transfer needs a vocabulary mapping");
    const auto it = parent.tensors.find(std::string(kEmbeddingTensor));
    if (it == parent.tensors.end()) throw TransferError("parent checkpoint has no embedding tensor");
    const auto rows = static_cast<std::size_t>(it->second.shape.at(0));
    if (plan.mapping->transformed.size() != rows) {
      throw TransferError("mapping covers " + std::to_string(plan.mapping->transformed.size()) +
                          " subwords but the parent embedding has " + std::to_string(rows) + " rows");
    }
    child.metadata["parent_vocab_hash"] = parent.metadata.value("vocab_hash", "");
    child.metadata["vocab_hash"] = plan.mapping->transformed.hash();
    child.metadata["vocab_size"] = rows;
    child.metadata["transfer"] = {{"mode", "transformed"}, {"strategy", to_string(plan.mapping->strategy)},
                                  {"seed", plan.mapping->seed}};
  }
  if (plan.reset_step) child.step = 0;
  if (plan.reset_moments) child.optimizer_state.clear();
  return child;
}

// The embedding vector a vocabulary assigns to `subword` in a checkpoint.
inline std::span<const float> embedding_row(const Checkpoint& ck, const Vocabulary& vocab, std::string_view subword) {
  const auto id = vocab.find(subword);
  if (!id) throw DataError("subword '" + std::string(subword) + "' not in vocabulary");
  const Tensor& e = ck.tensors.at(std::string(kEmbeddingTensor));
  const auto dim = static_cast<std::size_t>(e.shape.at(1));
  return std::span<const float>(e.data).subspan(static_cast<std::size_t>(*id) * dim, dim);
}

}  // namespace recycle
