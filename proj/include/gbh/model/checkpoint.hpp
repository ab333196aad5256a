// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file checkpoint.hpp
/// Binary weight files.
///
///   "GBHW" | u32 version (1) | u32 tensor count
///   per tensor: u16 name length | UTF-8 name | u8 dtype (0 = f32)
///               | u8 ndim | u32 dims[ndim] | little-endian payload
///
/// Besides model parameters and buffers, a file carries `meta.*` tensors
/// describing the variant (name index, multiples, input size, classes,
/// anchors) and optional `extra.*` tensors (e.g. optimizer state). The last
/// tensor, `meta.crc32`, holds the CRC-32 of every byte before its record
/// (bit pattern stored in the f32 slot).
/// Loading parses and validates the whole file before any model is built.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <zlib.h>

#include "gbh/model/model.hpp"

namespace gbh::model {

inline constexpr char kCheckpointMagic[4] = {'G', 'B', 'H', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kChecksumTensor[] = "meta.crc32";

struct RawTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

template <typename U>
void put_le(std::vector<char>& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<char>& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError(path_ + ": truncated file at byte " + std::to_string(pos_));
    }
  }

  const std::vector<char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

namespace detail {

inline std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void put_tensor(std::vector<char>& out, const std::string& name, const Shape& shape,
                       const std::vector<float>& values) {
  if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(0);  // dtype f32
  out.push_back(static_cast<char>(shape.size()));
  for (auto d : shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (float f : values) put_f32(out, f);
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const std::vector<RawTensor>& tensors) {
  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size() + 1));
  for (const auto& t : tensors) {
    if (t.name == kChecksumTensor) throw CheckpointError("reserved tensor name: " + t.name);
    detail::put_tensor(out, t.name, t.shape, t.values);
  }
  const float crc = std::bit_cast<float>(detail::crc32_of(out.data(), out.size()));
  detail::put_tensor(out, kChecksumTensor, {1}, {crc});
  return out;
}

inline std::vector<RawTensor> decode_checkpoint(const std::vector<char>& buf, const std::string& path) {
  detail::Reader r(buf, path);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw CheckpointError(path + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<RawTensor> out;
  std::size_t last_record = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    last_record = r.pos();
    RawTensor t;
    t.name = r.bytes(r.get<std::uint16_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != 0) {
      throw CheckpointError(path + ": tensor '" + t.name + "' has unknown dtype " + std::to_string(dtype));
    }
    const auto ndim = r.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < ndim; ++d) t.shape.push_back(r.get<std::uint32_t>());
    t.values.resize(numel(t.shape));
    for (auto& v : t.values) v = std::bit_cast<float>(r.get<std::uint32_t>());
    out.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError(path + ": trailing bytes after last tensor");
  if (out.empty() || out.back().name != kChecksumTensor || out.back().values.size() != 1) {
    throw CheckpointError(path + ": missing checksum");
  }
  if (std::bit_cast<std::uint32_t>(out.back().values[0]) != detail::crc32_of(buf.data(), last_record)) {
    throw CheckpointError(path + ": checksum mismatch");
  }
  out.pop_back();
  return out;
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline std::size_t variant_index(const std::string& name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == name) return i;
  }
  throw SpecError("unknown model variant '" + name + "'");
}

struct Checkpoint {
  std::unique_ptr<Model<float>> model;
  std::size_t epoch = 0;
  std::map<std::string, RawTensor> extras;  // keyed without the "extra." prefix
};

inline std::vector<RawTensor> checkpoint_tensors(const Model<float>& model, std::size_t epoch,
                                                 const std::vector<RawTensor>& extras = {}) {
  const auto& v = model.variant();
  std::vector<RawTensor> out;
  auto meta = [&](std::string name, Shape shape, std::vector<float> values) {
    out.push_back({"meta." + std::move(name), std::move(shape), std::move(values)});
  };
  meta("variant", {1}, {static_cast<float>(variant_index(v.name))});
  meta("depth_multiple", {1}, {static_cast<float>(v.depth_multiple)});
  meta("width_multiple", {1}, {static_cast<float>(v.width_multiple)});
  meta("input_size", {1}, {static_cast<float>(v.input_size)});
  meta("num_classes", {1}, {static_cast<float>(v.num_classes)});
  meta("epoch", {1}, {static_cast<float>(epoch)});
  std::vector<float> anchors;
  for (const auto& head : v.anchors) {
    for (const auto& a : head) {
      anchors.push_back(static_cast<float>(a.w));
      anchors.push_back(static_cast<float>(a.h));
    }
  }
  meta("anchors", {v.num_heads(), v.anchors_per_head, 2}, std::move(anchors));
  for (const auto& nt : model.state()) {
    out.push_back({nt.name, nt.tensor.shape(), nt.tensor.values()});
  }
  for (const auto& e : extras) out.push_back({"extra." + e.name, e.shape, e.values});
  return out;
}

inline void save_checkpoint(const Model<float>& model, const std::string& path, std::size_t epoch = 0,
                            const std::vector<RawTensor>& extras = {}) {
  const auto bytes = encode_checkpoint(checkpoint_tensors(model, epoch, extras));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(path + ": write failed");
}

// Rejects files whose variant differs from `expected_variant` when given.
inline Checkpoint load_checkpoint(const std::string& path, const std::string& expected_variant = {}) {
  const auto tensors = decode_checkpoint(read_file_bytes(path), path);
  std::map<std::string, const RawTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      throw CheckpointError(path + ": duplicate tensor '" + t.name + "'");
    }
  }
  auto scalar = [&](const std::string& name) -> float {
    auto it = by_name.find("meta." + name);
    if (it == by_name.end() || it->second->values.size() != 1) {
      throw CheckpointError(path + ": missing meta." + name);
    }
    return it->second->values[0];
  };

  const auto vidx = static_cast<std::size_t>(scalar("variant"));
  if (vidx >= kVariantNames.size()) throw CheckpointError(path + ": unknown variant index");
  ModelVariant v;
  v.name = std::string(kVariantNames[vidx]);
  if (!expected_variant.empty() && expected_variant != v.name) {
    throw CheckpointError(path + ": checkpoint holds variant '" + v.name + "', expected '" +
                          expected_variant + "'");
  }
  v.depth_multiple = scalar("depth_multiple");
  v.width_multiple = scalar("width_multiple");
  v.input_size = static_cast<std::size_t>(scalar("input_size"));
  v.num_classes = static_cast<std::size_t>(scalar("num_classes"));
  v.head_strides = v.expected_strides();
  auto ait = by_name.find("meta.anchors");
  if (ait == by_name.end() || ait->second->shape.size() != 3 ||
      ait->second->shape[0] != v.num_heads() || ait->second->shape[2] != 2) {
    throw CheckpointError(path + ": missing or malformed meta.anchors");
  }
  v.anchors_per_head = ait->second->shape[1];
  const auto& av = ait->second->values;
  for (std::size_t h = 0, k = 0; h < v.num_heads(); ++h) {
    std::vector<Anchor> head;
    for (std::size_t a = 0; a < v.anchors_per_head; ++a, k += 2) head.push_back({av[k], av[k + 1]});
    v.anchors.push_back(std::move(head));
  }
  try {
    v.validate();
  } catch (const SpecError& e) {
    throw CheckpointError(path + ": " + e.what());
  }

  Checkpoint ck;
  ck.epoch = static_cast<std::size_t>(scalar("epoch"));
  auto model = std::make_unique<Model<float>>(v);
  auto state = model->state();
  std::size_t matched = 0;
  for (const auto& t : tensors) {
    if (t.name.rfind("meta.", 0) == 0) continue;
    if (t.name.rfind("extra.", 0) == 0) {
      RawTensor e = t;
      e.name = t.name.substr(6);
      ck.extras.emplace(e.name, std::move(e));
      continue;
    }
    auto it = std::find_if(state.begin(), state.end(), [&](const auto& s) { return s.name == t.name; });
    if (it == state.end()) throw CheckpointError(path + ": unknown tensor '" + t.name + "'");
    if (it->tensor.shape() != t.shape) {
      throw CheckpointError(path + ": shape mismatch for '" + t.name + "': file " +
                            to_string(t.shape) + ", model " + to_string(it->tensor.shape()));
    }
    ++matched;
  }
  if (matched != state.size()) {
    throw CheckpointError(path + ": file is missing " + std::to_string(state.size() - matched) +
                          " model tensors");
  }
  // Everything validated; now copy.
  for (auto& s : state) {
    const auto& src = by_name.at(s.name)->values;
    std::copy(src.begin(), src.end(), s.tensor.data().begin());
  }
  ck.model = std::move(model);
  return ck;
}

}  // namespace gbh::model
