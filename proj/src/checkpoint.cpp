// SPDX-License-Identifier: Apache-2.0
#include "dmesr/checkpoint.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "dmesr/error.hpp"
#include "dmesr/hash.hpp"

namespace dmesr {

namespace {
constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  io::Writer w;
  w.raw(kMagic, 4);
  w.u8(Checkpoint::kFormatVersion);
  w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  for (const auto& [k, v] : checkpoint.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& entry : checkpoint.tensors) w.str(entry.first);
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.u64(e);
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }
  w.u32(fnv1a32(w.bytes()));
  io::write_file_atomic(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 9 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw CorruptRecord(path + ": not a checkpoint container");
  }
  io::Reader trailer(bytes.data() + bytes.size() - 4, 4, path);
  if (trailer.u32() != fnv1a32(std::span(bytes.data(), bytes.size() - 4))) {
    throw CorruptRecord(path + ": checksum mismatch");
  }
  io::Reader r(bytes.data() + 4, bytes.size() - 8, path);
  const auto version = r.u8();
  if (version != Checkpoint::kFormatVersion) {
    throw CorruptRecord(path + ": unsupported format version " + std::to_string(version));
  }
  Checkpoint cp;
  const auto nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = r.str();
    cp.metadata[k] = r.str();
  }
  const auto count = r.u32();
  std::vector<std::string> manifest(count);
  for (auto& name : manifest) name = r.str();
  for (const auto& expected : manifest) {
    auto name = r.str();
    if (name != expected) throw CorruptRecord(path + ": record '" + name + "' out of manifest order");
    const auto rank = r.u8();
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.u64());
    Tensor t(shape);
    for (double& v : t.data()) v = r.f32();
    cp.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CorruptRecord(path + ": trailing bytes after last record");
  return cp;
}

Checkpoint snapshot(const ParameterList& params) {
  Checkpoint cp;
  for (const Parameter* p : params) cp.tensors.emplace_back(p->name(), p->value());
  return cp;
}

void restore(const ParameterList& params, const Checkpoint& checkpoint) {
  for (Parameter* p : params) {
    const Tensor* t = checkpoint.find(p->name());
    if (!t) throw Error("checkpoint has no tensor named '" + p->name() + "'");
    if (t->shape() != p->value().shape()) {
      throw ShapeError("checkpoint tensor '" + p->name() + "' has shape " + t->shape_string() + ", expected " +
                       p->value().shape_string());
    }
    p->mutable_value() = *t;
  }
}

}  // namespace dmesr
