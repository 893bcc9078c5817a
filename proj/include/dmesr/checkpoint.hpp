// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dmesr/autograd.hpp"

namespace dmesr {

/// Named tensors plus free-form string metadata.
///
/// On disk: "DMCK", a format-version byte, the metadata table, the manifest
/// of tensor names, then one record per tensor (name, rank, u64 extents,
/// float32 little-endian payload), closed by an FNV-1a 32 checksum over all
/// preceding bytes.
struct Checkpoint {
  static constexpr std::uint8_t kFormatVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(const ParameterList& params);
/// Copies values by name; every parameter must be present with its shape.
void restore(const ParameterList& params, const Checkpoint& checkpoint);

}  // namespace dmesr
