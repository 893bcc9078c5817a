// SPDX-License-Identifier: Apache-2.0
// Synthetic end-to-end fixture: cluster ring walks plus structured
// semantics whose clusters match the walks.
#pragma once

#include <memory>

#include "dmesr/dataset.hpp"
#include "dmesr/model.hpp"
#include "dmesr/semantics.hpp"

namespace dmesr {

struct FixtureConfig {
  ClusterWalkConfig walk;
  StructuredEmbeddingConfig semantics;
  // 50 items cannot supply 100 distinct negatives.
  NegativeSampling sampling{100, true, 42};
};

struct Fixture {
  SequenceDataset dataset;
  LeaveOneOutSplit split;
  std::vector<SemanticRecord> records;
  std::shared_ptr<const SemanticTable> semantics;
};

Fixture make_fixture(const FixtureConfig& config);

}  // namespace dmesr
