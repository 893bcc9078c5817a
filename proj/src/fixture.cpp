// SPDX-License-Identifier: Apache-2.0
#include "dmesr/fixture.hpp"

#include "dmesr/error.hpp"

namespace dmesr {

Fixture make_fixture(const FixtureConfig& config) {
  if (config.walk.clusters != config.semantics.clusters) {
    throw Error("fixture walks and semantics must use the same cluster count");
  }
  Fixture f;
  f.dataset = build_sequences(make_cluster_walk_interactions(config.walk));
  f.split = leave_one_out_split(f.dataset);
  attach_negatives(f.split.valid, f.dataset, config.sampling);
  NegativeSampling test_sampling = config.sampling;
  test_sampling.seed += 1;
  attach_negatives(f.split.test, f.dataset, test_sampling);
  f.records = synthesize_structured_embeddings(f.dataset.items.raw_ids(), config.semantics);
  f.semantics = std::make_shared<const SemanticTable>(
      SemanticTable::from_records(f.records, f.dataset.items, config.semantics.dimension));
  return f;
}

}  // namespace dmesr
