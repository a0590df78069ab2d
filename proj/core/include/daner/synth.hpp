#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daner/corpus.hpp"

namespace daner {

/// Controls the paired synthetic corpora. Domain A supplies the labeled
/// source data and in-domain test set; domain B supplies the unlabeled
/// target corpus and the shifted test set. `shift` moves B away from A in
/// function-word vocabulary and sentence templates; `shared_entity_frac`
/// controls how many entity surface forms the domains share.
struct SynthConfig {
  int n_source_labeled = 2000;
  int n_target_unlabeled = 4000;
  int n_test_shifted = 500;  // size of each of the two test sets
  double shift = 0.7;
  std::vector<std::string> classes = {"PER", "LOC", "ORG", "MISC"};
  int entity_lexicon_size = 50;  // surface forms per class and domain
  double shared_entity_frac = 0.5;
  int templates_per_domain = 20;
  std::uint64_t seed = 42;
};

void validate_synth_config(const SynthConfig& config);

struct SynthOutput {
  Dataset source;      // labeled, domain A
  Dataset target;      // unlabeled, domain B
  Dataset test_in;     // labeled, domain A
  Dataset test_shift;  // labeled, domain B
};

/// Deterministic given config.seed. Sentences are 5-25 tokens with 1-3
/// entities; tags are valid IOB2 by construction; no test sentence repeats
/// a source sentence verbatim.
SynthOutput generate(const SynthConfig& config);

}  // namespace daner
