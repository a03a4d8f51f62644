#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "seco/event_model.hh"

namespace seco {

// Planted-context benchmark: the correct object is a deterministic function
// f(s, r, c), so context-aware decoding is measurable against context-blind
// baselines.
struct PlantedSpec {
    Index n_entities = 50;
    Index n_relations = 5;
    int n_contexts = 3;
    std::int64_t timestamps = 200;
    int events_per_step = 40;
    double noise = 0.05;               // fraction of events with a random object
    double context_dependence = 1.0;   // fraction of subjects whose answer varies by c
    std::uint64_t seed = 0;
};

void validate(const PlantedSpec& spec);
// Same flat "key = value" syntax as the training config.
PlantedSpec parse_planted_config(const std::filesystem::path& path);

struct PlantedDataset {
    Vocab vocab;
    DatasetSplits splits;
    // truth[r][c][s] = planted object; each (r, c) slice is a permutation of
    // the entity range, so inverse queries are deterministic too.
    std::vector<std::vector<std::vector<std::int32_t>>> truth;
};

PlantedDataset generate(const PlantedSpec& spec);

// HIT@1 on the test split of the best context-blind predictor: for every
// (s, r) pair the most frequent training object. An exhaustive bound for any
// constant-per-(s, r) model.
double context_blind_bound(const Vocab& vocab, const DatasetSplits& splits);

}  // namespace seco
