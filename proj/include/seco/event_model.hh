#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seco/errors.hh"
#include "seco/matrix.hh"

namespace seco {

// One event (s, r, o, t, c). Relation ids live in the inverse-augmented space
// [0, 2*|R|) after loading: (s, r, o) also yields (o, r+|R|, s) so that every
// query, including subject prediction, is object prediction.
struct EventQuintuple {
    std::int32_t subject = 0;
    std::int32_t relation = 0;
    std::int32_t object = 0;
    std::int64_t time = 0;
    std::int32_t context = 0;

    friend bool operator==(const EventQuintuple&, const EventQuintuple&) = default;
};

struct Vocab {
    std::vector<std::string> entities;
    std::vector<std::string> relations;   // base relations, before augmentation
    std::vector<std::string> contexts;

    Index num_entities() const { return static_cast<Index>(entities.size()); }
    Index num_relations() const { return static_cast<Index>(relations.size()); }
    Index num_relations_aug() const { return 2 * num_relations(); }
    int num_contexts() const { return static_cast<int>(contexts.size()); }

    std::uint64_t content_hash() const;
};

// Day-indexed timeline slice. Snapshot i holds every event with
// time == t_begin + i; gaps are empty snapshots.
struct SnapshotSequence {
    std::int64_t t_begin = 0;
    std::vector<std::vector<EventQuintuple>> snapshots;

    std::int64_t horizon() const { return static_cast<std::int64_t>(snapshots.size()); }
    std::int64_t t_end() const { return t_begin + horizon(); }   // one past last
    bool covers(std::int64_t t) const { return t >= t_begin && t < t_end(); }
    const std::vector<EventQuintuple>& at_time(std::int64_t t) const;
};

// The K per-context sub-graphs of one snapshot.
struct ContextPartition {
    std::vector<std::vector<EventQuintuple>> sub_graphs;
};

struct DatasetSplits {
    SnapshotSequence train;
    SnapshotSequence valid;
    SnapshotSequence test;
    std::vector<std::int32_t> masked_entities;   // sorted, deduplicated

    bool is_masked(std::int32_t entity) const;
};

// Reads train/valid/test quintuple files plus vocab, stat and optional mask
// files, validates ids, applies inverse augmentation and groups events into
// time-sorted snapshots.
std::pair<Vocab, DatasetSplits> load_dataset(const std::filesystem::path& dir);

// Inverse of load_dataset: writes the original (non-augmented) events and all
// sidecar files, so that load(save(load(x))) == load(x).
void save_dataset(const std::filesystem::path& dir, const Vocab& vocab,
                  const DatasetSplits& splits);

std::vector<EventQuintuple> add_inverse_events(const std::vector<EventQuintuple>& events,
                                               Index num_relations);

ContextPartition partition_by_context(const std::vector<EventQuintuple>& snapshot,
                                      int num_contexts);

// Snapshots at times max(t_begin, t-window_len+1) .. t inclusive, time order.
std::vector<std::span<const EventQuintuple>> history_window(const SnapshotSequence& seq,
                                                            std::int64_t t,
                                                            int window_len);

// train + valid + test concatenated into one globally indexed timeline.
SnapshotSequence combined_timeline(const DatasetSplits& splits);

// Shared grouping path for load_dataset and the synthetic generator: takes raw
// (non-augmented) events per split, validates against the vocab, augments and
// buckets into snapshots with the stable (s, r, o, c) ordering.
DatasetSplits build_splits(std::vector<EventQuintuple> train_events,
                           std::vector<EventQuintuple> valid_events,
                           std::vector<EventQuintuple> test_events,
                           const Vocab& vocab,
                           std::vector<std::int32_t> masked_entities);

}  // namespace seco
