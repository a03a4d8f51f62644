#pragma once

#include <vector>

#include "seco/event_model.hh"
#include "seco/tape.hh"

namespace seco {

// For each id, the contexts it occurred in over the training history. Entities
// count as subject or object; relations include their inverse ids. Ids never
// seen in training keep an empty set, which makes propagation leave their
// embeddings untouched.
struct HyperIncidence {
    std::vector<std::vector<std::int32_t>> entity_contexts;     // sorted per id
    std::vector<std::vector<std::int32_t>> relation_contexts;
};

HyperIncidence build_incidence(const SnapshotSequence& train, const Vocab& vocab);

// Parameter-free cross-context mixing. layer 0 = input; layer p row (v, c) is
// the mean of layer p-1 rows of v over the other contexts in C_v (zero when
// |C_v| <= 1); the output accumulates layers 0..P. Rows of ids with |C_v| <= 1
// are returned bit-identical to the input.
std::vector<Matrix> propagate(const std::vector<Matrix>& tables,
                              const std::vector<std::vector<std::int32_t>>& ctx_sets,
                              int layers);

// Tape counterpart built on the same kernel; with layers == 0 or a single
// context it returns the input Vars unchanged.
std::vector<Var> propagate(Tape& tape, const std::vector<Var>& tables,
                           const std::vector<std::vector<std::int32_t>>& ctx_sets,
                           int layers);

}  // namespace seco
