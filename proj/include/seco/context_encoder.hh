#pragma once

#include <array>
#include <span>
#include <vector>

#include "seco/event_model.hh"
#include "seco/param_store.hh"
#include "seco/tape.hh"

namespace seco {

struct EncoderConfig {
    Index n_entities = 0;
    Index n_relations_aug = 0;   // 2*|R|
    int embed_dim = 200;
    int layers = 2;
    double rrelu_lower = kRreluLowerDefault;
    double rrelu_upper = kRreluUpperDefault;
};

// Per-context parameter handles bound to one tape: base tables, the per-layer
// message/self kernels, the temporal gate and the relation GRU.
struct ContextParamRefs {
    Var ent_base;
    Var rel_base;
    std::vector<std::array<Var, 2>> layer_weights;   // {W_msg, W_self} per layer
    Var gate_w;
    Var gate_b;
    Var gru_wz, gru_uz, gru_bz;
    Var gru_wr, gru_ur, gru_br;
    Var gru_wh, gru_uh, gru_bh;
};

struct ContextState {
    Var entities;    // |E| x d
    Var relations;   // |R'| x d
};

std::string context_param_prefix(int context);

void init_context_params(ParamStore& store, int context, const EncoderConfig& cfg,
                         std::uint64_t master_seed);

ContextParamRefs bind_context_params(Tape& tape, ParamStore& store, int context,
                                     int layers);
// Const overload binds frozen copies: evaluation never touches the store.
ContextParamRefs bind_context_params(Tape& tape, const ParamStore& store, int context,
                                     int layers);

// Multi-layer relational message passing over one snapshot's sub-graph.
// Each layer: objects average W_msg(e_subject + r_relation) over their incident
// events and add W_self e_object, then pass through the rectifier; entities
// with no incident events keep only the self term. Returns the sum over
// layers 0..L of the layer outputs.
Var concurrent_encode(Tape& tape, std::span<const EventQuintuple> events, Var entity_in,
                      Var relation_in, const ContextParamRefs& params,
                      const EncoderConfig& cfg, Mode mode, Rng* rng);

// Sigmoid gate u = sigma(E_prev W + b); output u . E_curr + (1-u) . E_prev.
Var temporal_gate(Tape& tape, Var e_prev, Var e_curr, Var gate_w, Var gate_b);

// One GRU step per relation. The input concatenates the static base relation
// embedding with the mean of the current entity rows incident to the relation
// in this sub-graph (zero vector when the relation is absent).
Var relation_step(Tape& tape, std::span<const EventQuintuple> events, Var r_prev,
                  Var e_now, Var rel_base, const ContextParamRefs& params);

// Runs the window for one context: starts from the base tables and applies
// concurrent_encode + temporal_gate + relation_step per history step.
ContextState encode_context(Tape& tape,
                            std::span<const std::span<const EventQuintuple>> history,
                            const ContextParamRefs& params, const EncoderConfig& cfg,
                            Mode mode, Rng* rng);

}  // namespace seco
