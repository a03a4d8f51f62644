#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "seco/collaboration.hh"
#include "seco/context_encoder.hh"
#include "seco/decoder.hh"
#include "seco/event_model.hh"

namespace seco {

// Which hypergraph propagations run in the forward pass.
enum class Variant { full, no_ent_hg, no_rel_hg, no_hg };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct ModelConfig {
    Index n_entities = 0;
    Index n_relations_aug = 0;
    int n_contexts = 1;
    int embed_dim = 200;
    int rgcn_layers = 2;
    int hyper_layers = 1;
    int history_len = 3;
    int conv_channels = 50;
    int conv_width = 3;
    double rrelu_lower = kRreluLowerDefault;
    double rrelu_upper = kRreluUpperDefault;
    Variant variant = Variant::full;

    EncoderConfig encoder() const {
        return {n_entities, n_relations_aug, embed_dim, rgcn_layers, rrelu_lower,
                rrelu_upper};
    }
    DecoderConfig decoder() const {
        return {embed_dim, conv_channels, conv_width, rrelu_lower, rrelu_upper};
    }
};

void init_model_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

// Total learnable coefficients as a function of the dimensions alone.
std::int64_t model_param_count(const ModelConfig& cfg);

struct ModelRefs {
    std::vector<ContextParamRefs> encoders;
    std::vector<DecoderParamRefs> decoders;
};

ModelRefs bind_model(Tape& tape, ParamStore& store, const ModelConfig& cfg);
ModelRefs bind_model(Tape& tape, const ParamStore& store, const ModelConfig& cfg);

// history[step][context] = that context's sub-graph of the step's snapshot.
std::vector<std::vector<std::span<const EventQuintuple>>> partition_window(
    const std::vector<ContextPartition>& partitions);

std::vector<ContextPartition> partition_snapshots(
    std::span<const std::span<const EventQuintuple>> window, int n_contexts);

// Separation stage for every context over a shared window.
std::vector<ContextState> encode_all_contexts(
    Tape& tape, const ModelRefs& refs,
    const std::vector<std::vector<std::span<const EventQuintuple>>>& window_by_context,
    const ModelConfig& cfg, Mode mode, Rng* rng);

// Collaboration stage; respects the variant's identity substitutions.
std::vector<ContextState> collaborate(Tape& tape, const std::vector<ContextState>& states,
                                      const HyperIncidence& incidence,
                                      const ModelConfig& cfg);

}  // namespace seco
