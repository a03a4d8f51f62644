#include "seco/model.hh"

namespace seco {

Variant parse_variant(std::string_view name) {
    if (name == "full") return Variant::full;
    if (name == "no-ent-hg") return Variant::no_ent_hg;
    if (name == "no-rel-hg") return Variant::no_rel_hg;
    if (name == "no-hg") return Variant::no_hg;
    throw ValidationError("unknown variant '" + std::string(name) +
                          "' (expected full|no-ent-hg|no-rel-hg|no-hg)");
}

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_ent_hg: return "no-ent-hg";
        case Variant::no_rel_hg: return "no-rel-hg";
        case Variant::no_hg: return "no-hg";
    }
    return "full";
}

void init_model_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
    for (int c = 0; c < cfg.n_contexts; ++c) {
        init_context_params(store, c, cfg.encoder(), seed);
        init_decoder_params(store, c, cfg.decoder(), seed);
    }
}

std::int64_t model_param_count(const ModelConfig& cfg) {
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t f = cfg.conv_channels;
    const std::int64_t w = cfg.conv_width;
    std::int64_t per_context = 0;
    per_context += cfg.n_entities * d;              // entity base
    per_context += cfg.n_relations_aug * d;         // relation base
    per_context += cfg.rgcn_layers * 2 * d * d;     // message + self kernels
    per_context += d * d + d;                       // gate
    per_context += 3 * (2 * d * d + d * d + d);     // GRU
    per_context += f * 2 * w + f + f * d * d + d;   // decoder branch
    return per_context * cfg.n_contexts;
}

ModelRefs bind_model(Tape& tape, ParamStore& store, const ModelConfig& cfg) {
    ModelRefs refs;
    refs.encoders.reserve(static_cast<std::size_t>(cfg.n_contexts));
    refs.decoders.reserve(static_cast<std::size_t>(cfg.n_contexts));
    for (int c = 0; c < cfg.n_contexts; ++c) {
        refs.encoders.push_back(bind_context_params(tape, store, c, cfg.rgcn_layers));
        refs.decoders.push_back(bind_decoder_params(tape, store, c));
    }
    return refs;
}

ModelRefs bind_model(Tape& tape, const ParamStore& store, const ModelConfig& cfg) {
    ModelRefs refs;
    refs.encoders.reserve(static_cast<std::size_t>(cfg.n_contexts));
    refs.decoders.reserve(static_cast<std::size_t>(cfg.n_contexts));
    for (int c = 0; c < cfg.n_contexts; ++c) {
        refs.encoders.push_back(bind_context_params(tape, store, c, cfg.rgcn_layers));
        refs.decoders.push_back(bind_decoder_params(tape, store, c));
    }
    return refs;
}

std::vector<ContextPartition> partition_snapshots(
    std::span<const std::span<const EventQuintuple>> window, int n_contexts) {
    std::vector<ContextPartition> parts;
    parts.reserve(window.size());
    for (const auto& snap : window) {
        std::vector<EventQuintuple> events(snap.begin(), snap.end());
        parts.push_back(partition_by_context(events, n_contexts));
    }
    return parts;
}

std::vector<std::vector<std::span<const EventQuintuple>>> partition_window(
    const std::vector<ContextPartition>& partitions) {
    std::vector<std::vector<std::span<const EventQuintuple>>> by_context;
    if (partitions.empty()) return by_context;
    const std::size_t n_ctx = partitions.front().sub_graphs.size();
    by_context.resize(n_ctx);
    for (std::size_t c = 0; c < n_ctx; ++c) {
        by_context[c].reserve(partitions.size());
        for (const auto& part : partitions) {
            const auto& sub = part.sub_graphs[c];
            by_context[c].emplace_back(sub.data(), sub.size());
        }
    }
    return by_context;
}

std::vector<ContextState> encode_all_contexts(
    Tape& tape, const ModelRefs& refs,
    const std::vector<std::vector<std::span<const EventQuintuple>>>& window_by_context,
    const ModelConfig& cfg, Mode mode, Rng* rng) {
    std::vector<ContextState> states;
    states.reserve(refs.encoders.size());
    const EncoderConfig ecfg = cfg.encoder();
    for (std::size_t c = 0; c < refs.encoders.size(); ++c) {
        states.push_back(encode_context(tape, window_by_context[c], refs.encoders[c],
                                        ecfg, mode, rng));
    }
    return states;
}

std::vector<ContextState> collaborate(Tape& tape, const std::vector<ContextState>& states,
                                      const HyperIncidence& incidence,
                                      const ModelConfig& cfg) {
    std::vector<Var> ents, rels;
    ents.reserve(states.size());
    rels.reserve(states.size());
    for (const auto& s : states) {
        ents.push_back(s.entities);
        rels.push_back(s.relations);
    }
    const bool mix_entities =
        cfg.variant == Variant::full || cfg.variant == Variant::no_rel_hg;
    const bool mix_relations =
        cfg.variant == Variant::full || cfg.variant == Variant::no_ent_hg;
    if (mix_entities) {
        ents = propagate(tape, ents, incidence.entity_contexts, cfg.hyper_layers);
    }
    if (mix_relations) {
        rels = propagate(tape, rels, incidence.relation_contexts, cfg.hyper_layers);
    }
    std::vector<ContextState> out;
    out.reserve(states.size());
    for (std::size_t c = 0; c < states.size(); ++c) {
        out.push_back({ents[c], rels[c]});
    }
    return out;
}

}  // namespace seco
