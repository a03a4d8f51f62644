#include "seco/context_encoder.hh"

#include <algorithm>
#include <set>

namespace seco {

// Update-gate biases start strongly negative, highway style: the temporal
// gate and the GRU update gate begin by carrying the previous state almost
// unchanged, and training opens them where the snapshot stream earns it.
constexpr double kCarryBiasInit = -5.0;

std::string context_param_prefix(int context) {
    return "ctx" + std::to_string(context) + "/";
}

void init_context_params(ParamStore& store, int context, const EncoderConfig& cfg,
                         std::uint64_t master_seed) {
    const std::string p = context_param_prefix(context);
    const Index d = cfg.embed_dim;
    auto xavier = [&](const std::string& name, Index r, Index c) {
        store.create(name, xavier_init(r, c, derive_seed(master_seed, name)));
    };

    xavier(p + "ent_base", cfg.n_entities, d);
    xavier(p + "rel_base", cfg.n_relations_aug, d);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = p + "rgcn/l" + std::to_string(l) + "/";
        xavier(lp + "w_msg", d, d);
        xavier(lp + "w_self", d, d);
    }
    xavier(p + "gate/w", d, d);
    store.create(p + "gate/b", Matrix::Constant(1, d, kCarryBiasInit));
    for (const char* g : {"z", "r", "h"}) {
        xavier(p + "gru/w" + std::string(g), 2 * d, d);
        xavier(p + "gru/u" + std::string(g), d, d);
        store.create(p + "gru/b" + std::string(g),
                     Matrix::Constant(1, d, g[0] == 'z' ? kCarryBiasInit : 0.0));
    }
}

namespace {

template <typename Bind>
ContextParamRefs bind_context_params_with(Bind bind, int context, int layers) {
    const std::string p = context_param_prefix(context);
    ContextParamRefs refs;
    refs.ent_base = bind(p + "ent_base");
    refs.rel_base = bind(p + "rel_base");
    for (int l = 0; l < layers; ++l) {
        const std::string lp = p + "rgcn/l" + std::to_string(l) + "/";
        refs.layer_weights.push_back({bind(lp + "w_msg"), bind(lp + "w_self")});
    }
    refs.gate_w = bind(p + "gate/w");
    refs.gate_b = bind(p + "gate/b");
    refs.gru_wz = bind(p + "gru/wz");
    refs.gru_uz = bind(p + "gru/uz");
    refs.gru_bz = bind(p + "gru/bz");
    refs.gru_wr = bind(p + "gru/wr");
    refs.gru_ur = bind(p + "gru/ur");
    refs.gru_br = bind(p + "gru/br");
    refs.gru_wh = bind(p + "gru/wh");
    refs.gru_uh = bind(p + "gru/uh");
    refs.gru_bh = bind(p + "gru/bh");
    return refs;
}

}  // namespace

ContextParamRefs bind_context_params(Tape& tape, ParamStore& store, int context,
                                     int layers) {
    return bind_context_params_with(
        [&](const std::string& name) { return tape.param(store, name); }, context, layers);
}

ContextParamRefs bind_context_params(Tape& tape, const ParamStore& store, int context,
                                     int layers) {
    return bind_context_params_with(
        [&](const std::string& name) { return tape.frozen(store, name); }, context, layers);
}

Var concurrent_encode(Tape& tape, std::span<const EventQuintuple> events, Var entity_in,
                      Var relation_in, const ContextParamRefs& params,
                      const EncoderConfig& cfg, Mode mode, Rng* rng) {
    (void)tape;
    if (entity_in.cols() != cfg.embed_dim || relation_in.cols() != cfg.embed_dim) {
        throw ValidationError("concurrent_encode: embedding width mismatch");
    }
    const Index n_entities = entity_in.rows();
    std::vector<int> subj_ids, rel_ids, obj_ids;
    subj_ids.reserve(events.size());
    rel_ids.reserve(events.size());
    obj_ids.reserve(events.size());
    for (const auto& ev : events) {
        if (ev.subject >= n_entities || ev.object >= n_entities ||
            ev.relation >= relation_in.rows()) {
            throw ValidationError("concurrent_encode: event id out of range");
        }
        subj_ids.push_back(ev.subject);
        rel_ids.push_back(ev.relation);
        obj_ids.push_back(ev.object);
    }

    Var layer = entity_in;
    Var acc = entity_in;   // layer 0 term of the sum
    for (const auto& [w_msg, w_self] : params.layer_weights) {
        Var pre = matmul(layer, w_self);
        if (!events.empty()) {
            // Averaging commutes with the linear kernel, so aggregate raw
            // messages first and multiply once per layer.
            Var messages = gather_rows(layer, subj_ids) + gather_rows(relation_in, rel_ids);
            Var pooled = group_mean_rows(messages, obj_ids, n_entities);
            pre = matmul(pooled, w_msg) + pre;
        }
        layer = rrelu(pre, cfg.rrelu_lower, cfg.rrelu_upper, mode, rng);
        acc = acc + layer;
    }
    return acc;
}

Var temporal_gate(Tape& tape, Var e_prev, Var e_curr, Var gate_w, Var gate_b) {
    (void)tape;
    if (e_prev.rows() != e_curr.rows() || e_prev.cols() != e_curr.cols()) {
        throw ValidationError("temporal_gate: shape mismatch");
    }
    Var u = sigmoid(add_row_broadcast(matmul(e_prev, gate_w), gate_b));
    return hadamard(u, e_curr) + hadamard(affine(u, -1.0, 1.0), e_prev);
}

Var relation_step(Tape& tape, std::span<const EventQuintuple> events, Var r_prev,
                  Var e_now, Var rel_base, const ContextParamRefs& params) {
    if (r_prev.rows() != rel_base.rows() || r_prev.cols() != rel_base.cols()) {
        throw ValidationError("relation_step: shape mismatch");
    }
    const Index n_relations = r_prev.rows();

    // Distinct (relation, entity) incidences; an entity counts once per
    // relation even when it appears in several of its events.
    std::set<std::pair<std::int32_t, std::int32_t>> incident;
    for (const auto& ev : events) {
        incident.emplace(ev.relation, ev.subject);
        incident.emplace(ev.relation, ev.object);
    }
    std::vector<int> ent_ids, rel_groups;
    ent_ids.reserve(incident.size());
    rel_groups.reserve(incident.size());
    for (const auto& [rel, ent] : incident) {
        rel_groups.push_back(rel);
        ent_ids.push_back(ent);
    }

    Var pooled;
    if (ent_ids.empty()) {
        pooled = tape.constant(Matrix::Zero(n_relations, e_now.cols()));
    } else {
        pooled = group_mean_rows(gather_rows(e_now, ent_ids), rel_groups, n_relations);
    }
    Var x = concat_cols(rel_base, pooled);

    Var z = sigmoid(add_row_broadcast(matmul(x, params.gru_wz) + matmul(r_prev, params.gru_uz),
                                      params.gru_bz));
    Var r = sigmoid(add_row_broadcast(matmul(x, params.gru_wr) + matmul(r_prev, params.gru_ur),
                                      params.gru_br));
    Var cand = tanh_op(add_row_broadcast(
        matmul(x, params.gru_wh) + matmul(hadamard(r, r_prev), params.gru_uh),
        params.gru_bh));
    return hadamard(affine(z, -1.0, 1.0), r_prev) + hadamard(z, cand);
}

ContextState encode_context(Tape& tape,
                            std::span<const std::span<const EventQuintuple>> history,
                            const ContextParamRefs& params, const EncoderConfig& cfg,
                            Mode mode, Rng* rng) {
    Var entities = params.ent_base;
    Var relations = params.rel_base;
    for (const auto& events : history) {
        Var encoded = concurrent_encode(tape, events, entities, relations, params, cfg,
                                        mode, rng);
        entities = temporal_gate(tape, entities, encoded, params.gate_w, params.gate_b);
        relations = relation_step(tape, events, relations, entities, params.rel_base,
                                  params);
    }
    return {entities, relations};
}

}  // namespace seco
