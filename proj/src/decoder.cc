#include "seco/decoder.hh"

#include <string>

namespace seco {

namespace {

std::string decoder_prefix(int context) {
    return "ctx" + std::to_string(context) + "/dec/";
}

}  // namespace

void init_decoder_params(ParamStore& store, int context, const DecoderConfig& cfg,
                         std::uint64_t master_seed) {
    const std::string p = decoder_prefix(context);
    const Index d = cfg.embed_dim;
    const Index f = cfg.channels;
    const Index w = cfg.kernel_width;
    store.create(p + "kernel", xavier_init(f, 2 * w, derive_seed(master_seed, p + "kernel")));
    store.create(p + "kbias", Matrix::Zero(1, f));
    store.create(p + "proj", xavier_init(f * d, d, derive_seed(master_seed, p + "proj")));
    store.create(p + "pbias", Matrix::Zero(1, d));
}

DecoderParamRefs bind_decoder_params(Tape& tape, ParamStore& store, int context) {
    const std::string p = decoder_prefix(context);
    return {tape.param(store, p + "kernel"), tape.param(store, p + "kbias"),
            tape.param(store, p + "proj"), tape.param(store, p + "pbias")};
}

DecoderParamRefs bind_decoder_params(Tape& tape, const ParamStore& store, int context) {
    const std::string p = decoder_prefix(context);
    return {tape.frozen(store, p + "kernel"), tape.frozen(store, p + "kbias"),
            tape.frozen(store, p + "proj"), tape.frozen(store, p + "pbias")};
}

Var conv_pair_rows(Var subj, Var rel, Var kernel, Var kbias, int width) {
    const Matrix& a = subj.value();
    const Matrix& b = rel.value();
    const Matrix& k = kernel.value();
    const Matrix& kb = kbias.value();
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError("conv_pair_rows: query row shapes differ");
    }
    if (k.cols() != 2 * width || kb.cols() != k.rows()) {
        throw ValidationError("conv_pair_rows: kernel shape mismatch");
    }
    const Index batch = a.rows();
    const Index d = a.cols();
    const Index channels = k.rows();
    const Index pad = (width - 1) / 2;

    Matrix out(batch, channels * d);
    for (Index f = 0; f < channels; ++f) {
        auto block = out.middleCols(f * d, d);
        block.setConstant(kb(0, f));
        for (Index t = 0; t < width; ++t) {
            const Index off = t - pad;   // input column = output column + off
            const Index lo = std::max<Index>(0, -off);
            const Index hi = std::min<Index>(d, d - off);
            if (lo >= hi) continue;
            block.middleCols(lo, hi - lo) +=
                k(f, t) * a.middleCols(lo + off, hi - lo) +
                k(f, width + t) * b.middleCols(lo + off, hi - lo);
        }
    }

    return subj.tape->make_node(
        std::move(out), {subj, rel, kernel, kbias},
        [subj, rel, kernel, kbias, width, d, channels, pad](Tape& t, std::int32_t self) {
            const Matrix& g = t.grad_of(Var{&t, self});
            const Matrix& a = t.value_of(subj);
            const Matrix& b = t.value_of(rel);
            const Matrix& k = t.value_of(kernel);
            Matrix ga = Matrix::Zero(a.rows(), a.cols());
            Matrix gb = Matrix::Zero(b.rows(), b.cols());
            Matrix gk = Matrix::Zero(k.rows(), k.cols());
            Matrix gkb = Matrix::Zero(1, channels);
            for (Index f = 0; f < channels; ++f) {
                auto gblock = g.middleCols(f * d, d);
                gkb(0, f) = gblock.sum();
                for (Index tap = 0; tap < width; ++tap) {
                    const Index off = tap - pad;
                    const Index lo = std::max<Index>(0, -off);
                    const Index hi = std::min<Index>(d, d - off);
                    if (lo >= hi) continue;
                    auto gcols = gblock.middleCols(lo, hi - lo);
                    gk(f, tap) += gcols.cwiseProduct(a.middleCols(lo + off, hi - lo)).sum();
                    gk(f, width + tap) +=
                        gcols.cwiseProduct(b.middleCols(lo + off, hi - lo)).sum();
                    ga.middleCols(lo + off, hi - lo) += k(f, tap) * gcols;
                    gb.middleCols(lo + off, hi - lo) += k(f, width + tap) * gcols;
                }
            }
            t.add_grad(subj, ga);
            t.add_grad(rel, gb);
            t.add_grad(kernel, gk);
            t.add_grad(kbias, gkb);
        });
}

Var score_queries(Tape& tape, Var ent_table, Var rel_table,
                  std::span<const std::int32_t> subjects,
                  std::span<const std::int32_t> relations, const DecoderParamRefs& params,
                  const DecoderConfig& cfg, Mode mode, Rng* rng) {
    (void)tape;
    if (subjects.size() != relations.size() || subjects.empty()) {
        throw ValidationError("score_queries: need matching non-empty id lists");
    }
    std::vector<int> s_ids(subjects.begin(), subjects.end());
    std::vector<int> r_ids(relations.begin(), relations.end());
    Var q_s = gather_rows(ent_table, std::move(s_ids));
    Var q_r = gather_rows(rel_table, std::move(r_ids));
    Var conv = conv_pair_rows(q_s, q_r, params.kernel, params.kbias, cfg.kernel_width);
    Var projected = add_row_broadcast(matmul(conv, params.proj), params.pbias);
    Var query = rrelu(projected, cfg.rrelu_lower, cfg.rrelu_upper, mode, rng);
    Var logits = matmul_bt(query, ent_table);
    return softmax_rows(logits);
}

Var avr_context_score(Tape& tape, const std::vector<ContextState>& states,
                      std::span<const std::int32_t> subjects,
                      std::span<const std::int32_t> relations,
                      const std::vector<DecoderParamRefs>& params,
                      const DecoderConfig& cfg, Mode mode, Rng* rng) {
    if (states.empty() || states.size() != params.size()) {
        throw ValidationError("avr_context_score: one state per decoder branch required");
    }
    Var total;
    for (std::size_t c = 0; c < states.size(); ++c) {
        Var probs = score_queries(tape, states[c].entities, states[c].relations, subjects,
                                  relations, params[c], cfg, mode, rng);
        total = c == 0 ? probs : total + probs;
    }
    if (states.size() == 1) return total;   // bit-exact reduction to score
    return scale(total, 1.0 / static_cast<double>(states.size()));
}

int predict_from_scores(const Matrix& probability_rows, Index row) {
    if (row < 0 || row >= probability_rows.rows() || probability_rows.cols() == 0) {
        throw ValidationError("predict_from_scores: row out of range");
    }
    Index best = 0;
    for (Index j = 1; j < probability_rows.cols(); ++j) {
        if (probability_rows(row, j) > probability_rows(row, best)) best = j;
    }
    return static_cast<int>(best);
}

Var batch_loss(Tape& tape, const std::vector<ContextState>& states,
               const std::vector<QueryBatch>& queries,
               const std::vector<DecoderParamRefs>& params, const DecoderConfig& cfg,
               Mode mode, Rng* rng) {
    if (states.size() != queries.size() || states.size() != params.size()) {
        throw ValidationError("batch_loss: per-context lists must align");
    }
    std::size_t total_queries = 0;
    for (const auto& q : queries) total_queries += q.subjects.size();
    if (total_queries == 0) {
        throw ValidationError("batch_loss: no queries at target timestamp");
    }
    Var sum;
    bool first = true;
    for (std::size_t c = 0; c < queries.size(); ++c) {
        const auto& q = queries[c];
        if (q.subjects.empty()) continue;
        Var probs = score_queries(tape, states[c].entities, states[c].relations,
                                  q.subjects, q.relations, params[c], cfg, mode, rng);
        Var ce = cross_entropy_sum(probs, q.objects);
        sum = first ? ce : sum + ce;
        first = false;
    }
    return scale(sum, 1.0 / static_cast<double>(total_queries));
}

}  // namespace seco
