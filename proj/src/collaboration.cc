#include "seco/collaboration.hh"

#include <algorithm>
#include <set>

namespace seco {

HyperIncidence build_incidence(const SnapshotSequence& train, const Vocab& vocab) {
    std::vector<std::set<std::int32_t>> ent(static_cast<std::size_t>(vocab.num_entities()));
    std::vector<std::set<std::int32_t>> rel(
        static_cast<std::size_t>(vocab.num_relations_aug()));
    for (const auto& snap : train.snapshots) {
        for (const auto& ev : snap) {
            ent[static_cast<std::size_t>(ev.subject)].insert(ev.context);
            ent[static_cast<std::size_t>(ev.object)].insert(ev.context);
            rel[static_cast<std::size_t>(ev.relation)].insert(ev.context);
        }
    }
    HyperIncidence inc;
    inc.entity_contexts.reserve(ent.size());
    for (const auto& s : ent) inc.entity_contexts.emplace_back(s.begin(), s.end());
    inc.relation_contexts.reserve(rel.size());
    for (const auto& s : rel) inc.relation_contexts.emplace_back(s.begin(), s.end());
    return inc;
}

namespace {

// Rows are stacked context-major: row(c*N + v) is id v's embedding in context c.

void check_tables(Index n_ids, Index cols, const std::vector<std::vector<std::int32_t>>& sets,
                  int n_ctx) {
    if (static_cast<Index>(sets.size()) != n_ids) {
        throw ValidationError("propagate: one context set per id required");
    }
    for (const auto& s : sets) {
        for (auto c : s) {
            if (c < 0 || c >= n_ctx) {
                throw ValidationError("propagate: context id out of range");
            }
        }
    }
    (void)cols;
}

Matrix propagate_stacked(const Matrix& input,
                         const std::vector<std::vector<std::int32_t>>& sets, int layers,
                         Index n_ids, int n_ctx) {
    Matrix out = input;
    Matrix cur = input;
    Matrix nxt(input.rows(), input.cols());
    for (int p = 1; p <= layers; ++p) {
        nxt.setZero();
        for (Index v = 0; v < n_ids; ++v) {
            const auto& cv = sets[static_cast<std::size_t>(v)];
            if (cv.size() < 2) continue;
            const double w = 1.0 / (static_cast<double>(cv.size()) - 1.0);
            RowVector rowsum = RowVector::Zero(input.cols());
            for (auto i : cv) rowsum += cur.row(static_cast<Index>(i) * n_ids + v);
            for (int c = 0; c < n_ctx; ++c) {
                const Index row = static_cast<Index>(c) * n_ids + v;
                if (std::binary_search(cv.begin(), cv.end(), c)) {
                    nxt.row(row) = w * (rowsum - cur.row(row));
                } else {
                    nxt.row(row) = w * rowsum;
                }
            }
        }
        cur.swap(nxt);
        for (Index v = 0; v < n_ids; ++v) {
            if (sets[static_cast<std::size_t>(v)].size() < 2) continue;
            for (int c = 0; c < n_ctx; ++c) {
                const Index row = static_cast<Index>(c) * n_ids + v;
                out.row(row) += cur.row(row);
            }
        }
    }
    return out;
}

// Adjoint of propagate_stacked: grad_in = sum_p (M^T)^p grad_out, where M is
// the single-layer mixing operator.
Matrix propagate_stacked_adjoint(const Matrix& grad_out,
                                 const std::vector<std::vector<std::int32_t>>& sets,
                                 int layers, Index n_ids, int n_ctx) {
    Matrix grad_in = grad_out;
    Matrix acc = grad_out;
    Matrix nacc(grad_out.rows(), grad_out.cols());
    for (int p = 1; p <= layers; ++p) {
        nacc.setZero();
        for (Index v = 0; v < n_ids; ++v) {
            const auto& cv = sets[static_cast<std::size_t>(v)];
            if (cv.size() < 2) continue;
            const double w = 1.0 / (static_cast<double>(cv.size()) - 1.0);
            RowVector gsum = RowVector::Zero(grad_out.cols());
            for (int c = 0; c < n_ctx; ++c)
                gsum += acc.row(static_cast<Index>(c) * n_ids + v);
            for (auto i : cv) {
                const Index row = static_cast<Index>(i) * n_ids + v;
                nacc.row(row) = w * (gsum - acc.row(row));
            }
        }
        acc.swap(nacc);
        for (Index v = 0; v < n_ids; ++v) {
            if (sets[static_cast<std::size_t>(v)].size() < 2) continue;
            for (auto i : sets[static_cast<std::size_t>(v)]) {
                const Index row = static_cast<Index>(i) * n_ids + v;
                grad_in.row(row) += acc.row(row);
            }
        }
    }
    return grad_in;
}

}  // namespace

std::vector<Matrix> propagate(const std::vector<Matrix>& tables,
                              const std::vector<std::vector<std::int32_t>>& ctx_sets,
                              int layers) {
    if (layers < 0) throw ValidationError("propagate: layer count must be >= 0");
    if (tables.empty()) throw ValidationError("propagate: no tables");
    const Index n_ids = tables.front().rows();
    const Index cols = tables.front().cols();
    for (const auto& t : tables) {
        if (t.rows() != n_ids || t.cols() != cols) {
            throw ValidationError("propagate: table shape mismatch");
        }
    }
    const int n_ctx = static_cast<int>(tables.size());
    check_tables(n_ids, cols, ctx_sets, n_ctx);
    if (layers == 0 || n_ctx == 1) return tables;

    Matrix stacked(n_ids * n_ctx, cols);
    for (int c = 0; c < n_ctx; ++c)
        stacked.middleRows(static_cast<Index>(c) * n_ids, n_ids) =
            tables[static_cast<std::size_t>(c)];
    Matrix mixed = propagate_stacked(stacked, ctx_sets, layers, n_ids, n_ctx);
    std::vector<Matrix> out(static_cast<std::size_t>(n_ctx));
    for (int c = 0; c < n_ctx; ++c)
        out[static_cast<std::size_t>(c)] =
            mixed.middleRows(static_cast<Index>(c) * n_ids, n_ids);
    return out;
}

std::vector<Var> propagate(Tape& tape, const std::vector<Var>& tables,
                           const std::vector<std::vector<std::int32_t>>& ctx_sets,
                           int layers) {
    if (layers < 0) throw ValidationError("propagate: layer count must be >= 0");
    if (tables.empty()) throw ValidationError("propagate: no tables");
    const Index n_ids = tables.front().rows();
    const Index cols = tables.front().cols();
    for (const auto& t : tables) {
        if (t.rows() != n_ids || t.cols() != cols) {
            throw ValidationError("propagate: table shape mismatch");
        }
    }
    const int n_ctx = static_cast<int>(tables.size());
    check_tables(n_ids, cols, ctx_sets, n_ctx);
    if (layers == 0 || n_ctx == 1) return tables;

    Var stacked = concat_rows(tables);
    Matrix mixed = propagate_stacked(stacked.value(), ctx_sets, layers, n_ids, n_ctx);
    Var node = tape.make_node(
        std::move(mixed), {stacked},
        [stacked, sets = ctx_sets, layers, n_ids, n_ctx](Tape& t, std::int32_t self) {
            t.add_grad(stacked, propagate_stacked_adjoint(t.grad_of(Var{&t, self}), sets,
                                                          layers, n_ids, n_ctx));
        });
    std::vector<Var> out;
    out.reserve(tables.size());
    for (int c = 0; c < n_ctx; ++c)
        out.push_back(block_rows(node, static_cast<Index>(c) * n_ids, n_ids));
    return out;
}

}  // namespace seco
