#include "seco/evaluator.hh"

#include <algorithm>
#include <future>
#include <map>
#include <ostream>

#include <json.hpp>

namespace seco {

int rank_of_truth(const RowVector& scores, int truth) {
    return rank_of_truth(scores, truth, {});
}

int rank_of_truth(const RowVector& scores, int truth,
                  std::span<const std::int32_t> excluded) {
    if (truth < 0 || truth >= scores.size()) {
        throw ValidationError("rank_of_truth: truth id out of range");
    }
    const double ref = scores(truth);
    int rank = 1;
    for (Index j = 0; j < scores.size(); ++j) {
        if (scores(j) <= ref || j == truth) continue;
        if (!excluded.empty() &&
            std::binary_search(excluded.begin(), excluded.end(),
                               static_cast<std::int32_t>(j))) {
            continue;
        }
        ++rank;
    }
    return rank;
}

MetricsReport compute_metrics(std::span<const int> ranks) {
    if (ranks.empty()) throw ValidationError("compute_metrics: empty rank list");
    MetricsReport report;
    double rr = 0.0;
    for (int rank : ranks) {
        rr += 1.0 / static_cast<double>(rank);
        report.hit1 += rank <= 1 ? 1.0 : 0.0;
        report.hit3 += rank <= 3 ? 1.0 : 0.0;
        report.hit10 += rank <= 10 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(ranks.size());
    report.mrr = rr / n;
    report.hit1 /= n;
    report.hit3 /= n;
    report.hit10 /= n;
    report.n_queries = static_cast<std::int64_t>(ranks.size());
    return report;
}

namespace {

// Evaluation-side forward pass: per-context encodings on throwaway tapes with
// frozen parameters, then the pure collaboration kernel on plain matrices.
struct EvalStates {
    std::vector<Matrix> entities;
    std::vector<Matrix> relations;
};

EvalStates eval_states_for_window(
    const ParamStore& store, const ModelConfig& mcfg, const HyperIncidence& incidence,
    const std::vector<std::vector<std::span<const EventQuintuple>>>& by_context,
    int threads) {
    const int k = mcfg.n_contexts;
    EvalStates states;
    states.entities.resize(static_cast<std::size_t>(k));
    states.relations.resize(static_cast<std::size_t>(k));

    auto encode_one = [&](int c) {
        Tape tape;
        const auto refs = bind_context_params(tape, store, c, mcfg.rgcn_layers);
        const ContextState s = encode_context(tape, by_context[static_cast<std::size_t>(c)],
                                              refs, mcfg.encoder(), Mode::eval, nullptr);
        states.entities[static_cast<std::size_t>(c)] = s.entities.value();
        states.relations[static_cast<std::size_t>(c)] = s.relations.value();
    };

    if (threads > 1 && k > 1) {
        // Contexts are parameter-disjoint, so running them concurrently and
        // collecting in fixed order reproduces the sequential result exactly.
        std::vector<std::future<void>> jobs;
        for (int c = 0; c < k; ++c)
            jobs.push_back(std::async(std::launch::async, encode_one, c));
        for (auto& j : jobs) j.get();
    } else {
        for (int c = 0; c < k; ++c) encode_one(c);
    }

    const bool mix_entities =
        mcfg.variant == Variant::full || mcfg.variant == Variant::no_rel_hg;
    const bool mix_relations =
        mcfg.variant == Variant::full || mcfg.variant == Variant::no_ent_hg;
    if (mix_entities) {
        states.entities =
            propagate(states.entities, incidence.entity_contexts, mcfg.hyper_layers);
    }
    if (mix_relations) {
        states.relations =
            propagate(states.relations, incidence.relation_contexts, mcfg.hyper_layers);
    }
    return states;
}

Matrix eval_scores(const ParamStore& store, const ModelConfig& mcfg,
                   const EvalStates& states, int context,
                   std::span<const std::int32_t> subjects,
                   std::span<const std::int32_t> relations, bool avr_context) {
    Tape tape;
    if (!avr_context) {
        auto ent = tape.constant(states.entities[static_cast<std::size_t>(context)]);
        auto rel = tape.constant(states.relations[static_cast<std::size_t>(context)]);
        const auto dec = bind_decoder_params(tape, store, context);
        return score_queries(tape, ent, rel, subjects, relations, dec, mcfg.decoder(),
                             Mode::eval, nullptr)
            .value();
    }
    std::vector<ContextState> all;
    std::vector<DecoderParamRefs> decs;
    for (int c = 0; c < mcfg.n_contexts; ++c) {
        all.push_back({tape.constant(states.entities[static_cast<std::size_t>(c)]),
                       tape.constant(states.relations[static_cast<std::size_t>(c)])});
        decs.push_back(bind_decoder_params(tape, store, c));
    }
    return avr_context_score(tape, all, subjects, relations, decs, mcfg.decoder(),
                             Mode::eval, nullptr)
        .value();
}

MetricsReport finalize_report(const std::vector<int>& all_ranks,
                              const std::map<int, std::vector<int>>& ranks_by_context) {
    MetricsReport report = compute_metrics(all_ranks);
    for (const auto& [context, ranks] : ranks_by_context) {
        const MetricsReport sub = compute_metrics(ranks);
        report.per_context.push_back(
            {context, sub.mrr, sub.hit1, sub.hit3, sub.hit10, sub.n_queries});
    }
    return report;
}

}  // namespace

MetricsReport evaluate_split(const ParamStore& params, const ModelConfig& mcfg,
                             const HyperIncidence& incidence, const Vocab& vocab,
                             const DatasetSplits& splits, SplitKind which,
                             const EvalOptions& options) {
    const SnapshotSequence& split =
        which == SplitKind::valid ? splits.valid : splits.test;
    const SnapshotSequence timeline = combined_timeline(splits);

    std::vector<int> all_ranks;
    std::map<int, std::vector<int>> ranks_by_context;

    for (std::int64_t ty = split.t_begin; ty < split.t_end(); ++ty) {
        const auto& snapshot = split.at_time(ty);
        if (snapshot.empty()) continue;

        std::vector<const EventQuintuple*> queries;
        queries.reserve(snapshot.size());
        for (const auto& ev : snapshot) {
            if (!splits.is_masked(ev.object)) queries.push_back(&ev);
        }
        if (queries.empty()) continue;

        // Time-aware filter pool: objects true for (s, r) at this timestamp.
        std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::int32_t>> pool;
        if (options.filtered) {
            for (const auto& ev : snapshot) {
                pool[{ev.subject, ev.relation}].push_back(ev.object);
            }
            for (auto& [key, objs] : pool) {
                std::sort(objs.begin(), objs.end());
                objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
            }
        }

        const auto window = history_window(timeline, ty - 1, mcfg.history_len);
        const auto parts = partition_snapshots(window, mcfg.n_contexts);
        const auto by_context = partition_window(parts);
        const EvalStates states = eval_states_for_window(params, mcfg, incidence,
                                                         by_context, options.threads);

        // Group queries by context, keeping snapshot order within each group.
        std::vector<std::vector<const EventQuintuple*>> grouped(
            static_cast<std::size_t>(mcfg.n_contexts));
        for (const auto* ev : queries)
            grouped[static_cast<std::size_t>(ev->context)].push_back(ev);

        for (int c = 0; c < mcfg.n_contexts; ++c) {
            const auto& group = grouped[static_cast<std::size_t>(c)];
            if (group.empty()) continue;
            std::vector<std::int32_t> subjects, relations;
            subjects.reserve(group.size());
            relations.reserve(group.size());
            for (const auto* ev : group) {
                subjects.push_back(ev->subject);
                relations.push_back(ev->relation);
            }
            const Matrix probs = eval_scores(params, mcfg, states, c, subjects, relations,
                                             options.avr_context);
            for (std::size_t i = 0; i < group.size(); ++i) {
                const auto* ev = group[i];
                int rank = 0;
                if (options.filtered) {
                    rank = rank_of_truth(probs.row(static_cast<Index>(i)), ev->object,
                                         pool.at({ev->subject, ev->relation}));
                } else {
                    rank = rank_of_truth(probs.row(static_cast<Index>(i)), ev->object);
                }
                all_ranks.push_back(rank);
                ranks_by_context[c].push_back(rank);
            }
        }
    }
    (void)vocab;
    if (all_ranks.empty()) {
        throw ValidationError("evaluate_split: no queries left after masking");
    }
    return finalize_report(all_ranks, ranks_by_context);
}

MetricsReport evaluate_split(const ModelCheckpoint& ckpt, const Vocab& vocab,
                             const DatasetSplits& splits, SplitKind which,
                             const EvalOptions& options) {
    check_compatible(ckpt, vocab);
    const ModelConfig mcfg = make_model_config(ckpt.config, vocab);
    const HyperIncidence incidence = build_incidence(splits.train, vocab);
    return evaluate_split(ckpt.params, mcfg, incidence, vocab, splits, which, options);
}

MetricsReport run_ablation(const std::string& variant, const Vocab& vocab,
                           const DatasetSplits& splits, TrainConfig cfg,
                           std::ostream* epoch_log, const EvalOptions& options) {
    EvalOptions eval_options = options;
    if (variant == "avr-context") {
        cfg.variant = "full";
        eval_options.avr_context = true;
    } else {
        cfg.variant = variant;   // parse_variant rejects unknown names
    }
    validate(cfg);
    Trainer trainer(vocab, splits, cfg);
    const ModelCheckpoint ckpt = trainer.fit(epoch_log);
    return evaluate_split(ckpt.params, make_model_config(cfg, vocab), trainer.incidence(),
                          vocab, splits, SplitKind::test, eval_options);
}

Matrix score_next_query(const ModelCheckpoint& ckpt, const Vocab& vocab,
                        const DatasetSplits& splits, int subject, int relation,
                        int context) {
    check_compatible(ckpt, vocab);
    if (subject < 0 || subject >= vocab.num_entities()) {
        throw ValidationError("subject id out of range");
    }
    if (relation < 0 || relation >= vocab.num_relations_aug()) {
        throw ValidationError("relation id out of range");
    }
    if (context < 0 || context >= vocab.num_contexts()) {
        throw ValidationError("context id out of range");
    }
    const ModelConfig mcfg = make_model_config(ckpt.config, vocab);
    const HyperIncidence incidence = build_incidence(splits.train, vocab);
    const SnapshotSequence timeline = combined_timeline(splits);
    if (timeline.horizon() == 0) throw ValidationError("empty timeline");

    const auto window = history_window(timeline, timeline.t_end() - 1, mcfg.history_len);
    const auto parts = partition_snapshots(window, mcfg.n_contexts);
    const auto by_context = partition_window(parts);
    const EvalStates states =
        eval_states_for_window(ckpt.params, mcfg, incidence, by_context, 1);
    const std::int32_t s32 = subject;
    const std::int32_t r32 = relation;
    return eval_scores(ckpt.params, mcfg, states, context, std::span(&s32, 1),
                       std::span(&r32, 1), false);
}

std::string metrics_json(const MetricsReport& report) {
    nlohmann::json j;
    j["mrr"] = report.mrr;
    j["hit1"] = report.hit1;
    j["hit3"] = report.hit3;
    j["hit10"] = report.hit10;
    j["n_queries"] = report.n_queries;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : report.per_context) {
        per.push_back({{"context", c.context},
                       {"mrr", c.mrr},
                       {"hit1", c.hit1},
                       {"hit3", c.hit3},
                       {"hit10", c.hit10},
                       {"n_queries", c.n_queries}});
    }
    j["per_context"] = per;
    return j.dump();
}

void print_metrics_table(std::ostream& out, const MetricsReport& report) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s %8s %10s\n", "scope", "MRR",
                  "HIT@1", "HIT@3", "HIT@10", "queries");
    out << line;
    std::snprintf(line, sizeof(line), "%-10s %8.4f %8.4f %8.4f %8.4f %10lld\n", "all",
                  report.mrr, report.hit1, report.hit3, report.hit10,
                  static_cast<long long>(report.n_queries));
    out << line;
    for (const auto& c : report.per_context) {
        const std::string label = "ctx" + std::to_string(c.context);
        std::snprintf(line, sizeof(line), "%-10s %8.4f %8.4f %8.4f %8.4f %10lld\n",
                      label.c_str(), c.mrr, c.hit1, c.hit3, c.hit10,
                      static_cast<long long>(c.n_queries));
        out << line;
    }
}

}  // namespace seco
