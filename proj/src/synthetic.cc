#include "seco/synthetic.hh"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace seco {

void validate(const PlantedSpec& spec) {
    auto fail = [](const std::string& msg) {
        throw ValidationError("planted spec: " + msg);
    };
    if (spec.n_entities < 1) fail("entities must be >= 1");
    if (spec.n_relations < 1) fail("relations must be >= 1");
    if (spec.n_contexts < 1) fail("contexts must be >= 1");
    if (spec.timestamps < 1) fail("timestamps must be >= 1");
    if (spec.events_per_step < 1) fail("events_per_step must be >= 1");
    if (!(spec.noise >= 0.0 && spec.noise < 1.0)) fail("noise must lie in [0, 1)");
    if (!(spec.context_dependence >= 0.0 && spec.context_dependence <= 1.0)) {
        fail("context_dependence must lie in [0, 1]");
    }
}

PlantedSpec parse_planted_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open planted spec " + path.string());
    PlantedSpec spec;
    std::string raw;
    int line_no = 0;
    auto trim = [](const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto as_int = [&]() {
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (ec != std::errc() || ptr != value.data() + value.size()) {
                throw ValidationError("planted spec: key '" + key +
                                      "' expects an integer");
            }
            return v;
        };
        auto as_double = [&]() {
            try {
                std::size_t used = 0;
                const double d = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                return d;
            } catch (const std::exception&) {
                throw ValidationError("planted spec: key '" + key + "' expects a number");
            }
        };
        if (key == "entities") spec.n_entities = as_int();
        else if (key == "relations") spec.n_relations = as_int();
        else if (key == "contexts") spec.n_contexts = static_cast<int>(as_int());
        else if (key == "timestamps") spec.timestamps = as_int();
        else if (key == "events_per_step") spec.events_per_step = static_cast<int>(as_int());
        else if (key == "noise") spec.noise = as_double();
        else if (key == "context_dependence") spec.context_dependence = as_double();
        else if (key == "seed") spec.seed = static_cast<std::uint64_t>(as_int());
        else throw ValidationError("planted spec: unknown key '" + key + "'");
    }
    validate(spec);
    return spec;
}

namespace {

// Sattolo shuffle: a uniformly random cyclic permutation, hence fixed-point
// free for two or more elements.
void sattolo(std::vector<std::int32_t>& values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 2);
        std::swap(values[i - 1], values[pick(rng)]);
    }
}

std::vector<std::int32_t> random_permutation(Index n, Rng& rng) {
    std::vector<std::int32_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    return perm;
}

}  // namespace

PlantedDataset generate(const PlantedSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);

    // Planted map: f(s, r, c) = sigma_r(tau_{r,c}(s)) with per-relation base
    // permutation sigma_r and per-context relabelings tau that cyclically
    // permute the context-dependent subjects and fix the rest. Every f(., r, c)
    // stays a bijection, so subject prediction via inverse relations has a
    // unique answer as well.
    const Index n = spec.n_entities;
    const auto n_dependent = static_cast<std::size_t>(
        std::llround(spec.context_dependence * static_cast<double>(n)));
    PlantedDataset out;
    out.truth.resize(static_cast<std::size_t>(spec.n_relations));
    for (Index r = 0; r < spec.n_relations; ++r) {
        const auto sigma = random_permutation(n, rng);
        auto ids = random_permutation(n, rng);
        ids.resize(std::max<std::size_t>(n_dependent, 0));
        std::sort(ids.begin(), ids.end());
        auto& per_rel = out.truth[static_cast<std::size_t>(r)];
        per_rel.resize(static_cast<std::size_t>(spec.n_contexts));
        for (int c = 0; c < spec.n_contexts; ++c) {
            std::vector<std::int32_t> tau(static_cast<std::size_t>(n));
            std::iota(tau.begin(), tau.end(), 0);
            if (c > 0 && ids.size() >= 2) {
                std::vector<std::int32_t> moved = ids;
                sattolo(moved, rng);
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    tau[static_cast<std::size_t>(ids[i])] = moved[i];
                }
            }
            auto& slice = per_rel[static_cast<std::size_t>(c)];
            slice.resize(static_cast<std::size_t>(n));
            for (Index s = 0; s < n; ++s) {
                slice[static_cast<std::size_t>(s)] =
                    sigma[static_cast<std::size_t>(tau[static_cast<std::size_t>(s)])];
            }
        }
    }

    std::uniform_int_distribution<std::int32_t> pick_entity(0, static_cast<std::int32_t>(n - 1));
    std::uniform_int_distribution<std::int32_t> pick_relation(
        0, static_cast<std::int32_t>(spec.n_relations - 1));
    std::uniform_int_distribution<std::int32_t> pick_context(0, spec.n_contexts - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    const std::int64_t train_end = spec.timestamps * 8 / 10;
    const std::int64_t valid_end = spec.timestamps * 9 / 10;
    std::vector<EventQuintuple> train_events, valid_events, test_events;
    for (std::int64_t t = 0; t < spec.timestamps; ++t) {
        for (int i = 0; i < spec.events_per_step; ++i) {
            EventQuintuple ev;
            ev.subject = pick_entity(rng);
            ev.relation = pick_relation(rng);
            ev.context = pick_context(rng);
            ev.time = t;
            ev.object = out.truth[static_cast<std::size_t>(ev.relation)]
                                 [static_cast<std::size_t>(ev.context)]
                                 [static_cast<std::size_t>(ev.subject)];
            if (spec.noise > 0.0 && coin(rng) < spec.noise) ev.object = pick_entity(rng);
            if (t < train_end) train_events.push_back(ev);
            else if (t < valid_end) valid_events.push_back(ev);
            else test_events.push_back(ev);
        }
    }

    out.vocab.entities.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.vocab.entities.push_back("e" + std::to_string(i));
    for (Index i = 0; i < spec.n_relations; ++i)
        out.vocab.relations.push_back("r" + std::to_string(i));
    for (int i = 0; i < spec.n_contexts; ++i)
        out.vocab.contexts.push_back("c" + std::to_string(i));

    out.splits = build_splits(std::move(train_events), std::move(valid_events),
                              std::move(test_events), out.vocab, {});
    return out;
}

double context_blind_bound(const Vocab& vocab, const DatasetSplits& splits) {
    (void)vocab;
    std::int64_t n_test = 0;
    for (const auto& snap : splits.test.snapshots) {
        for (const auto& ev : snap) {
            if (!splits.is_masked(ev.object)) ++n_test;
        }
    }
    if (n_test == 0) throw ValidationError("context_blind_bound: empty test split");

    // Most frequent training object per (s, r); smallest id wins ties.
    std::map<std::pair<std::int32_t, std::int32_t>, std::map<std::int32_t, std::int64_t>>
        counts;
    for (const auto& snap : splits.train.snapshots) {
        for (const auto& ev : snap) counts[{ev.subject, ev.relation}][ev.object] += 1;
    }
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> predictor;
    for (const auto& [key, objs] : counts) {
        std::int32_t best = -1;
        std::int64_t best_count = -1;
        for (const auto& [obj, count] : objs) {
            if (count > best_count) {
                best = obj;
                best_count = count;
            }
        }
        predictor[key] = best;
    }

    std::int64_t hits = 0;
    for (const auto& snap : splits.test.snapshots) {
        for (const auto& ev : snap) {
            if (splits.is_masked(ev.object)) continue;
            const auto it = predictor.find({ev.subject, ev.relation});
            if (it != predictor.end() && it->second == ev.object) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n_test);
}

}  // namespace seco
