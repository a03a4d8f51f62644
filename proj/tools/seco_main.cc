#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <numeric>
#include <streambuf>

#include "seco/context_gen.hh"
#include "seco/evaluator.hh"
#include "seco/synthetic.hh"
#include "seco/trainer.hh"

namespace {

using namespace seco;

// Duplicates the epoch log onto stdout and an optional file.
class TeeBuf final : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

protected:
    int overflow(int ch) override {
        if (ch == traits_type::eof()) return 0;
        const int ra = a_ != nullptr ? a_->sputc(static_cast<char>(ch)) : ch;
        const int rb = b_ != nullptr ? b_->sputc(static_cast<char>(ch)) : ch;
        return ra == traits_type::eof() || rb == traits_type::eof() ? traits_type::eof()
                                                                    : ch;
    }
    int sync() override {
        int r = 0;
        if (a_ != nullptr) r |= a_->pubsync();
        if (b_ != nullptr) r |= b_->pubsync();
        return r;
    }

private:
    std::streambuf* a_;
    std::streambuf* b_;
};

TrainConfig load_config_with_overrides(const std::string& config_path,
                                       const std::vector<std::string>& overrides,
                                       const std::optional<std::uint64_t>& seed) {
    TrainConfig cfg =
        config_path.empty() ? TrainConfig{} : parse_train_config(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("--set expects key=value, got '" + kv + "'");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    validate(cfg);
    return cfg;
}

int lookup_id(const std::string& value, const std::vector<std::string>& names,
              const char* what) {
    int id = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), id);
    if (ec == std::errc() && ptr == value.data() + value.size()) return id;
    const auto it = std::find(names.begin(), names.end(), value);
    if (it == names.end()) {
        throw ValidationError(std::string(what) + " '" + value + "' not found in vocab");
    }
    return static_cast<int>(it - names.begin());
}

int cmd_gen_synthetic(const std::string& config_path, const std::string& out_dir,
                      const std::optional<std::uint64_t>& seed) {
    PlantedSpec spec = config_path.empty() ? PlantedSpec{} : parse_planted_config(config_path);
    if (seed) spec.seed = *seed;
    validate(spec);
    const PlantedDataset data = generate(spec);
    save_dataset(out_dir, data.vocab, data.splits);
    std::cerr << "wrote planted dataset to " << out_dir << " (|E|=" << spec.n_entities
              << ", |R|=" << spec.n_relations << ", K=" << spec.n_contexts
              << ", T=" << spec.timestamps << ")\n";
    std::cout << "context_blind_bound\t"
              << context_blind_bound(data.vocab, data.splits) << "\n";
    return 0;
}

int cmd_gen_contexts(const std::string& data_dir, const std::string& corpus_path,
                     const std::string& map_path, int k, const std::string& out_dir,
                     std::uint64_t seed, int max_iters, int top_n) {
    namespace fs = std::filesystem;
    Vocab vocab;

    // Vocab names come from the quadruple dataset's id files.
    auto read_names = [](const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open " + path.string());
        std::vector<std::pair<std::string, std::size_t>> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw ParseError(path.string() + ": expected 'name<TAB>id'");
            rows.emplace_back(line.substr(0, tab), std::stoul(line.substr(tab + 1)));
        }
        std::vector<std::string> names(rows.size());
        for (auto& [name, id] : rows) names.at(id) = name;
        return names;
    };
    vocab.entities = read_names(fs::path(data_dir) / "entity2id.txt");
    vocab.relations = read_names(fs::path(data_dir) / "relation2id.txt");
    for (int c = 0; c < k; ++c) vocab.contexts.push_back("context" + std::to_string(c));

    const auto train_q = load_quadruple_file(fs::path(data_dir) / "train.txt");
    const auto valid_q = load_quadruple_file(fs::path(data_dir) / "valid.txt");
    const auto test_q = load_quadruple_file(fs::path(data_dir) / "test.txt");

    // One document per corpus line.
    std::vector<std::vector<std::string>> documents;
    {
        std::ifstream in(corpus_path);
        if (!in) throw ParseError("cannot open corpus " + corpus_path);
        std::string line;
        while (std::getline(in, line)) documents.push_back(tokenize(line));
    }

    // Event line numbers index the concatenation train|valid|test, 0-based.
    const std::size_t n_events = train_q.size() + valid_q.size() + test_q.size();
    std::vector<std::int32_t> event_to_doc(n_events, -1);
    {
        std::ifstream in(map_path);
        if (!in) throw ParseError("cannot open event map " + map_path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw ParseError("event map line " + std::to_string(line_no) +
                                 ": expected 'event<TAB>doc'");
            }
            const auto ev = std::stoll(line.substr(0, tab));
            const auto doc = std::stoll(line.substr(tab + 1));
            if (ev < 0 || ev >= static_cast<std::int64_t>(n_events)) {
                throw ValidationError("event map: event index " + std::to_string(ev) +
                                      " out of range");
            }
            event_to_doc[static_cast<std::size_t>(ev)] = static_cast<std::int32_t>(doc);
        }
    }

    const DocVectors vectors = vectorize(documents);
    const KMeansResult clusters = kmeans(vectors, k, seed, max_iters);

    auto label_slice = [&](const std::vector<EventQuadruple>& events, std::size_t offset) {
        std::vector<std::int32_t> slice(event_to_doc.begin() + static_cast<std::ptrdiff_t>(offset),
                                        event_to_doc.begin() +
                                            static_cast<std::ptrdiff_t>(offset + events.size()));
        return assign_contexts(events, slice, clusters.labels);
    };
    const auto train_events = label_slice(train_q, 0);
    const auto valid_events = label_slice(valid_q, train_q.size());
    const auto test_events = label_slice(test_q, train_q.size() + valid_q.size());

    std::vector<std::int32_t> masked;
    if (fs::exists(fs::path(data_dir) / "masked_entities.txt")) {
        std::ifstream in(fs::path(data_dir) / "masked_entities.txt");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) masked.push_back(std::stoi(line));
        }
    }

    const DatasetSplits splits =
        build_splits(train_events, valid_events, test_events, vocab, masked);
    save_dataset(out_dir, vocab, splits);

    {
        std::ofstream out(fs::path(out_dir) / "top_terms.txt");
        const auto tops = top_terms(clusters.centroids, vectors.terms, top_n);
        for (std::size_t c = 0; c < tops.size(); ++c) {
            out << "context" << c << ":";
            for (const auto& term : tops[c]) out << ' ' << term;
            out << '\n';
        }
    }
    std::cerr << "wrote quintuple dataset with K=" << k << " to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_path, const std::string& log_path,
              const std::vector<std::string>& overrides,
              const std::optional<std::uint64_t>& seed) {
    const TrainConfig cfg = load_config_with_overrides(config_path, overrides, seed);
    const auto [vocab, splits] = load_dataset(data_dir);
    Trainer trainer(vocab, splits, cfg);
    std::cerr << "parameters: " << model_param_count(trainer.model_config()) << "\n";

    std::ofstream log_file;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw FormatError("cannot write log file " + log_path);
    }
    TeeBuf tee(std::cout.rdbuf(), log_file.is_open() ? log_file.rdbuf() : nullptr);
    std::ostream log(&tee);
    const ModelCheckpoint best = trainer.fit(&log);
    save_checkpoint(best, out_path);
    std::cerr << "best epoch " << best.epoch << " (valid MRR " << best.best_mrr
              << ") saved to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split, bool filtered, bool avr_context, bool json,
             int threads) {
    const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
    const auto [vocab, splits] = load_dataset(data_dir);
    EvalOptions options;
    options.filtered = filtered;
    options.avr_context = avr_context;
    options.threads = threads;
    const SplitKind kind = split == "valid" ? SplitKind::valid : SplitKind::test;
    const MetricsReport report = evaluate_split(ckpt, vocab, splits, kind, options);
    if (json) {
        std::cout << metrics_json(report) << "\n";
    } else {
        print_metrics_table(std::cout, report);
    }
    return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& config_path,
               const std::string& variants_csv, bool json,
               const std::vector<std::string>& overrides,
               const std::optional<std::uint64_t>& seed) {
    const TrainConfig cfg = load_config_with_overrides(config_path, overrides, seed);
    const auto [vocab, splits] = load_dataset(data_dir);

    std::vector<std::string> variants;
    std::size_t start = 0;
    while (start <= variants_csv.size()) {
        const auto comma = variants_csv.find(',', start);
        const std::string v = variants_csv.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!v.empty()) variants.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }

    nlohmann::json rows = nlohmann::json::array();
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %8s %8s %8s %8s\n", "variant", "MRR",
                  "HIT@1", "HIT@3", "HIT@10");
    if (!json) std::cout << line;
    for (const auto& variant : variants) {
        std::cerr << "training variant " << variant << "...\n";
        const MetricsReport report = run_ablation(variant, vocab, splits, cfg);
        if (json) {
            nlohmann::json row = nlohmann::json::parse(metrics_json(report));
            row["variant"] = variant;
            rows.push_back(row);
        } else {
            std::snprintf(line, sizeof(line), "%-14s %8.4f %8.4f %8.4f %8.4f\n",
                          variant.c_str(), report.mrr, report.hit1, report.hit3,
                          report.hit10);
            std::cout << line << std::flush;
        }
    }
    if (json) std::cout << rows.dump() << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_dir,
                const std::string& subject, const std::string& relation,
                const std::string& context, int top_n, bool json) {
    const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
    const auto [vocab, splits] = load_dataset(data_dir);
    const int s = lookup_id(subject, vocab.entities, "subject");
    int r = 0;
    {
        // Relation may name a base relation or give any id < 2|R|.
        int id = 0;
        auto [ptr, ec] = std::from_chars(relation.data(), relation.data() + relation.size(), id);
        r = ec == std::errc() && ptr == relation.data() + relation.size()
                ? id
                : lookup_id(relation, vocab.relations, "relation");
    }
    const int c = lookup_id(context, vocab.contexts, "context");

    const Matrix probs = score_next_query(ckpt, vocab, splits, s, r, c);
    std::vector<int> order(static_cast<std::size_t>(probs.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs(0, a) > probs(0, b); });
    const int shown = std::min<int>(top_n, static_cast<int>(order.size()));

    if (json) {
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < shown; ++i) {
            rows.push_back({{"id", order[static_cast<std::size_t>(i)]},
                            {"name", vocab.entities[static_cast<std::size_t>(
                                         order[static_cast<std::size_t>(i)])]},
                            {"probability", probs(0, order[static_cast<std::size_t>(i)])}});
        }
        std::cout << rows.dump() << "\n";
    } else {
        for (int i = 0; i < shown; ++i) {
            const int id = order[static_cast<std::size_t>(i)];
            std::printf("%d\t%s\t%.6f\n", id, vocab.entities[static_cast<std::size_t>(id)].c_str(),
                        probs(0, id));
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-aware temporal event forecasting over disentangled event graphs"};
    app.require_subcommand(1);
    app.fallthrough();   // accept global flags like --seed after the subcommand

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override every seeded random stream")->capture_default_str();

    std::string data_dir, config_path, out_path, log_path, ckpt_path;
    std::string split = "test", variants = "full,no-ent-hg,no-rel-hg,no-hg,avr-context";
    std::string subject, relation, context;
    std::string corpus_path, map_path;
    std::vector<std::string> overrides;
    bool filtered = false, avr_context = false, json = false;
    int threads = 1, top_n = 5, k = 3, max_iters = 100, top_terms_n = 10;

    auto* synth = app.add_subcommand("gen-synthetic", "generate a planted-context dataset");
    synth->add_option("--config", config_path, "planted spec file (key = value lines)");
    synth->add_option("--out", out_path, "output dataset directory")->required();

    auto* genctx = app.add_subcommand("gen-contexts",
                                      "cluster source documents and label a quadruple dataset");
    genctx->add_option("--data", data_dir, "quadruple dataset directory")->required();
    genctx->add_option("--corpus", corpus_path, "one document per line")->required();
    genctx->add_option("--map", map_path, "event-line<TAB>doc-line pairs")->required();
    genctx->add_option("--k", k, "number of contexts")->required();
    genctx->add_option("--out", out_path, "output dataset directory")->required();
    genctx->add_option("--max-iters", max_iters, "k-means iteration cap");
    genctx->add_option("--top-terms", top_terms_n, "terms per context in the report");

    auto* train = app.add_subcommand("train", "train and save the best checkpoint");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--config", config_path, "training config file");
    train->add_option("--out", out_path, "checkpoint output path")->required();
    train->add_option("--log", log_path, "also write the epoch log to this file");
    train->add_option("--set", overrides, "override a config key, e.g. --set lr=0.01");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--split", split, "valid or test")
        ->check(CLI::IsMember({"valid", "test"}));
    eval->add_flag("--filtered", filtered, "time-aware filtered ranking");
    eval->add_flag("--avr-context", avr_context,
                   "average all context branches instead of selecting the query's");
    eval->add_flag("--json", json, "machine-readable metrics");
    eval->add_option("--threads", threads, "worker parallelism for evaluation");

    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
    ablate->add_option("--data", data_dir, "dataset directory")->required();
    ablate->add_option("--config", config_path, "training config file");
    ablate->add_option("--variants", variants, "comma-separated variant list");
    ablate->add_flag("--json", json, "machine-readable metrics");
    ablate->add_option("--set", overrides, "override a config key");

    auto* predict = app.add_subcommand("predict", "rank objects for one (s, r, c) query");
    predict->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    predict->add_option("--data", data_dir, "dataset directory")->required();
    predict->add_option("--subject", subject, "entity id or name")->required();
    predict->add_option("--relation", relation, "relation id or name")->required();
    predict->add_option("--context", context, "context id or name")->required();
    predict->add_option("--top", top_n, "number of candidates to print");
    predict->add_flag("--json", json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_gen_synthetic(config_path, out_path, seed);
        if (genctx->parsed()) {
            return cmd_gen_contexts(data_dir, corpus_path, map_path, k, out_path,
                                    seed.value_or(0), max_iters, top_terms_n);
        }
        if (train->parsed()) {
            return cmd_train(data_dir, config_path, out_path, log_path, overrides, seed);
        }
        if (eval->parsed()) {
            return cmd_eval(ckpt_path, data_dir, split, filtered, avr_context, json,
                            threads);
        }
        if (ablate->parsed()) {
            return cmd_ablate(data_dir, config_path, variants, json, overrides, seed);
        }
        if (predict->parsed()) {
            return cmd_predict(ckpt_path, data_dir, subject, relation, context, top_n,
                               json);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
