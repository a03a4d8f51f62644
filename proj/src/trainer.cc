#include "seco/trainer.hh"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "seco/evaluator.hh"

namespace seco {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' expects a number, got '" +
                              value + "'");
    }
}

std::int64_t parse_integer(const std::string& key, const std::string& value) {
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ValidationError("config: key '" + key + "' expects an integer, got '" +
                              value + "'");
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ValidationError("config: key '" + key + "' expects an unsigned integer");
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

void validate(const TrainConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
    if (cfg.embed_dim < 1) fail("embed_dim must be >= 1");
    if (cfg.rgcn_layers < 1) fail("rgcn_layers must be >= 1");
    if (cfg.hyper_layers < 0) fail("hyper_layers must be >= 0");
    if (cfg.history_len < 1) fail("history_len must be >= 1");
    if (cfg.contexts < 0) fail("contexts must be >= 0");
    if (cfg.lr < 0.0) fail("lr must be >= 0");
    if (cfg.weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (cfg.max_epochs < 1) fail("max_epochs must be >= 1");
    if (cfg.patience < 1) fail("patience must be >= 1");
    if (!(cfg.rrelu_lower > 0.0 && cfg.rrelu_lower <= cfg.rrelu_upper &&
          cfg.rrelu_upper < 1.0)) {
        fail("rrelu bounds must satisfy 0 < lower <= upper < 1");
    }
    if (cfg.conv_channels < 1) fail("conv_channels must be >= 1");
    if (cfg.conv_width < 1) fail("conv_width must be >= 1");
    parse_variant(cfg.variant);
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "embed_dim") cfg.embed_dim = static_cast<int>(parse_integer(key, value));
    else if (key == "rgcn_layers") cfg.rgcn_layers = static_cast<int>(parse_integer(key, value));
    else if (key == "hyper_layers") cfg.hyper_layers = static_cast<int>(parse_integer(key, value));
    else if (key == "history_len") cfg.history_len = static_cast<int>(parse_integer(key, value));
    else if (key == "contexts") cfg.contexts = static_cast<int>(parse_integer(key, value));
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "max_epochs") cfg.max_epochs = static_cast<int>(parse_integer(key, value));
    else if (key == "patience") cfg.patience = static_cast<int>(parse_integer(key, value));
    else if (key == "seed") cfg.seed = parse_unsigned(key, value);
    else if (key == "rrelu_lower") cfg.rrelu_lower = parse_double(key, value);
    else if (key == "rrelu_upper") cfg.rrelu_upper = parse_double(key, value);
    else if (key == "conv_channels") cfg.conv_channels = static_cast<int>(parse_integer(key, value));
    else if (key == "conv_width") cfg.conv_width = static_cast<int>(parse_integer(key, value));
    else if (key == "variant") cfg.variant = value;
    else throw ValidationError("config: unknown key '" + key + "'");
}

TrainConfig parse_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path.string());
    TrainConfig cfg;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate(cfg);
    return cfg;
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "embed_dim = " << cfg.embed_dim << '\n'
        << "rgcn_layers = " << cfg.rgcn_layers << '\n'
        << "hyper_layers = " << cfg.hyper_layers << '\n'
        << "history_len = " << cfg.history_len << '\n'
        << "contexts = " << cfg.contexts << '\n'
        << "lr = " << fmt_double(cfg.lr) << '\n'
        << "weight_decay = " << fmt_double(cfg.weight_decay) << '\n'
        << "max_epochs = " << cfg.max_epochs << '\n'
        << "patience = " << cfg.patience << '\n'
        << "seed = " << cfg.seed << '\n'
        << "rrelu_lower = " << fmt_double(cfg.rrelu_lower) << '\n'
        << "rrelu_upper = " << fmt_double(cfg.rrelu_upper) << '\n'
        << "conv_channels = " << cfg.conv_channels << '\n'
        << "conv_width = " << cfg.conv_width << '\n'
        << "variant = " << cfg.variant << '\n';
    return out.str();
}

ModelConfig make_model_config(const TrainConfig& cfg, const Vocab& vocab) {
    if (cfg.contexts != 0 && cfg.contexts != vocab.num_contexts()) {
        throw CompatibilityError("config expects " + std::to_string(cfg.contexts) +
                                 " contexts but the dataset has " +
                                 std::to_string(vocab.num_contexts()));
    }
    ModelConfig m;
    m.n_entities = vocab.num_entities();
    m.n_relations_aug = vocab.num_relations_aug();
    m.n_contexts = vocab.num_contexts();
    m.embed_dim = cfg.embed_dim;
    m.rgcn_layers = cfg.rgcn_layers;
    m.hyper_layers = cfg.hyper_layers;
    m.history_len = cfg.history_len;
    m.conv_channels = cfg.conv_channels;
    m.conv_width = cfg.conv_width;
    m.rrelu_lower = cfg.rrelu_lower;
    m.rrelu_upper = cfg.rrelu_upper;
    m.variant = parse_variant(cfg.variant);
    return m;
}

VocabFingerprint make_fingerprint(const Vocab& vocab) {
    VocabFingerprint fp;
    fp.n_entities = static_cast<std::uint64_t>(vocab.num_entities());
    fp.n_relations = static_cast<std::uint64_t>(vocab.num_relations());
    fp.n_contexts = static_cast<std::uint64_t>(vocab.num_contexts());
    fp.content_hash = vocab.content_hash();
    return fp;
}

// -- checkpoint serialization -------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'E', 'C', 'O'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_matrix(std::ostream& out, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

void get_matrix(std::istream& in, Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64(in);
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const std::string cfg = serialize_train_config(ckpt.config);
    put_u64(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put_u64(out, ckpt.fingerprint.n_entities);
    put_u64(out, ckpt.fingerprint.n_relations);
    put_u64(out, ckpt.fingerprint.n_contexts);
    put_u64(out, ckpt.fingerprint.content_hash);
    put_u64(out, static_cast<std::uint64_t>(ckpt.epoch));
    put_f64(out, ckpt.best_mrr);
    put_u64(out, static_cast<std::uint64_t>(ckpt.params.step_count()));
    put_u64(out, ckpt.params.size());
    for (const auto& [name, entry] : ckpt.params) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, static_cast<std::uint64_t>(entry.value.rows()));
        put_u64(out, static_cast<std::uint64_t>(entry.value.cols()));
        put_matrix(out, entry.value);
        put_matrix(out, entry.m);
        put_matrix(out, entry.v);
    }
    if (!out) throw FormatError("checkpoint write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported format version " +
                          std::to_string(version));
    }
    ModelCheckpoint ckpt;
    const std::uint64_t cfg_len = get_u64(in);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    if (!in) throw FormatError("checkpoint: truncated config block");
    {
        std::istringstream cfg_in(cfg_text);
        std::string line;
        while (std::getline(cfg_in, line)) {
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw FormatError("checkpoint: bad config line");
            set_config_value(ckpt.config, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }
    ckpt.fingerprint.n_entities = get_u64(in);
    ckpt.fingerprint.n_relations = get_u64(in);
    ckpt.fingerprint.n_contexts = get_u64(in);
    ckpt.fingerprint.content_hash = get_u64(in);
    ckpt.epoch = static_cast<std::int64_t>(get_u64(in));
    ckpt.best_mrr = get_f64(in);
    const auto step = static_cast<std::int64_t>(get_u64(in));
    const std::uint64_t n_tensors = get_u64(in);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        const std::uint64_t name_len = get_u64(in);
        if (name_len > (1u << 16)) throw FormatError("checkpoint: implausible tensor name");
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in) throw FormatError("checkpoint: truncated tensor name");
        const auto rows = static_cast<Index>(get_u64(in));
        const auto cols = static_cast<Index>(get_u64(in));
        if (rows < 0 || cols < 0 || rows * cols > (1ll << 32)) {
            throw FormatError("checkpoint: implausible tensor shape");
        }
        Matrix value(rows, cols);
        get_matrix(in, value);
        ckpt.params.create(name, std::move(value));
        ParamEntry& entry = ckpt.params.at(name);
        get_matrix(in, entry.m);
        get_matrix(in, entry.v);
    }
    ckpt.params.set_step_count(step);
    in.peek();
    if (!in.eof()) throw FormatError("checkpoint: trailing bytes");
    return ckpt;
}

void check_compatible(const ModelCheckpoint& ckpt, const Vocab& vocab) {
    const VocabFingerprint now = make_fingerprint(vocab);
    if (now == ckpt.fingerprint) return;
    std::ostringstream msg;
    msg << "checkpoint incompatible with dataset:";
    if (now.n_entities != ckpt.fingerprint.n_entities)
        msg << " |E| " << ckpt.fingerprint.n_entities << " vs " << now.n_entities;
    if (now.n_relations != ckpt.fingerprint.n_relations)
        msg << " |R| " << ckpt.fingerprint.n_relations << " vs " << now.n_relations;
    if (now.n_contexts != ckpt.fingerprint.n_contexts)
        msg << " K " << ckpt.fingerprint.n_contexts << " vs " << now.n_contexts;
    if (now.content_hash != ckpt.fingerprint.content_hash)
        msg << " vocab content hash differs";
    throw CompatibilityError(msg.str());
}

// -- training loop -------------------------------------------------------------

Trainer::Trainer(const Vocab& vocab, const DatasetSplits& splits, TrainConfig cfg)
    : vocab_(&vocab),
      splits_(&splits),
      cfg_(std::move(cfg)),
      mcfg_(make_model_config(cfg_, vocab)),
      incidence_(build_incidence(splits.train, vocab)),
      rrelu_rng_(derive_seed(cfg_.seed, "rrelu-stream")) {
    validate(cfg_);
    init_model_params(store_, mcfg_, cfg_.seed);
}

std::optional<double> Trainer::train_step(std::int64_t t) {
    const auto& target = splits_->train.at_time(t + 1);
    if (target.empty()) return std::nullopt;

    const auto window = history_window(splits_->train, t, cfg_.history_len);
    const auto parts = partition_snapshots(window, mcfg_.n_contexts);
    const auto by_context = partition_window(parts);

    std::vector<QueryBatch> queries(static_cast<std::size_t>(mcfg_.n_contexts));
    for (const auto& ev : target) {
        auto& q = queries[static_cast<std::size_t>(ev.context)];
        q.subjects.push_back(ev.subject);
        q.relations.push_back(ev.relation);
        q.objects.push_back(ev.object);
    }

    Tape tape;
    const ModelRefs refs = bind_model(tape, store_, mcfg_);
    const auto states =
        encode_all_contexts(tape, refs, by_context, mcfg_, Mode::train, &rrelu_rng_);
    const auto mixed = collaborate(tape, states, incidence_, mcfg_);
    Var loss = batch_loss(tape, mixed, queries, refs.decoders, mcfg_.decoder(),
                          Mode::train, &rrelu_rng_);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at timestamp " + std::to_string(t + 1));
    }

    store_.zero_grad();
    tape.backward(loss);
    store_.adam_step({cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay});
    return value;
}

ModelCheckpoint Trainer::fit(std::ostream* epoch_log) {
    ModelCheckpoint best;
    best.config = cfg_;
    best.fingerprint = make_fingerprint(*vocab_);
    double best_mrr = -std::numeric_limits<double>::infinity();
    int epochs_without_improvement = 0;

    for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
        const auto tick = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        std::int64_t steps = 0;
        for (std::int64_t t = 0; t + 1 < splits_->train.horizon(); ++t) {
            std::optional<double> loss;
            try {
                loss = train_step(t);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (loss) {
                loss_sum += *loss;
                ++steps;
            }
        }
        const double mean_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;

        const MetricsReport metrics = evaluate_split(store_, mcfg_, incidence_, *vocab_,
                                                     *splits_, SplitKind::valid);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
        if (epoch_log != nullptr) {
            char line[256];
            std::snprintf(line, sizeof(line),
                          "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f\n", epoch, mean_loss,
                          metrics.mrr, metrics.hit1, metrics.hit3, metrics.hit10, seconds);
            (*epoch_log) << line << std::flush;
        }

        if (metrics.mrr > best_mrr) {
            best_mrr = metrics.mrr;
            best.params = store_;
            best.epoch = epoch;
            best.best_mrr = metrics.mrr;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= cfg_.patience) break;
        }
    }
    return best;
}

}  // namespace seco
