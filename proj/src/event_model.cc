#include "seco/event_model.hh"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace seco {

namespace fs = std::filesystem;

std::uint64_t Vocab::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::vector<std::string>& names) {
        for (const auto& n : names) {
            h ^= fnv1a64(n);
            h *= 1099511628211ull;
        }
        h ^= 0x1full;
        h *= 1099511628211ull;
    };
    mix(entities);
    mix(relations);
    mix(contexts);
    return h;
}

const std::vector<EventQuintuple>& SnapshotSequence::at_time(std::int64_t t) const {
    if (!covers(t)) {
        throw ValidationError("SnapshotSequence: timestamp " + std::to_string(t) +
                              " outside [" + std::to_string(t_begin) + ", " +
                              std::to_string(t_end()) + ")");
    }
    return snapshots[static_cast<std::size_t>(t - t_begin)];
}

bool DatasetSplits::is_masked(std::int32_t entity) const {
    return std::binary_search(masked_entities.begin(), masked_entities.end(), entity);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::int64_t parse_int(const std::string& field, const std::string& file, int line_no) {
    std::int64_t value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw ParseError(file + ":" + std::to_string(line_no) +
                         ": expected integer, got '" + field + "'");
    }
    return value;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::vector<EventQuintuple> read_quintuple_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<EventQuintuple> events;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip_cr(raw);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 5) {
            throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                             ": expected 5 tab-separated fields, got " +
                             std::to_string(fields.size()));
        }
        EventQuintuple ev;
        const std::string fname = path.filename().string();
        ev.subject = static_cast<std::int32_t>(parse_int(fields[0], fname, line_no));
        ev.relation = static_cast<std::int32_t>(parse_int(fields[1], fname, line_no));
        ev.object = static_cast<std::int32_t>(parse_int(fields[2], fname, line_no));
        ev.time = parse_int(fields[3], fname, line_no);
        ev.context = static_cast<std::int32_t>(parse_int(fields[4], fname, line_no));
        events.push_back(ev);
    }
    return events;
}

std::vector<std::string> read_vocab_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::pair<std::string, std::int64_t>> rows;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip_cr(raw);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 2) {
            throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                             ": expected 'name<TAB>id'");
        }
        rows.emplace_back(fields[0],
                          parse_int(fields[1], path.filename().string(), line_no));
    }
    std::vector<std::string> names(rows.size());
    std::vector<bool> seen(rows.size(), false);
    for (const auto& [name, id] : rows) {
        if (id < 0 || id >= static_cast<std::int64_t>(rows.size()) ||
            seen[static_cast<std::size_t>(id)]) {
            throw ValidationError(path.filename().string() +
                                  ": ids must be dense, 0-based and unique");
        }
        seen[static_cast<std::size_t>(id)] = true;
        names[static_cast<std::size_t>(id)] = name;
    }
    return names;
}

void validate_raw_events(const std::vector<EventQuintuple>& events, const Vocab& vocab,
                         const std::string& label) {
    for (const auto& ev : events) {
        if (ev.subject < 0 || ev.subject >= vocab.num_entities() || ev.object < 0 ||
            ev.object >= vocab.num_entities()) {
            throw ValidationError(label + ": entity id out of vocab range in event (" +
                                  std::to_string(ev.subject) + "," +
                                  std::to_string(ev.relation) + "," +
                                  std::to_string(ev.object) + ")");
        }
        if (ev.relation < 0 || ev.relation >= vocab.num_relations()) {
            throw ValidationError(label + ": relation id " + std::to_string(ev.relation) +
                                  " out of vocab range");
        }
        if (ev.context < 0 || ev.context >= vocab.num_contexts()) {
            throw ValidationError(label + ": context id " + std::to_string(ev.context) +
                                  " out of range [0, " +
                                  std::to_string(vocab.num_contexts()) + ")");
        }
        if (ev.time < 0) {
            throw ValidationError(label + ": negative timestamp " +
                                  std::to_string(ev.time));
        }
    }
}

bool event_key_less(const EventQuintuple& a, const EventQuintuple& b) {
    return std::tie(a.subject, a.relation, a.object, a.context) <
           std::tie(b.subject, b.relation, b.object, b.context);
}

SnapshotSequence bucket_into_snapshots(std::vector<EventQuintuple> events,
                                       std::int64_t t_begin, std::int64_t t_end) {
    SnapshotSequence seq;
    seq.t_begin = t_begin;
    seq.snapshots.resize(static_cast<std::size_t>(std::max<std::int64_t>(0, t_end - t_begin)));
    for (auto& ev : events) {
        seq.snapshots[static_cast<std::size_t>(ev.time - t_begin)].push_back(ev);
    }
    for (auto& snap : seq.snapshots) {
        std::stable_sort(snap.begin(), snap.end(), event_key_less);
    }
    return seq;
}

}  // namespace

std::vector<EventQuintuple> add_inverse_events(const std::vector<EventQuintuple>& events,
                                               Index num_relations) {
    std::vector<EventQuintuple> out;
    out.reserve(events.size() * 2);
    out = events;
    for (const auto& ev : events) {
        if (ev.relation < 0 || ev.relation >= num_relations) {
            throw ValidationError("add_inverse_events: relation id " +
                                  std::to_string(ev.relation) + " not below |R| = " +
                                  std::to_string(num_relations));
        }
        EventQuintuple inv = ev;
        inv.subject = ev.object;
        inv.object = ev.subject;
        inv.relation = ev.relation + static_cast<std::int32_t>(num_relations);
        out.push_back(inv);
    }
    return out;
}

ContextPartition partition_by_context(const std::vector<EventQuintuple>& snapshot,
                                      int num_contexts) {
    ContextPartition part;
    part.sub_graphs.resize(static_cast<std::size_t>(num_contexts));
    for (const auto& ev : snapshot) {
        if (ev.context < 0 || ev.context >= num_contexts) {
            throw ValidationError("partition_by_context: context id " +
                                  std::to_string(ev.context) + " out of range [0, " +
                                  std::to_string(num_contexts) + ")");
        }
        part.sub_graphs[static_cast<std::size_t>(ev.context)].push_back(ev);
    }
    return part;
}

std::vector<std::span<const EventQuintuple>> history_window(const SnapshotSequence& seq,
                                                            std::int64_t t,
                                                            int window_len) {
    if (t < 0) throw ValidationError("history_window: negative timestamp");
    if (window_len < 1) throw ValidationError("history_window: window length must be >= 1");
    if (!seq.covers(t)) {
        throw ValidationError("history_window: timestamp " + std::to_string(t) +
                              " outside sequence");
    }
    const std::int64_t first = std::max(seq.t_begin, t - window_len + 1);
    std::vector<std::span<const EventQuintuple>> out;
    out.reserve(static_cast<std::size_t>(t - first + 1));
    for (std::int64_t s = first; s <= t; ++s) {
        const auto& snap = seq.snapshots[static_cast<std::size_t>(s - seq.t_begin)];
        out.emplace_back(snap.data(), snap.size());
    }
    return out;
}

SnapshotSequence combined_timeline(const DatasetSplits& splits) {
    SnapshotSequence seq;
    seq.t_begin = splits.train.t_begin;
    seq.snapshots.reserve(static_cast<std::size_t>(
        splits.train.horizon() + splits.valid.horizon() + splits.test.horizon()));
    for (const auto* part : {&splits.train, &splits.valid, &splits.test}) {
        for (const auto& snap : part->snapshots) seq.snapshots.push_back(snap);
    }
    return seq;
}

DatasetSplits build_splits(std::vector<EventQuintuple> train_events,
                           std::vector<EventQuintuple> valid_events,
                           std::vector<EventQuintuple> test_events,
                           const Vocab& vocab,
                           std::vector<std::int32_t> masked_entities) {
    validate_raw_events(train_events, vocab, "train");
    validate_raw_events(valid_events, vocab, "valid");
    validate_raw_events(test_events, vocab, "test");

    auto max_time = [](const std::vector<EventQuintuple>& evs, std::int64_t fallback) {
        std::int64_t mx = fallback;
        for (const auto& ev : evs) mx = std::max(mx, ev.time);
        return mx;
    };
    auto min_time = [](const std::vector<EventQuintuple>& evs) {
        std::int64_t mn = std::numeric_limits<std::int64_t>::max();
        for (const auto& ev : evs) mn = std::min(mn, ev.time);
        return mn;
    };

    const std::int64_t train_end = train_events.empty() ? 0 : max_time(train_events, 0) + 1;
    const std::int64_t valid_end =
        valid_events.empty() ? train_end : max_time(valid_events, 0) + 1;
    const std::int64_t test_end =
        test_events.empty() ? valid_end : max_time(test_events, 0) + 1;

    if (!valid_events.empty() && min_time(valid_events) < train_end) {
        throw ValidationError("split boundaries must be strictly increasing: a valid "
                              "timestamp precedes the end of train");
    }
    if (!test_events.empty() && min_time(test_events) < valid_end) {
        throw ValidationError("split boundaries must be strictly increasing: a test "
                              "timestamp precedes the end of valid");
    }

    for (auto& mask : masked_entities) {
        if (mask < 0 || mask >= vocab.num_entities()) {
            throw ValidationError("masked entity id " + std::to_string(mask) +
                                  " out of vocab range");
        }
    }
    std::sort(masked_entities.begin(), masked_entities.end());
    masked_entities.erase(std::unique(masked_entities.begin(), masked_entities.end()),
                          masked_entities.end());

    DatasetSplits splits;
    splits.masked_entities = std::move(masked_entities);
    splits.train = bucket_into_snapshots(
        add_inverse_events(train_events, vocab.num_relations()), 0, train_end);
    splits.valid = bucket_into_snapshots(
        add_inverse_events(valid_events, vocab.num_relations()), train_end, valid_end);
    splits.test = bucket_into_snapshots(
        add_inverse_events(test_events, vocab.num_relations()), valid_end, test_end);
    return splits;
}

std::pair<Vocab, DatasetSplits> load_dataset(const fs::path& dir) {
    Vocab vocab;
    vocab.entities = read_vocab_file(dir / "entity2id.txt");
    vocab.relations = read_vocab_file(dir / "relation2id.txt");
    vocab.contexts = read_vocab_file(dir / "context2id.txt");
    if (vocab.entities.empty() || vocab.relations.empty() || vocab.contexts.empty()) {
        throw ValidationError("vocab files must be non-empty");
    }

    {
        std::ifstream in(dir / "stat.txt");
        if (!in) throw ParseError("cannot open " + (dir / "stat.txt").string());
        std::string raw;
        std::getline(in, raw);
        const auto fields = split_tabs(strip_cr(raw));
        if (fields.size() != 3) throw ParseError("stat.txt: expected '|E|<TAB>|R|<TAB>K'");
        if (parse_int(fields[0], "stat.txt", 1) != vocab.num_entities() ||
            parse_int(fields[1], "stat.txt", 1) != vocab.num_relations() ||
            parse_int(fields[2], "stat.txt", 1) != vocab.num_contexts()) {
            throw ValidationError("stat.txt disagrees with vocab file sizes");
        }
    }

    std::vector<std::int32_t> masked;
    if (fs::exists(dir / "masked_entities.txt")) {
        std::ifstream in(dir / "masked_entities.txt");
        std::string raw;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const std::string line = strip_cr(raw);
            if (line.empty()) continue;
            masked.push_back(static_cast<std::int32_t>(
                parse_int(line, "masked_entities.txt", line_no)));
        }
    }

    DatasetSplits splits = build_splits(read_quintuple_file(dir / "train.txt"),
                                        read_quintuple_file(dir / "valid.txt"),
                                        read_quintuple_file(dir / "test.txt"), vocab,
                                        std::move(masked));
    return {std::move(vocab), std::move(splits)};
}

void save_dataset(const fs::path& dir, const Vocab& vocab, const DatasetSplits& splits) {
    fs::create_directories(dir);
    auto write_vocab = [&dir](const std::string& file,
                              const std::vector<std::string>& names) {
        std::ofstream out(dir / file);
        if (!out) throw FormatError("cannot write " + (dir / file).string());
        for (std::size_t i = 0; i < names.size(); ++i)
            out << names[i] << '\t' << i << '\n';
    };
    write_vocab("entity2id.txt", vocab.entities);
    write_vocab("relation2id.txt", vocab.relations);
    write_vocab("context2id.txt", vocab.contexts);

    {
        std::ofstream out(dir / "stat.txt");
        out << vocab.num_entities() << '\t' << vocab.num_relations() << '\t'
            << vocab.num_contexts() << '\n';
    }
    if (!splits.masked_entities.empty()) {
        std::ofstream out(dir / "masked_entities.txt");
        for (auto id : splits.masked_entities) out << id << '\n';
    }

    auto write_split = [&](const std::string& file, const SnapshotSequence& seq) {
        std::ofstream out(dir / file);
        if (!out) throw FormatError("cannot write " + (dir / file).string());
        for (const auto& snap : seq.snapshots) {
            for (const auto& ev : snap) {
                if (ev.relation >= vocab.num_relations()) continue;   // skip inverses
                out << ev.subject << '\t' << ev.relation << '\t' << ev.object << '\t'
                    << ev.time << '\t' << ev.context << '\n';
            }
        }
    };
    write_split("train.txt", splits.train);
    write_split("valid.txt", splits.valid);
    write_split("test.txt", splits.test);
}

}  // namespace seco
