#include "seco/context_gen.hh"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace seco {

std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        if (current.size() >= 2) tokens.push_back(current);
        current.clear();
    };
    for (char ch : line) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc)) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

DocVectors vectorize(const std::vector<std::vector<std::string>>& documents) {
    if (documents.empty()) throw ValidationError("vectorize: need at least one document");
    bool any_token = false;
    for (const auto& doc : documents) any_token = any_token || !doc.empty();
    if (!any_token) throw ValidationError("vectorize: all documents are empty");

    std::map<std::string, std::int32_t> df;   // document frequency, term-sorted
    for (const auto& doc : documents) {
        std::set<std::string> seen(doc.begin(), doc.end());
        for (const auto& term : seen) df[term] += 1;
    }
    DocVectors out;
    out.terms.reserve(df.size());
    std::map<std::string, std::int32_t> term_id;
    for (const auto& [term, count] : df) {
        term_id.emplace(term, static_cast<std::int32_t>(out.terms.size()));
        out.terms.push_back(term);
    }

    const double n_docs = static_cast<double>(documents.size());
    out.docs.resize(documents.size());
    out.empty_flags.assign(documents.size(), 0);
    for (std::size_t i = 0; i < documents.size(); ++i) {
        const auto& doc = documents[i];
        std::map<std::int32_t, double> counts;
        for (const auto& term : doc) counts[term_id.at(term)] += 1.0;
        double norm_sq = 0.0;
        auto& vec = out.docs[i];
        for (const auto& [tid, count] : counts) {
            const double tf = count / static_cast<double>(doc.size());
            const double idf =
                std::log(n_docs / static_cast<double>(df.at(out.terms[
                    static_cast<std::size_t>(tid)])));
            const double w = tf * idf;
            if (w != 0.0) {
                vec.emplace_back(tid, w);
                norm_sq += w * w;
            }
        }
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& [tid, w] : vec) w *= inv;
        } else {
            vec.clear();
            out.empty_flags[i] = 1;
        }
    }
    return out;
}

Matrix densify(const DocVectors& vectors) {
    Matrix m = Matrix::Zero(vectors.n_docs(), vectors.n_terms());
    for (Index i = 0; i < vectors.n_docs(); ++i) {
        for (const auto& [tid, w] : vectors.docs[static_cast<std::size_t>(i)]) {
            m(i, tid) = w;
        }
    }
    return m;
}

namespace {

Index count_distinct_rows(const Matrix& points) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(points.rows()));
    for (Index i = 0; i < points.rows(); ++i) {
        rows[static_cast<std::size_t>(i)].assign(points.row(i).begin(),
                                                 points.row(i).end());
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return static_cast<Index>(rows.size());
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters) {
    if (k < 1) throw ValidationError("kmeans: k must be >= 1");
    if (max_iters < 1) throw ValidationError("kmeans: max_iters must be >= 1");
    const Index n = points.rows();
    if (count_distinct_rows(points) < k) {
        throw ValidationError("kmeans: k exceeds the number of distinct points");
    }

    Rng rng(seed);
    KMeansResult result;
    result.centroids.resize(k, points.cols());

    // k-means++ seeding: first centroid uniform, the rest by squared-distance
    // weighting against the closest chosen centroid.
    {
        std::uniform_int_distribution<Index> first(0, n - 1);
        result.centroids.row(0) = points.row(first(rng));
        Eigen::VectorXd dist_sq(n);
        for (Index i = 0; i < n; ++i) {
            dist_sq(i) = (points.row(i) - result.centroids.row(0)).squaredNorm();
        }
        for (int c = 1; c < k; ++c) {
            const double total = dist_sq.sum();
            std::uniform_real_distribution<double> pick(0.0, total);
            double target = pick(rng);
            Index chosen = n - 1;
            for (Index i = 0; i < n; ++i) {
                target -= dist_sq(i);
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            result.centroids.row(c) = points.row(chosen);
            for (Index i = 0; i < n; ++i) {
                dist_sq(i) = std::min(
                    dist_sq(i), (points.row(i) - result.centroids.row(c)).squaredNorm());
            }
        }
    }

    result.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double best_d = (points.row(i) - result.centroids.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (points.row(i) - result.centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (result.labels[static_cast<std::size_t>(i)] != static_cast<std::int32_t>(best)) {
                result.labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
                changed = true;
            }
        }
        // Update step: empty clusters keep their previous centroid.
        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
        for (Index i = 0; i < n; ++i) {
            const auto label = static_cast<std::size_t>(result.labels[static_cast<std::size_t>(i)]);
            sums.row(static_cast<Index>(label)) += points.row(i);
            counts[label] += 1.0;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0.0) {
                result.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
            }
        }
        double inertia = 0.0;
        for (Index i = 0; i < n; ++i) {
            inertia += (points.row(i) -
                        result.centroids.row(result.labels[static_cast<std::size_t>(i)]))
                           .squaredNorm();
        }
        result.inertia_trace.push_back(inertia);
        result.iterations = iter + 1;
        if (!changed) break;
    }
    return result;
}

KMeansResult kmeans(const DocVectors& vectors, int k, std::uint64_t seed, int max_iters) {
    return kmeans(densify(vectors), k, seed, max_iters);
}

std::vector<EventQuintuple> assign_contexts(const std::vector<EventQuadruple>& events,
                                            const std::vector<std::int32_t>& event_to_doc,
                                            const std::vector<std::int32_t>& labels) {
    if (event_to_doc.size() != events.size()) {
        throw ValidationError("assign_contexts: one document id per event required");
    }
    std::vector<EventQuintuple> out;
    out.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::int32_t doc = event_to_doc[i];
        if (doc < 0 || doc >= static_cast<std::int32_t>(labels.size())) {
            throw ValidationError("assign_contexts: event " + std::to_string(i) + " (" +
                                  std::to_string(events[i].subject) + "," +
                                  std::to_string(events[i].relation) + "," +
                                  std::to_string(events[i].object) + "," +
                                  std::to_string(events[i].time) +
                                  ") maps to unknown document " + std::to_string(doc));
        }
        out.push_back({events[i].subject, events[i].relation, events[i].object,
                       events[i].time, labels[static_cast<std::size_t>(doc)]});
    }
    return out;
}

std::vector<std::vector<std::string>> top_terms(const Matrix& centroids,
                                                const std::vector<std::string>& terms,
                                                int top_n) {
    std::vector<std::vector<std::string>> out;
    out.reserve(static_cast<std::size_t>(centroids.rows()));
    for (Index c = 0; c < centroids.rows(); ++c) {
        std::vector<Index> order(static_cast<std::size_t>(centroids.cols()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return centroids(c, a) > centroids(c, b);
        });
        std::vector<std::string> row;
        for (Index j : order) {
            if (static_cast<int>(row.size()) >= top_n || centroids(c, j) <= 0.0) break;
            row.push_back(terms[static_cast<std::size_t>(j)]);
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<EventQuadruple> load_quadruple_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<EventQuadruple> events;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
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
        if (fields.size() != 4) {
            throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                             ": expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()));
        }
        auto to_int = [&](const std::string& f) {
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                                 ": expected integer, got '" + f + "'");
            }
            return v;
        };
        events.push_back({static_cast<std::int32_t>(to_int(fields[0])),
                          static_cast<std::int32_t>(to_int(fields[1])),
                          static_cast<std::int32_t>(to_int(fields[2])), to_int(fields[3])});
    }
    return events;
}

}  // namespace seco
