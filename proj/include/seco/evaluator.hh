#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seco/trainer.hh"

namespace seco {

struct MetricsReport {
    double mrr = 0.0;
    double hit1 = 0.0;
    double hit3 = 0.0;
    double hit10 = 0.0;
    std::int64_t n_queries = 0;

    struct PerContext {
        int context = 0;
        double mrr = 0.0;
        double hit1 = 0.0;
        double hit3 = 0.0;
        double hit10 = 0.0;
        std::int64_t n_queries = 0;
    };
    std::vector<PerContext> per_context;
};

// 1 + number of candidates scoring strictly above the truth; ties never
// worsen the rank. `excluded` (sorted ascending; time-aware filtering) names
// candidates to skip unless they are the truth itself.
int rank_of_truth(const RowVector& scores, int truth);
int rank_of_truth(const RowVector& scores, int truth,
                  std::span<const std::int32_t> excluded);

MetricsReport compute_metrics(std::span<const int> ranks);

struct EvalOptions {
    bool filtered = false;       // time-aware filtered ranking
    bool avr_context = false;    // ignore query context, average all branches
    int threads = 1;
};

enum class SplitKind { valid, test };

// Sequential-evaluation protocol: each query (s, r, o, t+1, c) is scored from
// the D-step history ending at t, drawn from the full timeline; queries whose
// ground-truth object is masked are dropped.
MetricsReport evaluate_split(const ParamStore& params, const ModelConfig& mcfg,
                             const HyperIncidence& incidence, const Vocab& vocab,
                             const DatasetSplits& splits, SplitKind which,
                             const EvalOptions& options = {});

MetricsReport evaluate_split(const ModelCheckpoint& ckpt, const Vocab& vocab,
                             const DatasetSplits& splits, SplitKind which,
                             const EvalOptions& options = {});

// Trains with the named component disabled and evaluates the test split.
// Variants: full | no-ent-hg | no-rel-hg | no-hg | avr-context.
MetricsReport run_ablation(const std::string& variant, const Vocab& vocab,
                           const DatasetSplits& splits, TrainConfig cfg,
                           std::ostream* epoch_log = nullptr,
                           const EvalOptions& options = {});

// Distribution over objects for one (s, r, c) query with history ending at the
// last timestamp of the dataset; backs the CLI's single-query prediction.
Matrix score_next_query(const ModelCheckpoint& ckpt, const Vocab& vocab,
                        const DatasetSplits& splits, int subject, int relation,
                        int context);

std::string metrics_json(const MetricsReport& report);
void print_metrics_table(std::ostream& out, const MetricsReport& report);

}  // namespace seco
