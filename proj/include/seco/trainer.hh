#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "seco/event_model.hh"
#include "seco/model.hh"
#include "seco/param_store.hh"

namespace seco {

struct TrainConfig {
    int embed_dim = 200;
    int rgcn_layers = 2;      // L
    int hyper_layers = 1;     // P
    int history_len = 3;      // D
    int contexts = 0;         // K; 0 means take it from the dataset
    double lr = 1e-3;
    double weight_decay = 1e-5;
    int max_epochs = 30;
    int patience = 5;
    std::uint64_t seed = 0;
    double rrelu_lower = kRreluLowerDefault;
    double rrelu_upper = kRreluUpperDefault;
    int conv_channels = 50;   // F
    int conv_width = 3;       // w
    std::string variant = "full";
};

void validate(const TrainConfig& cfg);
// Flat "key = value" lines; unknown keys are rejected.
TrainConfig parse_train_config(const std::filesystem::path& path);
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_train_config(const TrainConfig& cfg);

ModelConfig make_model_config(const TrainConfig& cfg, const Vocab& vocab);

struct VocabFingerprint {
    std::uint64_t n_entities = 0;
    std::uint64_t n_relations = 0;   // base |R|
    std::uint64_t n_contexts = 0;
    std::uint64_t content_hash = 0;

    friend bool operator==(const VocabFingerprint&, const VocabFingerprint&) = default;
};

VocabFingerprint make_fingerprint(const Vocab& vocab);

struct ModelCheckpoint {
    ParamStore params;
    TrainConfig config;
    VocabFingerprint fingerprint;
    std::int64_t epoch = 0;
    double best_mrr = 0.0;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
void check_compatible(const ModelCheckpoint& ckpt, const Vocab& vocab);

// End-to-end training over the train timeline: one optimizer step per target
// timestamp, model selection by validation MRR.
class Trainer {
public:
    Trainer(const Vocab& vocab, const DatasetSplits& splits, TrainConfig cfg);

    // One step with history ending at t and targets at t + 1. Returns the
    // pre-step loss, or nothing when the target snapshot is empty.
    std::optional<double> train_step(std::int64_t t);

    // Runs up to max_epochs, writing one tab-separated line per epoch to
    // `epoch_log` when given: epoch, mean loss, MRR, HIT@1/3/10, seconds.
    ModelCheckpoint fit(std::ostream* epoch_log = nullptr);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& model_config() const { return mcfg_; }
    const HyperIncidence& incidence() const { return incidence_; }

private:
    const Vocab* vocab_;
    const DatasetSplits* splits_;
    TrainConfig cfg_;
    ModelConfig mcfg_;
    ParamStore store_;
    HyperIncidence incidence_;
    Rng rrelu_rng_;
};

}  // namespace seco
