#pragma once

#include <span>
#include <vector>

#include "seco/context_encoder.hh"
#include "seco/param_store.hh"
#include "seco/tape.hh"

namespace seco {

struct DecoderConfig {
    int embed_dim = 200;
    int channels = 50;      // convolution output channels
    int kernel_width = 3;
    double rrelu_lower = kRreluLowerDefault;
    double rrelu_upper = kRreluUpperDefault;
};

// One decoder branch per context: convolution kernel (channels x 2*width,
// first half over the subject row, second half over the relation row),
// per-channel bias, and the flatten projection back to embedding width.
struct DecoderParamRefs {
    Var kernel;   // F x 2w
    Var kbias;    // 1 x F
    Var proj;     // F*d x d
    Var pbias;    // 1 x d
};

void init_decoder_params(ParamStore& store, int context, const DecoderConfig& cfg,
                         std::uint64_t master_seed);

DecoderParamRefs bind_decoder_params(Tape& tape, ParamStore& store, int context);
DecoderParamRefs bind_decoder_params(Tape& tape, const ParamStore& store, int context);

// Same-length 1-D convolution over the two stacked rows. Output column layout
// is channel-major: channel f occupies columns [f*d, (f+1)*d).
Var conv_pair_rows(Var subj, Var rel, Var kernel, Var kbias, int width);

// Probability rows over all entities for a batch of (subject, relation)
// queries under one context branch: convolve the stacked embeddings, project
// to embedding width, rectify, take inner products with every entity row of
// the context's table and apply softmax.
Var score_queries(Tape& tape, Var ent_table, Var rel_table,
                  std::span<const std::int32_t> subjects,
                  std::span<const std::int32_t> relations, const DecoderParamRefs& params,
                  const DecoderConfig& cfg, Mode mode, Rng* rng);

// Mean of all context branches' distributions for the same (s, r) queries;
// used by the context-agnostic ablation.
Var avr_context_score(Tape& tape, const std::vector<ContextState>& states,
                      std::span<const std::int32_t> subjects,
                      std::span<const std::int32_t> relations,
                      const std::vector<DecoderParamRefs>& params,
                      const DecoderConfig& cfg, Mode mode, Rng* rng);

// Argmax entity id; ties resolve to the smallest id.
int predict_from_scores(const Matrix& probability_rows, Index row = 0);

// Queries of one context at the target timestamp.
struct QueryBatch {
    std::vector<std::int32_t> subjects;
    std::vector<std::int32_t> relations;
    std::vector<int> objects;
};

// Mean of -ln p(object) across every query of every context.
Var batch_loss(Tape& tape, const std::vector<ContextState>& states,
               const std::vector<QueryBatch>& queries,
               const std::vector<DecoderParamRefs>& params, const DecoderConfig& cfg,
               Mode mode, Rng* rng);

}  // namespace seco
