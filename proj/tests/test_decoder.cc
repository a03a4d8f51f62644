#include <doctest.h>

#include "seco/collaboration.hh"
#include "seco/decoder.hh"

using namespace seco;

namespace {

DecoderConfig toy_decoder(int d, int channels = 2, int width = 3) {
    DecoderConfig cfg;
    cfg.embed_dim = d;
    cfg.channels = channels;
    cfg.kernel_width = width;
    return cfg;
}

// Direct evaluation of the scoring arithmetic, written independently of the
// tape ops: plain loops over the convolution, projection, mean-slope
// rectifier, inner products and a max-shifted softmax.
Matrix oracle_scores(const Matrix& ent_table, const Matrix& rel_table,
                     const std::vector<std::int32_t>& subjects,
                     const std::vector<std::int32_t>& relations, const Matrix& kernel,
                     const Matrix& kbias, const Matrix& proj, const Matrix& pbias,
                     const DecoderConfig& cfg) {
    const Index d = cfg.embed_dim;
    const Index f_count = cfg.channels;
    const Index width = cfg.kernel_width;
    const Index pad = (width - 1) / 2;
    const Index batch = static_cast<Index>(subjects.size());

    Matrix logits(batch, ent_table.rows());
    for (Index b = 0; b < batch; ++b) {
        const RowVector es = ent_table.row(subjects[static_cast<std::size_t>(b)]);
        const RowVector rr = rel_table.row(relations[static_cast<std::size_t>(b)]);
        Eigen::RowVectorXd flat(f_count * d);
        for (Index f = 0; f < f_count; ++f) {
            for (Index j = 0; j < d; ++j) {
                double acc = kbias(0, f);
                for (Index t = 0; t < width; ++t) {
                    const Index col = j + t - pad;
                    if (col < 0 || col >= d) continue;
                    acc += kernel(f, t) * es(col) + kernel(f, width + t) * rr(col);
                }
                flat(f * d + j) = acc;
            }
        }
        RowVector h = flat * proj + pbias.row(0);
        const double mean_slope = 0.5 * (cfg.rrelu_lower + cfg.rrelu_upper);
        for (Index j = 0; j < d; ++j) {
            if (h(j) < 0.0) h(j) *= mean_slope;
        }
        for (Index e = 0; e < ent_table.rows(); ++e) logits(b, e) = h.dot(ent_table.row(e));
    }
    Matrix probs(batch, ent_table.rows());
    for (Index b = 0; b < batch; ++b) {
        const double shift = logits.row(b).maxCoeff();
        Eigen::ArrayXd ex = (logits.row(b).array() - shift).exp();
        probs.row(b) = (ex / ex.sum()).matrix();
    }
    return probs;
}

}  // namespace

TEST_SUITE_BEGIN("decoder");

TEST_CASE("all-zero decoder weights give the uniform distribution") {
    const auto cfg = toy_decoder(4);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 5);
    store.at("ctx0/dec/kernel").value.setZero();
    store.at("ctx0/dec/proj").value.setZero();

    Tape tape;
    Var ent = tape.constant(xavier_init(6, 4, 9));
    Var rel = tape.constant(xavier_init(3, 4, 10));
    const std::vector<std::int32_t> s{1, 4}, r{0, 2};
    const auto dec = bind_decoder_params(tape, store, 0);
    Var probs = score_queries(tape, ent, rel, s, r, dec, cfg, Mode::eval, nullptr);
    for (Index b = 0; b < 2; ++b)
        for (Index e = 0; e < 6; ++e)
            CHECK(probs.value()(b, e) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("score rows are probability distributions") {
    const auto cfg = toy_decoder(5, 3, 3);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 6);
    Tape tape;
    Var ent = tape.constant(xavier_init(7, 5, 11));
    Var rel = tape.constant(xavier_init(4, 5, 12));
    const std::vector<std::int32_t> s{0, 3, 6, 2}, r{1, 0, 3, 2};
    const auto dec = bind_decoder_params(tape, store, 0);
    Var probs = score_queries(tape, ent, rel, s, r, dec, cfg, Mode::eval, nullptr);
    for (Index b = 0; b < 4; ++b) {
        CHECK(std::abs(probs.value().row(b).sum() - 1.0) < 1e-9);
        CHECK(probs.value().row(b).minCoeff() >= 0.0);
    }
}

TEST_CASE("score matches the independent oracle") {
    const auto cfg = toy_decoder(4, 2, 3);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 21);
    const Matrix ent_m = xavier_init(4, 4, 22);
    const Matrix rel_m = xavier_init(3, 4, 23);
    const std::vector<std::int32_t> s{0, 2, 3, 1}, r{1, 0, 2, 1};

    Tape tape;
    const auto dec = bind_decoder_params(tape, store, 0);
    Var probs = score_queries(tape, tape.constant(ent_m), tape.constant(rel_m), s, r, dec,
                              cfg, Mode::eval, nullptr);
    const Matrix expected =
        oracle_scores(ent_m, rel_m, s, r, store.at("ctx0/dec/kernel").value,
                      store.at("ctx0/dec/kbias").value, store.at("ctx0/dec/proj").value,
                      store.at("ctx0/dec/pbias").value, cfg);
    CHECK((probs.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("even kernel widths keep the output length") {
    const auto cfg = toy_decoder(5, 2, 4);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 31);
    Tape tape;
    Var ent = tape.constant(xavier_init(4, 5, 32));
    Var rel = tape.constant(xavier_init(2, 5, 33));
    const std::vector<std::int32_t> s{1}, r{0};
    const auto dec = bind_decoder_params(tape, store, 0);
    Var probs = score_queries(tape, ent, rel, s, r, dec, cfg, Mode::eval, nullptr);
    CHECK(probs.value().cols() == 4);
    CHECK(std::abs(probs.value().row(0).sum() - 1.0) < 1e-9);
}

TEST_CASE("predict takes the argmax with smallest-id ties") {
    Matrix p(1, 3);
    p << 0.1, 0.7, 0.2;
    CHECK(predict_from_scores(p) == 1);

    Matrix tie(1, 6);
    tie << 0.1, 0.1, 0.3, 0.1, 0.1, 0.3;
    CHECK(predict_from_scores(tie) == 2);
}

TEST_CASE("batch_loss equals ln |E| under an untrained uniform head") {
    const auto cfg = toy_decoder(4);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 41);
    store.at("ctx0/dec/kernel").value.setZero();
    store.at("ctx0/dec/proj").value.setZero();

    Tape tape;
    std::vector<ContextState> states{{tape.constant(xavier_init(100, 4, 42)),
                                      tape.constant(xavier_init(2, 4, 43))}};
    std::vector<QueryBatch> queries(1);
    queries[0].subjects = {4, 9};
    queries[0].relations = {0, 1};
    queries[0].objects = {17, 3};
    std::vector<DecoderParamRefs> decs{bind_decoder_params(tape, store, 0)};
    Var loss = batch_loss(tape, states, queries, decs, cfg, Mode::eval, nullptr);
    CHECK(loss.value()(0, 0) == doctest::Approx(std::log(100.0)).epsilon(1e-9));
    CHECK(std::log(100.0) == doctest::Approx(4.60517).epsilon(1e-5));
}

TEST_CASE("batch_loss is the mean over every context's queries") {
    const auto cfg = toy_decoder(3, 2, 3);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 51);
    init_decoder_params(store, 1, cfg, 52);
    const Matrix e0 = xavier_init(5, 3, 53), r0 = xavier_init(4, 3, 54);
    const Matrix e1 = xavier_init(5, 3, 55), r1 = xavier_init(4, 3, 56);

    std::vector<QueryBatch> queries(2);
    queries[0].subjects = {0, 2, 4};
    queries[0].relations = {1, 0, 3};
    queries[0].objects = {3, 0, 1};
    queries[1].subjects = {1};
    queries[1].relations = {2};
    queries[1].objects = {4};

    Tape tape;
    std::vector<ContextState> states{{tape.constant(e0), tape.constant(r0)},
                                     {tape.constant(e1), tape.constant(r1)}};
    std::vector<DecoderParamRefs> decs{bind_decoder_params(tape, store, 0),
                                       bind_decoder_params(tape, store, 1)};
    Var loss = batch_loss(tape, states, queries, decs, cfg, Mode::eval, nullptr);

    // Independent recompute from the per-context score matrices.
    double expected = 0.0;
    for (int c = 0; c < 2; ++c) {
        Var probs = score_queries(tape, states[static_cast<std::size_t>(c)].entities,
                                  states[static_cast<std::size_t>(c)].relations,
                                  queries[static_cast<std::size_t>(c)].subjects,
                                  queries[static_cast<std::size_t>(c)].relations,
                                  decs[static_cast<std::size_t>(c)], cfg, Mode::eval,
                                  nullptr);
        for (std::size_t i = 0; i < queries[static_cast<std::size_t>(c)].objects.size(); ++i) {
            expected += -std::log(probs.value()(
                static_cast<Index>(i), queries[static_cast<std::size_t>(c)].objects[i]));
        }
    }
    expected /= 4.0;
    CHECK(loss.value()(0, 0) == doctest::Approx(expected).epsilon(1e-12));

    std::vector<QueryBatch> empty(2);
    CHECK_THROWS_AS(batch_loss(tape, states, empty, decs, cfg, Mode::eval, nullptr),
                    ValidationError);
}

TEST_CASE("avr_context_score with one context equals score bit-exactly") {
    const auto cfg = toy_decoder(4);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 61);
    Tape tape;
    std::vector<ContextState> states{{tape.constant(xavier_init(5, 4, 62)),
                                      tape.constant(xavier_init(3, 4, 63))}};
    std::vector<DecoderParamRefs> decs{bind_decoder_params(tape, store, 0)};
    const std::vector<std::int32_t> s{2, 0}, r{1, 2};
    Var avr = avr_context_score(tape, states, s, r, decs, cfg, Mode::eval, nullptr);
    Var direct = score_queries(tape, states[0].entities, states[0].relations, s, r,
                               decs[0], cfg, Mode::eval, nullptr);
    CHECK(avr.value() == direct.value());
}

TEST_CASE("avr_context_score averages the branch distributions") {
    const auto cfg = toy_decoder(3, 2, 3);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 71);
    init_decoder_params(store, 1, cfg, 72);
    init_decoder_params(store, 2, cfg, 73);
    Tape tape;
    std::vector<ContextState> states;
    std::vector<DecoderParamRefs> decs;
    for (int c = 0; c < 3; ++c) {
        states.push_back({tape.constant(xavier_init(6, 3, 80 + c)),
                          tape.constant(xavier_init(4, 3, 90 + c))});
        decs.push_back(bind_decoder_params(tape, store, c));
    }
    const std::vector<std::int32_t> s{1, 5, 3}, r{0, 2, 1};
    Var avr = avr_context_score(tape, states, s, r, decs, cfg, Mode::eval, nullptr);

    Matrix mean = Matrix::Zero(3, 6);
    for (int c = 0; c < 3; ++c) {
        mean += score_queries(tape, states[static_cast<std::size_t>(c)].entities,
                              states[static_cast<std::size_t>(c)].relations, s, r,
                              decs[static_cast<std::size_t>(c)], cfg, Mode::eval, nullptr)
                    .value();
    }
    mean /= 3.0;
    CHECK((avr.value() - mean).cwiseAbs().maxCoeff() < 1e-15);
    for (Index b = 0; b < 3; ++b)
        CHECK(std::abs(avr.value().row(b).sum() - 1.0) < 1e-9);
}

TEST_CASE("decoder branches are parameter-isolated") {
    const auto cfg = toy_decoder(4);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 75);
    init_decoder_params(store, 1, cfg, 76);
    const Matrix ent_m = xavier_init(5, 4, 77);
    const Matrix rel_m = xavier_init(3, 4, 78);
    const std::vector<std::int32_t> s{0, 4}, r{2, 1};

    auto run_branch = [&](int c) {
        Tape tape;
        const auto dec = bind_decoder_params(tape, store, c);
        return score_queries(tape, tape.constant(ent_m), tape.constant(rel_m), s, r, dec,
                             cfg, Mode::eval, nullptr)
            .value();
    };
    const Matrix before = run_branch(0);
    store.at("ctx1/dec/kernel").value.array() += 0.5;
    store.at("ctx1/dec/proj").value.array() -= 0.25;
    CHECK(run_branch(0) == before);
    CHECK(run_branch(1) != before);
}

TEST_CASE("loss through collaboration and decoder passes the gradient oracle") {
    const auto cfg = toy_decoder(4, 2, 3);
    ParamStore store;
    init_decoder_params(store, 0, cfg, 81);
    init_decoder_params(store, 1, cfg, 82);
    store.create("state/e0", xavier_init(6, 4, 83));
    store.create("state/e1", xavier_init(6, 4, 84));
    store.create("state/r0", xavier_init(4, 4, 85));
    store.create("state/r1", xavier_init(4, 4, 86));
    const std::vector<std::vector<std::int32_t>> ent_sets{{0, 1}, {0}, {0, 1},
                                                          {1}, {0, 1}, {}};
    const std::vector<std::vector<std::int32_t>> rel_sets{{0, 1}, {0, 1}, {1}, {0}};

    std::vector<QueryBatch> queries(2);
    queries[0].subjects = {0, 4};
    queries[0].relations = {1, 0};
    queries[0].objects = {2, 5};
    queries[1].subjects = {3};
    queries[1].relations = {2};
    queries[1].objects = {0};

    auto loss = [&](bool with_grad) {
        Tape tape;
        std::vector<Var> ents{tape.param(store, "state/e0"), tape.param(store, "state/e1")};
        std::vector<Var> rels{tape.param(store, "state/r0"), tape.param(store, "state/r1")};
        const auto mixed_e = propagate(tape, ents, ent_sets, 2);
        const auto mixed_r = propagate(tape, rels, rel_sets, 1);
        std::vector<ContextState> states{{mixed_e[0], mixed_r[0]},
                                         {mixed_e[1], mixed_r[1]}};
        std::vector<DecoderParamRefs> decs{bind_decoder_params(tape, store, 0),
                                           bind_decoder_params(tape, store, 1)};
        Var l = batch_loss(tape, states, queries, decs, cfg, Mode::eval, nullptr);
        if (with_grad) tape.backward(l);
        return l.value()(0, 0);
    };
    CHECK(grad_check(store, loss, 1e-5).max_rel_err < 1e-4);
}

TEST_SUITE_END();
