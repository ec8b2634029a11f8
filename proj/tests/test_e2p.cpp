#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "e2p/errors.hpp"
#include "e2p/objectives.hpp"
#include "e2p/optim.hpp"
#include "e2p/projection.hpp"
#include "e2p/rng.hpp"
#include "e2p/synth.hpp"
#include "e2p/train.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace e2p;

namespace {

LMConfig small_lm_config() {
    LMConfig cfg;
    cfg.vocab_size = Tokenizer::kVocabSize;
    cfg.hidden_dim = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.max_seq_len = 48;
    cfg.seed = 3;
    return cfg;
}

double frobenius(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("project: annihilating and constant cases") {
    ProjectionParams phi = ProjectionParams::init(6, 8, 4, 1);
    const UserEmbedding c = {1, -2, 3, 0.5, -0.25, 2};

    Tensor w2 = phi.w2();
    std::fill(w2.data().begin(), w2.data().end(), 0.0);
    CHECK(project(phi, c).values() == std::vector<double>(4, 0.0));
    CHECK(project(phi, {0, 0, 0, 0, 0, 0}).values() == std::vector<double>(4, 0.0));

    Tensor b = phi.bias();
    b.data() = {1.5, -2.5, 0.25, 9.0};
    CHECK(project(phi, c).values() == b.values());
    CHECK(project(phi, {9, 9, 9, 9, 9, 9}).values() == b.values());
}

TEST_CASE("project rejects mismatched embedding dimension") {
    ProjectionParams phi = ProjectionParams::init(6, 8, 4, 1);
    try {
        project(phi, {1, 2, 3});
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("6") != std::string::npos);
    }
}

TEST_CASE("project gradients match finite differences") {
    Rng rng(21);
    ProjectionParams phi = ProjectionParams::init(6, 8, 5, 2);
    UserEmbedding c(6);
    for (double& v : c) v = rng.gaussian(0.0, 1.0);

    Tensor loss = sum(project(phi, c));
    backward(loss);
    for (Tensor& t : phi.params()) {
        REQUIRE(t.has_grad());
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double numeric = oracle::central_diff(
                [&] {
                    NoGradGuard no_grad;
                    return sum(project(phi, c)).item();
                },
                t.data()[i], 1e-5);
            CHECK(oracle::rel_err(t.grad()[i], numeric) < 1e-4);
        }
    }
}

TEST_CASE("project is deterministic and locally Lipschitz") {
    Rng rng(31);
    ProjectionParams phi = ProjectionParams::init(10, 12, 8, 7);
    UserEmbedding c(10);
    for (double& v : c) v = rng.gaussian(0.0, 1.0);

    NoGradGuard no_grad;
    CHECK(project(phi, c).values() == project(phi, c).values());

    const double delta = 1e-6;
    UserEmbedding c2 = c;
    for (double& v : c2) v += delta / std::sqrt(double(c2.size()));
    const auto p1 = project(phi, c).values();
    const auto p2 = project(phi, c2).values();
    double change = 0.0;
    for (std::size_t i = 0; i < p1.size(); ++i) change += (p1[i] - p2[i]) * (p1[i] - p2[i]);
    change = std::sqrt(change);
    CHECK(change <= 10.0 * frobenius(phi.w1()) * frobenius(phi.w2()) * delta);
}

TEST_CASE("inject: shape, prefix row content, and length guard") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    ProjectionParams phi = ProjectionParams::init(4, 8, cfg.hidden_dim, 3);
    const TokenSequence tokens = {10, 20, 30};

    Tensor p = project(phi, {1, 2, 3, 4});
    Tensor h0 = inject(p, tokens, lm);
    CHECK(h0.shape() == std::vector<std::size_t>{4, cfg.hidden_dim});

    // row 0 is exactly p before the positional addition
    for (std::size_t j = 0; j < cfg.hidden_dim; ++j)
        CHECK(h0.at(0, j) == doctest::Approx(p.at(0, j) + lm.position_embedding().at(0, j))
                                 .epsilon(1e-15));

    const TokenSequence too_long(cfg.max_seq_len, 1);
    CHECK_THROWS_AS(inject(p, too_long, lm), ShapeError);
}

TEST_CASE("a non-degenerate projected prefix changes downstream logits") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    ProjectionParams phi = ProjectionParams::init(4, 8, cfg.hidden_dim, 3);
    const TokenSequence tokens = {10, 20, 30};

    NoGradGuard no_grad;
    Tensor zero_prefix = Tensor::zeros({1, cfg.hidden_dim});
    const Tensor base = lm.forward(inject(zero_prefix, tokens, lm));
    const Tensor personalized = lm.forward(inject(project(phi, {1, -1, 2, 0.5}), tokens, lm));
    double diff = 0.0;
    for (std::size_t i = 0; i < base.numel(); ++i)
        diff = std::max(diff, std::abs(base.values()[i] - personalized.values()[i]));
    CHECK(diff > 0.0);
}

TEST_CASE("lm_loss: point-mass model reaches ~zero loss") {
    Tokenizer tok;
    const LMRecord record{{0.5, -0.5}, "<|model|>\nabc"};
    const TokenSequence toks = tok.tokenize(record.text);
    REQUIRE(toks.size() == 5);

    // rows 1..T hold the tokens; row t must predict token t
    TokenSequence expected_at_row(toks.size() + 1, 0);
    for (std::size_t t = 0; t < toks.size(); ++t) expected_at_row[t] = toks[t];
    FrozenLMWeights lm = testutil::point_mass_model(expected_at_row);

    // phi collapses to a constant prefix pointing at the first token
    ProjectionParams phi = ProjectionParams::init(2, 4, lm.config().hidden_dim, 1);
    Tensor w2 = phi.w2();
    std::fill(w2.data().begin(), w2.data().end(), 0.0);

    CHECK(lm_loss(phi, lm, record, tok).item() < 1e-6);
}

TEST_CASE("lm_loss: untrained model sits near ln V") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    ProjectionParams phi = ProjectionParams::init(4, 8, cfg.hidden_dim, 3);
    const LMRecord record{{0.1, 0.2, 0.3, 0.4},
                          "<|user|>\nhi\n<|eot_id|>\n<|model|>\nabcabcab"};
    const double loss = lm_loss(phi, lm, record, Tokenizer{}).item();
    const double lnv = std::log(double(cfg.vocab_size));
    CHECK(loss == doctest::Approx(lnv).epsilon(0.10));
}

TEST_CASE("lm_loss equals the mean of its per-position cross-entropy terms") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    Tokenizer tok;
    ProjectionParams phi = ProjectionParams::init(3, 6, cfg.hidden_dim, 5);
    const LMRecord record{{0.3, -0.7, 1.1}, "<|user|>\nq\n<|eot_id|>\n<|model|>\nhello"};

    const double loss = lm_loss(phi, lm, record, tok).item();

    NoGradGuard no_grad;
    const MaskedSequence seq = mask_lm_record(record, tok);
    Tensor prefix = project(phi, record.uservector);
    Tensor logits = lm.forward(inject(prefix, seq.tokens, lm));
    double mean = 0.0;
    std::size_t count = 0;
    for (std::size_t t = seq.target_begin; t < seq.tokens.size(); ++t) {
        mean += softmax_cross_entropy(row(logits, t), std::size_t(seq.tokens[t])).item();
        ++count;
    }
    mean /= double(count);
    CHECK(std::abs(loss - mean) <= 1e-12);
}

TEST_CASE("lm_loss truncates over-length records from the left of the prompt") {
    LMConfig cfg = small_lm_config();
    cfg.max_seq_len = 16;
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    Tokenizer tok;
    ProjectionParams phi = ProjectionParams::init(2, 4, cfg.hidden_dim, 1);
    // long prompt, short target
    const LMRecord record{{1.0, 2.0},
                          "<|user|>\n" + std::string(40, 'x') + "\n<|eot_id|>\n<|model|>\nab"};
    CHECK(std::isfinite(lm_loss(phi, lm, record, tok).item()));

    const MaskedSequence seq = mask_lm_record(record, tok);
    const MaskedSequence fitted = fit_sequence(seq, cfg.max_seq_len, true);
    CHECK(fitted.tokens.size() == cfg.max_seq_len - 1);
    // the target region survives intact at the tail
    CHECK(fitted.tokens[fitted.target_begin] == int('a'));
    CHECK(fitted.tokens[fitted.target_begin + 1] == int('b'));

    // a target that cannot fit at all is a data error
    MaskedSequence huge;
    huge.tokens.assign(40, int('z'));
    huge.target_begin = 0;
    CHECK_THROWS_AS(fit_sequence(huge, 16, false), DataError);
}

TEST_CASE("kto objective: vanishing negatives, saturated positives, hand arithmetic") {
    // alpha = 0: negatives contribute nothing, in loss or gradient
    Tensor p_neg = Tensor::scalar(0.3, true);
    Tensor loss0 = kto_objective({{p_neg, 0}}, 0.0);
    CHECK(loss0.item() == 0.0);
    backward(loss0);
    CHECK_FALSE(p_neg.has_grad()); // no graph reaches it

    // a confident positive contributes ~nothing
    Tensor p_pos = Tensor::scalar(1.0 - 1e-13, true);
    CHECK(std::abs(kto_objective({{p_pos, 1}}, 1.0).item()) < 1e-9);

    // -(ln 0.8 + ln 0.7)/2
    Tensor a = Tensor::scalar(0.8, true);
    Tensor b = Tensor::scalar(0.3, true);
    const double loss = kto_objective({{a, 1}, {b, 0}}, 1.0).item();
    CHECK(loss == doctest::Approx(-(std::log(0.8) + std::log(0.7)) / 2.0).epsilon(1e-9));
    CHECK(loss == doctest::Approx(0.28990).epsilon(1e-4));

    CHECK_THROWS_AS(kto_objective({{a, 2}}, 1.0), DataError);
    CHECK_THROWS_AS(kto_objective({{a, 1}}, -0.5), ConfigError);
}

TEST_CASE("kto gradient signs: raising p helps positives, hurts negatives") {
    for (double p0 : {0.1, 0.4, 0.7, 0.95}) {
        Tensor pp = Tensor::scalar(p0, true);
        backward(kto_objective({{pp, 1}}, 1.0));
        CHECK(pp.grad()[0] <= 0.0); // increasing p decreases the loss

        Tensor pn = Tensor::scalar(p0, true);
        backward(kto_objective({{pn, 0}}, 0.5));
        CHECK(pn.grad()[0] >= 0.0);
    }
}

TEST_CASE("kto_loss end-to-end gradient matches finite differences") {
    LMConfig cfg = small_lm_config();
    cfg.n_layers = 1;
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    Tokenizer tok;
    ProjectionParams phi = ProjectionParams::init(3, 6, cfg.hidden_dim, 5);
    const std::vector<PrefRecord> batch = {
        {{0.5, 1.0, -0.5}, "<|user|>\nq\n<|eot_id|>\n<|model|>\n", "ab", 1},
        {{-1.0, 0.2, 0.8}, "<|user|>\nq\n<|eot_id|>\n<|model|>\n", "cd", 0},
    };

    Tensor loss = kto_loss(phi, lm, batch, 0.7, tok);
    backward(loss);
    for (Tensor& t : phi.params()) {
        REQUIRE(t.has_grad());
        for (std::size_t i = 0; i < t.numel(); i += 3) { // every third entry
            const double numeric = oracle::central_diff(
                [&] {
                    NoGradGuard no_grad;
                    return kto_loss(phi, lm, batch, 0.7, tok).item();
                },
                t.data()[i], 1e-5);
            CHECK(oracle::rel_err(t.grad()[i], numeric) < 1e-4);
        }
    }
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
    Tensor w = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
    AdamW opt({w});
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;

    backward(scale(sum(w), 0.0)); // gradient exists and is exactly zero
    opt.step(cfg);
    CHECK(w.values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adamw: first step moves by ~lr in the gradient sign direction") {
    Tensor w = Tensor::from({4}, {0.0, 0.0, 0.0, 0.0}, true);
    AdamW opt({w});
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;

    // loss = w · g for a constant g, so dL/dw_i = g_i exactly
    const std::vector<double> g = {2.0, -0.5, 1e-3, -7.0};
    Tensor gdiag = Tensor::zeros({4, 4});
    for (std::size_t i = 0; i < 4; ++i) gdiag.data()[i * 4 + i] = g[i];
    backward(sum(matmul(as_row(w), gdiag)));
    opt.step(cfg);

    // bias-corrected first step: |delta| = lr * g / (|g| + eps) ~ lr * sign(g)
    for (std::size_t i = 0; i < 4; ++i) {
        const double sign = g[i] > 0 ? 1.0 : -1.0;
        CHECK(w.values()[i] == doctest::Approx(-cfg.learning_rate * sign).epsilon(1e-3));
    }
}

TEST_CASE("adamw: bit-identical across reruns, aborts on non-finite gradients") {
    auto run = [] {
        Tensor w = Tensor::from({2}, {0.5, -0.5}, true);
        AdamW opt({w});
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        for (int step = 0; step < 10; ++step) {
            backward(sum(relu(w)));
            opt.step(cfg);
        }
        return w.values();
    };
    CHECK(run() == run());

    // log at zero puts an infinite gradient on w; the step must refuse it
    Tensor w = Tensor::from({1}, {0.0}, true);
    AdamW opt({w});
    backward(sum(log_op(w)));
    TrainConfig cfg;
    CHECK_THROWS_AS(opt.step(cfg), ContractError);
}

TEST_CASE("per-task hyper-parameter defaults") {
    const TrainConfig pc = default_train_config("personachat");
    CHECK(pc.learning_rate == 5e-6);
    CHECK(pc.batch_size == 64);
    CHECK(pc.epochs == 3);
    CHECK(pc.seed == 42);

    const TrainConfig pens = default_train_config("pens");
    CHECK(pens.learning_rate == 5e-6);
    CHECK(pens.batch_size == 32);
    CHECK(pens.epochs == 3);

    const TrainConfig music = default_train_config("music");
    CHECK(music.learning_rate == 5e-7);
    CHECK(music.batch_size == 256);
    CHECK(music.epochs == 5);

    const TrainConfig podcast = default_train_config("podcast");
    CHECK(podcast.learning_rate == 1e-5);
    CHECK(podcast.batch_size == 16);
    CHECK(podcast.epochs == 5);

    const TrainConfig other = default_train_config("anything-else");
    CHECK(other.learning_rate == 5e-6);
    CHECK(other.batch_size == 32);
    CHECK(other.epochs == 5);
}

TEST_CASE("train_e2p updates exactly the projection and never the model") {
    LMConfig cfg = small_lm_config();
    cfg.n_layers = 1;
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    const std::string digest_before = lm.digest();

    PopulationConfig pop_cfg;
    pop_cfg.n_clusters = 2;
    pop_cfg.embedding_dim = 4;
    pop_cfg.n_symbols = 4;
    pop_cfg.symbols_per_record = 4;
    SyntheticPopulation pop = SyntheticPopulation::generate(pop_cfg, 4, 17);
    std::vector<LMRecord> records;
    for (const auto& sr : synth_lm_records(pop, 3, 17)) records.push_back(sr.record);

    const auto lm_before = [&] {
        std::vector<std::vector<double>> snap;
        for (const auto& [name, t] : lm.named_params()) snap.push_back(t.values());
        return snap;
    }();

    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 4;
    tc.epochs = 1;
    tc.seed = 42;

    TrainReport report;
    ProjectionParams phi = train_e2p(lm, records, Objective::LM, tc, Tokenizer{}, 8, &report);

    // the frozen side is bit-identical
    CHECK(lm.digest() == digest_before);
    lm.verify_frozen();
    {
        std::size_t idx = 0;
        for (const auto& [name, t] : lm.named_params()) CHECK(t.values() == lm_before[idx++]);
    }

    // every projection tensor moved
    ProjectionParams fresh =
        ProjectionParams::init(pop_cfg.embedding_dim, 8, cfg.hidden_dim, tc.seed);
    const auto fresh_named = fresh.named_params();
    std::size_t idx = 0;
    for (const auto& [name, t] : phi.named_params()) {
        CHECK(t.values() != fresh_named[idx].second.values());
        ++idx;
    }

    CHECK(report.objective == "lm");
    CHECK(report.lm_digest == digest_before);
    CHECK(report.epoch_losses.size() == 1);
    CHECK(report.n_records == records.size());
}

TEST_CASE("train_e2p input contracts") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    TrainConfig tc;
    Tokenizer tok;

    // unfrozen model is rejected
    CHECK_THROWS_AS(train_e2p(lm, std::vector<LMRecord>{{{1.0}, "ab"}}, Objective::LM, tc, tok),
                    ContractError);
    lm.freeze();
    CHECK_THROWS_AS(train_e2p(lm, std::vector<LMRecord>{}, Objective::LM, tc, tok), DataError);
    CHECK_THROWS_AS(
        train_e2p(lm, std::vector<LMRecord>{{{1.0}, "ab"}}, Objective::KTO, tc, tok),
        ConfigError);
}

TEST_CASE("phi checkpoint round-trip with model digest pairing") {
    LMConfig cfg = small_lm_config();
    FrozenLMWeights lm = FrozenLMWeights::init(cfg);
    lm.freeze();
    ProjectionParams phi = ProjectionParams::init(4, 8, cfg.hidden_dim, 3);
    const auto path = std::filesystem::temp_directory_path() / "e2p_test_phi.ckpt";
    phi.save(path.string(), "lm", 1.0, lm.digest());

    const LoadedProjection loaded = load_projection(path.string(), lm.digest());
    CHECK(loaded.objective == "lm");
    CHECK(loaded.lm_digest == lm.digest());
    CHECK(loaded.phi.compute_digest() == phi.compute_digest());

    NoGradGuard no_grad;
    CHECK(project(loaded.phi, {1, 2, 3, 4}).values() == project(phi, {1, 2, 3, 4}).values());
    std::filesystem::remove(path);
}
