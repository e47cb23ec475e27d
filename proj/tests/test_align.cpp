#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "melalign/align.hpp"
#include "melalign/rng.hpp"
#include "testutil.hpp"

using namespace melalign;

namespace {

const VocabConfig kVocabCfg{};
constexpr double kLn2 = 0.6931471805599453;

// Policies differing by a single logit bump produce an exact log-ratio
// margin: the normalizer shift cancels between the bumped and unbumped
// sequences of the same row.
struct MarginFixture {
    Policy reference;
    Policy policy;
    PreferencePair pair;
    UnpairedSample sample;
};

MarginFixture make_margin_fixture(double bump) {
    const Vocabulary v{kVocabCfg};
    Rng rng(2718);
    MarginFixture fx{testutil::random_policy(rng, kVocabCfg), Policy{v}, {}, {}};
    fx.policy = fx.reference;

    fx.pair.prompt = split_lyric("moon light", Language::english);
    const PromptEncoding enc = encode_prompt(fx.pair.prompt, v);
    fx.pair.winner_tokens = {enc.begin_token, v.advance_token()};
    fx.pair.loser_tokens = {enc.begin_token, v.melisma_token()};

    fx.sample.prompt = fx.pair.prompt;
    fx.sample.tokens = fx.pair.winner_tokens;

    fx.policy.theta().at(enc.begin_token, v.advance_token()) += bump;
    return fx;
}

}  // namespace

TEST_CASE("sigmoid and softplus identities") {
    for (double x : {-30.0, -2.0, -0.2, 0.0, 0.7, 5.0, 30.0}) {
        CHECK(std::abs((1.0 - sigmoid(x)) - sigmoid(-x)) <= 1e-15);
        CHECK(std::abs(softplus(x) - (-std::log(sigmoid(-x)))) <= 1e-12);
    }
    CHECK(softplus(0.0) == kLn2);
    CHECK(sigmoid(0.0) == 0.5);

    // Extreme arguments stay finite and exact in the linear/flat tails.
    CHECK(softplus(800.0) == 800.0);
    CHECK(softplus(-800.0) == 0.0);
    CHECK(std::isfinite(sigmoid(800.0)));
    CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("both losses equal ln 2 when the policy equals the reference") {
    const Vocabulary v{kVocabCfg};
    Rng rng(100);
    for (int i = 0; i < 10; ++i) {
        const Policy policy = testutil::random_policy(rng, kVocabCfg);
        const PreferencePair pair = testutil::random_pair(rng, v);
        const UnpairedSample sample = testutil::random_unpaired(rng, v);
        for (double beta : {0.01, 0.1, 1.0}) {
            CHECK(std::abs(dpo_loss(policy, policy, pair, beta).loss - kLn2) <= 1e-12);
            CHECK(std::abs(kto_loss(policy, policy, sample, beta).loss - kLn2) <= 1e-12);
        }
    }
}

TEST_CASE("loss values for an exactly constructed margin") {
    // A +2 logit bump on the winner transition gives pair margin exactly 2:
    // winner and loser share the bumped row, so the normalizer shift cancels.
    const MarginFixture fx = make_margin_fixture(2.0);
    const LossGrad dpo = dpo_loss(fx.policy, fx.reference, fx.pair, 0.1);
    CHECK(dpo.loss == doctest::Approx(std::log(1.0 + std::exp(-0.2))).epsilon(1e-12));
    CHECK(dpo.loss == doctest::Approx(0.5981388693815918).epsilon(1e-9));

    // Scaling beta scales the argument, not the formula.
    const LossGrad dpo2 = dpo_loss(fx.policy, fx.reference, fx.pair, 0.5);
    CHECK(dpo2.loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

    // For a lone sequence the shift does not cancel, but against a uniform
    // reference it reduces to log((V - 1 + e^bump) / V).
    const Vocabulary v{kVocabCfg};
    const Policy reference{v};
    Policy policy = reference;
    const LyricLine lyric = split_lyric("moon light", Language::english);
    const PromptEncoding enc = encode_prompt(lyric, v);
    UnpairedSample sample;
    sample.prompt = lyric;
    sample.tokens = {enc.begin_token, v.advance_token()};
    policy.theta().at(enc.begin_token, v.advance_token()) += 2.0;

    const double vsize = static_cast<double>(v.size());
    const double du = 2.0 - std::log((vsize - 1.0 + std::exp(2.0)) / vsize);
    const LossGrad kto = kto_loss(policy, reference, sample, 0.1);
    CHECK(kto.loss == doctest::Approx(std::log(1.0 + std::exp(0.1 * du))).epsilon(1e-12));
}

TEST_CASE("loss gradients point the expected way") {
    const Vocabulary v{kVocabCfg};
    const MarginFixture fx = make_margin_fixture(0.0);  // policy == reference
    const PromptEncoding enc = encode_prompt(fx.pair.prompt, v);

    const LossGrad dpo = dpo_loss(fx.policy, fx.reference, fx.pair, 0.1);
    CHECK(dpo.grad.at(enc.begin_token, v.advance_token()) < 0.0);  // raise the winner
    CHECK(dpo.grad.at(enc.begin_token, v.melisma_token()) > 0.0);  // demote the loser

    const LossGrad kto = kto_loss(fx.policy, fx.reference, fx.sample, 0.1);
    CHECK(kto.grad.at(enc.begin_token, v.advance_token()) > 0.0);  // demote the sample
}

TEST_CASE("loss gradients match central differences") {
    const Vocabulary v{kVocabCfg};
    Rng rng(314);
    for (int i = 0; i < 2; ++i) {
        const Policy policy = testutil::random_policy(rng, kVocabCfg);
        const Policy reference = testutil::random_policy(rng, kVocabCfg);
        const PreferencePair pair = testutil::random_pair(rng, v);
        const UnpairedSample sample = testutil::random_unpaired(rng, v);

        const LossGrad dpo = dpo_loss(policy, reference, pair, 0.1);
        CHECK(testutil::fd_max_rel_err(
                  policy,
                  [&](const Policy& p) { return dpo_loss(p, reference, pair, 0.1).loss; },
                  dpo.grad) < 1e-5);

        const LossGrad kto = kto_loss(policy, reference, sample, 0.1);
        CHECK(testutil::fd_max_rel_err(
                  policy,
                  [&](const Policy& p) { return kto_loss(p, reference, sample, 0.1).loss; },
                  kto.grad) < 1e-5);
    }
}

TEST_CASE("loss preconditions") {
    const Vocabulary v{kVocabCfg};
    Rng rng(1);
    const Policy policy = testutil::random_policy(rng, kVocabCfg);
    const PreferencePair pair = testutil::random_pair(rng, v);
    const UnpairedSample sample = testutil::random_unpaired(rng, v);
    CHECK_THROWS_AS(dpo_loss(policy, policy, pair, 0.0), Error);
    CHECK_THROWS_AS(dpo_loss(policy, policy, pair, -0.1), Error);
    CHECK_THROWS_AS(kto_loss(policy, policy, sample, 0.0), Error);
}

TEST_CASE("batch evaluation averages per-item losses and gradients") {
    const Vocabulary v{kVocabCfg};
    Rng rng(55);
    const Policy policy = testutil::random_policy(rng, kVocabCfg);
    const Policy reference = testutil::random_policy(rng, kVocabCfg);
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 7; ++i) pairs.push_back(testutil::random_pair(rng, v));
    std::vector<std::size_t> indices = {0, 2, 4};

    const BatchEval batch = dpo_batch_eval(policy, reference, pairs, indices, 0.1);
    double expected = 0.0;
    for (std::size_t idx : indices) expected += dpo_loss(policy, reference, pairs[idx], 0.1).loss;
    expected /= static_cast<double>(indices.size());
    CHECK(batch.mean_loss == doctest::Approx(expected).epsilon(1e-12));

    CHECK_THROWS_AS(dpo_batch_eval(policy, reference, pairs, {}, 0.1), EmptyDatasetError);
}

TEST_CASE("alignment phases advance dpo -> kto -> done and reject reordering") {
    const Vocabulary v{kVocabCfg};
    Rng rng(7);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    AlignConfig cfg;
    cfg.dpo_epochs = 0;
    cfg.kto_epochs = 0;

    AlignState state{start};
    CHECK(state.phase() == Phase::dpo);
    CHECK_THROWS_AS(train_kto(state, {}, cfg), Error);

    state = train_dpo(std::move(state), {}, cfg);
    CHECK(state.phase() == Phase::kto);
    CHECK(state.policy() == start);  // zero epochs leave the policy untouched
    CHECK_THROWS_AS(train_dpo(state, {}, cfg), Error);

    state = train_kto(std::move(state), {}, cfg);
    CHECK(state.phase() == Phase::done);
    CHECK(state.policy() == start);
    CHECK_THROWS_AS(train_kto(state, {}, cfg), Error);
}

TEST_CASE("training on an empty dataset is an error only when epochs are requested") {
    const Vocabulary v{kVocabCfg};
    Rng rng(8);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    AlignConfig cfg;  // default epochs > 0
    AlignState state{start};
    CHECK_THROWS_AS(train_dpo(state, {}, cfg), EmptyDatasetError);
}

TEST_CASE("dpo on one fixed pair starts at ln 2 and descends monotonically below 0.1") {
    const Vocabulary v{kVocabCfg};
    Rng rng(99);
    const Policy start = testutil::random_policy(rng, kVocabCfg);

    // Winner and loser share only the begin row, and take it once each, so
    // every logit's pull keeps one sign for the whole run.
    PreferencePair pair;
    pair.prompt = split_lyric("moon light", Language::english);
    const int begin = encode_prompt(pair.prompt, v).begin_token;
    pair.winner_tokens = {begin, v.advance_token(), v.pitch_token(60), v.end_token()};
    pair.loser_tokens = {begin, v.melisma_token(), v.pitch_token(62), v.end_token()};
    std::vector<PreferencePair> pairs = {pair};

    AlignConfig cfg;
    cfg.dpo_beta = 1.0;
    cfg.dpo_epochs = 400;
    cfg.kto_epochs = 0;
    cfg.batch_size = 1;
    cfg.seed = 5;

    AlignState state{train_dpo(AlignState{start}, pairs, cfg)};
    const auto& log = state.log();
    REQUIRE(log.size() == 400);

    // The input policy is its own reference, so the first recorded loss is ln 2.
    CHECK(std::abs(log.front().mean_loss - kLn2) <= 1e-12);
    CHECK(log.front().grad_norm > 0.0);
    for (std::size_t i = 1; i < log.size(); ++i)
        CHECK(log[i].mean_loss < log[i - 1].mean_loss + 1e-12);
    CHECK(log.back().mean_loss < 0.1);

    // Margin over the frozen reference ended up positive.
    const PromptEncoding enc = encode_prompt(pair.prompt, v);
    const double margin =
        (log_prob(state.policy(), enc, pair.winner_tokens) -
         log_prob(state.reference(), enc, pair.winner_tokens)) -
        (log_prob(state.policy(), enc, pair.loser_tokens) -
         log_prob(state.reference(), enc, pair.loser_tokens));
    CHECK(margin > 0.0);
}

TEST_CASE("kto training pushes the undesirable sequence below the reference") {
    const Vocabulary v{kVocabCfg};
    Rng rng(111);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    const UnpairedSample sample = testutil::random_unpaired(rng, v);
    const PromptEncoding enc = encode_prompt(sample.prompt, v);

    AlignConfig cfg;
    cfg.dpo_epochs = 0;
    cfg.kto_epochs = 80;
    cfg.batch_size = 1;

    const double before = log_prob(start, enc, sample.tokens);
    AlignState state{start};
    state = train_dpo(std::move(state), {}, cfg);
    state = train_kto(std::move(state), {sample}, cfg);
    const double after = log_prob(state.policy(), enc, sample.tokens);
    CHECK(after < before);

    // Phase labels in the log match what ran.
    for (const auto& rec : state.log()) CHECK(rec.phase == Phase::kto);
}

TEST_CASE("align composes both phases against one frozen reference") {
    const Vocabulary v{kVocabCfg};
    Rng rng(123);
    const Policy start = testutil::random_policy(rng, kVocabCfg);

    PreferenceDataset ds;
    for (int i = 0; i < 6; ++i) ds.pairs.push_back(testutil::random_pair(rng, v));
    for (int i = 0; i < 4; ++i) ds.unpaired.push_back(testutil::random_unpaired(rng, v));

    AlignConfig cfg;
    cfg.dpo_epochs = 10;
    cfg.kto_epochs = 10;
    cfg.batch_size = 4;
    cfg.seed = 17;

    const AlignState state = align(start, ds, cfg);
    CHECK(state.phase() == Phase::done);
    CHECK(state.reference().theta() == start.theta());
    CHECK_FALSE(state.policy().theta() == start.theta());

    // Global step count is monotone across the phase boundary.
    int prev_step = -1;
    bool seen_kto = false;
    for (const auto& rec : state.log()) {
        CHECK(rec.step == prev_step + 1);
        prev_step = rec.step;
        if (rec.phase == Phase::kto) seen_kto = true;
        if (seen_kto) CHECK(rec.phase == Phase::kto);
    }

    // Identical configuration reproduces the run bit for bit.
    const AlignState rerun = align(start, ds, cfg);
    CHECK(rerun.policy().theta() == state.policy().theta());
    CHECK(rerun.log() == state.log());

    // Composition by hand matches the convenience wrapper.
    AlignState manual{start};
    manual = train_dpo(std::move(manual), ds.pairs, cfg);
    manual = train_kto(std::move(manual), ds.unpaired, cfg);
    CHECK(manual.policy().theta() == state.policy().theta());
}

TEST_CASE("a single sgd step applies exactly -lr times the batch gradient") {
    const Vocabulary v{kVocabCfg};
    Rng rng(321);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    std::vector<PreferencePair> pairs = {testutil::random_pair(rng, v)};

    AlignConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.lr = 0.05;
    cfg.dpo_epochs = 1;
    cfg.kto_epochs = 0;
    cfg.batch_size = 1;

    const BatchEval eval = dpo_batch_eval(start, start, pairs, {0}, cfg.effective_beta(Phase::dpo));
    AlignState state{start};
    state = train_dpo(std::move(state), pairs, cfg);

    for (int r = 0; r < eval.mean_grad.rows; ++r)
        for (int c = 0; c < eval.mean_grad.cols; ++c)
            CHECK(state.policy().theta().at(r, c) ==
                  start.theta().at(r, c) - cfg.lr * eval.mean_grad.at(r, c));
}

TEST_CASE("the first adam step moves each coordinate by about lr against the gradient") {
    const Vocabulary v{kVocabCfg};
    Rng rng(654);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    std::vector<PreferencePair> pairs = {testutil::random_pair(rng, v)};

    AlignConfig cfg;
    cfg.optimizer = Optimizer::adam;
    cfg.lr = 0.01;
    cfg.dpo_epochs = 1;
    cfg.kto_epochs = 0;
    cfg.batch_size = 1;

    const BatchEval eval = dpo_batch_eval(start, start, pairs, {0}, cfg.effective_beta(Phase::dpo));
    AlignState state{start};
    state = train_dpo(std::move(state), pairs, cfg);

    for (int r = 0; r < eval.mean_grad.rows; ++r) {
        for (int c = 0; c < eval.mean_grad.cols; ++c) {
            const double g = eval.mean_grad.at(r, c);
            const double delta = state.policy().theta().at(r, c) - start.theta().at(r, c);
            if (std::abs(g) > 1e-6) {
                CHECK(delta * g < 0.0);
                CHECK(std::abs(delta) <= cfg.lr * 1.0000001);
                CHECK(std::abs(delta) >= cfg.lr * 0.98);
            } else if (g == 0.0) {
                CHECK(delta == 0.0);
            }
        }
    }
}

TEST_CASE("per-phase beta overrides") {
    AlignConfig cfg;
    cfg.beta = 0.1;
    CHECK(cfg.effective_beta(Phase::dpo) == 0.1);
    CHECK(cfg.effective_beta(Phase::kto) == 0.1);
    cfg.dpo_beta = 0.7;
    cfg.kto_beta = 0.03;
    CHECK(cfg.effective_beta(Phase::dpo) == 0.7);
    CHECK(cfg.effective_beta(Phase::kto) == 0.03);

    // A dpo-phase override behaves exactly like the same shared beta.
    const Vocabulary v{kVocabCfg};
    Rng rng(777);
    const Policy start = testutil::random_policy(rng, kVocabCfg);
    PreferenceDataset ds;
    for (int i = 0; i < 3; ++i) ds.pairs.push_back(testutil::random_pair(rng, v));

    AlignConfig via_override;
    via_override.beta = 0.1;
    via_override.dpo_beta = 0.4;
    via_override.kto_epochs = 0;
    via_override.dpo_epochs = 5;

    AlignConfig via_shared = via_override;
    via_shared.beta = 0.4;
    via_shared.dpo_beta.reset();

    CHECK(align(start, ds, via_override).policy().theta() ==
          align(start, ds, via_shared).policy().theta());
}

TEST_CASE("align config validation") {
    AlignConfig good;
    CHECK_NOTHROW(good.validate());

    auto expect_throw = [](auto mutate) {
        AlignConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), Error);
    };
    expect_throw([](AlignConfig& c) { c.beta = 0.0; });
    expect_throw([](AlignConfig& c) { c.dpo_beta = -1.0; });
    expect_throw([](AlignConfig& c) { c.kto_beta = 0.0; });
    expect_throw([](AlignConfig& c) { c.lr = 0.0; });
    expect_throw([](AlignConfig& c) { c.dpo_epochs = -1; });
    expect_throw([](AlignConfig& c) { c.batch_size = 0; });
    expect_throw([](AlignConfig& c) { c.adam_beta1 = 1.0; });
    expect_throw([](AlignConfig& c) { c.adam_eps = 0.0; });
}

TEST_CASE("optimizer and phase names round-trip") {
    CHECK(optimizer_from_string("sgd") == Optimizer::sgd);
    CHECK(optimizer_from_string("adam") == Optimizer::adam);
    CHECK_FALSE(optimizer_from_string("lbfgs").has_value());
    CHECK(to_string(Optimizer::adam) == "adam");
    CHECK(to_string(Phase::dpo) == "dpo");
    CHECK(to_string(Phase::kto) == "kto");
    CHECK(to_string(Phase::done) == "done");
}

TEST_CASE("training log serialization") {
    testutil::TempDir dir;
    std::vector<TrainLogRecord> log;
    log.push_back(TrainLogRecord{Phase::dpo, 0, 1, 0.6931, 0.25});
    log.push_back(TrainLogRecord{Phase::kto, 2, 17, 0.41, 0.125});
    const std::string path = dir.file("train.jsonl");
    write_training_log(log, path);

    const auto lines = read_line_file(path);
    REQUIRE(lines.size() == 2);
    const auto first = nlohmann::json::parse(lines[0]);
    CHECK(first.at("phase") == "dpo");
    CHECK(first.at("epoch") == 0);
    CHECK(first.at("step") == 1);
    CHECK(first.at("mean_loss").get<double>() == doctest::Approx(0.6931));
    const auto second = nlohmann::json::parse(lines[1]);
    CHECK(second.at("phase") == "kto");
    CHECK(second.at("grad_norm").get<double>() == doctest::Approx(0.125));
}
