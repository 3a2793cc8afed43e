#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "l3tc/golden.hpp"
#include "l3tc/hira.hpp"
#include "l3tc/rwkv_model.hpp"
#include "test_support.hpp"

using namespace l3tc;
using l3tc::testing::data_path;

namespace {

ModelConfig tiny_config() { return {2, 8, 12, 24}; }

std::vector<float> run(const Model& m, const std::vector<TokenId>& tokens) {
    RecurrentState s = init_state(m.config());
    std::vector<float> logits(m.config().vocab_size);
    for (TokenId t : tokens) m.forward(s, t, logits);
    return logits;
}

void expect_error(ErrorKind kind, auto&& fn) {
    try {
        fn();
        ADD_FAILURE() << "no error raised";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

}  // namespace

// Fixtures come from a float64 NumPy implementation of the recurrence that
// evaluates exp(u + k) and the decayed sums directly, without the running
// maximum the engine uses.
TEST(Golden, MatchesIndependentReference) {
    const ModelWeights w = load_model(read_file(data_path("tiny_model.l3tw")));
    ASSERT_EQ(w.config, tiny_config());
    const Model m(w);
    const auto cases = read_golden(read_file(data_path("tiny_model.l3tg")), w.config.vocab_size);
    ASSERT_EQ(cases.size(), 16u);
    const GoldenReport r = check_golden(cases, m);
    EXPECT_EQ(r.cases, 16u);
    EXPECT_LE(r.max_abs_diff, 1e-4);
}

TEST(Golden, PerturbedModelIsDetected) {
    ModelWeights w = load_model(read_file(data_path("tiny_model.l3tw")));
    w.tensors.at("blocks.1.att.time_first").data[3] += 0.5f;
    const auto cases = read_golden(read_file(data_path("tiny_model.l3tg")), w.config.vocab_size);
    EXPECT_GT(check_golden(cases, Model(w)).max_abs_diff, 1e-3);
}

TEST(Forward, ZeroWeightsGiveUniformDistribution) {
    const ModelConfig c = preset("L3TC-200K", 64);
    const Model m(zero_weights(c));
    RecurrentState s = init_state(c);
    for (TokenId t : {0u, 5u, 63u, 5u}) {
        DistributionResult d = next_distribution(m, s, t);
        for (double p : d.probabilities) ASSERT_NEAR(p, 1.0 / 64, 1e-12);
        s = std::move(d.state);
    }
}

TEST(Forward, DeterministicAndPure) {
    const ModelConfig c = preset("L3TC-200K", 128);
    const Model m(init_random_weights(c, 42));
    const RecurrentState s0 = init_state(c);
    const StepResult a = forward_step(m, s0, 17);
    const StepResult b = forward_step(m, s0, 17);
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.state, b.state);
    EXPECT_EQ(s0, init_state(c));
    EXPECT_NE(a.state, s0);
    EXPECT_NE(forward_step(m, s0, 18).logits, a.logits);
}

TEST(Forward, SameWeightsFromDiskGiveSameLogits) {
    const ModelConfig c = preset("L3TC-200K", 100);
    const ModelWeights w = init_random_weights(c, 9);
    const ModelWeights back = load_model(save_weights(w));
    EXPECT_EQ(back, w);
    EXPECT_EQ(weights_hash(back), weights_hash(w));
    const std::vector<TokenId> toks{1, 2, 3, 99, 0, 50};
    EXPECT_EQ(run(Model(w), toks), run(Model(back), toks));
}

TEST(Forward, HistoryMatters) {
    const Model m(init_random_weights(tiny_config(), 3));
    EXPECT_NE(run(m, {1, 2, 3}), run(m, {2, 1, 3}));
}

TEST(Forward, LongSequencesStayFinite) {
    ModelWeights w = init_random_weights(preset("L3TC-200K", 256), 5);
    // Large keys and slow decay push the accumulators hard.
    for (auto& [name, t] : w.tensors) {
        if (name.find("att.key.weight") != std::string::npos)
            for (auto& v : t.data) v *= 40.0f;
        if (name.find("time_decay") != std::string::npos)
            for (auto& v : t.data) v = -12.0f;
    }
    const Model m(w);
    RecurrentState s = init_state(w.config);
    std::vector<float> logits(256);
    std::mt19937 rng(1);
    for (int i = 0; i < 5000; ++i) {
        m.forward(s, rng() % 256, logits);
        for (float v : s.raw()) ASSERT_TRUE(std::isfinite(v)) << i;
    }
    for (float v : logits) EXPECT_TRUE(std::isfinite(v));
}

TEST(State, FreshStateLayout) {
    const ModelConfig c = preset("L3TC-3.2M", 300);
    RecurrentState s = init_state(c);
    EXPECT_EQ(s.scalar_count(), state_size(c));
    EXPECT_EQ(state_size(c), 5u * 3 * 256);
    for (std::uint32_t l = 0; l < c.n_layers; ++l) {
        for (float v : s.att_shift(l)) EXPECT_EQ(v, 0.0f);
        for (float v : s.num(l)) EXPECT_EQ(v, 0.0f);
        for (float v : s.den(l)) EXPECT_EQ(v, 0.0f);
        for (float v : s.max_exp(l)) EXPECT_EQ(v, RecurrentState::kNegInfSentinel);
    }
    EXPECT_EQ(init_state(c), init_state(c));
}

TEST(State, SizeIndependentOfHistory) {
    const Model m(init_random_weights(tiny_config(), 1));
    RecurrentState s = init_state(m.config());
    std::vector<float> logits(24);
    for (int i = 0; i < 1000; ++i) m.forward(s, i % 24, logits);
    EXPECT_EQ(s.scalar_count(), state_size(m.config()));
}

TEST(Counting, ParameterFormula) {
    EXPECT_EQ(count_params({0, 8, 8, 10}), 2u * 10 * 8 + 2 * 8);
    EXPECT_EQ(count_params(preset("L3TC-200K", 256)), 199104u);
    std::uint64_t tensors = 0;
    const ModelConfig c = preset("L3TC-800K", 500);
    for (const auto& [name, t] : init_random_weights(c, 1).tensors) tensors += t.numel();
    EXPECT_EQ(count_params(c), tensors);
}

TEST(Counting, PresetMacsMatchPublishedFigures) {
    const struct {
        const char* name;
        double published;
    } rows[] = {{"L3TC-200K", 1.72e6}, {"L3TC-800K", 3.33e6}, {"L3TC-3.2M", 6.17e6}, {"L3TC-12M", 12.99e6}};
    for (const auto& r : rows) {
        const double macs = double(count_macs_per_token(preset(r.name, 16384)));
        EXPECT_NEAR(macs / r.published, 1.0, 0.02) << r.name << " " << macs;
    }
    EXPECT_EQ(count_macs_per_token(preset("L3TC-200K", 16384)), 1720320u);
}

TEST(Counting, MacsIncreaseWithPresetSize) {
    std::uint64_t last = 0;
    for (const auto& name : preset_names()) {
        const std::uint64_t m = count_macs_per_token(preset(name, 16384));
        EXPECT_GT(m, last) << name;
        last = m;
    }
}

TEST(Counting, InstanceMacsMatchFormula) {
    const ModelConfig c = preset("L3TC-200K", 300);
    EXPECT_EQ(Model(init_random_weights(c, 1)).macs_per_token(), count_macs_per_token(c));
}

TEST(Presets, KnownShapesAndUnknownName) {
    EXPECT_EQ(preset("L3TC-12M", 7), (ModelConfig{4, 384, 1024, 7}));
    expect_error(ErrorKind::InvalidArgument, [] { preset("L3TC-1B", 10); });
}

TEST(Loading, RejectsTruncatedAndCorruptFiles) {
    const Bytes good = save_weights(init_random_weights(tiny_config(), 2));
    expect_error(ErrorKind::Format, [&] { load_model(ByteView(good).first(good.size() - 1)); });
    expect_error(ErrorKind::Format, [&] { load_model(ByteView(good).first(10)); });
    Bytes flipped = good;
    flipped[flipped.size() / 2] ^= 1;
    expect_error(ErrorKind::Format, [&] { load_model(flipped); });
}

TEST(Loading, RejectsMissingTensor) {
    ModelWeights w = init_random_weights(tiny_config(), 2);
    w.tensors.erase("blocks.0.shortcut.weight");
    expect_error(ErrorKind::Format, [&] { load_model(save_weights(w)); });
}

TEST(Loading, UnmergedBranchesAreRejected) {
    const Bytes file = read_file(data_path("tiny_branched.l3tw"));
    expect_error(ErrorKind::Format, [&] { load_model(file); });
    const ModelWeights w = read_weights(file);
    EXPECT_THROW(Model{w}, Error);
    EXPECT_NO_THROW(Model(w, BranchPolicy::Evaluate));
}
