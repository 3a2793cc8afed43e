#include <gtest/gtest.h>

#include <random>

#include "l3tc/golden.hpp"
#include "l3tc/hira.hpp"
#include "l3tc/rwkv_model.hpp"
#include "test_support.hpp"

using namespace l3tc;
using namespace l3tc::hira;
using l3tc::testing::data_path;

namespace {

Matrix random_matrix(std::mt19937& rng, std::uint32_t rows, std::uint32_t cols) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Matrix m{rows, cols, std::vector<float>(std::size_t(rows) * cols)};
    for (auto& v : m.data) v = u(rng);
    return m;
}

// Plain triple loop in double: the oracle for W0 + sum A B.
Matrix product_sum(const BranchedLinear& layer) {
    Matrix out = layer.base;
    for (std::uint32_t i = 0; i < out.rows; ++i)
        for (std::uint32_t j = 0; j < out.cols; ++j) {
            double acc = layer.base.at(i, j);
            for (const auto& br : layer.branches)
                for (std::uint32_t t = 0; t < br.a.cols; ++t) acc += double(br.a.at(i, t)) * double(br.b.at(t, j));
            out.data[std::size_t(i) * out.cols + j] = static_cast<float>(acc);
        }
    return out;
}

}  // namespace

TEST(Merge, SmallExample) {
    const BranchedLinear layer{{2, 2, {1, 0, 0, 1}}, {{{2, 1, {1, 2}}, {1, 2, {3, 4}}}}};
    const Matrix w = merge(layer);
    EXPECT_EQ(w, (Matrix{2, 2, {4, 4, 6, 9}}));
}

TEST(Merge, ZeroBranchesReturnBaseExactly) {
    std::mt19937 rng(1);
    const Matrix w0 = random_matrix(rng, 5, 7);
    EXPECT_EQ(merge({w0, {}}), w0);
    BranchedLinear zero_a{w0, {{Matrix{5, 3, std::vector<float>(15, 0.0f)}, random_matrix(rng, 3, 7)}}};
    EXPECT_EQ(merge(zero_a), w0);
}

TEST(Merge, MatchesDirectProductOracle) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const std::uint32_t d = 1 + rng() % 12, k = 1 + rng() % 12, m = rng() % 3;
        BranchedLinear layer{random_matrix(rng, d, k), {}};
        for (std::uint32_t b = 0; b < m; ++b) {
            const std::uint32_t r = 1 + rng() % 20;
            layer.branches.push_back({random_matrix(rng, d, r), random_matrix(rng, r, k)});
        }
        EXPECT_EQ(merge(layer), product_sum(layer)) << trial;
    }
}

TEST(Merge, TwoBranchesEqualTheirConcatenation) {
    std::mt19937 rng(3);
    const Matrix w0 = random_matrix(rng, 6, 4);
    const Matrix a1 = random_matrix(rng, 6, 2), b1 = random_matrix(rng, 2, 4);
    const Matrix a2 = random_matrix(rng, 6, 3), b2 = random_matrix(rng, 3, 4);
    // [A1 A2] [B1; B2] == A1 B1 + A2 B2, with the same accumulation order.
    Matrix a{6, 5, {}}, b{5, 4, {}};
    for (std::uint32_t i = 0; i < 6; ++i) {
        for (std::uint32_t t = 0; t < 2; ++t) a.data.push_back(a1.at(i, t));
        for (std::uint32_t t = 0; t < 3; ++t) a.data.push_back(a2.at(i, t));
    }
    b.data = b1.data;
    b.data.insert(b.data.end(), b2.data.begin(), b2.data.end());
    EXPECT_EQ(merge({w0, {{a1, b1}, {a2, b2}}}), merge({w0, {{a, b}}}));
}

TEST(Merge, LinearInBranches) {
    std::mt19937 rng(4);
    const Matrix w0 = random_matrix(rng, 4, 4), a = random_matrix(rng, 4, 2), b = random_matrix(rng, 2, 4);
    Matrix neg_a = a;
    for (auto& v : neg_a.data) v = -v;
    const Matrix w = merge({w0, {{a, b}, {neg_a, b}}});
    for (std::size_t i = 0; i < w.data.size(); ++i) EXPECT_NEAR(w.data[i], w0.data[i], 1e-6);
}

TEST(Merge, ShapeMismatchIsRejected) {
    std::mt19937 rng(5);
    const Matrix w0 = random_matrix(rng, 3, 3);
    EXPECT_THROW(merge({w0, {{random_matrix(rng, 2, 1), random_matrix(rng, 1, 3)}}}), Error);
    EXPECT_THROW(merge({w0, {{random_matrix(rng, 3, 2), random_matrix(rng, 1, 3)}}}), Error);
    EXPECT_THROW(merge({w0, {{random_matrix(rng, 3, 1), random_matrix(rng, 1, 4)}}}), Error);
    EXPECT_THROW(merge({w0, {{Matrix{3, 0, {}}, Matrix{0, 3, {}}}}}), Error);
}

TEST(BranchRank, MultiplierOfSmallerSide) {
    EXPECT_EQ(branch_rank(4.0, 96, 96), 384u);
    EXPECT_EQ(branch_rank(0.25, 96, 192), 24u);
    EXPECT_EQ(branch_rank(0.5, 8, 12), 4u);
    EXPECT_EQ(branch_rank(0.3, 5, 5), 2u);
    EXPECT_EQ(branch_rank(0.01, 5, 5), 1u);
    EXPECT_THROW(branch_rank(0.0, 5, 5), Error);
    EXPECT_THROW(branch_rank(-1.0, 5, 5), Error);
}

TEST(MergeModel, PlainModelMergesToItself) {
    const ModelWeights w = init_random_weights({2, 8, 12, 20}, 1);
    EXPECT_EQ(merge_model(w), w);
}

TEST(MergeModel, StripsBranchesAndKeepsShapes) {
    const ModelWeights plain = init_random_weights({2, 8, 12, 20}, 1);
    const ModelWeights branched = add_random_branches(plain, 4.0, 2, 7);
    EXPECT_EQ(branched.tensors.size(), plain.tensors.size() + 2 * 2 * 6 * 2);
    const ModelWeights merged = merge_model(branched);
    ASSERT_EQ(merged.tensors.size(), plain.tensors.size());
    for (const auto& [name, t] : plain.tensors) EXPECT_EQ(merged.at(name).dims, t.dims) << name;
    EXPECT_NO_THROW(validate_plain(merged));
    EXPECT_EQ(load_model(save_weights(merged)), merged);
    EXPECT_NE(merged.at("blocks.0.att.key.weight"), plain.at("blocks.0.att.key.weight"));
    EXPECT_EQ(merged.at("blocks.0.att.output.weight"), plain.at("blocks.0.att.output.weight"));
}

TEST(MergeModel, RejectsMalformedBranchSets) {
    const ModelWeights plain = init_random_weights({2, 8, 12, 20}, 1);
    const ModelWeights branched = add_random_branches(plain, 1.0, 2, 7);

    ModelWeights unpaired = branched;
    unpaired.tensors.erase("blocks.1.ffn.k.hira.0.B");
    EXPECT_THROW(merge_model(unpaired), Error);

    ModelWeights gap = branched;
    gap.tensors.erase("blocks.0.att.v.hira.0.A");
    gap.tensors.erase("blocks.0.att.v.hira.0.B");
    EXPECT_THROW(merge_model(gap), Error);

    ModelWeights missing_layer = branched;
    missing_layer.tensors.emplace("blocks.5.att.r.hira.0.A", Tensor::zeros({8, 8}));
    missing_layer.tensors.emplace("blocks.5.att.r.hira.0.B", Tensor::zeros({8, 8}));
    EXPECT_THROW(merge_model(missing_layer), Error);

    ModelWeights wrong_shape = branched;
    wrong_shape.tensors.at("blocks.0.att.r.hira.0.A") = Tensor::zeros({7, 8});
    EXPECT_THROW(merge_model(wrong_shape), Error);

    ModelWeights stray = plain;
    stray.tensors.emplace("blocks.0.att.output.hira.0.A", Tensor::zeros({8, 8}));
    EXPECT_THROW(merge_model(stray), Error);
}

TEST(Equivalence, ZeroBranchesGiveZeroDifference) {
    const ModelWeights plain = init_random_weights({2, 8, 12, 20}, 3);
    ModelWeights branched = add_random_branches(plain, 1.0, 1, 3);
    for (auto& [name, t] : branched.tensors)
        if (is_hira_tensor(name) && name.back() == 'A') std::fill(t.data.begin(), t.data.end(), 0.0f);
    const EquivalenceReport r = verify_equivalence(branched, merge_model(branched), 20, 0.0);
    EXPECT_EQ(r.max_abs_diff, 0.0);
    EXPECT_TRUE(r.pass);
    EXPECT_GT(r.comparisons, 0u);
}

TEST(Equivalence, RandomBranchesAgreeWithinTolerance) {
    const ModelWeights plain = init_random_weights({2, 8, 8, 32}, 4);
    const ModelWeights branched = add_random_branches(plain, 4.0, 1, 4);
    const EquivalenceReport r = verify_equivalence(branched, merge_model(branched), 50, 1e-4);
    EXPECT_TRUE(r.pass) << r.max_abs_diff;
    EXPECT_GT(r.max_abs_diff, 0.0);
}

TEST(Equivalence, ZeroToleranceFailsWhenBranchesAreLive) {
    const ModelWeights plain = init_random_weights({2, 8, 8, 32}, 5);
    const ModelWeights branched = add_random_branches(plain, 4.0, 2, 5);
    EXPECT_FALSE(verify_equivalence(branched, merge_model(branched), 20, 0.0).pass);
}

TEST(Equivalence, ConfigMismatchIsRejected) {
    const ModelWeights a = init_random_weights({2, 8, 8, 32}, 5);
    const ModelWeights b = init_random_weights({2, 8, 8, 33}, 5);
    EXPECT_THROW(verify_equivalence(a, b, 1, 1e-4), Error);
}

TEST(Equivalence, MergedMacsEqualPlainMacs) {
    const ModelConfig c{2, 16, 24, 50};
    const ModelWeights branched = add_random_branches(init_random_weights(c, 6), 4.0, 2, 6);
    EXPECT_GT(Model(branched, BranchPolicy::Evaluate).macs_per_token(), count_macs_per_token(c));
    EXPECT_EQ(Model(merge_model(branched)).macs_per_token(), count_macs_per_token(c));
}

// The branched fixture's golden logits were computed by the NumPy reference
// from W0 + sum A B, so both evaluation paths must land on them.
TEST(Fixture, BranchedCheckpointMergesToReference) {
    const ModelWeights branched = read_weights(read_file(data_path("tiny_branched.l3tw")));
    const auto cases = read_golden(read_file(data_path("tiny_branched.l3tg")), branched.config.vocab_size);
    const ModelWeights merged = merge_model(branched);
    EXPECT_LE(check_golden(cases, Model(merged)).max_abs_diff, 1e-4);
    EXPECT_LE(check_golden(cases, Model(branched, BranchPolicy::Evaluate)).max_abs_diff, 1e-4);
    EXPECT_TRUE(verify_equivalence(branched, merged, 30, 1e-4).pass);
}
