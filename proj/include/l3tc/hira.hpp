#pragma once

#include <cstdint>
#include <vector>

#include "l3tc/model_weights.hpp"

namespace l3tc::hira {

inline constexpr double kDefaultRankMultiplier = 4.0;
inline constexpr std::uint32_t kDefaultBranches = 1;

/// Row-major dense matrix.
struct Matrix {
    std::uint32_t rows = 0, cols = 0;
    std::vector<float> data;

    float at(std::uint32_t r, std::uint32_t c) const { return data[std::size_t(r) * cols + c]; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// A projection W0 (d x k) with m parallel factorized branches A_m (d x r)
/// times B_m (r x k).
struct BranchedLinear {
    Matrix base;
    struct Branch {
        Matrix a;
        Matrix b;
    };
    std::vector<Branch> branches;
};

/// r = ceil(multiplier * min(d, k)), at least 1.
std::uint32_t branch_rank(double multiplier, std::uint32_t d, std::uint32_t k);

/// W0 + sum_m A_m B_m. Each entry accumulates in double, branch 0 first and
/// inner index ascending, then rounds once to float.
Matrix merge(const BranchedLinear& layer);

/// Replaces every blocks.{i}.{att|ffn}.{r|k|v} projection that carries
/// branches with its merged matrix and drops the branch tensors.
ModelWeights merge_model(const ModelWeights& branched);

/// Attaches `branches` random branches of rank branch_rank(multiplier, ...)
/// to all six R/K/V projections of every block. Entries of A and B are drawn
/// so that |A B| stays comparable to the base weights.
ModelWeights add_random_branches(const ModelWeights& plain, double multiplier, std::uint32_t branches,
                                 std::uint64_t seed);

struct EquivalenceReport {
    double max_abs_diff = 0.0;
    std::uint64_t comparisons = 0;
    bool pass = false;
};

/// Runs the branched model (W0 x + sum A (B x) at every branched projection)
/// and the merged model side by side on n random token prefixes from a fresh
/// state, comparing the logits after every step.
EquivalenceReport verify_equivalence(const ModelWeights& branched, const ModelWeights& merged,
                                     std::uint32_t n_random_inputs, double tolerance,
                                     std::uint64_t seed = 0);

}  // namespace l3tc::hira
