#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "seco/errors.hh"

namespace seco {

// All model arithmetic is dense 64-bit; Eigen is the only math dependency.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

enum class Mode { train, eval };

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRreluLowerDefault = 1.0 / 8.0;
inline constexpr double kRreluUpperDefault = 1.0 / 3.0;

// Uniform init in +-sqrt(6/(rows+cols)), bit-reproducible under seed.
Matrix xavier_init(Index rows, Index cols, std::uint64_t seed);

// Randomized leaky rectifier. Positive entries pass through; negative entries
// are scaled by a slope drawn uniformly from [lower, upper] in train mode and
// fixed to (lower+upper)/2 in eval mode. When `slopes_out` is given it
// receives the multiplier applied to each entry (1 where x >= 0), which is
// exactly the local derivative.
Matrix rrelu(const Matrix& x, double lower, double upper, Mode mode, Rng* rng,
             Matrix* slopes_out = nullptr);

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Mean over rows of -ln p[target], p clamped below at kProbFloor.
double cross_entropy(const Matrix& probabilities, const std::vector<int>& targets);

inline Matrix sigmoid(const Matrix& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

// FNV-1a, used for vocab fingerprints and per-tensor seed derivation.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return fnv1a64(label) ^ (0x9e3779b97f4a7c15ull * (master + 1));
}

}  // namespace seco
