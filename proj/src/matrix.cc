#include "seco/matrix.hh"

#include <cmath>
#include <string>

namespace seco {

Matrix xavier_init(Index rows, Index cols, std::uint64_t seed) {
    if (rows < 1 || cols < 1) {
        throw ValidationError("xavier_init: dimensions must be positive, got " +
                              std::to_string(rows) + "x" + std::to_string(cols));
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            out(i, j) = dist(rng);
    return out;
}

Matrix rrelu(const Matrix& x, double lower, double upper, Mode mode, Rng* rng,
             Matrix* slopes_out) {
    if (!(lower > 0.0 && lower <= upper && upper < 1.0)) {
        throw ValidationError("rrelu: slope bounds must satisfy 0 < lower <= upper < 1");
    }
    if (mode == Mode::train && rng == nullptr) {
        throw ValidationError("rrelu: train mode requires an rng stream");
    }
    std::uniform_real_distribution<double> dist(lower, upper);
    const double mean_slope = 0.5 * (lower + upper);
    Matrix out(x.rows(), x.cols());
    Matrix slopes(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) {
            // Draw per entry regardless of sign so rng consumption depends
            // only on (seed, shape, call order), never on values.
            const double drawn = mode == Mode::train ? dist(*rng) : mean_slope;
            const double s = x(i, j) >= 0.0 ? 1.0 : drawn;
            slopes(i, j) = s;
            out(i, j) = s * x(i, j);
        }
    }
    if (slopes_out != nullptr) *slopes_out = std::move(slopes);
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    if (!logits.allFinite()) {
        throw NumericError("softmax_rows: non-finite input");
    }
    Matrix out(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double shift = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - shift).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

double cross_entropy(const Matrix& probabilities, const std::vector<int>& targets) {
    if (static_cast<Index>(targets.size()) != probabilities.rows()) {
        throw ValidationError("cross_entropy: one target per row required");
    }
    if (probabilities.rows() == 0) {
        throw ValidationError("cross_entropy: empty batch");
    }
    double total = 0.0;
    for (Index i = 0; i < probabilities.rows(); ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= probabilities.cols()) {
            throw ValidationError("cross_entropy: target " + std::to_string(t) +
                                  " out of range at row " + std::to_string(i));
        }
        total += -std::log(std::max(probabilities(i, t), kProbFloor));
    }
    return total / static_cast<double>(probabilities.rows());
}

}  // namespace seco
