#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "seco/matrix.hh"

namespace seco {

struct ParamEntry {
    Matrix value;
    Matrix grad;
    Matrix m;   // Adam first moment
    Matrix v;   // Adam second moment
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;   // decoupled, scaled by lr
};

// Named parameter tensors with gradient accumulators and optimizer state.
// Iteration order is the lexicographic name order of std::map, which keeps
// every sweep over parameters deterministic.
class ParamStore {
public:
    Matrix& create(const std::string& name, Matrix init);
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    void zero_grad();
    void adam_step(const AdamConfig& cfg);

    std::int64_t step_count() const { return step_; }
    void set_step_count(std::int64_t s) { step_ = s; }

    std::size_t size() const { return entries_.size(); }
    std::int64_t coefficient_count() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool bit_identical_values(const ParamStore& other) const;

private:
    std::map<std::string, ParamEntry> entries_;
    std::int64_t step_ = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    Index worst_row = -1;
    Index worst_col = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central finite differences against the analytic gradient. `loss(true)` must
// compute the scalar objective and accumulate gradients into the store;
// `loss(false)` computes the objective only. The relative error denominator is
// max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(bool)>& loss, double eps);

}  // namespace seco
