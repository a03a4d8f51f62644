#include "seco/param_store.hh"

#include <cmath>
#include <cstring>

namespace seco {

Matrix& ParamStore::create(const std::string& name, Matrix init) {
    if (entries_.count(name) != 0) {
        throw ValidationError("ParamStore: duplicate parameter '" + name + "'");
    }
    ParamEntry entry;
    entry.grad = Matrix::Zero(init.rows(), init.cols());
    entry.m = Matrix::Zero(init.rows(), init.cols());
    entry.v = Matrix::Zero(init.rows(), init.cols());
    entry.value = std::move(init);
    return entries_.emplace(name, std::move(entry)).first->second.value;
}

ParamEntry& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ValidationError("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ValidationError("ParamStore: unknown parameter '" + name + "'");
    }
    return it->second;
}

bool ParamStore::contains(const std::string& name) const {
    return entries_.count(name) != 0;
}

void ParamStore::zero_grad() {
    for (auto& [name, entry] : entries_) entry.grad.setZero();
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, entry] : entries_) {
        entry.m = cfg.beta1 * entry.m + (1.0 - cfg.beta1) * entry.grad;
        entry.v = (cfg.beta2 * entry.v.array() +
                   (1.0 - cfg.beta2) * entry.grad.array().square())
                      .matrix();
        Eigen::ArrayXXd m_hat = entry.m.array() / bc1;
        Eigen::ArrayXXd v_hat = entry.v.array() / bc2;
        entry.value.array() -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps));
        if (cfg.weight_decay != 0.0) {
            entry.value.array() -= cfg.lr * cfg.weight_decay * entry.value.array();
        }
        entry.grad.setZero();
    }
}

std::int64_t ParamStore::coefficient_count() const {
    std::int64_t n = 0;
    for (const auto& [name, entry] : entries_) n += entry.value.size();
    return n;
}

bool ParamStore::bit_identical_values(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto it = other.entries_.begin();
    for (const auto& [name, entry] : entries_) {
        if (name != it->first) return false;
        const Matrix& a = entry.value;
        const Matrix& b = it->second.value;
        if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
        if (std::memcmp(a.data(), b.data(),
                        sizeof(double) * static_cast<std::size_t>(a.size())) != 0)
            return false;
        ++it;
    }
    return true;
}

GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(bool)>& loss, double eps) {
    if (eps < 1e-6 || eps > 1e-4) {
        throw ValidationError("grad_check: eps must lie in [1e-6, 1e-4]");
    }
    params.zero_grad();
    const double base = loss(true);
    if (!std::isfinite(base)) {
        throw NumericError("grad_check: non-finite objective");
    }
    // Freeze the analytic gradients before perturbing values.
    std::map<std::string, Matrix> analytic;
    for (auto& [name, entry] : params) analytic.emplace(name, entry.grad);

    GradCheckReport report;
    for (auto& [name, entry] : params) {
        Matrix& theta = entry.value;
        const Matrix& a = analytic.at(name);
        for (Index i = 0; i < theta.rows(); ++i) {
            for (Index j = 0; j < theta.cols(); ++j) {
                const double saved = theta(i, j);
                theta(i, j) = saved + eps;
                const double fp = loss(false);
                theta(i, j) = saved - eps;
                const double fm = loss(false);
                theta(i, j) = saved;
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    throw NumericError("grad_check: non-finite objective near '" +
                                       name + "'");
                }
                const double numeric = (fp - fm) / (2.0 * eps);
                const double denom =
                    std::max({std::abs(a(i, j)), std::abs(numeric), 1e-8});
                const double rel = std::abs(a(i, j) - numeric) / denom;
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst_param = name;
                    report.worst_row = i;
                    report.worst_col = j;
                    report.analytic = a(i, j);
                    report.numeric = numeric;
                }
            }
        }
    }
    params.zero_grad();
    return report;
}

}  // namespace seco
