#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "prosemble/common.hpp"
#include "prosemble/tensor.hpp"

namespace prosemble {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. One optimizer instance drives a fixed list of
// parameter tensors; moment buffers are keyed by position in that list.
template <typename S>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::int64_t step_count() const { return step_; }
    std::int64_t skipped_updates() const { return skipped_; }

    // For learning-rate schedules; moments are unaffected.
    void set_lr(double lr) { config_.lr = lr; }

    // Applies one update across all parameters. Gradients are read from
    // grads[i], which must match params[i] in size. A parameter whose
    // gradient contains a non-finite value is skipped for this step (its
    // moments are left untouched); the step counter still advances.
    void step(std::vector<Tensor<S>*> params, const std::vector<const std::vector<S>*>& grads) {
        if (params.size() != grads.size()) throw std::invalid_argument("adam: params/grads size mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) {
                m_[p].assign(params[p]->values.size(), 0.0);
                v_[p].assign(params[p]->values.size(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed between steps");
        ++step_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor<S>& param = *params[p];
            const std::vector<S>& grad = *grads[p];
            if (grad.size() != param.values.size()) throw std::invalid_argument("adam: grad size mismatch");
            if (!all_finite(grad)) {
                ++skipped_;
                continue;
            }
            std::vector<double>& m = m_[p];
            std::vector<double>& v = v_[p];
            for (std::size_t i = 0; i < grad.size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
                v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                param.values[i] -= static_cast<S>(config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
            }
        }
    }

private:
    AdamConfig config_;
    std::int64_t step_ = 0;
    std::int64_t skipped_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace prosemble
