#include "dcs/optimizer.hpp"

#include <cmath>

#include "dcs/errors.hpp"

namespace dcs {

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam)
    : kind_(kind), learning_rate_(learning_rate), adam_(adam) {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
}

void Optimizer::step(std::vector<NamedParameter>& params) {
    ++steps_;
    if (kind_ == OptimizerKind::Sgd) {
        for (auto& p : params) {
            if (!p.value.has_grad()) {
                continue;
            }
            auto data = p.value.mutable_data();
            const auto grad = p.value.grad();
            for (std::size_t i = 0; i < data.size(); ++i) {
                data[i] -= learning_rate_ * grad[i];
            }
        }
        return;
    }

    if (first_moment_.empty()) {
        first_moment_.resize(params.size());
        second_moment_.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            first_moment_[k].assign(params[k].value.numel(), 0.0);
            second_moment_[k].assign(params[k].value.numel(), 0.0);
        }
    }
    if (first_moment_.size() != params.size()) {
        throw ConfigError("optimizer stepped with a different parameter layout");
    }
    const double t = static_cast<double>(steps_);
    const double bias1 = 1.0 - std::pow(adam_.beta1, t);
    const double bias2 = 1.0 - std::pow(adam_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].value;
        if (!p.has_grad()) {
            continue;
        }
        auto data = p.mutable_data();
        const auto grad = p.grad();
        auto& m = first_moment_[k];
        auto& v = second_moment_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * grad[i];
            v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            data[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + adam_.epsilon);
        }
    }
}

}  // namespace dcs
