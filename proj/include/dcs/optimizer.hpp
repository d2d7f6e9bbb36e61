#pragma once

#include <cstddef>
#include <vector>

#include "dcs/config.hpp"
#include "dcs/models.hpp"

namespace dcs {

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam or plain SGD over a model's parameter list. State is held by value
// and keyed by parameter position, so the optimizer must always be stepped
// with the same model layout.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam = {});

    // Applies one update from the current grads. Parameters without a grad
    // array are left untouched.
    void step(std::vector<NamedParameter>& params);

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return learning_rate_; }
    long steps() const { return steps_; }

private:
    OptimizerKind kind_;
    double learning_rate_;
    AdamSettings adam_;
    long steps_ = 0;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

}  // namespace dcs
