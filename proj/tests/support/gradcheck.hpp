#pragma once

// Central finite-difference oracle for the autodiff engine and the losses.

#include <functional>
#include <string>
#include <vector>

#include "dcs/random.hpp"
#include "dcs/tensor.hpp"

namespace dcs::testing {

using Function = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckResult {
    bool ok = true;
    double worst_error = 0.0;  // max |analytic - numeric| / (atol + rtol * |numeric|)
    std::string detail;
};

// Contracts f's output with a fixed random projection so every output entry
// contributes, then compares d/dinput of that scalar against
// (L(x + h) - L(x - h)) / 2h per input element. Inputs listed in
// `no_grad` are held constant.
GradCheckResult grad_check(const Function& f, const std::vector<Tensor>& inputs, Rng& rng,
                           std::vector<bool> no_grad = {}, double h = 1e-5, double rtol = 1e-4,
                           double atol = 1e-8);

struct GradCase {
    std::string name;
    // Draws one random instance and checks it.
    std::function<GradCheckResult(Rng&)> check;
};

// Every differentiable op and every loss.
std::vector<GradCase> gradient_cases();

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0);

}  // namespace dcs::testing
