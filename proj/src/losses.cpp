#include "dcs/losses.hpp"

#include <cmath>
#include <string>

#include "dcs/errors.hpp"

namespace dcs {

SampleWeightVector SampleWeightVector::ones(std::size_t n, int epoch) {
    return SampleWeightVector{std::vector<double>(n, 1.0), epoch};
}

std::size_t SampleWeightVector::boosted_count() const {
    std::size_t n = 0;
    for (double w : weights) {
        n += w > 1.0 ? 1 : 0;
    }
    return n;
}

std::vector<double> SampleWeightVector::slice(std::span<const std::size_t> ids) const {
    std::vector<double> out;
    out.reserve(ids.size());
    for (auto id : ids) {
        if (id >= weights.size()) {
            throw DataError("sample id " + std::to_string(id) + " outside weight vector of size " +
                            std::to_string(weights.size()));
        }
        out.push_back(weights[id]);
    }
    return out;
}

Tensor cross_entropy(const Tensor& student_logits, std::span<const int> labels) {
    if (student_logits.rank() != 2 || student_logits.shape()[0] != labels.size()) {
        throw DimensionError("cross_entropy: logits " + shape_string(student_logits.shape()) +
                             " for " + std::to_string(labels.size()) + " labels");
    }
    const auto n_classes = static_cast<int>(student_logits.shape()[1]);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes) {
            throw DataError("cross_entropy: label " + std::to_string(labels[i]) + " of batch sample " +
                            std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
        }
    }
    return scale(mean(pick(log_softmax(student_logits), labels)), -1.0);
}

namespace {

// Returns the [batch] tensor of per-sample -sum_c p_c log q_c.
Tensor per_sample_soft_ce(const Tensor& teacher_logits, const Tensor& student_logits,
                          double temperature) {
    if (teacher_logits.shape() != student_logits.shape() || student_logits.rank() != 2) {
        throw DimensionError("kd_loss: teacher logits " + shape_string(teacher_logits.shape()) +
                             " vs student logits " + shape_string(student_logits.shape()));
    }
    Tensor p;
    {
        NoGradGuard no_grad;
        p = softmax(teacher_logits.detach(), temperature);
    }
    return scale(row_sum(mul(p, log_softmax(student_logits, temperature))), -1.0);
}

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

KdResult kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
    const Tensor per_sample = per_sample_soft_ce(teacher_logits, student_logits, temperature);
    return {mean(per_sample), to_vector(per_sample)};
}

KdResult weighted_kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                          std::span<const double> weights, double temperature) {
    if (weights.size() != student_logits.shape().at(0)) {
        throw ConfigError("weighted_kd_loss: " + std::to_string(weights.size()) + " weights for a batch of " +
                          std::to_string(student_logits.shape().at(0)));
    }
    for (double w : weights) {
        if (!(w >= 1.0) || !std::isfinite(w)) {
            throw ConfigError("weighted_kd_loss: sample weights must be finite and >= 1, got " +
                              std::to_string(w));
        }
    }
    const Tensor per_sample = per_sample_soft_ce(teacher_logits, student_logits, temperature);
    const Tensor w = Tensor::vector({weights.begin(), weights.end()});
    return {mean(mul(w, per_sample)), to_vector(per_sample)};
}

TotalLoss total_loss(const Tensor& ce, const Tensor& kd, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (ce.numel() != 1 || kd.numel() != 1) {
        throw DimensionError("total_loss expects scalar terms, got " + shape_string(ce.shape()) +
                             " and " + shape_string(kd.shape()));
    }
    Tensor loss = add(scale(ce, alpha), scale(kd, 1.0 - alpha));
    LossBreakdown b;
    b.total = loss.item();
    b.ce = ce.item();
    b.kd = kd.item();
    b.alpha = alpha;
    return {std::move(loss), std::move(b)};
}

}  // namespace dcs
