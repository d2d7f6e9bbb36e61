#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcs/tensor.hpp"

namespace dcs {

// Per-sample loss weights indexed by stable sample id. Every entry is either
// 1 or the active lambda.
struct SampleWeightVector {
    std::vector<double> weights;
    int epoch_assigned = 0;

    static SampleWeightVector ones(std::size_t n, int epoch = 0);

    std::size_t size() const { return weights.size(); }
    // Number of entries strictly above 1.
    std::size_t boosted_count() const;
    // Gathers the weights for the given sample ids, in order.
    std::vector<double> slice(std::span<const std::size_t> ids) const;
};

struct KdResult {
    Tensor loss;  // batch mean, differentiable w.r.t. the student logits
    std::vector<double> per_sample;
};

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double kd = 0.0;
    double alpha = 0.0;
    std::vector<double> per_sample_kd;
};

struct TotalLoss {
    Tensor loss;
    LossBreakdown breakdown;
};

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& student_logits, std::span<const int> labels);

// Soft-target cross-entropy -sum_c p_c log q_c per sample, p = softmax(teacher / T),
// q = softmax(student / T), averaged over the batch. Teacher logits are
// detached. No T^2 rescaling.
KdResult kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature);

// Batch mean of w_i times the per-sample KD term. Weights are absolute: no
// renormalisation across the batch.
KdResult weighted_kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                          std::span<const double> weights, double temperature);

// alpha * ce + (1 - alpha) * kd.
TotalLoss total_loss(const Tensor& ce, const Tensor& kd, double alpha);

}  // namespace dcs
