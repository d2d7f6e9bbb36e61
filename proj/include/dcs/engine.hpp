#pragma once

// Teacher-student training loop with per-epoch sample re-weighting.
//
// Epoch 0 distils with all-ones weights (warm-up). At the start of every later
// epoch the frozen teacher and the current student label the full training
// set in eval mode; the resulting agreement map decides which samples get
// weight lambda in the KD term for that epoch. Weights are indexed by stable
// sample id, so batch shuffling never misaligns them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcs/config.hpp"
#include "dcs/datasets.hpp"
#include "dcs/losses.hpp"
#include "dcs/models.hpp"
#include "dcs/optimizer.hpp"
#include "dcs/random.hpp"

namespace dcs {

struct AgreementMap {
    std::vector<bool> agree;
    std::vector<int> teacher_prediction;
    std::vector<int> student_prediction;
    int epoch = 0;

    std::size_t size() const { return agree.size(); }
    std::size_t disagreement_count() const;
};

// Full-dataset eval-mode predictions of both models; no tape is recorded.
AgreementMap compute_agreement(const ClassifierModel& teacher, const ClassifierModel& student,
                               const LabeledDataset& dataset, int epoch = 0);

// Maps an agreement map to weights under `strategy`. DcsRandom boosts a
// uniformly drawn subset whose size equals the map's disagreement count.
// Throws ConfigError when lambda <= 1 under a boosting strategy.
SampleWeightVector assign_weights(const AgreementMap& agreement, WeightingStrategy strategy,
                                  double lambda, Rng& rng);

struct EpochMetrics {
    int epoch = 0;
    double total_loss = 0.0;
    double ce_loss = 0.0;
    double kd_loss = 0.0;
    double train_accuracy = 0.0;
    double dev_accuracy = 0.0;
    double dev_mcc = 0.0;
    long disagreements = -1;  // -1 when the teacher is not consulted
    std::size_t boosted = 0;
};

struct RunMetrics {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;  // highest dev accuracy, earliest on ties

    const EpochMetrics& best() const { return epochs.at(best_epoch); }
};

struct DcsRunState {
    ClassifierModel student;
    std::shared_ptr<const ClassifierModel> teacher;  // null for VanillaFt
    SampleWeightVector weights;
    int epoch = 0;
    Optimizer optimizer;
    Rng shuffle_rng;
    Rng weight_rng;
    RunMetrics history;
    // Number of weight assignments made for each epoch (audit trail).
    std::vector<int> assignments_per_epoch;
};

DcsRunState make_run_state(std::shared_ptr<const ClassifierModel> teacher, ClassifierModel student,
                           std::size_t train_size, const DistillationConfig& config, std::uint64_t seed);

// One pass over shuffled mini-batches with the weights already in `state`.
// Aborts with NumericalError on a non-finite loss.
EpochMetrics train_epoch(DcsRunState& state, const LabeledDataset& train,
                         const DistillationConfig& config);

struct RunResult {
    ClassifierModel student;
    RunMetrics metrics;
    std::vector<SampleWeightVector> weights_by_epoch;
    std::vector<int> assignments_per_epoch;
    std::string teacher_hash_before;
    std::string teacher_hash_after;
};

// Called after each epoch with the post-epoch state and the weights that
// epoch consumed.
using EpochObserver = std::function<void(const DcsRunState&, const EpochMetrics&, const SampleWeightVector&)>;

// Full loop: warm-up epoch then re-weight-and-train for every later epoch.
// `dev` may be null (dev metrics then stay 0). The teacher may be null only
// for VanillaFt.
RunResult run_dcs(std::shared_ptr<const ClassifierModel> teacher, const ClassifierModel& student_init,
                  const LabeledDataset& train, const LabeledDataset* dev,
                  const DistillationConfig& config, std::uint64_t seed,
                  const EpochObserver& observer = {});

}  // namespace dcs
