#include "dcs/engine.hpp"

#include <cmath>
#include <sstream>

#include "dcs/errors.hpp"
#include "dcs/metrics.hpp"

namespace dcs {

namespace {

constexpr std::uint64_t kSaltShuffle = 0x5348554646ULL;
constexpr std::uint64_t kSaltWeights = 0x574549474854ULL;

}  // namespace

std::size_t AgreementMap::disagreement_count() const {
    std::size_t n = 0;
    for (bool a : agree) {
        n += a ? 0 : 1;
    }
    return n;
}

AgreementMap compute_agreement(const ClassifierModel& teacher, const ClassifierModel& student,
                               const LabeledDataset& dataset, int epoch) {
    if (!(teacher.descriptor() == student.descriptor())) {
        throw ConfigError("teacher and student architectures differ");
    }
    AgreementMap map;
    map.epoch = epoch;
    if (dataset.empty()) {
        return map;
    }
    const Tensor inputs = dataset.all_inputs();
    map.teacher_prediction = predict(teacher, inputs);
    map.student_prediction = predict(student, inputs);
    map.agree.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        map.agree[i] = map.teacher_prediction[i] == map.student_prediction[i];
    }
    return map;
}

SampleWeightVector assign_weights(const AgreementMap& agreement, WeightingStrategy strategy,
                                  double lambda, Rng& rng) {
    const std::size_t n = agreement.size();
    SampleWeightVector out = SampleWeightVector::ones(n, agreement.epoch);
    if (!boosts_weights(strategy)) {
        return out;
    }
    if (!(lambda > 1.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be a finite value greater than 1, got " + std::to_string(lambda));
    }
    switch (strategy) {
        case WeightingStrategy::Dcs:
            for (std::size_t i = 0; i < n; ++i) {
                out.weights[i] = agreement.agree[i] ? 1.0 : lambda;
            }
            break;
        case WeightingStrategy::DcsReverse:
            for (std::size_t i = 0; i < n; ++i) {
                out.weights[i] = agreement.agree[i] ? lambda : 1.0;
            }
            break;
        case WeightingStrategy::DcsRandom: {
            // Partial Fisher-Yates: the first `budget` slots form a uniform subset.
            const std::size_t budget = agreement.disagreement_count();
            std::vector<std::size_t> ids(n);
            for (std::size_t i = 0; i < n; ++i) {
                ids[i] = i;
            }
            for (std::size_t i = 0; i < budget; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.below(n - i));
                std::swap(ids[i], ids[j]);
                out.weights[ids[i]] = lambda;
            }
            break;
        }
        default:
            break;
    }
    return out;
}

DcsRunState make_run_state(std::shared_ptr<const ClassifierModel> teacher, ClassifierModel student,
                           std::size_t train_size, const DistillationConfig& config, std::uint64_t seed) {
    if (uses_teacher(config.strategy) && !teacher) {
        throw ConfigError("strategy '" + std::string(to_string(config.strategy)) +
                          "' needs a teacher model; run train-teacher first");
    }
    student.set_trainable(true);
    return DcsRunState{std::move(student),
                       std::move(teacher),
                       SampleWeightVector::ones(train_size, 0),
                       0,
                       Optimizer(config.optimizer, config.learning_rate),
                       Rng::stream(seed, kSaltShuffle),
                       Rng::stream(seed, kSaltWeights),
                       {},
                       {}};
}

EpochMetrics train_epoch(DcsRunState& state, const LabeledDataset& train, const DistillationConfig& config) {
    if (state.weights.size() != train.size()) {
        throw ConfigError("weight vector has " + std::to_string(state.weights.size()) +
                          " entries for " + std::to_string(train.size()) + " training samples");
    }
    if (train.empty()) {
        throw ConfigError("cannot train on an empty dataset");
    }
    const bool distil = uses_teacher(config.strategy);
    if (distil && !state.teacher) {
        throw ConfigError("distillation epoch without a teacher");
    }

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    state.shuffle_rng.shuffle(order);

    EpochMetrics m;
    m.epoch = state.epoch;
    m.boosted = state.weights.boosted_count();
    std::size_t correct = 0;
    double total_sum = 0.0;
    double ce_sum = 0.0;
    double kd_sum = 0.0;

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        const std::span<const std::size_t> ids(order.data() + start, end - start);
        const Tensor x = train.batch(ids);
        const auto labels = train.labels(ids);

        state.student.zero_grad();
        const Tensor student_logits = state.student.forward(x);
        const Tensor ce = cross_entropy(student_logits, labels);

        Tensor loss;
        LossBreakdown parts;
        if (distil) {
            Tensor teacher_logits;
            {
                NoGradGuard no_grad;
                teacher_logits = state.teacher->forward(x);
            }
            const auto w = state.weights.slice(ids);
            KdResult kd = weighted_kd_loss(teacher_logits, student_logits, w, config.temperature);
            TotalLoss total = total_loss(ce, kd.loss, config.alpha);
            loss = std::move(total.loss);
            parts = std::move(total.breakdown);
        } else {
            loss = ce;
            parts.total = parts.ce = ce.item();
            parts.alpha = 1.0;
        }

        if (!std::isfinite(parts.total) || !std::isfinite(parts.ce) || !std::isfinite(parts.kd)) {
            std::ostringstream msg;
            msg << "non-finite loss at epoch " << state.epoch << ", batch " << batch_index
                << ": total=" << parts.total << " ce=" << parts.ce << " kd=" << parts.kd
                << " (alpha=" << config.alpha << ", lambda=" << config.lambda << ")";
            throw NumericalError(msg.str());
        }

        loss.backward();
        state.optimizer.step(state.student.parameters());

        const auto predicted = argmax_rows(student_logits);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            correct += predicted[i] == labels[i] ? 1 : 0;
        }
        const auto bs = static_cast<double>(ids.size());
        total_sum += parts.total * bs;
        ce_sum += parts.ce * bs;
        kd_sum += parts.kd * bs;
    }

    const auto n = static_cast<double>(train.size());
    m.total_loss = total_sum / n;
    m.ce_loss = ce_sum / n;
    m.kd_loss = kd_sum / n;
    m.train_accuracy = static_cast<double>(correct) / n;
    ++state.epoch;
    return m;
}

RunResult run_dcs(std::shared_ptr<const ClassifierModel> teacher, const ClassifierModel& student_init,
                  const LabeledDataset& train, const LabeledDataset* dev,
                  const DistillationConfig& config, std::uint64_t seed, const EpochObserver& observer) {
    config.validate();
    const bool distil = uses_teacher(config.strategy);
    if (distil && !teacher) {
        throw ConfigError("strategy '" + std::string(to_string(config.strategy)) +
                          "' needs a teacher model; run train-teacher first");
    }
    const std::string hash_before = teacher ? parameter_hash(*teacher) : std::string{};

    DcsRunState state = make_run_state(distil ? teacher : nullptr, student_init.clone(), train.size(),
                                       config, seed);
    RunResult result{student_init.clone(), {}, {}, {}, hash_before, {}};

    for (int e = 0; e < config.epochs; ++e) {
        state.assignments_per_epoch.push_back(0);
        long disagreements = -1;
        if (distil) {
            const AgreementMap agreement = compute_agreement(*state.teacher, state.student, train, e);
            disagreements = static_cast<long>(agreement.disagreement_count());
            if (e == 0) {
                state.weights = SampleWeightVector::ones(train.size(), 0);
            } else {
                state.weights = assign_weights(agreement, config.strategy, config.lambda, state.weight_rng);
                state.weights.epoch_assigned = e;
                ++state.assignments_per_epoch.back();
            }
        } else {
            state.weights = SampleWeightVector::ones(train.size(), e);
        }

        EpochMetrics m = train_epoch(state, train, config);
        m.disagreements = disagreements;
        if (dev != nullptr && !dev->empty()) {
            const Evaluation ev = evaluate(state.student, *dev);
            m.dev_accuracy = ev.accuracy;
            m.dev_mcc = ev.mcc;
        }
        state.history.epochs.push_back(m);
        if (m.dev_accuracy > state.history.best().dev_accuracy) {
            state.history.best_epoch = state.history.epochs.size() - 1;
        }
        result.weights_by_epoch.push_back(state.weights);
        if (observer) {
            observer(state, m, state.weights);
        }
    }

    result.teacher_hash_after = teacher ? parameter_hash(*teacher) : std::string{};
    if (result.teacher_hash_after != result.teacher_hash_before) {
        throw std::logic_error("teacher parameters changed during a student run");
    }
    result.student = std::move(state.student);
    result.metrics = std::move(state.history);
    result.assignments_per_epoch = std::move(state.assignments_per_epoch);
    return result;
}

}  // namespace dcs
