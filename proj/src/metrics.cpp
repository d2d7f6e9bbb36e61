#include "dcs/metrics.hpp"

#include <cmath>

#include "dcs/errors.hpp"

namespace dcs {

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::size_t n_classes) {
    if (truth.size() != predicted.size()) {
        throw DimensionError("confusion_matrix: " + std::to_string(truth.size()) + " labels vs " +
                             std::to_string(predicted.size()) + " predictions");
    }
    ConfusionMatrix m(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (truth[i] < 0 || predicted[i] < 0 || t >= n_classes || p >= n_classes) {
            throw DataError("confusion_matrix: class index out of range at position " + std::to_string(i));
        }
        ++m[t][p];
    }
    return m;
}

double accuracy(const ConfusionMatrix& confusion) {
    std::size_t correct = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        for (std::size_t j = 0; j < confusion[i].size(); ++j) {
            total += confusion[i][j];
            if (i == j) {
                correct += confusion[i][j];
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double matthews_correlation(const ConfusionMatrix& confusion) {
    const std::size_t k = confusion.size();
    std::vector<double> true_count(k, 0.0);
    std::vector<double> pred_count(k, 0.0);
    double correct = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto c = static_cast<double>(confusion[i][j]);
            true_count[i] += c;
            pred_count[j] += c;
            total += c;
            if (i == j) {
                correct += c;
            }
        }
    }
    double cross = 0.0;
    double pred_sq = 0.0;
    double true_sq = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        cross += pred_count[i] * true_count[i];
        pred_sq += pred_count[i] * pred_count[i];
        true_sq += true_count[i] * true_count[i];
    }
    const double denom = std::sqrt((total * total - pred_sq) * (total * total - true_sq));
    if (denom == 0.0) {
        return 0.0;
    }
    return (correct * total - cross) / denom;
}

Evaluation evaluate(const ClassifierModel& model, const LabeledDataset& dataset) {
    if (dataset.empty()) {
        return {};
    }
    const auto predicted = predict(model, dataset.all_inputs());
    const auto truth = dataset.all_labels();
    const auto cm = confusion_matrix(truth, predicted, dataset.n_classes());
    return {accuracy(cm), matthews_correlation(cm)};
}

Aggregate aggregate(std::span<const double> values) {
    Aggregate a;
    a.n = values.size();
    if (values.empty()) {
        return a;
    }
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    a.mean = s / static_cast<double>(a.n);
    if (a.n > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - a.mean) * (v - a.mean);
        }
        a.stdev = std::sqrt(ss / static_cast<double>(a.n - 1));
    }
    return a;
}

}  // namespace dcs
