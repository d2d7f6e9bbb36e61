#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcs/datasets.hpp"
#include "dcs/models.hpp"

namespace dcs {

// confusion[true][predicted]
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::size_t n_classes);

double accuracy(const ConfusionMatrix& confusion);

// Matthews correlation, multi-class form (reduces to the usual binary
// formula for two classes). Zero denominator yields 0.
double matthews_correlation(const ConfusionMatrix& confusion);

struct Evaluation {
    double accuracy = 0.0;
    double mcc = 0.0;
};

Evaluation evaluate(const ClassifierModel& model, const LabeledDataset& dataset);

struct Aggregate {
    double mean = 0.0;
    double stdev = 0.0;  // sample standard deviation; 0 for fewer than two values
    std::size_t n = 0;
};

Aggregate aggregate(std::span<const double> values);

}  // namespace dcs
