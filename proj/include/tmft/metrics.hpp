#pragma once

#include "tmft/common.hpp"

#include <optional>
#include <vector>

namespace tmft {

struct EvalReport {
    double spearman = 0.0;
    double pearson = 0.0;
    std::optional<double> f1;         // classification only
    std::optional<double> threshold;  // binary classification only
    std::size_t n = 0;
};

// Average fractional ranks; ties share the mean rank.
std::vector<double> fractional_ranks(const std::vector<double>& values);

double pearson(const std::vector<double>& pred, const std::vector<double>& gold);
double spearman(const std::vector<double>& pred, const std::vector<double>& gold);

// Binary F1 with the convention "positive iff score >= threshold".
double binary_f1(const std::vector<double>& scores, const std::vector<int>& labels,
                 double threshold);

// Threshold fitted on the validation set: candidates are midpoints between
// consecutive sorted unique validation scores plus +-inf sentinels; the
// highest validation F1 wins, ties resolved toward the lowest threshold.
// Returns (F1 on the target set, fitted threshold).
std::pair<double, double> f1_with_threshold(const std::vector<double>& scores,
                                            const std::vector<int>& labels,
                                            const std::vector<double>& val_scores,
                                            const std::vector<int>& val_labels);

// Macro-averaged F1 over the label set {0..n_classes-1}.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold, int n_classes);

}  // namespace tmft
