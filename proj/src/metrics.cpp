#include "tmft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

namespace tmft {

std::vector<double> fractional_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double mean_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& pred, const std::vector<double>& gold) {
    if (pred.size() != gold.size()) throw ConfigError("pearson: length mismatch");
    const std::size_t n = pred.size();
    if (n < 2) throw ConfigError("pearson: need at least 2 samples");
    double mx = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    double my = std::accumulate(gold.begin(), gold.end(), 0.0) / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = pred[i] - mx, dy = gold[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw NumericError("pearson: undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& pred, const std::vector<double>& gold) {
    return pearson(fractional_ranks(pred), fractional_ranks(gold));
}

double binary_f1(const std::vector<double>& scores, const std::vector<int>& labels,
                 double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pos = scores[i] >= threshold;
        if (pos && labels[i] == 1) ++tp;
        else if (pos && labels[i] == 0) ++fp;
        else if (!pos && labels[i] == 1) ++fn;
    }
    // No gold positives and none predicted: vacuously perfect (documented).
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

std::pair<double, double> f1_with_threshold(const std::vector<double>& scores,
                                            const std::vector<int>& labels,
                                            const std::vector<double>& val_scores,
                                            const std::vector<int>& val_labels) {
    if (val_scores.empty() || val_scores.size() != val_labels.size())
        throw ConfigError("f1_with_threshold: bad validation set");
    std::set<int> classes(val_labels.begin(), val_labels.end());
    if (classes.size() < 2)
        std::cerr << "warning: single-class validation labels, threshold is degenerate\n";

    std::vector<double> uniq(val_scores);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    std::vector<double> candidates;
    candidates.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
        candidates.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    candidates.push_back(std::numeric_limits<double>::infinity());

    double best_f1 = -1.0, best_thr = candidates.front();
    for (double thr : candidates) {
        double f1 = binary_f1(val_scores, val_labels, thr);
        if (f1 > best_f1) {  // strict: ties keep the lowest threshold
            best_f1 = f1;
            best_thr = thr;
        }
    }
    return {binary_f1(scores, labels, best_thr), best_thr};
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold, int n_classes) {
    if (pred.size() != gold.size()) throw ConfigError("macro_f1: length mismatch");
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == c && gold[i] == c) ++tp;
            else if (pred[i] == c) ++fp;
            else if (gold[i] == c) ++fn;
        }
        sum += (tp + fp + fn == 0) ? 1.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return sum / n_classes;
}

}  // namespace tmft
