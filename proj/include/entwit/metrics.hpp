#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "entwit/model.hpp"

namespace entwit {

/// AUC by the rank statistic: probability that a random separable (label 0)
/// scores below a random entangled sample, ties counted 1/2. Equivalent to the
/// trapezoidal integral of the ROC curve.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auc: size mismatch");
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double n_ent = 0.0, n_sep = 0.0;
    double rank_sum_ent = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average rank
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                rank_sum_ent += avg_rank;
                n_ent += 1.0;
            } else {
                n_sep += 1.0;
            }
        }
        i = j;
    }
    if (n_ent == 0.0 || n_sep == 0.0)
        throw std::invalid_argument("roc_auc: both classes must be present");
    return (rank_sum_ent - n_ent * (n_ent + 1.0) / 2.0) / (n_ent * n_sep);
}

struct EerResult {
    double eer = 0.0;
    double b = 0.0;
};

/// FN/(TP+FN) at the threshold where false-negative and false-positive rates
/// meet; positive = separable.
inline EerResult eer(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("eer: size mismatch");
    std::vector<double> sep, ent;
    for (std::size_t i = 0; i < scores.size(); ++i)
        (labels[i] == 0 ? sep : ent).push_back(scores[i]);
    if (sep.empty() || ent.empty())
        throw std::invalid_argument("eer: both classes must be present");
    Threshold t = threshold_eer(sep, ent);
    double above = 0.0;
    for (double s : sep)
        if (s > t.b) above += 1.0;
    return {above / static_cast<double>(sep.size()), t.b};
}

}  // namespace entwit
