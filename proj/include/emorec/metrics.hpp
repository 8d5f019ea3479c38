#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emorec/common.hpp"

namespace emorec {

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    long positives() const { return tp + fn; }
    long negatives() const { return tn + fp; }
    long total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

// (TP * N/P + TN) / (2N). Majority-class (all-negative) prediction scores
// exactly 0.5. Undefined when either class is empty.
std::optional<double> weighted_accuracy(const ConfusionCounts& c);

// (P/I) * F1_p + (N/I) * F1_n, where F1_n treats negatives as positive.
// F1 with a zero denominator is defined as 0.
std::optional<double> weighted_f1(const ConfusionCounts& c);

std::optional<double> accuracy(const ConfusionCounts& c);
std::optional<double> unweighted_f1(const ConfusionCounts& c);

// Mann-Whitney AUC; ties credit 0.5. Rank-based, exactly equal to pair
// enumeration. Undefined when labels are single-class.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EmotionMetrics {
    std::optional<double> w_acc, w_f1, acc, f1, auc;
};

struct MetricReport {
    std::vector<std::string> emotions;
    std::vector<EmotionMetrics> per_emotion;
    double threshold = 0.5;

    // Arithmetic mean over defined entries; count of defined entries kept
    // alongside so undefined metrics are never silently absorbed.
    struct Average {
        std::optional<double> value;
        int defined_count = 0;
    };
    Average mean_w_acc() const;
    Average mean_w_f1() const;
    Average mean_acc() const;
    Average mean_f1() const;
    Average mean_auc() const;
};

// Scores and labels per emotion column across a split.
MetricReport evaluate_scores(const std::vector<std::string>& emotions,
                             const std::vector<std::vector<double>>& scores_per_emotion,
                             const std::vector<std::vector<int>>& labels_per_emotion,
                             double threshold);

struct SweepRow {
    double threshold;
    std::string emotion;
    std::optional<double> w_acc, w_f1;
};

std::vector<SweepRow> threshold_sweep(const std::vector<std::string>& emotions,
                                      const std::vector<std::vector<double>>& scores_per_emotion,
                                      const std::vector<std::vector<int>>& labels_per_emotion,
                                      const std::vector<double>& thresholds);

}  // namespace emorec
