#include "emorec/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace emorec {

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw DataError("confusion: predictions and labels differ in length");
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            predictions[i] ? ++c.tp : ++c.fn;
        } else {
            predictions[i] ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

std::optional<double> weighted_accuracy(const ConfusionCounts& c) {
    const double p = static_cast<double>(c.positives());
    const double n = static_cast<double>(c.negatives());
    if (p == 0.0 || n == 0.0) return std::nullopt;
    return (static_cast<double>(c.tp) * n / p + static_cast<double>(c.tn)) / (2.0 * n);
}

namespace {

double f1_from(long tp, long fp, long fn) {
    const long denom = 2 * tp + fp + fn;
    if (denom == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

std::optional<double> weighted_f1(const ConfusionCounts& c) {
    const long total = c.total();
    if (total == 0) return std::nullopt;
    const double f1_p = f1_from(c.tp, c.fp, c.fn);
    // Negatives treated as positive: TP' = TN, FP' = FN, FN' = FP.
    const double f1_n = f1_from(c.tn, c.fn, c.fp);
    const double p = static_cast<double>(c.positives());
    const double n = static_cast<double>(c.negatives());
    return (p * f1_p + n * f1_n) / static_cast<double>(total);
}

std::optional<double> accuracy(const ConfusionCounts& c) {
    const long total = c.total();
    if (total == 0) return std::nullopt;
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

std::optional<double> unweighted_f1(const ConfusionCounts& c) {
    if (c.total() == 0) return std::nullopt;
    return f1_from(c.tp, c.fp, c.fn);
}

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("auc: scores and labels differ in length");
    const long n_pos = std::count(labels.begin(), labels.end(), 1);
    const long n_neg = static_cast<long>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // Sort by score; mid-ranks for ties make the rank sum equal to the
    // pair-enumeration count with 0.5 credit per tied pair.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]]) pos_rank_sum += mid_rank;
        i = j;
    }
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

MetricReport::Average mean_of(const std::vector<EmotionMetrics>& rows,
                              std::optional<double> EmotionMetrics::*field) {
    MetricReport::Average avg;
    double sum = 0.0;
    for (const auto& r : rows) {
        if ((r.*field).has_value()) {
            sum += *(r.*field);
            ++avg.defined_count;
        }
    }
    if (avg.defined_count > 0) avg.value = sum / avg.defined_count;
    return avg;
}

}  // namespace

MetricReport::Average MetricReport::mean_w_acc() const { return mean_of(per_emotion, &EmotionMetrics::w_acc); }
MetricReport::Average MetricReport::mean_w_f1() const { return mean_of(per_emotion, &EmotionMetrics::w_f1); }
MetricReport::Average MetricReport::mean_acc() const { return mean_of(per_emotion, &EmotionMetrics::acc); }
MetricReport::Average MetricReport::mean_f1() const { return mean_of(per_emotion, &EmotionMetrics::f1); }
MetricReport::Average MetricReport::mean_auc() const { return mean_of(per_emotion, &EmotionMetrics::auc); }

MetricReport evaluate_scores(const std::vector<std::string>& emotions,
                             const std::vector<std::vector<double>>& scores_per_emotion,
                             const std::vector<std::vector<int>>& labels_per_emotion,
                             double threshold) {
    MetricReport report;
    report.emotions = emotions;
    report.threshold = threshold;
    for (std::size_t k = 0; k < emotions.size(); ++k) {
        const auto& scores = scores_per_emotion[k];
        const auto& labels = labels_per_emotion[k];
        std::vector<int> preds(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= threshold ? 1 : 0;
        ConfusionCounts c = confusion(preds, labels);
        EmotionMetrics m;
        m.w_acc = weighted_accuracy(c);
        m.w_f1 = weighted_f1(c);
        m.acc = accuracy(c);
        m.f1 = unweighted_f1(c);
        m.auc = auc(scores, labels);
        report.per_emotion.push_back(m);
    }
    return report;
}

std::vector<SweepRow> threshold_sweep(const std::vector<std::string>& emotions,
                                      const std::vector<std::vector<double>>& scores_per_emotion,
                                      const std::vector<std::vector<int>>& labels_per_emotion,
                                      const std::vector<double>& thresholds) {
    std::vector<SweepRow> rows;
    for (double th : thresholds) {
        MetricReport r = evaluate_scores(emotions, scores_per_emotion, labels_per_emotion, th);
        for (std::size_t k = 0; k < emotions.size(); ++k) {
            SweepRow row;
            row.threshold = th;
            row.emotion = emotions[k];
            row.w_acc = r.per_emotion[k].w_acc;
            row.w_f1 = r.per_emotion[k].w_f1;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace emorec
