#pragma once

#include <vector>

#include "emorec/metrics.hpp"
#include "emorec/model.hpp"

namespace emorec {

// Fused scores per emotion column across a sample list, plus the labels.
struct SplitScores {
    std::vector<std::vector<double>> scores;  // [emotion][sample]
    std::vector<std::vector<int>> labels;
};

SplitScores collect_scores(const ModelState& state, const std::vector<MultiModalSample>& samples,
                           const ModalityMask& mask);

MetricReport evaluate_model(const ModelState& state, const std::vector<MultiModalSample>& samples,
                            const ModalityMask& mask, double threshold);

}  // namespace emorec
