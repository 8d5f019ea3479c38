#include "emorec/evaluate.hpp"

namespace emorec {

SplitScores collect_scores(const ModelState& state, const std::vector<MultiModalSample>& samples,
                           const ModalityMask& mask) {
    const int k_count = state.k_emotions();
    SplitScores out;
    out.scores.assign(static_cast<std::size_t>(k_count), {});
    out.labels.assign(static_cast<std::size_t>(k_count), {});
    std::vector<ScoreSet> sets = forward(samples, state, mask, /*training=*/false);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int k = 0; k < k_count; ++k) {
            out.scores[static_cast<std::size_t>(k)].push_back(sets[i].fused(k));
            out.labels[static_cast<std::size_t>(k)].push_back(
                samples[i].labels(k) > 0.5 ? 1 : 0);
        }
    }
    return out;
}

MetricReport evaluate_model(const ModelState& state, const std::vector<MultiModalSample>& samples,
                            const ModalityMask& mask, double threshold) {
    SplitScores s = collect_scores(state, samples, mask);
    return evaluate_scores(state.vocabulary.names, s.scores, s.labels, threshold);
}

}  // namespace emorec
