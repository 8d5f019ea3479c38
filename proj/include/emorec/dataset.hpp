#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "emorec/common.hpp"
#include "emorec/embedding.hpp"

namespace emorec {

// One aligned triple of feature sequences plus a K-bit label vector.
struct MultiModalSample {
    MatrixXd text_seq;      // T x d_text_feat
    MatrixXd acoustic_seq;  // T x d_ac_feat
    MatrixXd visual_seq;    // T x d_vis_feat
    VectorXd labels;        // length K, entries in {0,1}
};

struct Dataset {
    std::vector<MultiModalSample> train, valid, test;
    int seq_len = 0;                       // T
    std::array<int, 3> feature_dims{};     // (d_text_feat, d_ac_feat, d_vis_feat)
    EmotionVocabulary vocabulary;

    const std::vector<MultiModalSample>& split(const std::string& name) const;
};

// Planted-structure generator config. Labels are drawn with a Gaussian
// copula: `marginals[k]` is the positive rate of emotion k and
// `correlation` (symmetric, unit diagonal) is the latent correlation
// driving co-occurrence.
struct SyntheticConfig {
    int k_emotions = 4;
    int seq_len = 20;
    std::array<int, 3> feature_dims{8, 8, 8};
    int train_count = 2000;
    int valid_count = 500;
    int test_count = 500;
    double noise_sigma = 0.5;
    std::vector<double> marginals;   // defaults to 0.3 per emotion
    MatrixXd correlation;            // defaults to identity
    std::uint64_t seed = 0;
    // Optional: plant one emotion's directions (all three spaces) as the
    // normalized mean of two other emotions' directions, for transfer tests.
    struct Mixture {
        int target, parent_a, parent_b;
    };
    std::optional<Mixture> mixture;
    // If set, only this modality's directions carry signal for the named
    // emotion; the other two modalities get no mean shift for it.
    std::optional<std::pair<int, int>> single_modality_signal;  // (emotion, modality)
};

// Test-only side channel: the planted unit directions, one row per
// emotion, per modality space. Never visible to the model.
struct SyntheticOracle {
    std::array<MatrixXd, 3> directions;  // K x d_m for m in {t,a,v}

    // Classify by nearest planted direction (dot product with sequence mean).
    VectorXd classify(const MultiModalSample& sample, int modality, double threshold) const;
};

struct SyntheticResult {
    Dataset dataset;
    EmbeddingTable table;  // exactly the K emotion words
    SyntheticOracle oracle;
};

SyntheticResult generate_synthetic(const SyntheticConfig& config);

// Dataset container: manifest.json next to MMER tensor files and label CSVs.
Dataset load_dataset(const std::string& manifest_path);
void write_dataset(const Dataset& dataset, const std::string& dir);

// Same samples with label columns subset/reordered to `words`; used to
// train on a subset of the annotated emotions.
Dataset restrict_labels(const Dataset& dataset, const std::vector<std::string>& words);

// ceil(fraction * positives) positives for emotion k plus an equal count
// of negatives, both uniform without replacement, at least one of each.
std::vector<MultiModalSample> subsample_fewshot(const Dataset& dataset, int emotion_index,
                                                double fraction, std::uint64_t seed);

}  // namespace emorec
