#pragma once

#include <array>
#include <optional>
#include <vector>

#include "emorec/common.hpp"
#include "emorec/dataset.hpp"
#include "emorec/embedding.hpp"

namespace emorec {

inline constexpr int kText = 0;
inline constexpr int kAcoustic = 1;
inline constexpr int kVisual = 2;

using ModalityMask = std::array<bool, 3>;
inline constexpr ModalityMask kAllModalities{true, true, true};

// One direction of one LSTM layer. Gate order in the stacked dimension
// is input, forget, cell, output.
struct LstmDirParams {
    MatrixXd w_ih;  // 4h x in
    MatrixXd w_hh;  // 4h x h
    VectorXd b;     // 4h
};

struct LstmLayerParams {
    LstmDirParams fwd, bwd;
};

struct EncoderParams {
    std::vector<LstmLayerParams> layers;
    int input_dim = 0;
    int hidden = 0;
};

// f_{t->a} and f_{t->v}: one affine layer each.
struct MappingParams {
    MatrixXd w_a;  // d_a x d_t
    VectorXd b_a;  // d_a
    MatrixXd w_v;  // d_v x d_t
    VectorXd b_v;  // d_v
};

// Every trainable parameter. Also reused as the gradient container.
struct ModelParams {
    std::array<EncoderParams, 3> encoders;
    MappingParams mapping;
    std::array<double, 3> fusion{};  // w_t, w_a, w_v
};

struct ModelHyper {
    std::array<int, 3> hidden{300, 200, 100};  // h_t must equal dim(E_t)
    int num_layers = 2;
    double dropout = 0.15;
    std::array<int, 3> feature_dims{};
};

struct ModelState {
    ModelParams params;
    MatrixXd e_t;  // K x d_t, frozen; never receives gradient updates
    EmotionVocabulary vocabulary;
    ModelHyper hyper;

    int k_emotions() const { return static_cast<int>(e_t.rows()); }
};

struct ScoreSet {
    std::array<VectorXd, 3> per_modality;  // s_t, s_a, s_v (empty if masked out)
    VectorXd fused;                        // sigmoid of the weighted sum, length K
    ModalityMask mask{};
};

ModelState init_model(const EmotionVocabulary& vocabulary, const MatrixXd& e_t,
                      const ModelHyper& hyper, std::uint64_t seed);

ModelParams zero_like(const ModelParams& p);

// Flat parameter vector in a fixed order; used by the optimizer, gradient
// clipping, and the GEM projection.
Eigen::Index param_count(const ModelParams& p);
VectorXd flatten(const ModelParams& p);
void unflatten(ModelParams& p, const VectorXd& flat);

struct EncoderCache;  // opaque; holds activations for backpropagation

// r_m: elementwise sum of the top layer's final forward and final
// backward hidden states. Dropout on layer inputs in training mode only.
VectorXd encode(const MatrixXd& sequence, const EncoderParams& params, bool training,
                double dropout, Rng* rng, EncoderCache* cache = nullptr);

// E_a row k = W_a e^t_k + b_a; E_v analogous.
std::pair<MatrixXd, MatrixXd> map_embeddings(const MatrixXd& e_t, const MappingParams& mapping);

// Plain dot products, no scaling or softmax.
VectorXd score(const VectorXd& r_m, const MatrixXd& e_m);

ScoreSet fuse(const std::array<VectorXd, 3>& per_modality, const std::array<double, 3>& fusion,
              const ModalityMask& mask);

std::vector<ScoreSet> forward(const std::vector<MultiModalSample>& batch, const ModelState& state,
                              const ModalityMask& mask, bool training, Rng* rng = nullptr);

VectorXd predict(const ScoreSet& scores, double threshold);

// Mean multi-label binary cross-entropy over the batch and the active
// label columns, probabilities clamped to [1e-7, 1 - 1e-7].
// column_mask empty = all columns active.
double loss(const std::vector<ScoreSet>& score_sets, const std::vector<VectorXd>& labels,
            const std::vector<int>& column_mask = {});

// Exact gradients of the loss over every trainable parameter; E_t is
// excluded by construction. Returns (loss, gradients).
std::pair<double, ModelParams> gradients(const std::vector<MultiModalSample>& batch,
                                         const ModelState& state, const ModalityMask& mask,
                                         const std::vector<int>& column_mask = {},
                                         bool training = false, Rng* rng = nullptr);

}  // namespace emorec
