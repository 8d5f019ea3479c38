#include "emorec/model.hpp"

#include <cmath>

namespace emorec {

namespace {

constexpr double kClampEps = 1e-7;

void init_uniform(MatrixXd& m, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

LstmDirParams make_dir(int in, int h, Rng& rng) {
    LstmDirParams p;
    p.w_ih = MatrixXd(4 * h, in);
    p.w_hh = MatrixXd(4 * h, h);
    p.b = VectorXd::Zero(4 * h);
    init_uniform(p.w_ih, in, rng);
    init_uniform(p.w_hh, h, rng);
    return p;
}

EncoderParams make_encoder(int input_dim, int hidden, int num_layers, Rng& rng) {
    EncoderParams e;
    e.input_dim = input_dim;
    e.hidden = hidden;
    for (int l = 0; l < num_layers; ++l) {
        const int in = (l == 0) ? input_dim : 2 * hidden;
        e.layers.push_back({make_dir(in, hidden, rng), make_dir(in, hidden, rng)});
    }
    return e;
}

}  // namespace

ModelState init_model(const EmotionVocabulary& vocabulary, const MatrixXd& e_t,
                      const ModelHyper& hyper, std::uint64_t seed) {
    if (e_t.rows() != vocabulary.size())
        throw ConfigError("E_t row count does not match vocabulary size");
    if (hyper.hidden[kText] != static_cast<int>(e_t.cols()))
        throw ConfigError("textual hidden size must equal textual embedding dimension");

    Rng rng(seed);
    ModelState state;
    state.e_t = e_t;
    state.vocabulary = vocabulary;
    state.hyper = hyper;
    for (int m = 0; m < 3; ++m)
        state.params.encoders[static_cast<std::size_t>(m)] =
            make_encoder(hyper.feature_dims[static_cast<std::size_t>(m)],
                         hyper.hidden[static_cast<std::size_t>(m)], hyper.num_layers, rng);
    const int d_t = static_cast<int>(e_t.cols());
    state.params.mapping.w_a = MatrixXd(hyper.hidden[kAcoustic], d_t);
    state.params.mapping.b_a = VectorXd::Zero(hyper.hidden[kAcoustic]);
    state.params.mapping.w_v = MatrixXd(hyper.hidden[kVisual], d_t);
    state.params.mapping.b_v = VectorXd::Zero(hyper.hidden[kVisual]);
    init_uniform(state.params.mapping.w_a, d_t, rng);
    init_uniform(state.params.mapping.w_v, d_t, rng);
    state.params.fusion = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    return state;
}

ModelParams zero_like(const ModelParams& p) {
    ModelParams g;
    for (int m = 0; m < 3; ++m) {
        const auto& e = p.encoders[static_cast<std::size_t>(m)];
        EncoderParams ge;
        ge.input_dim = e.input_dim;
        ge.hidden = e.hidden;
        for (const auto& layer : e.layers) {
            LstmLayerParams gl;
            for (auto [src, dst] : {std::pair{&layer.fwd, &gl.fwd}, std::pair{&layer.bwd, &gl.bwd}}) {
                dst->w_ih = MatrixXd::Zero(src->w_ih.rows(), src->w_ih.cols());
                dst->w_hh = MatrixXd::Zero(src->w_hh.rows(), src->w_hh.cols());
                dst->b = VectorXd::Zero(src->b.size());
            }
            ge.layers.push_back(std::move(gl));
        }
        g.encoders[static_cast<std::size_t>(m)] = std::move(ge);
    }
    g.mapping.w_a = MatrixXd::Zero(p.mapping.w_a.rows(), p.mapping.w_a.cols());
    g.mapping.b_a = VectorXd::Zero(p.mapping.b_a.size());
    g.mapping.w_v = MatrixXd::Zero(p.mapping.w_v.rows(), p.mapping.w_v.cols());
    g.mapping.b_v = VectorXd::Zero(p.mapping.b_v.size());
    g.fusion = {0.0, 0.0, 0.0};
    return g;
}

namespace {

// Fixed flattening order: encoders t,a,v; per layer fwd then bwd; within a
// direction w_ih, w_hh, b; then mapping (w_a, b_a, w_v, b_v); then fusion.
template <typename Params, typename F>
void visit_params(Params& p, F&& f) {
    for (auto& enc : p.encoders) {
        for (auto& layer : enc.layers) {
            for (auto* dir : {&layer.fwd, &layer.bwd}) {
                f(dir->w_ih.data(), dir->w_ih.size());
                f(dir->w_hh.data(), dir->w_hh.size());
                f(dir->b.data(), dir->b.size());
            }
        }
    }
    f(p.mapping.w_a.data(), p.mapping.w_a.size());
    f(p.mapping.b_a.data(), p.mapping.b_a.size());
    f(p.mapping.w_v.data(), p.mapping.w_v.size());
    f(p.mapping.b_v.data(), p.mapping.b_v.size());
    f(p.fusion.data(), static_cast<Eigen::Index>(p.fusion.size()));
}

}  // namespace

Eigen::Index param_count(const ModelParams& p) {
    Eigen::Index n = 0;
    visit_params(p, [&](const double*, Eigen::Index size) { n += size; });
    return n;
}

VectorXd flatten(const ModelParams& p) {
    VectorXd out(param_count(p));
    Eigen::Index pos = 0;
    visit_params(p, [&](const double* data, Eigen::Index size) {
        out.segment(pos, size) = Eigen::Map<const VectorXd>(data, size);
        pos += size;
    });
    return out;
}

void unflatten(ModelParams& p, const VectorXd& flat) {
    if (flat.size() != param_count(p))
        throw ConfigError("flat parameter vector has wrong length");
    Eigen::Index pos = 0;
    visit_params(p, [&](double* data, Eigen::Index size) {
        Eigen::Map<VectorXd>(data, size) = flat.segment(pos, size);
        pos += size;
    });
}

// -------------------------------------------------------------------------
// Encoder forward/backward

namespace {

struct LstmDirCache {
    MatrixXd gi, gf, gg, go;  // T x h gate activations
    MatrixXd c, h;            // T x h
};

struct LayerCache {
    MatrixXd input;  // T x in, post-dropout
    MatrixXd mask;   // dropout mask (inverted scaling), empty if unused
    LstmDirCache fwd, bwd;
};

}  // namespace

struct EncoderCache {
    std::vector<LayerCache> layers;
};

namespace {

// One direction over the full sequence. dir = +1 processes t = 0..T-1,
// dir = -1 processes t = T-1..0. Returns the final hidden state.
VectorXd lstm_dir_forward(const LstmDirParams& p, const MatrixXd& input, int dir,
                          LstmDirCache* cache) {
    const int seq_len = static_cast<int>(input.rows());
    const int h = static_cast<int>(p.w_hh.cols());
    if (cache) {
        cache->gi = cache->gf = cache->gg = cache->go = MatrixXd(seq_len, h);
        cache->c = cache->h = MatrixXd(seq_len, h);
    }
    VectorXd h_prev = VectorXd::Zero(h);
    VectorXd c_prev = VectorXd::Zero(h);
    const int start = dir > 0 ? 0 : seq_len - 1;
    for (int step = 0; step < seq_len; ++step) {
        const int t = start + dir * step;
        VectorXd pre = p.w_ih * input.row(t).transpose() + p.w_hh * h_prev + p.b;
        VectorXd gi(h), gf(h), gg(h), go(h);
        for (int j = 0; j < h; ++j) {
            gi(j) = sigmoid(pre(j));
            gf(j) = sigmoid(pre(h + j));
            gg(j) = std::tanh(pre(2 * h + j));
            go(j) = sigmoid(pre(3 * h + j));
        }
        VectorXd c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
        VectorXd hid = go.cwiseProduct(c.array().tanh().matrix());
        if (cache) {
            cache->gi.row(t) = gi.transpose();
            cache->gf.row(t) = gf.transpose();
            cache->gg.row(t) = gg.transpose();
            cache->go.row(t) = go.transpose();
            cache->c.row(t) = c.transpose();
            cache->h.row(t) = hid.transpose();
        }
        h_prev = std::move(hid);
        c_prev = std::move(c);
    }
    return h_prev;
}

// Backpropagation through time for one direction. dh_out holds the loss
// gradient on the hidden state at every timestep. Accumulates parameter
// gradients into grad and returns the gradient on the layer input.
MatrixXd lstm_dir_backward(const LstmDirParams& p, const MatrixXd& input,
                           const LstmDirCache& cache, const MatrixXd& dh_out, int dir,
                           LstmDirParams& grad) {
    const int seq_len = static_cast<int>(input.rows());
    const int h = static_cast<int>(p.w_hh.cols());
    MatrixXd dinput = MatrixXd::Zero(input.rows(), input.cols());
    VectorXd dh_next = VectorXd::Zero(h);
    VectorXd dc_next = VectorXd::Zero(h);
    // Walk processing order in reverse.
    const int last = dir > 0 ? seq_len - 1 : 0;
    for (int step = seq_len - 1; step >= 0; --step) {
        const int t = (dir > 0 ? 0 : seq_len - 1) + dir * step;
        const int t_prev = t - dir;
        const bool has_prev = step > 0;
        (void)last;

        VectorXd gi = cache.gi.row(t).transpose();
        VectorXd gf = cache.gf.row(t).transpose();
        VectorXd gg = cache.gg.row(t).transpose();
        VectorXd go = cache.go.row(t).transpose();
        VectorXd c = cache.c.row(t).transpose();
        VectorXd c_prev = has_prev ? VectorXd(cache.c.row(t_prev).transpose())
                                   : VectorXd(VectorXd::Zero(h));
        VectorXd h_prev = has_prev ? VectorXd(cache.h.row(t_prev).transpose())
                                   : VectorXd(VectorXd::Zero(h));

        VectorXd dh = dh_out.row(t).transpose() + dh_next;
        VectorXd tanh_c = c.array().tanh();
        VectorXd dgo = dh.cwiseProduct(tanh_c);
        VectorXd dc = dc_next +
                      dh.cwiseProduct(go).cwiseProduct(
                          (1.0 - tanh_c.array().square()).matrix());
        VectorXd dgi = dc.cwiseProduct(gg);
        VectorXd dgg = dc.cwiseProduct(gi);
        VectorXd dgf = dc.cwiseProduct(c_prev);
        dc_next = dc.cwiseProduct(gf);

        VectorXd dpre(4 * h);
        dpre.segment(0, h) = dgi.cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
        dpre.segment(h, h) = dgf.cwiseProduct(gf).cwiseProduct((1.0 - gf.array()).matrix());
        dpre.segment(2 * h, h) = dgg.cwiseProduct((1.0 - gg.array().square()).matrix());
        dpre.segment(3 * h, h) = dgo.cwiseProduct(go).cwiseProduct((1.0 - go.array()).matrix());

        grad.w_ih += dpre * input.row(t);
        grad.w_hh += dpre * h_prev.transpose();
        grad.b += dpre;
        dinput.row(t) += (p.w_ih.transpose() * dpre).transpose();
        dh_next = p.w_hh.transpose() * dpre;
    }
    return dinput;
}

}  // namespace

VectorXd encode(const MatrixXd& sequence, const EncoderParams& params, bool training,
                double dropout, Rng* rng, EncoderCache* cache) {
    if (static_cast<int>(sequence.cols()) != params.input_dim)
        throw DataError("encode: sequence feature dimension " +
                        std::to_string(sequence.cols()) + " does not match encoder input " +
                        std::to_string(params.input_dim));
    const int seq_len = static_cast<int>(sequence.rows());
    const int h = params.hidden;
    if (cache) cache->layers.resize(params.layers.size());

    MatrixXd input = sequence;
    VectorXd r;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        MatrixXd mask;
        if (training && dropout > 0.0) {
            if (!rng) throw ConfigError("training-mode encode requires an rng");
            std::bernoulli_distribution keep(1.0 - dropout);
            mask = MatrixXd(input.rows(), input.cols());
            const double scale = 1.0 / (1.0 - dropout);
            for (Eigen::Index ri = 0; ri < mask.rows(); ++ri)
                for (Eigen::Index ci = 0; ci < mask.cols(); ++ci)
                    mask(ri, ci) = keep(*rng) ? scale : 0.0;
            input = input.cwiseProduct(mask);
        }
        LstmDirCache local_fwd, local_bwd;
        LstmDirCache* cf = cache ? &cache->layers[l].fwd : &local_fwd;
        LstmDirCache* cb = cache ? &cache->layers[l].bwd : &local_bwd;
        VectorXd hf = lstm_dir_forward(params.layers[l].fwd, input, +1, cf);
        VectorXd hb = lstm_dir_forward(params.layers[l].bwd, input, -1, cb);
        if (cache) {
            cache->layers[l].input = input;
            cache->layers[l].mask = mask;
        }
        if (l + 1 < params.layers.size()) {
            MatrixXd next(seq_len, 2 * h);
            next.leftCols(h) = cf->h;
            next.rightCols(h) = cb->h;
            input = std::move(next);
        } else {
            r = hf + hb;
        }
    }
    return r;
}

namespace {

// dL/dr back through the whole encoder; accumulates into grad.
void encode_backward(const EncoderParams& params, const EncoderCache& cache, const VectorXd& dr,
                     EncoderParams& grad) {
    const int h = params.hidden;
    const int seq_len = static_cast<int>(cache.layers[0].input.rows());
    const std::size_t top = params.layers.size() - 1;

    MatrixXd dh_fwd = MatrixXd::Zero(seq_len, h);
    MatrixXd dh_bwd = MatrixXd::Zero(seq_len, h);
    dh_fwd.row(seq_len - 1) = dr.transpose();  // final forward state
    dh_bwd.row(0) = dr.transpose();            // final backward state

    for (std::size_t l = top + 1; l-- > 0;) {
        const LayerCache& lc = cache.layers[l];
        MatrixXd din = lstm_dir_backward(params.layers[l].fwd, lc.input, lc.fwd, dh_fwd, +1,
                                         grad.layers[l].fwd);
        din += lstm_dir_backward(params.layers[l].bwd, lc.input, lc.bwd, dh_bwd, -1,
                                 grad.layers[l].bwd);
        if (lc.mask.size() > 0) din = din.cwiseProduct(lc.mask);
        if (l > 0) {
            dh_fwd = din.leftCols(h);
            dh_bwd = din.rightCols(h);
        }
    }
}

}  // namespace

// -------------------------------------------------------------------------
// Scoring, fusion, loss

std::pair<MatrixXd, MatrixXd> map_embeddings(const MatrixXd& e_t, const MappingParams& mapping) {
    if (mapping.w_a.cols() != e_t.cols() || mapping.w_v.cols() != e_t.cols())
        throw DataError("map_embeddings: mapping shape does not match E_t");
    MatrixXd e_a = e_t * mapping.w_a.transpose();
    e_a.rowwise() += mapping.b_a.transpose();
    MatrixXd e_v = e_t * mapping.w_v.transpose();
    e_v.rowwise() += mapping.b_v.transpose();
    return {std::move(e_a), std::move(e_v)};
}

VectorXd score(const VectorXd& r_m, const MatrixXd& e_m) {
    if (r_m.size() != e_m.cols())
        throw DataError("score: representation dimension does not match embedding dimension");
    return e_m * r_m;
}

ScoreSet fuse(const std::array<VectorXd, 3>& per_modality, const std::array<double, 3>& fusion,
              const ModalityMask& mask) {
    if (!mask[0] && !mask[1] && !mask[2]) throw ConfigError("no modality available");
    ScoreSet out;
    out.mask = mask;
    Eigen::Index k_count = -1;
    for (int m = 0; m < 3; ++m) {
        if (!mask[static_cast<std::size_t>(m)]) continue;
        const VectorXd& s_m = per_modality[static_cast<std::size_t>(m)];
        if (k_count < 0) k_count = s_m.size();
        if (s_m.size() != k_count)
            throw DataError("fuse: modality score vectors disagree in length");
        out.per_modality[static_cast<std::size_t>(m)] = s_m;
    }
    VectorXd z = VectorXd::Zero(k_count);
    for (int m = 0; m < 3; ++m)
        if (mask[static_cast<std::size_t>(m)])
            z += fusion[static_cast<std::size_t>(m)] * out.per_modality[static_cast<std::size_t>(m)];
    out.fused = VectorXd(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) out.fused(k) = sigmoid(z(k));
    return out;
}

std::vector<ScoreSet> forward(const std::vector<MultiModalSample>& batch, const ModelState& state,
                              const ModalityMask& mask, bool training, Rng* rng) {
    auto [e_a, e_v] = map_embeddings(state.e_t, state.params.mapping);
    const MatrixXd* embeddings[3] = {&state.e_t, &e_a, &e_v};

    std::vector<ScoreSet> out;
    out.reserve(batch.size());
    for (const auto& sample : batch) {
        std::array<VectorXd, 3> per_modality;
        const MatrixXd* seqs[3] = {&sample.text_seq, &sample.acoustic_seq, &sample.visual_seq};
        for (int m = 0; m < 3; ++m) {
            if (!mask[static_cast<std::size_t>(m)]) continue;
            VectorXd r = encode(*seqs[m], state.params.encoders[static_cast<std::size_t>(m)],
                                training, state.hyper.dropout, rng);
            per_modality[static_cast<std::size_t>(m)] = score(r, *embeddings[m]);
        }
        out.push_back(fuse(per_modality, state.params.fusion, mask));
    }
    return out;
}

VectorXd predict(const ScoreSet& scores, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("threshold must lie in (0,1)");
    VectorXd out(scores.fused.size());
    for (Eigen::Index k = 0; k < out.size(); ++k)
        out(k) = scores.fused(k) >= threshold ? 1.0 : 0.0;
    return out;
}

namespace {

std::vector<int> resolve_columns(const std::vector<int>& column_mask, Eigen::Index k_count) {
    std::vector<int> cols = column_mask;
    if (cols.empty()) {
        cols.resize(static_cast<std::size_t>(k_count));
        for (Eigen::Index k = 0; k < k_count; ++k) cols[static_cast<std::size_t>(k)] = static_cast<int>(k);
    }
    for (int k : cols)
        if (k < 0 || k >= k_count) throw ConfigError("loss column index out of range");
    return cols;
}

}  // namespace

double loss(const std::vector<ScoreSet>& score_sets, const std::vector<VectorXd>& labels,
            const std::vector<int>& column_mask) {
    if (score_sets.size() != labels.size())
        throw DataError("loss: batch size mismatch between scores and labels");
    if (score_sets.empty()) throw DataError("loss: empty batch");
    const auto cols = resolve_columns(column_mask, score_sets[0].fused.size());

    double total = 0.0;
    for (std::size_t i = 0; i < score_sets.size(); ++i) {
        for (int k : cols) {
            const double y = labels[i](k);
            const double s =
                std::clamp(score_sets[i].fused(k), kClampEps, 1.0 - kClampEps);
            total -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
        }
    }
    return total / (static_cast<double>(score_sets.size()) * static_cast<double>(cols.size()));
}

std::pair<double, ModelParams> gradients(const std::vector<MultiModalSample>& batch,
                                         const ModelState& state, const ModalityMask& mask,
                                         const std::vector<int>& column_mask, bool training,
                                         Rng* rng) {
    if (batch.empty()) throw DataError("gradients: empty batch");
    auto [e_a, e_v] = map_embeddings(state.e_t, state.params.mapping);
    const MatrixXd* embeddings[3] = {&state.e_t, &e_a, &e_v};
    const auto cols = resolve_columns(column_mask, state.e_t.rows());
    const double norm = static_cast<double>(batch.size()) * static_cast<double>(cols.size());

    ModelParams grad = zero_like(state.params);
    MatrixXd de_a = MatrixXd::Zero(e_a.rows(), e_a.cols());
    MatrixXd de_v = MatrixXd::Zero(e_v.rows(), e_v.cols());
    double total_loss = 0.0;

    for (const auto& sample : batch) {
        const MatrixXd* seqs[3] = {&sample.text_seq, &sample.acoustic_seq, &sample.visual_seq};
        std::array<VectorXd, 3> reps;
        std::array<VectorXd, 3> scores_m;
        std::array<EncoderCache, 3> caches;
        for (int m = 0; m < 3; ++m) {
            if (!mask[static_cast<std::size_t>(m)]) continue;
            reps[static_cast<std::size_t>(m)] =
                encode(*seqs[m], state.params.encoders[static_cast<std::size_t>(m)], training,
                       state.hyper.dropout, rng, &caches[static_cast<std::size_t>(m)]);
            scores_m[static_cast<std::size_t>(m)] =
                score(reps[static_cast<std::size_t>(m)], *embeddings[m]);
        }
        ScoreSet ss = fuse(scores_m, state.params.fusion, mask);

        // dL/dz = (s - y)/norm inside the clamp region, 0 where clamped.
        VectorXd dz = VectorXd::Zero(ss.fused.size());
        for (int k : cols) {
            const double y = sample.labels(k);
            const double s = ss.fused(k);
            const double sc = std::clamp(s, kClampEps, 1.0 - kClampEps);
            total_loss -= y * std::log(sc) + (1.0 - y) * std::log(1.0 - sc);
            if (s > kClampEps && s < 1.0 - kClampEps) dz(k) = (s - y) / norm;
        }

        for (int m = 0; m < 3; ++m) {
            if (!mask[static_cast<std::size_t>(m)]) continue;
            const double w_m = state.params.fusion[static_cast<std::size_t>(m)];
            grad.fusion[static_cast<std::size_t>(m)] +=
                dz.dot(scores_m[static_cast<std::size_t>(m)]);
            VectorXd ds_m = w_m * dz;
            VectorXd dr = embeddings[m]->transpose() * ds_m;
            if (m == kAcoustic) de_a += ds_m * reps[static_cast<std::size_t>(m)].transpose();
            if (m == kVisual) de_v += ds_m * reps[static_cast<std::size_t>(m)].transpose();
            // E_t is frozen: no embedding gradient for the textual modality.
            encode_backward(state.params.encoders[static_cast<std::size_t>(m)],
                            caches[static_cast<std::size_t>(m)], dr,
                            grad.encoders[static_cast<std::size_t>(m)]);
        }
    }

    if (mask[kAcoustic]) {
        grad.mapping.w_a = de_a.transpose() * state.e_t;
        grad.mapping.b_a = de_a.colwise().sum().transpose();
    }
    if (mask[kVisual]) {
        grad.mapping.w_v = de_v.transpose() * state.e_t;
        grad.mapping.b_v = de_v.colwise().sum().transpose();
    }
    return {total_loss / norm, std::move(grad)};
}

}  // namespace emorec
