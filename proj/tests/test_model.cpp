#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "emorec/model.hpp"
#include "test_util.hpp"

using namespace emorec;

namespace {

EncoderParams zero_encoder(int input_dim, int hidden, int layers) {
    EncoderParams e;
    e.input_dim = input_dim;
    e.hidden = hidden;
    for (int l = 0; l < layers; ++l) {
        const int in = l == 0 ? input_dim : 2 * hidden;
        LstmLayerParams layer;
        for (auto* d : {&layer.fwd, &layer.bwd}) {
            d->w_ih = MatrixXd::Zero(4 * hidden, in);
            d->w_hh = MatrixXd::Zero(4 * hidden, hidden);
            d->b = VectorXd::Zero(4 * hidden);
        }
        e.layers.push_back(layer);
    }
    return e;
}

// Step-by-step reference recurrence, written independently of the
// library's cell code. Single layer, one direction.
MatrixXd reference_lstm(const LstmDirParams& p, const MatrixXd& input, bool reversed) {
    const int seq_len = static_cast<int>(input.rows());
    const int h = static_cast<int>(p.w_hh.cols());
    MatrixXd hs(seq_len, h);
    VectorXd h_prev = VectorXd::Zero(h), c_prev = VectorXd::Zero(h);
    for (int step = 0; step < seq_len; ++step) {
        const int t = reversed ? seq_len - 1 - step : step;
        VectorXd pre = p.w_ih * input.row(t).transpose() + p.w_hh * h_prev + p.b;
        VectorXd c(h), hid(h);
        for (int j = 0; j < h; ++j) {
            const double i_g = 1.0 / (1.0 + std::exp(-pre(j)));
            const double f_g = 1.0 / (1.0 + std::exp(-pre(h + j)));
            const double g_g = std::tanh(pre(2 * h + j));
            const double o_g = 1.0 / (1.0 + std::exp(-pre(3 * h + j)));
            c(j) = f_g * c_prev(j) + i_g * g_g;
            hid(j) = o_g * std::tanh(c(j));
        }
        hs.row(t) = hid.transpose();
        h_prev = hid;
        c_prev = c;
    }
    return hs;
}

}  // namespace

TEST_CASE("encode: zero weights and zero input give a zero representation") {
    EncoderParams e = zero_encoder(4, 3, 2);
    MatrixXd seq = MatrixXd::Zero(6, 4);
    VectorXd r = encode(seq, e, false, 0.0, nullptr);
    CHECK(r.norm() == 0.0);
}

TEST_CASE("encode: single-timestep sequence is finite") {
    ModelState state = testutil::tiny_model(1);
    MatrixXd seq = MatrixXd::Random(1, 5);
    VectorXd r = encode(seq, state.params.encoders[kText], false, 0.0, nullptr);
    CHECK(r.size() == 4);
    CHECK(r.allFinite());
}

TEST_CASE("encode: shape mismatch is rejected") {
    ModelState state = testutil::tiny_model(1);
    MatrixXd seq = MatrixXd::Random(5, 7);
    CHECK_THROWS_AS(encode(seq, state.params.encoders[kText], false, 0.0, nullptr), DataError);
}

TEST_CASE("encode matches an independently hand-rolled recurrence") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 0.5);
    const int h = 3;

    EncoderParams e = zero_encoder(4, h, 1);
    for (auto* d : {&e.layers[0].fwd, &e.layers[0].bwd}) {
        for (Eigen::Index r = 0; r < d->w_ih.rows(); ++r)
            for (Eigen::Index c = 0; c < d->w_ih.cols(); ++c) d->w_ih(r, c) = g(rng);
        for (Eigen::Index r = 0; r < d->w_hh.rows(); ++r)
            for (Eigen::Index c = 0; c < d->w_hh.cols(); ++c) d->w_hh(r, c) = g(rng);
        for (Eigen::Index r = 0; r < d->b.size(); ++r) d->b(r) = g(rng);
    }
    MatrixXd seq(5, 4);
    for (Eigen::Index r = 0; r < seq.rows(); ++r)
        for (Eigen::Index c = 0; c < seq.cols(); ++c) seq(r, c) = g(rng);

    MatrixXd fwd = reference_lstm(e.layers[0].fwd, seq, false);
    MatrixXd bwd = reference_lstm(e.layers[0].bwd, seq, true);
    VectorXd expected = fwd.row(4).transpose() + bwd.row(0).transpose();

    VectorXd r = encode(seq, e, false, 0.0, nullptr);
    CHECK((r - expected).norm() < 1e-12);
}

TEST_CASE("map_embeddings") {
    MatrixXd e_t(2, 2);
    e_t << 1, 2, 3, 4;

    SUBCASE("zero map") {
        MappingParams m;
        m.w_a = MatrixXd::Zero(3, 2);
        m.b_a = VectorXd::Zero(3);
        m.w_v = MatrixXd::Zero(1, 2);
        m.b_v = VectorXd::Zero(1);
        auto [e_a, e_v] = map_embeddings(e_t, m);
        CHECK(e_a.norm() == 0.0);
        CHECK(e_v.norm() == 0.0);
    }
    SUBCASE("identity map") {
        MappingParams m;
        m.w_a = MatrixXd::Identity(2, 2);
        m.b_a = VectorXd::Zero(2);
        m.w_v = MatrixXd::Zero(1, 2);
        m.b_v = VectorXd::Zero(1);
        auto [e_a, e_v] = map_embeddings(e_t, m);
        CHECK(e_a == e_t);
    }
    SUBCASE("hand arithmetic") {
        MappingParams m;
        m.w_a = MatrixXd(1, 2);
        m.w_a << 1, 1;
        m.b_a = VectorXd(1);
        m.b_a << 1;
        m.w_v = MatrixXd::Zero(1, 2);
        m.b_v = VectorXd::Zero(1);
        auto [e_a, e_v] = map_embeddings(e_t, m);
        CHECK(e_a(0, 0) == 4.0);
        CHECK(e_a(1, 0) == 8.0);
    }
}

TEST_CASE("score is a plain dot product") {
    MatrixXd e_m = MatrixXd::Identity(3, 3);
    VectorXd r = VectorXd::Zero(3);
    CHECK(score(r, e_m).norm() == 0.0);

    r << 2, 0, 0;
    VectorXd s = score(r, e_m);
    CHECK(s(0) == 2.0);
    CHECK(s(1) == 0.0);

    MatrixXd e2(2, 2);
    e2 << 1, 2, 3, 4;
    VectorXd row0 = e2.row(0).transpose();
    VectorXd s2 = score(row0, e2);
    CHECK(s2(0) == row0.squaredNorm());
    CHECK(s2(1) == e2.row(1).dot(row0.transpose()));

    CHECK_THROWS_AS(score(VectorXd::Zero(2), e_m), DataError);
}

TEST_CASE("fuse") {
    std::array<VectorXd, 3> scores;
    scores[0] = VectorXd::Constant(2, 1.0);
    scores[1] = VectorXd::Constant(2, 1.0);
    scores[2] = VectorXd::Constant(2, 1.0);

    SUBCASE("zero weights give 0.5 everywhere") {
        ScoreSet s = fuse(scores, {0, 0, 0}, kAllModalities);
        CHECK(s.fused(0) == 0.5);
        CHECK(s.fused(1) == 0.5);
    }
    SUBCASE("weighted sum matches hand evaluation") {
        ScoreSet s = fuse(scores, {0.5, 0.25, 0.25}, kAllModalities);
        CHECK(s.fused(0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    }
    SUBCASE("saturation with a single modality") {
        scores[0] = VectorXd(2);
        scores[0] << 50.0, -50.0;
        ScoreSet s = fuse(scores, {1.0, 0.0, 0.0}, {true, false, false});
        CHECK(s.fused(0) == doctest::Approx(1.0));
        CHECK(s.fused(1) == doctest::Approx(0.0));
    }
    SUBCASE("empty mask is an error") {
        CHECK_THROWS_WITH_AS(fuse(scores, {1, 1, 1}, {false, false, false}),
                             doctest::Contains("no modality"), ConfigError);
    }
}

TEST_CASE("predict threshold boundary uses >=") {
    ScoreSet s;
    s.fused = VectorXd::Constant(3, 0.5);
    CHECK(predict(s, 0.5).sum() == 3.0);
    CHECK(predict(s, 0.9).sum() == 0.0);
    s.fused = VectorXd(2);
    s.fused << 0.3, 0.7;
    VectorXd p = predict(s, 0.5);
    CHECK(p(0) == 0.0);
    CHECK(p(1) == 1.0);
}

TEST_CASE("loss") {
    ScoreSet s;
    s.fused = VectorXd::Constant(2, 0.5);
    std::vector<VectorXd> labels{VectorXd::Zero(2)};
    CHECK(loss({s}, labels) == doctest::Approx(std::log(2.0)));

    s.fused = VectorXd(2);
    s.fused << 0.9, 0.1;
    labels[0] = VectorXd(2);
    labels[0] << 1, 0;
    CHECK(loss({s}, labels) == doctest::Approx(-std::log(0.9)));

    s.fused << 1.0, 0.0;  // exact labels, clamped
    CHECK(loss({s}, labels) < 1e-6);
}

TEST_CASE("forward: zero state gives 0.5 and masks do not change modality scores") {
    ModelState state = testutil::tiny_model(5);
    // Zero everything trainable.
    VectorXd zeros = VectorXd::Zero(param_count(state.params));
    ModelState zero_state = state;
    unflatten(zero_state.params, zeros);
    auto batch = testutil::tiny_batch(5, 1);
    auto sets = forward(batch, zero_state, kAllModalities, false);
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(sets[0].fused(k) == 0.5);

    // Per-modality scores are invariant to the mask.
    auto full = forward(batch, state, kAllModalities, false);
    auto only_a = forward(batch, state, {false, true, false}, false);
    CHECK(full[0].per_modality[kAcoustic] == only_a[0].per_modality[kAcoustic]);
    // And to the fusion weights.
    ModelState reweighted = state;
    reweighted.params.fusion = {3.0, -1.0, 0.25};
    auto rw = forward(batch, reweighted, kAllModalities, false);
    CHECK(full[0].per_modality[kText] == rw[0].per_modality[kText]);
}

TEST_CASE("forward: batched equals looped execution") {
    ModelState state = testutil::tiny_model(6);
    auto batch = testutil::tiny_batch(6, 4);
    auto batched = forward(batch, state, kAllModalities, false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto single = forward({batch[i]}, state, kAllModalities, false);
        CHECK(batched[i].fused == single[0].fused);
    }
}

TEST_CASE("scaling the representation scales the scores linearly") {
    ModelState state = testutil::tiny_model(7);
    auto batch = testutil::tiny_batch(7, 1);
    VectorXd r = encode(batch[0].text_seq, state.params.encoders[kText], false, 0.0, nullptr);
    VectorXd s1 = score(r, state.e_t);
    VectorXd s3 = score(3.0 * r, state.e_t);
    CHECK((s3 - 3.0 * s1).norm() < 1e-12);
}

TEST_CASE("single-modality monotonicity in the fused score") {
    std::array<VectorXd, 3> scores;
    scores[0] = VectorXd::Constant(1, 0.2);
    ScoreSet low = fuse(scores, {0.7, 0, 0}, {true, false, false});
    scores[0](0) = 0.9;
    ScoreSet high = fuse(scores, {0.7, 0, 0}, {true, false, false});
    CHECK(high.fused(0) > low.fused(0));
}

TEST_CASE("gradients match central finite differences") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        ModelState state = testutil::tiny_model(seed);
        auto batch = testutil::tiny_batch(seed + 100, 2);
        auto [l, grad] = gradients(batch, state, kAllModalities);
        CHECK(std::isfinite(l));
        VectorXd analytic = flatten(grad);
        VectorXd fd = testutil::finite_difference_gradient(state, batch, kAllModalities);
        REQUIRE(analytic.size() == fd.size());
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            const double denom = std::max({std::abs(fd(i)), std::abs(analytic(i)), 1e-6});
            CHECK(std::abs(analytic(i) - fd(i)) / denom < 1e-4);
        }
    }
}

TEST_CASE("gradients with a modality mask match finite differences") {
    ModelState state = testutil::tiny_model(21);
    auto batch = testutil::tiny_batch(121, 2);
    ModalityMask mask{true, false, true};
    auto [l, grad] = gradients(batch, state, mask);
    (void)l;
    VectorXd analytic = flatten(grad);
    VectorXd fd = testutil::finite_difference_gradient(state, batch, mask);
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
        const double denom = std::max({std::abs(fd(i)), std::abs(analytic(i)), 1e-6});
        CHECK(std::abs(analytic(i) - fd(i)) / denom < 1e-4);
    }
}

TEST_CASE("zero batch through a zero state gives zero fusion gradients") {
    ModelState state = testutil::tiny_model(3);
    unflatten(state.params, VectorXd::Zero(param_count(state.params)));
    auto batch = testutil::tiny_batch(3, 1);
    for (auto* m : {&batch[0].text_seq, &batch[0].acoustic_seq, &batch[0].visual_seq})
        m->setZero();
    auto [l, grad] = gradients(batch, state, kAllModalities);
    (void)l;
    CHECK(grad.fusion[0] == 0.0);
    CHECK(grad.fusion[1] == 0.0);
    CHECK(grad.fusion[2] == 0.0);
}

TEST_CASE("derived embeddings always reflect the current mapping") {
    ModelState state = testutil::tiny_model(8);
    auto [e_a1, e_v1] = map_embeddings(state.e_t, state.params.mapping);
    state.params.mapping.b_a.array() += 1.0;
    auto [e_a2, e_v2] = map_embeddings(state.e_t, state.params.mapping);
    CHECK(((e_a2 - e_a1).array() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK(e_v1 == e_v2);
}
