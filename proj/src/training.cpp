#include "emorec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "emorec/evaluate.hpp"
#include "emorec/tensor_io.hpp"

namespace emorec {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (learning_rate < 0) throw ConfigError("learning_rate must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (grad_clip <= 0) throw ConfigError("grad_clip must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
    if (num_layers < 1) throw ConfigError("num_layers must be positive");
    if (threshold <= 0 || threshold >= 1) throw ConfigError("threshold must lie in (0,1)");
    if (scheduler.patience < 1) throw ConfigError("scheduler patience must be positive");
}

AdamOptimizer::AdamOptimizer(Eigen::Index n, double learning_rate, double beta1, double beta2,
                             double eps)
    : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)), lr_(learning_rate), beta1_(beta1),
      beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(VectorXd& params, const VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double m_hat = m_(i) / bc1;
        const double v_hat = v_(i) / bc2;
        params(i) -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
}

void clip_global_norm(VectorXd& grad, double max_norm) {
    const double norm = grad.norm();
    if (norm > max_norm) grad *= max_norm / norm;
}

int select_best(const TrainHistory& history) {
    if (history.empty()) throw ConfigError("select_best: empty history");
    int best = 0;
    double best_score = -1.0;
    for (std::size_t e = 0; e < history.size(); ++e) {
        double sum = 0.0;
        int n = 0;
        for (const auto& v : history[e].valid_w_acc) {
            if (v) {
                sum += *v;
                ++n;
            }
        }
        const double mean = n > 0 ? sum / n : 0.0;
        if (mean > best_score) {
            best_score = mean;
            best = static_cast<int>(e);
        }
    }
    return best;
}

TrainResult train(const Dataset& dataset, const MatrixXd& e_t, const TrainConfig& config) {
    config.validate();
    if (dataset.train.empty() || dataset.valid.empty())
        throw DataError("train: dataset needs nonempty train and valid splits");

    ModelHyper hyper;
    hyper.hidden = config.hidden;
    hyper.num_layers = config.num_layers;
    hyper.dropout = config.dropout;
    hyper.feature_dims = dataset.feature_dims;

    ModelState state = init_model(dataset.vocabulary, e_t, hyper, config.seed);
    VectorXd params = flatten(state.params);
    AdamOptimizer opt(params.size(), config.learning_rate);
    Rng rng(config.seed + 1);

    TrainResult result;
    double best_valid_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
    double best_selection = -1.0;

    std::vector<std::size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);

        double train_loss_sum = 0.0;
        int batch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::vector<MultiModalSample> batch;
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            for (std::size_t i = start; i < end; ++i) batch.push_back(dataset.train[order[i]]);

            auto [batch_loss, grad] =
                gradients(batch, state, kAllModalities, {}, /*training=*/true, &rng);
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite loss in epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_count));
            train_loss_sum += batch_loss;
            ++batch_count;

            VectorXd g = flatten(grad);
            clip_global_norm(g, config.grad_clip);
            opt.step(params, g);
            unflatten(state.params, params);
        }

        std::vector<ScoreSet> valid_sets =
            forward(dataset.valid, state, kAllModalities, /*training=*/false);
        std::vector<VectorXd> valid_labels;
        for (const auto& s : dataset.valid) valid_labels.push_back(s.labels);
        const double valid_loss = loss(valid_sets, valid_labels);

        MetricReport report =
            evaluate_model(state, dataset.valid, kAllModalities, config.threshold);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss_sum / std::max(1, batch_count);
        rec.valid_loss = valid_loss;
        rec.learning_rate = opt.learning_rate();
        for (const auto& m : report.per_emotion) {
            rec.valid_w_acc.push_back(m.w_acc);
            rec.valid_auc.push_back(m.auc);
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);

        // Best-epoch tracking: strict improvement keeps the earliest tie.
        const auto mean_w_acc = report.mean_w_acc();
        const double selection = mean_w_acc.value.value_or(0.0);
        if (selection > best_selection) {
            best_selection = selection;
            result.best_epoch = epoch;
            result.state = state;
        }

        // Plateau scheduler on validation loss.
        if (best_valid_loss - valid_loss > 1e-6) {
            best_valid_loss = valid_loss;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (epochs_since_improve > config.scheduler.patience) {
                opt.set_learning_rate(std::max(
                    opt.learning_rate() * config.scheduler.factor, config.scheduler.min_lr));
                epochs_since_improve = 0;
            }
        }
    }
    return result;
}

// -------------------------------------------------------------------------
// Checkpointing

namespace {

constexpr const char* kModalityTag[3] = {"t", "a", "v"};

template <typename Params, typename F>
void visit_named(Params& p, MatrixXd& e_t, F&& f) {
    for (int m = 0; m < 3; ++m) {
        auto& enc = p.encoders[static_cast<std::size_t>(m)];
        for (std::size_t l = 0; l < enc.layers.size(); ++l) {
            auto& layer = enc.layers[l];
            const std::string base =
                std::string("enc_") + kModalityTag[m] + "_l" + std::to_string(l) + "_";
            for (auto [tag, dir] : {std::pair{"fwd_", &layer.fwd}, std::pair{"bwd_", &layer.bwd}}) {
                f(base + tag + "w_ih", dir->w_ih);
                f(base + tag + "w_hh", dir->w_hh);
                f(base + tag + "b", dir->b);
            }
        }
    }
    f("map_w_a", p.mapping.w_a);
    f("map_b_a", p.mapping.b_a);
    f("map_w_v", p.mapping.w_v);
    f("map_b_v", p.mapping.b_v);
    f("e_t", e_t);
}

MatrixXd as_matrix(const VectorXd& v) { return v; }

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& dir) {
    fs::create_directories(dir);
    json meta;
    meta["version"] = 1;
    meta["K"] = state.k_emotions();
    meta["d_t"] = state.e_t.cols();
    meta["hidden"] = state.hyper.hidden;
    meta["num_layers"] = state.hyper.num_layers;
    meta["dropout"] = state.hyper.dropout;
    meta["feature_dims"] = state.hyper.feature_dims;
    meta["emotion_words"] = state.vocabulary.names;
    meta["fusion"] = state.params.fusion;

    json tensors;
    auto& mutable_state = const_cast<ModelState&>(state);
    visit_named(mutable_state.params, mutable_state.e_t,
                [&](const std::string& name, const auto& tensor) {
                    const std::string file = name + ".mmer";
                    if constexpr (std::is_same_v<std::decay_t<decltype(tensor)>, VectorXd>)
                        write_matrix((fs::path(dir) / file).string(), as_matrix(tensor));
                    else
                        write_matrix((fs::path(dir) / file).string(), tensor);
                    tensors[name] = file;
                });
    meta["tensors"] = tensors;
    std::ofstream os(fs::path(dir) / "model.json");
    if (!os) throw DataError("cannot write checkpoint metadata in " + dir);
    os << meta.dump(2) << '\n';
}

ModelState load_checkpoint(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "model.json");
    if (!is) throw DataError("cannot open checkpoint metadata in " + dir);
    json meta;
    try {
        is >> meta;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
    }
    if (meta.at("version").get<int>() != 1)
        throw DataError("unsupported checkpoint version in " + dir);

    ModelState state;
    state.vocabulary.names = meta.at("emotion_words").get<std::vector<std::string>>();
    const int k_count = meta.at("K").get<int>();
    if (state.vocabulary.size() != k_count)
        throw DataError("checkpoint K does not match emotion word count in " + dir);
    auto hidden = meta.at("hidden");
    auto fdims = meta.at("feature_dims");
    for (int m = 0; m < 3; ++m) {
        state.hyper.hidden[static_cast<std::size_t>(m)] = hidden.at(m).get<int>();
        state.hyper.feature_dims[static_cast<std::size_t>(m)] = fdims.at(m).get<int>();
    }
    state.hyper.num_layers = meta.at("num_layers").get<int>();
    state.hyper.dropout = meta.at("dropout").get<double>();
    auto fusion = meta.at("fusion");
    for (int m = 0; m < 3; ++m)
        state.params.fusion[static_cast<std::size_t>(m)] = fusion.at(m).get<double>();

    // Allocate the parameter layout, then fill from tensor files.
    ModelState shaped = init_model(
        state.vocabulary,
        MatrixXd::Zero(k_count, meta.at("d_t").get<int>()), state.hyper, 0);
    state.params.encoders = std::move(shaped.params.encoders);
    state.params.mapping = std::move(shaped.params.mapping);
    state.e_t = std::move(shaped.e_t);

    const json& tensors = meta.at("tensors");
    visit_named(state.params, state.e_t, [&](const std::string& name, auto& tensor) {
        const std::string file = tensors.at(name).get<std::string>();
        MatrixXd m = read_matrix((fs::path(dir) / file).string());
        using T = std::decay_t<decltype(tensor)>;
        if constexpr (std::is_same_v<T, VectorXd>) {
            if (m.cols() != 1 || m.rows() != tensor.size())
                throw DataError("checkpoint tensor shape mismatch for " + name);
            tensor = m.col(0);
        } else {
            if (m.rows() != tensor.rows() || m.cols() != tensor.cols())
                throw DataError("checkpoint tensor shape mismatch for " + name);
            tensor = std::move(m);
        }
    });
    return state;
}

}  // namespace emorec
