#include "emorec/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "emorec/evaluate.hpp"

namespace emorec {

EpisodicMemory build_memory(const std::vector<MultiModalSample>& source_train, int n,
                            std::uint64_t seed) {
    if (n < 1) throw ConfigError("memory size must be positive");
    if (static_cast<std::size_t>(n) > source_train.size())
        throw ConfigError("memory size exceeds source split size");
    std::vector<std::size_t> idx(source_train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(n));
    std::sort(idx.begin(), idx.end());
    EpisodicMemory mem;
    for (auto i : idx) mem.samples.push_back(source_train[i]);
    return mem;
}

ModelState expand_vocabulary(const ModelState& state, const std::string& new_emotion_word,
                             const EmbeddingTable& table) {
    if (state.vocabulary.index_of(new_emotion_word) >= 0)
        throw ConfigError("emotion already in vocabulary: " + new_emotion_word);
    if (!table.contains(new_emotion_word))
        throw DataError("word not in embedding table: " + new_emotion_word);

    ModelState expanded = state;
    const int k = state.k_emotions();
    expanded.e_t.conservativeResize(k + 1, Eigen::NoChange);
    expanded.e_t.row(k) = table.at(new_emotion_word).transpose();
    expanded.vocabulary.names.push_back(new_emotion_word);
    return expanded;
}

EmotionMetrics zeroshot_eval(const ModelState& expanded,
                             const std::vector<MultiModalSample>& test, int unseen_label_column,
                             const ModalityMask& mask, double threshold) {
    const int unseen = expanded.k_emotions() - 1;
    std::vector<ScoreSet> sets = forward(test, expanded, mask, /*training=*/false);
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int> preds;
    for (std::size_t i = 0; i < test.size(); ++i) {
        scores.push_back(sets[i].fused(unseen));
        labels.push_back(test[i].labels(unseen_label_column) > 0.5 ? 1 : 0);
        preds.push_back(scores.back() >= threshold ? 1 : 0);
    }
    ConfusionCounts c = confusion(preds, labels);
    EmotionMetrics m;
    m.w_acc = weighted_accuracy(c);
    m.w_f1 = weighted_f1(c);
    m.acc = accuracy(c);
    m.f1 = unweighted_f1(c);
    m.auc = auc(scores, labels);
    return m;
}

VectorXd gem_project(const VectorXd& g_target, const VectorXd& g_memory) {
    if (g_target.size() != g_memory.size())
        throw ConfigError("gem_project: gradient length mismatch");
    const double dot = g_target.dot(g_memory);
    if (dot >= 0.0) return g_target;
    return g_target - (dot / g_memory.squaredNorm()) * g_memory;
}

FewShotMode parse_fewshot_mode(const std::string& name) {
    if (name == "ft") return FewShotMode::FineTune;
    if (name == "jt") return FewShotMode::JointTrain;
    if (name == "cl") return FewShotMode::ContinualLearning;
    throw ConfigError("unknown few-shot mode: " + name + " (expected ft, jt, or cl)");
}

namespace {

// Source samples predate the new emotion; they are treated as negative
// for it when a K+1 label vector is needed.
MultiModalSample extend_labels(const MultiModalSample& s, int k_new) {
    MultiModalSample out = s;
    out.labels = VectorXd::Zero(k_new);
    out.labels.head(s.labels.size()) = s.labels;
    return out;
}

}  // namespace

AdaptationResult fewshot_adapt(const ModelState& expanded,
                               const std::vector<MultiModalSample>& fewshot_set,
                               const std::vector<MultiModalSample>& source_train,
                               const std::vector<MultiModalSample>& valid, FewShotMode mode,
                               const FewShotConfig& config) {
    if (fewshot_set.empty() && mode != FewShotMode::JointTrain)
        throw ConfigError("few-shot set is empty");
    if (mode == FewShotMode::ContinualLearning && source_train.empty())
        throw ConfigError("continual learning requires source training data for the memory");

    const int k_new = expanded.k_emotions();
    const int new_col = k_new - 1;
    std::vector<int> new_only{new_col};
    std::vector<int> source_cols;
    for (int k = 0; k < new_col; ++k) source_cols.push_back(k);

    // Training pool per mode.
    std::vector<MultiModalSample> pool;
    std::vector<int> pool_cols;
    if (mode == FewShotMode::JointTrain) {
        for (const auto& s : source_train) pool.push_back(extend_labels(s, k_new));
        pool.insert(pool.end(), fewshot_set.begin(), fewshot_set.end());
        pool_cols = {};  // all K+1 columns
    } else {
        pool = fewshot_set;
        pool_cols = new_only;
    }
    if (pool.empty()) throw ConfigError("few-shot adaptation has no training samples");

    EpisodicMemory memory;
    if (mode == FewShotMode::ContinualLearning)
        memory = build_memory(source_train,
                              std::min<int>(config.memory_size,
                                            static_cast<int>(source_train.size())),
                              config.seed);

    AdaptationResult result;
    result.adapted = expanded;
    result.min_constraint_dot = std::numeric_limits<double>::infinity();

    VectorXd params = flatten(result.adapted.params);
    AdamOptimizer opt(params.size(), config.learning_rate);
    Rng rng(config.seed + 1);

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    double best_selection = -1.0;
    ModelState best_state = result.adapted;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int batch_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::vector<MultiModalSample> batch;
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            for (std::size_t i = start; i < end; ++i) batch.push_back(pool[order[i]]);

            auto [batch_loss, grad] = gradients(batch, result.adapted, kAllModalities,
                                                pool_cols, /*training=*/false);
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite loss in adaptation epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_count));
            loss_sum += batch_loss;
            ++batch_count;

            VectorXd g = flatten(grad);
            VectorXd g_mem;
            if (mode == FewShotMode::ContinualLearning) {
                auto [mem_loss, mem_grad] = gradients(memory.samples, result.adapted,
                                                      kAllModalities, source_cols,
                                                      /*training=*/false);
                (void)mem_loss;
                g_mem = flatten(mem_grad);
                g = gem_project(g, g_mem);
            }
            clip_global_norm(g, config.grad_clip);
            if (g_mem.size() > 0)
                result.min_constraint_dot =
                    std::min(result.min_constraint_dot, g.dot(g_mem));
            opt.step(params, g);
            unflatten(result.adapted.params, params);
        }

        MetricReport report =
            evaluate_model(result.adapted, valid, kAllModalities, config.threshold);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / std::max(1, batch_count);
        rec.learning_rate = opt.learning_rate();
        for (const auto& m : report.per_emotion) {
            rec.valid_w_acc.push_back(m.w_acc);
            rec.valid_auc.push_back(m.auc);
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);

        const double selection = report.mean_w_acc().value.value_or(0.0);
        if (selection > best_selection) {
            best_selection = selection;
            result.best_epoch = epoch;
            best_state = result.adapted;
        }
    }
    result.adapted = std::move(best_state);
    return result;
}

}  // namespace emorec
