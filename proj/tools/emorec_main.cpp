// Experiment driver: train / evaluate / zero-shot / few-shot / ablate /
// sweep / distances / synth, all configured through a JSON file.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "emorec/adaptation.hpp"
#include "emorec/dataset.hpp"
#include "emorec/evaluate.hpp"
#include "emorec/metrics.hpp"
#include "emorec/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emorec;

namespace {

json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

json metrics_to_json(const EmotionMetrics& m) {
    return {{"w_acc", optional_to_json(m.w_acc)}, {"w_f1", optional_to_json(m.w_f1)},
            {"acc", optional_to_json(m.acc)},     {"f1", optional_to_json(m.f1)},
            {"auc", optional_to_json(m.auc)}};
}

json report_to_json(const MetricReport& r) {
    json per;
    for (std::size_t k = 0; k < r.emotions.size(); ++k)
        per[r.emotions[k]] = metrics_to_json(r.per_emotion[k]);
    auto avg = [](const MetricReport::Average& a) {
        return json{{"value", optional_to_json(a.value)}, {"defined_count", a.defined_count}};
    };
    return {{"threshold", r.threshold},
            {"per_emotion", per},
            {"average",
             {{"w_acc", avg(r.mean_w_acc())},
              {"w_f1", avg(r.mean_w_f1())},
              {"acc", avg(r.mean_acc())},
              {"f1", avg(r.mean_f1())},
              {"auc", avg(r.mean_auc())}}}};
}

struct ExperimentConfig {
    json raw;  // resolved config echoed into every report
    std::optional<std::string> dataset_path;
    std::optional<SyntheticConfig> synthetic;
    std::optional<std::string> embedding_table_path;
    std::vector<std::string> emotion_words;  // empty = dataset order
    TrainConfig train;
    ModalityMask mask = kAllModalities;
    std::string output_dir = "out";
    std::string unseen_emotion;
    std::string fewshot_mode = "ft";
    double fewshot_fraction = 0.01;
    int memory_size = 256;
    std::optional<double> fewshot_lr;
    int fewshot_epochs = 20;
    int fewshot_batch = 16;
    std::vector<double> thresholds;
};

ModalityMask parse_mask(const json& arr) {
    ModalityMask mask{false, false, false};
    for (const auto& item : arr) {
        const std::string s = item.get<std::string>();
        if (s == "t")
            mask[kText] = true;
        else if (s == "a")
            mask[kAcoustic] = true;
        else if (s == "v")
            mask[kVisual] = true;
        else
            throw ConfigError("unknown modality '" + s + "' (expected t, a, or v)");
    }
    if (!mask[0] && !mask[1] && !mask[2]) throw ConfigError("modality mask is empty");
    return mask;
}

json mask_to_json(const ModalityMask& mask) {
    json arr = json::array();
    if (mask[kText]) arr.push_back("t");
    if (mask[kAcoustic]) arr.push_back("a");
    if (mask[kVisual]) arr.push_back("v");
    return arr;
}

SyntheticConfig parse_synthetic(const json& j) {
    SyntheticConfig cfg;
    cfg.k_emotions = j.value("K", cfg.k_emotions);
    cfg.seq_len = j.value("T", cfg.seq_len);
    if (j.contains("feature_dims"))
        for (int m = 0; m < 3; ++m)
            cfg.feature_dims[static_cast<std::size_t>(m)] = j["feature_dims"].at(m).get<int>();
    cfg.train_count = j.value("train_count", cfg.train_count);
    cfg.valid_count = j.value("valid_count", cfg.valid_count);
    cfg.test_count = j.value("test_count", cfg.test_count);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    if (j.contains("marginals")) cfg.marginals = j["marginals"].get<std::vector<double>>();
    if (j.contains("correlation")) {
        const auto& rows = j["correlation"];
        cfg.correlation = MatrixXd(cfg.k_emotions, cfg.k_emotions);
        for (int r = 0; r < cfg.k_emotions; ++r)
            for (int c = 0; c < cfg.k_emotions; ++c)
                cfg.correlation(r, c) = rows.at(r).at(c).get<double>();
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("mixture")) {
        const auto& m = j["mixture"];
        cfg.mixture = SyntheticConfig::Mixture{m.at("target").get<int>(),
                                               m.at("parent_a").get<int>(),
                                               m.at("parent_b").get<int>()};
    }
    if (j.contains("single_modality_signal")) {
        const auto& s = j["single_modality_signal"];
        cfg.single_modality_signal = {s.at("emotion").get<int>(), s.at("modality").get<int>()};
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }

    ExperimentConfig cfg;
    if (j.contains("dataset")) cfg.dataset_path = j["dataset"].get<std::string>();
    if (j.contains("synthetic")) cfg.synthetic = parse_synthetic(j["synthetic"]);
    if (!cfg.dataset_path && !cfg.synthetic)
        throw ConfigError("config needs either 'dataset' or 'synthetic'");
    if (j.contains("embedding_table"))
        cfg.embedding_table_path = j["embedding_table"].get<std::string>();
    if (j.contains("emotion_words"))
        cfg.emotion_words = j["emotion_words"].get<std::vector<std::string>>();

    const json t = j.value("train", json::object());
    cfg.train.learning_rate = t.value("learning_rate", 1e-4);
    cfg.train.batch_size = t.value("batch_size", 32);
    cfg.train.max_epochs = t.value("max_epochs", 30);
    cfg.train.grad_clip = t.value("grad_clip", 1.0);
    cfg.train.dropout = t.value("dropout", 0.15);
    if (t.contains("hidden"))
        for (int m = 0; m < 3; ++m)
            cfg.train.hidden[static_cast<std::size_t>(m)] = t["hidden"].at(m).get<int>();
    cfg.train.num_layers = t.value("num_layers", 2);
    const json sch = t.value("scheduler", json::object());
    cfg.train.scheduler.factor = sch.value("factor", 0.1);
    cfg.train.scheduler.patience = sch.value("patience", 5);
    cfg.train.scheduler.min_lr = sch.value("min_lr", 1e-6);
    cfg.train.threshold = t.value("threshold", 0.5);
    cfg.train.seed = t.value("seed", 0);

    if (j.contains("modality_mask")) cfg.mask = parse_mask(j["modality_mask"]);
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.unseen_emotion = j.value("unseen_emotion", std::string());
    const json fsj = j.value("fewshot", json::object());
    cfg.fewshot_mode = fsj.value("mode", std::string("ft"));
    cfg.fewshot_fraction = fsj.value("fraction", 0.01);
    cfg.memory_size = fsj.value("memory_size", 256);
    if (fsj.contains("learning_rate")) cfg.fewshot_lr = fsj["learning_rate"].get<double>();
    cfg.fewshot_epochs = fsj.value("max_epochs", 20);
    cfg.fewshot_batch = fsj.value("batch_size", 16);
    if (j.contains("thresholds")) cfg.thresholds = j["thresholds"].get<std::vector<double>>();
    if (cfg.thresholds.empty())
        for (int i = 1; i <= 9; ++i) cfg.thresholds.push_back(i / 10.0);

    if (const char* env_seed = std::getenv("EMOREC_SEED")) {
        cfg.train.seed = std::stoull(env_seed);
        if (cfg.synthetic) cfg.synthetic->seed = cfg.train.seed;
    }

    // Echo the resolved config for provenance.
    json resolved = j;
    resolved["train"] = {{"learning_rate", cfg.train.learning_rate},
                         {"batch_size", cfg.train.batch_size},
                         {"max_epochs", cfg.train.max_epochs},
                         {"grad_clip", cfg.train.grad_clip},
                         {"dropout", cfg.train.dropout},
                         {"hidden", cfg.train.hidden},
                         {"num_layers", cfg.train.num_layers},
                         {"scheduler",
                          {{"factor", cfg.train.scheduler.factor},
                           {"patience", cfg.train.scheduler.patience},
                           {"min_lr", cfg.train.scheduler.min_lr}}},
                         {"threshold", cfg.train.threshold},
                         {"seed", cfg.train.seed}};
    resolved["modality_mask"] = mask_to_json(cfg.mask);
    resolved["output_dir"] = cfg.output_dir;
    resolved["thresholds"] = cfg.thresholds;
    cfg.raw = resolved;
    return cfg;
}

struct LoadedData {
    Dataset dataset;
    EmbeddingTable table;
};

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData out;
    if (cfg.synthetic) {
        SyntheticResult r = generate_synthetic(*cfg.synthetic);
        out.dataset = std::move(r.dataset);
        out.table = std::move(r.table);
    } else {
        out.dataset = load_dataset(*cfg.dataset_path);
        if (!cfg.embedding_table_path)
            throw ConfigError("config needs 'embedding_table' when using a dataset path");
    }
    if (cfg.embedding_table_path) out.table = load_embedding_table(*cfg.embedding_table_path);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

void write_history(const fs::path& path, const TrainHistory& history) {
    std::ofstream os(path);
    for (const auto& rec : history) {
        json j = {{"epoch", rec.epoch},
                  {"train_loss", rec.train_loss},
                  {"valid_loss", rec.valid_loss},
                  {"learning_rate", rec.learning_rate},
                  {"wall_seconds", rec.wall_seconds}};
        json w_acc = json::array(), auc_arr = json::array();
        for (const auto& v : rec.valid_w_acc) w_acc.push_back(optional_to_json(v));
        for (const auto& v : rec.valid_auc) auc_arr.push_back(optional_to_json(v));
        j["valid_w_acc"] = w_acc;
        j["valid_auc"] = auc_arr;
        os << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------
// Subcommands

int cmd_synth(const ExperimentConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("synth requires a 'synthetic' block");
    SyntheticResult r = generate_synthetic(*cfg.synthetic);
    fs::create_directories(cfg.output_dir);
    write_dataset(r.dataset, (fs::path(cfg.output_dir) / "dataset").string());
    std::ofstream os(fs::path(cfg.output_dir) / "embeddings.txt");
    for (const auto& name : r.dataset.vocabulary.names) {
        os << name;
        const VectorXd& v = r.table.at(name);
        for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
        os << '\n';
    }
    std::cout << "wrote synthetic dataset to " << cfg.output_dir << "/dataset\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    LoadedData data = load_data(cfg);
    Dataset ds = cfg.emotion_words.empty() ? std::move(data.dataset)
                                           : restrict_labels(data.dataset, cfg.emotion_words);
    MatrixXd e_t = emotion_embedding_matrix(data.table, ds.vocabulary);
    TrainResult r = train(ds, e_t, cfg.train);

    fs::create_directories(cfg.output_dir);
    save_checkpoint(r.state, (fs::path(cfg.output_dir) / "best.ckpt").string());
    write_history(fs::path(cfg.output_dir) / "history.jsonl", r.history);

    MetricReport test_report = evaluate_model(r.state, ds.test, cfg.mask, cfg.train.threshold);
    json report = {{"config", cfg.raw},
                   {"best_epoch", r.best_epoch},
                   {"test", report_to_json(test_report)}};
    write_json(fs::path(cfg.output_dir) / "report.json", report);
    std::cout << "best epoch " << r.best_epoch << ", mean test W-Acc "
              << test_report.mean_w_acc().value.value_or(0.0) << "\n";
    return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint) {
    ModelState state = load_checkpoint(checkpoint);
    LoadedData data = load_data(cfg);
    Dataset ds = restrict_labels(data.dataset, state.vocabulary.names);
    MetricReport report = evaluate_model(state, ds.test, cfg.mask, cfg.train.threshold);
    fs::create_directories(cfg.output_dir);
    write_json(fs::path(cfg.output_dir) / "report.json",
               {{"config", cfg.raw}, {"test", report_to_json(report)}});
    std::cout << "mean test W-Acc " << report.mean_w_acc().value.value_or(0.0) << "\n";
    return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& checkpoint) {
    ModelState state = load_checkpoint(checkpoint);
    LoadedData data = load_data(cfg);
    Dataset ds = restrict_labels(data.dataset, state.vocabulary.names);

    // All 7 nonempty masks, keyed like an ablation table.
    const std::vector<std::pair<std::string, ModalityMask>> masks = {
        {"T+A+V", {true, true, true}}, {"T+A", {true, true, false}},
        {"T+V", {true, false, true}},  {"A+V", {false, true, true}},
        {"T", {true, false, false}},   {"A", {false, true, false}},
        {"V", {false, false, true}}};
    json out;
    for (const auto& [key, mask] : masks) {
        MetricReport report = evaluate_model(state, ds.test, mask, cfg.train.threshold);
        out[key] = report_to_json(report);
    }
    fs::create_directories(cfg.output_dir);
    write_json(fs::path(cfg.output_dir) / "ablation.json",
               {{"config", cfg.raw}, {"masks", out}});
    std::cout << "wrote 7-mask ablation to " << cfg.output_dir << "/ablation.json\n";
    return 0;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
            const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j - 1));
            for (std::size_t t = i; t < j; ++t) r[order[t]] = mid;
            i = j;
        }
        return r;
    };
    std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return std::nullopt;
    return cov / std::sqrt(va * vb);
}

int cmd_distances(const ExperimentConfig& cfg, const std::string& checkpoint) {
    ModelState state = load_checkpoint(checkpoint);
    const int k_count = state.k_emotions();
    if (k_count < 2) throw ConfigError("distance analysis needs at least two emotions");

    auto [e_a, e_v] = map_embeddings(state.e_t, state.params.mapping);
    const MatrixXd* spaces[3] = {&state.e_t, &e_a, &e_v};
    const char* names[3] = {"textual", "acoustic", "visual"};

    json out;
    std::array<std::vector<double>, 3> upper;
    for (int m = 0; m < 3; ++m) {
        MatrixXd d(k_count, k_count);
        for (int i = 0; i < k_count; ++i)
            for (int j = 0; j < k_count; ++j)
                d(i, j) = (spaces[m]->row(i) - spaces[m]->row(j)).norm();
        json rows = json::array();
        for (int i = 0; i < k_count; ++i) {
            json row = json::array();
            for (int j = 0; j < k_count; ++j) row.push_back(d(i, j));
            rows.push_back(row);
        }
        out[names[m]] = rows;
        for (int i = 0; i < k_count; ++i)
            for (int j = i + 1; j < k_count; ++j)
                upper[static_cast<std::size_t>(m)].push_back(d(i, j));
    }
    out["spearman_t_vs_a"] = optional_to_json(spearman(upper[0], upper[1]));
    out["spearman_t_vs_v"] = optional_to_json(spearman(upper[0], upper[2]));
    out["emotions"] = state.vocabulary.names;

    fs::create_directories(cfg.output_dir);
    write_json(fs::path(cfg.output_dir) / "distances.json", {{"config", cfg.raw}, {"distances", out}});
    std::cout << "wrote distance matrices to " << cfg.output_dir << "/distances.json\n";
    return 0;
}

void write_sweep_svg(const fs::path& path, const std::vector<SweepRow>& rows,
                     const std::vector<std::string>& emotions) {
    std::ofstream os(path);
    if (!os) {
        std::cerr << "warning: cannot write plot " << path << " (CSV is authoritative)\n";
        return;
    }
    const int w = 640, h = 400, margin = 50;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin
       << "' y2='" << h - margin << "' stroke='black'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << h - margin << "' stroke='black'/>\n";
    os << "<text x='" << w / 2 << "' y='" << h - 10 << "'>threshold</text>\n";
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    auto px = [&](double th) { return margin + th * (w - 2 * margin); };
    auto py = [&](double v) { return h - margin - v * (h - 2 * margin); };
    int color_idx = 0;
    for (const auto& emotion : emotions) {
        for (const char* metric : {"w_f1", "w_acc"}) {
            std::string pts;
            for (const auto& r : rows) {
                if (r.emotion != emotion) continue;
                const auto& v = std::string(metric) == "w_f1" ? r.w_f1 : r.w_acc;
                if (!v) continue;
                pts += std::to_string(px(r.threshold)) + "," + std::to_string(py(*v)) + " ";
            }
            const bool dashed = std::string(metric) == "w_acc";
            os << "<polyline points='" << pts << "' fill='none' stroke='"
               << colors[color_idx % 6] << "'" << (dashed ? " stroke-dasharray='4 3'" : "")
               << "/>\n";
        }
        ++color_idx;
    }
    os << "<text x='" << margin << "' y='20'>W-F1 (solid) and W-Acc (dashed) vs threshold</text>\n";
    os << "</svg>\n";
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& checkpoint) {
    ModelState state = load_checkpoint(checkpoint);
    LoadedData data = load_data(cfg);
    Dataset ds = restrict_labels(data.dataset, state.vocabulary.names);

    SplitScores scores = collect_scores(state, ds.test, cfg.mask);
    auto rows = threshold_sweep(state.vocabulary.names, scores.scores, scores.labels,
                                cfg.thresholds);
    fs::create_directories(cfg.output_dir);
    std::ofstream csv(fs::path(cfg.output_dir) / "sweep.csv");
    csv << "threshold,emotion,w_acc,w_f1\n";
    for (const auto& r : rows) {
        csv << r.threshold << ',' << r.emotion << ',';
        if (r.w_acc) csv << *r.w_acc;
        csv << ',';
        if (r.w_f1) csv << *r.w_f1;
        csv << '\n';
    }
    write_sweep_svg(fs::path(cfg.output_dir) / "sweep.svg", rows, state.vocabulary.names);
    write_json(fs::path(cfg.output_dir) / "report.json",
               {{"config", cfg.raw}, {"rows", rows.size()}});
    std::cout << "wrote sweep CSV and plot to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_zero_shot(const ExperimentConfig& cfg, const std::string& checkpoint) {
    if (cfg.unseen_emotion.empty()) throw ConfigError("zero-shot requires 'unseen_emotion'");
    ModelState state = load_checkpoint(checkpoint);
    LoadedData data = load_data(cfg);

    ModelState expanded = expand_vocabulary(state, cfg.unseen_emotion, data.table);
    Dataset aligned = restrict_labels(data.dataset, expanded.vocabulary.names);
    const int unseen_col = expanded.k_emotions() - 1;

    json unseen_reports;
    const std::vector<std::pair<std::string, ModalityMask>> masks = {
        {"T+A+V", {true, true, true}},
        {"T", {true, false, false}},
        {"A", {false, true, false}},
        {"V", {false, false, true}}};
    for (const auto& [key, mask] : masks)
        unseen_reports[key] = metrics_to_json(
            zeroshot_eval(expanded, aligned.test, unseen_col, mask, cfg.train.threshold));

    MetricReport all = evaluate_model(expanded, aligned.test, cfg.mask, cfg.train.threshold);
    fs::create_directories(cfg.output_dir);
    save_checkpoint(expanded, (fs::path(cfg.output_dir) / "expanded.ckpt").string());
    write_json(fs::path(cfg.output_dir) / "report.json",
               {{"config", cfg.raw},
                {"unseen_emotion", cfg.unseen_emotion},
                {"unseen", unseen_reports},
                {"all_emotions", report_to_json(all)}});
    std::cout << "zero-shot report for '" << cfg.unseen_emotion << "' written to "
              << cfg.output_dir << "\n";
    return 0;
}

int cmd_few_shot(const ExperimentConfig& cfg, const std::string& checkpoint) {
    if (cfg.unseen_emotion.empty()) throw ConfigError("few-shot requires 'unseen_emotion'");
    ModelState state = load_checkpoint(checkpoint);
    LoadedData data = load_data(cfg);

    ModelState expanded = expand_vocabulary(state, cfg.unseen_emotion, data.table);
    Dataset aligned = restrict_labels(data.dataset, expanded.vocabulary.names);
    Dataset source = restrict_labels(data.dataset, state.vocabulary.names);
    const int unseen_col = expanded.k_emotions() - 1;

    auto fewshot_set =
        subsample_fewshot(aligned, unseen_col, cfg.fewshot_fraction, cfg.train.seed);

    FewShotConfig fs_cfg;
    fs_cfg.learning_rate = cfg.fewshot_lr.value_or(cfg.train.learning_rate * 0.1);
    fs_cfg.batch_size = cfg.fewshot_batch;
    fs_cfg.max_epochs = cfg.fewshot_epochs;
    fs_cfg.grad_clip = cfg.train.grad_clip;
    fs_cfg.memory_size = cfg.memory_size;
    fs_cfg.threshold = cfg.train.threshold;
    fs_cfg.seed = cfg.train.seed;

    EmotionMetrics zero_shot_before = zeroshot_eval(expanded, aligned.test, unseen_col,
                                                    cfg.mask, cfg.train.threshold);
    MetricReport source_before = evaluate_model(state, source.test, cfg.mask, cfg.train.threshold);

    AdaptationResult r = fewshot_adapt(expanded, fewshot_set, source.train, aligned.valid,
                                       parse_fewshot_mode(cfg.fewshot_mode), fs_cfg);

    EmotionMetrics unseen_after = zeroshot_eval(r.adapted, aligned.test, unseen_col, cfg.mask,
                                                cfg.train.threshold);
    MetricReport all_after = evaluate_model(r.adapted, aligned.test, cfg.mask, cfg.train.threshold);

    fs::create_directories(cfg.output_dir);
    save_checkpoint(r.adapted, (fs::path(cfg.output_dir) / "adapted.ckpt").string());
    write_history(fs::path(cfg.output_dir) / "history.jsonl", r.history);
    json report = {{"config", cfg.raw},
                   {"mode", cfg.fewshot_mode},
                   {"unseen_emotion", cfg.unseen_emotion},
                   {"fewshot_samples", fewshot_set.size()},
                   {"best_epoch", r.best_epoch},
                   {"unseen_zero_shot", metrics_to_json(zero_shot_before)},
                   {"unseen_after", metrics_to_json(unseen_after)},
                   {"source_before", report_to_json(source_before)},
                   {"all_after", report_to_json(all_after)}};
    if (cfg.fewshot_mode == "cl") report["min_constraint_dot"] = r.min_constraint_dot;
    write_json(fs::path(cfg.output_dir) / "report.json", report);
    std::cout << "few-shot (" << cfg.fewshot_mode << ") report written to " << cfg.output_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-modal emotion recognizer with transferable emotion embeddings"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, out_override;
    app.add_option("--config", config_path, "JSON experiment config")->required();
    app.add_option("--checkpoint", checkpoint, "checkpoint directory");
    app.add_option("--out", out_override, "override output directory");

    auto* sc_train = app.add_subcommand("train", "train a model end to end");
    auto* sc_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
    auto* sc_zero = app.add_subcommand("zero-shot", "expand vocabulary and evaluate unseen emotion");
    auto* sc_few = app.add_subcommand("few-shot", "adapt to an unseen emotion (ft/jt/cl)");
    auto* sc_ablate = app.add_subcommand("ablate", "evaluate all 7 modality masks");
    auto* sc_sweep = app.add_subcommand("sweep", "threshold sweep of W-Acc and W-F1");
    auto* sc_dist = app.add_subcommand("distances", "emotion embedding distance matrices");
    auto* sc_synth = app.add_subcommand("synth", "generate a synthetic dataset");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (!out_override.empty()) {
            cfg.output_dir = out_override;
            cfg.raw["output_dir"] = out_override;
        }
        auto need_ckpt = [&]() {
            if (checkpoint.empty()) throw ConfigError("this subcommand requires --checkpoint");
            return checkpoint;
        };
        if (sc_train->parsed()) return cmd_train(cfg);
        if (sc_eval->parsed()) return cmd_evaluate(cfg, need_ckpt());
        if (sc_zero->parsed()) return cmd_zero_shot(cfg, need_ckpt());
        if (sc_few->parsed()) return cmd_few_shot(cfg, need_ckpt());
        if (sc_ablate->parsed()) return cmd_ablate(cfg, need_ckpt());
        if (sc_sweep->parsed()) return cmd_sweep(cfg, need_ckpt());
        if (sc_dist->parsed()) return cmd_distances(cfg, need_ckpt());
        if (sc_synth->parsed()) return cmd_synth(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
