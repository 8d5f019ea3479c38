#include "emorec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "emorec/tensor_io.hpp"

namespace emorec {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<MultiModalSample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ConfigError("unknown split: " + name);
}

namespace {

const char* kSplitNames[3] = {"train", "valid", "test"};
const char* kModalityNames[3] = {"text", "acoustic", "visual"};

const MatrixXd& modality_seq(const MultiModalSample& s, int m) {
    switch (m) {
        case 0: return s.text_seq;
        case 1: return s.acoustic_seq;
        default: return s.visual_seq;
    }
}

MatrixXd& modality_seq(MultiModalSample& s, int m) {
    switch (m) {
        case 0: return s.text_seq;
        case 1: return s.acoustic_seq;
        default: return s.visual_seq;
    }
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse of the standard normal CDF by bisection; only evaluated once
// per emotion so speed is irrelevant.
double std_normal_quantile(double p) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (std_normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Rows are orthonormal when the feature dimension allows (d >= K),
// otherwise independent unit vectors.
MatrixXd planted_directions(int k_count, int dim, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixXd g(dim, k_count);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = gauss(rng);
    if (dim >= k_count) {
        Eigen::HouseholderQR<MatrixXd> qr(g);
        MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, k_count);
        return q.transpose();
    }
    MatrixXd dirs = g.transpose();
    for (Eigen::Index r = 0; r < dirs.rows(); ++r) dirs.row(r).normalize();
    return dirs;
}

std::vector<MultiModalSample> read_split(const fs::path& dir, const json& split_json,
                                         int k_count, int seq_len,
                                         const std::array<int, 3>& feature_dims,
                                         const std::string& split_name) {
    const int count = split_json.at("count").get<int>();
    const json& files = split_json.at("files");

    std::vector<MultiModalSample> samples(static_cast<std::size_t>(count));
    for (int m = 0; m < 3; ++m) {
        const std::string file = files.at(kModalityNames[m]).get<std::string>();
        TensorFile t = read_tensor((dir / file).string(), TensorDType::Float32);
        if (t.dims.size() != 3)
            throw DataError("expected rank-3 tensor in " + file);
        if (static_cast<int>(t.dims[0]) != count || static_cast<int>(t.dims[1]) != seq_len ||
            static_cast<int>(t.dims[2]) != feature_dims[static_cast<std::size_t>(m)])
            throw DataError("tensor shape mismatch vs manifest in " + file);
        const int d = feature_dims[static_cast<std::size_t>(m)];
        for (int i = 0; i < count; ++i) {
            MatrixXd seq(seq_len, d);
            for (int r = 0; r < seq_len; ++r)
                for (int c = 0; c < d; ++c) {
                    double v = t.values[static_cast<std::size_t>((i * seq_len + r) * d + c)];
                    if (!std::isfinite(v))
                        throw DataError("non-finite feature value in " + file);
                    seq(r, c) = v;
                }
            modality_seq(samples[static_cast<std::size_t>(i)], m) = std::move(seq);
        }
    }

    const std::string labels_file = files.at("labels").get<std::string>();
    std::ifstream is(dir / labels_file);
    if (!is) throw DataError("cannot open labels file: " + labels_file);
    std::string line;
    for (int i = 0; i < count; ++i) {
        if (!std::getline(is, line))
            throw DataError("labels file " + labels_file + " has fewer rows than declared");
        std::stringstream ls(line);
        VectorXd labels(k_count);
        std::string cell;
        for (int k = 0; k < k_count; ++k) {
            if (!std::getline(ls, cell, ','))
                throw DataError("labels row " + std::to_string(i + 1) + " in " + labels_file +
                                " has fewer than K values");
            if (cell != "0" && cell != "1")
                throw DataError("label value outside {0,1} at row " + std::to_string(i + 1) +
                                " of " + labels_file + ": '" + cell + "'");
            labels(k) = (cell == "1") ? 1.0 : 0.0;
        }
        if (std::getline(ls, cell, ','))
            throw DataError("labels row " + std::to_string(i + 1) + " in " + labels_file +
                            " has more than K values");
        samples[static_cast<std::size_t>(i)].labels = std::move(labels);
    }
    (void)split_name;
    return samples;
}

void write_split(const fs::path& dir, const std::vector<MultiModalSample>& samples,
                 int seq_len, const std::array<int, 3>& feature_dims,
                 const std::string& split_name, json& files_out) {
    const int count = static_cast<int>(samples.size());
    for (int m = 0; m < 3; ++m) {
        const int d = feature_dims[static_cast<std::size_t>(m)];
        std::vector<double> vals(static_cast<std::size_t>(count) * seq_len * d);
        for (int i = 0; i < count; ++i) {
            const MatrixXd& seq = modality_seq(samples[static_cast<std::size_t>(i)], m);
            for (int r = 0; r < seq_len; ++r)
                for (int c = 0; c < d; ++c)
                    vals[static_cast<std::size_t>((i * seq_len + r) * d + c)] = seq(r, c);
        }
        std::string file = split_name + "_" + kModalityNames[m] + ".mmer";
        write_tensor((dir / file).string(),
                     {static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(seq_len),
                      static_cast<std::uint64_t>(d)},
                     vals, TensorDType::Float32);
        files_out[kModalityNames[m]] = file;
    }
    std::string labels_file = split_name + "_labels.csv";
    std::ofstream os(dir / labels_file);
    if (!os) throw DataError("cannot write labels file: " + labels_file);
    for (const auto& s : samples) {
        for (Eigen::Index k = 0; k < s.labels.size(); ++k) {
            if (k) os << ',';
            os << (s.labels(k) > 0.5 ? '1' : '0');
        }
        os << '\n';
    }
    files_out["labels"] = labels_file;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("cannot open manifest: " + manifest_path);
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path + ": " + e.what());
    }
    if (manifest.at("version").get<int>() != 1)
        throw DataError("unsupported manifest version in " + manifest_path);

    Dataset ds;
    const int k_count = manifest.at("K").get<int>();
    ds.seq_len = manifest.at("T").get<int>();
    auto dims = manifest.at("feature_dims");
    for (int m = 0; m < 3; ++m) ds.feature_dims[static_cast<std::size_t>(m)] = dims.at(m).get<int>();
    ds.vocabulary.names = manifest.at("emotion_words").get<std::vector<std::string>>();
    if (ds.vocabulary.size() != k_count)
        throw DataError("emotion_words count does not match K in " + manifest_path);

    const fs::path dir = fs::path(manifest_path).parent_path();
    const json& splits = manifest.at("splits");
    ds.train = read_split(dir, splits.at("train"), k_count, ds.seq_len, ds.feature_dims, "train");
    ds.valid = read_split(dir, splits.at("valid"), k_count, ds.seq_len, ds.feature_dims, "valid");
    ds.test = read_split(dir, splits.at("test"), k_count, ds.seq_len, ds.feature_dims, "test");
    return ds;
}

void write_dataset(const Dataset& dataset, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["K"] = dataset.vocabulary.size();
    manifest["T"] = dataset.seq_len;
    manifest["feature_dims"] = dataset.feature_dims;
    manifest["emotion_words"] = dataset.vocabulary.names;
    json splits;
    const std::vector<MultiModalSample>* all[3] = {&dataset.train, &dataset.valid, &dataset.test};
    for (int s = 0; s < 3; ++s) {
        json split;
        split["count"] = all[s]->size();
        json files;
        write_split(dir, *all[s], dataset.seq_len, dataset.feature_dims, kSplitNames[s], files);
        split["files"] = files;
        splits[kSplitNames[s]] = split;
    }
    manifest["splits"] = splits;
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << manifest.dump(2) << '\n';
}

VectorXd SyntheticOracle::classify(const MultiModalSample& sample, int modality,
                                   double threshold) const {
    const MatrixXd& seq = modality_seq(sample, modality);
    VectorXd mean = seq.colwise().mean().transpose();
    VectorXd scores = directions[static_cast<std::size_t>(modality)] * mean;
    VectorXd out(scores.size());
    for (Eigen::Index k = 0; k < scores.size(); ++k)
        out(k) = scores(k) >= threshold ? 1.0 : 0.0;
    return out;
}

SyntheticResult generate_synthetic(const SyntheticConfig& config) {
    const int k_count = config.k_emotions;
    if (k_count < 1) throw ConfigError("synthetic config needs at least one emotion");
    if (config.noise_sigma < 0) throw ConfigError("noise_sigma must be nonnegative");

    std::vector<double> marginals = config.marginals;
    if (marginals.empty()) marginals.assign(static_cast<std::size_t>(k_count), 0.3);
    if (static_cast<int>(marginals.size()) != k_count)
        throw ConfigError("marginals length must equal K");
    for (double m : marginals)
        if (m <= 0.0 || m >= 1.0) throw ConfigError("marginals must lie in (0,1)");

    MatrixXd corr = config.correlation;
    if (corr.size() == 0) corr = MatrixXd::Identity(k_count, k_count);
    if (corr.rows() != k_count || corr.cols() != k_count)
        throw ConfigError("correlation matrix must be K x K");
    if (!corr.isApprox(corr.transpose(), 1e-12))
        throw ConfigError("correlation matrix must be symmetric");
    for (int k = 0; k < k_count; ++k)
        if (std::abs(corr(k, k) - 1.0) > 1e-12)
            throw ConfigError("correlation matrix must have unit diagonal");
    Eigen::LLT<MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success)
        throw ConfigError("correlation matrix is not positive definite");
    const MatrixXd chol = llt.matrixL();

    Rng rng(config.seed);

    SyntheticResult result;
    for (int m = 0; m < 3; ++m)
        result.oracle.directions[static_cast<std::size_t>(m)] = planted_directions(
            k_count, config.feature_dims[static_cast<std::size_t>(m)], rng);

    if (config.mixture) {
        const auto& mix = *config.mixture;
        for (int m = 0; m < 3; ++m) {
            MatrixXd& dirs = result.oracle.directions[static_cast<std::size_t>(m)];
            VectorXd blend =
                0.5 * (dirs.row(mix.parent_a) + dirs.row(mix.parent_b)).transpose();
            dirs.row(mix.target) = blend.normalized().transpose();
        }
    }

    std::vector<double> thresholds(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k)
        thresholds[static_cast<std::size_t>(k)] =
            std_normal_quantile(marginals[static_cast<std::size_t>(k)]);

    Dataset& ds = result.dataset;
    ds.seq_len = config.seq_len;
    ds.feature_dims = config.feature_dims;
    for (int k = 0; k < k_count; ++k)
        ds.vocabulary.names.push_back("emotion_" + std::to_string(k));

    std::normal_distribution<double> gauss(0.0, 1.0);
    auto gen_split = [&](int count) {
        std::vector<MultiModalSample> samples;
        samples.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            VectorXd g(k_count);
            for (int k = 0; k < k_count; ++k) g(k) = gauss(rng);
            VectorXd z = chol * g;
            MultiModalSample s;
            s.labels = VectorXd(k_count);
            for (int k = 0; k < k_count; ++k)
                s.labels(k) = z(k) < thresholds[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
            for (int m = 0; m < 3; ++m) {
                const int d = config.feature_dims[static_cast<std::size_t>(m)];
                const MatrixXd& dirs = result.oracle.directions[static_cast<std::size_t>(m)];
                VectorXd mean = VectorXd::Zero(d);
                for (int k = 0; k < k_count; ++k) {
                    if (s.labels(k) < 0.5) continue;
                    if (config.single_modality_signal &&
                        config.single_modality_signal->first == k &&
                        config.single_modality_signal->second != m)
                        continue;
                    mean += dirs.row(k).transpose();
                }
                MatrixXd seq(config.seq_len, d);
                for (int r = 0; r < config.seq_len; ++r)
                    for (int c = 0; c < d; ++c)
                        seq(r, c) = mean(c) + config.noise_sigma * gauss(rng);
                modality_seq(s, m) = std::move(seq);
            }
            samples.push_back(std::move(s));
        }
        return samples;
    };
    ds.train = gen_split(config.train_count);
    ds.valid = gen_split(config.valid_count);
    ds.test = gen_split(config.test_count);

    // Emotion textual embeddings are the planted textual directions.
    std::unordered_map<std::string, VectorXd> entries;
    for (int k = 0; k < k_count; ++k)
        entries[ds.vocabulary.names[static_cast<std::size_t>(k)]] =
            result.oracle.directions[0].row(k).transpose();
    result.table = EmbeddingTable(std::move(entries), config.feature_dims[0]);
    return result;
}

Dataset restrict_labels(const Dataset& dataset, const std::vector<std::string>& words) {
    std::vector<int> cols;
    for (const auto& w : words) {
        int k = dataset.vocabulary.index_of(w);
        if (k < 0) throw ConfigError("emotion word not in dataset vocabulary: " + w);
        cols.push_back(k);
    }
    Dataset out;
    out.seq_len = dataset.seq_len;
    out.feature_dims = dataset.feature_dims;
    out.vocabulary.names = words;
    auto map_split = [&](const std::vector<MultiModalSample>& in) {
        std::vector<MultiModalSample> res = in;
        for (auto& s : res) {
            VectorXd labels(static_cast<Eigen::Index>(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j)
                labels(static_cast<Eigen::Index>(j)) = s.labels(cols[j]);
            s.labels = std::move(labels);
        }
        return res;
    };
    out.train = map_split(dataset.train);
    out.valid = map_split(dataset.valid);
    out.test = map_split(dataset.test);
    return out;
}

std::vector<MultiModalSample> subsample_fewshot(const Dataset& dataset, int emotion_index,
                                                double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ConfigError("few-shot fraction must lie in (0,1]");
    if (emotion_index < 0 || emotion_index >= dataset.vocabulary.size())
        throw ConfigError("emotion index out of range");

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < dataset.train.size(); ++i) {
        if (dataset.train[i].labels(emotion_index) > 0.5)
            pos.push_back(i);
        else
            neg.push_back(i);
    }
    if (pos.empty())
        throw DataError("no positive training samples for emotion " +
                        dataset.vocabulary.names[static_cast<std::size_t>(emotion_index)]);

    const std::size_t n_pos = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pos.size()))));
    const std::size_t n_neg = std::min(n_pos, neg.size());

    Rng rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    std::vector<MultiModalSample> out;
    for (std::size_t i = 0; i < n_pos; ++i) out.push_back(dataset.train[pos[i]]);
    for (std::size_t i = 0; i < n_neg; ++i) out.push_back(dataset.train[neg[i]]);
    return out;
}

}  // namespace emorec
