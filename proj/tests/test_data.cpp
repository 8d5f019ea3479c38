#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "emorec/dataset.hpp"
#include "emorec/embedding.hpp"
#include "emorec/tensor_io.hpp"

using namespace emorec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("emorec_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p);
    os << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("embedding table: basic parse") {
    auto dir = temp_dir("emb");
    write_file(dir / "vecs.txt", "happy 0.1 0.2 0.3\nsad -1 0 1\n");
    EmbeddingTable t = load_embedding_table((dir / "vecs.txt").string());
    CHECK(t.size() == 2);
    CHECK(t.dim() == 3);
    CHECK(t.at("sad")(0) == -1.0);
}

TEST_CASE("embedding table: error paths") {
    auto dir = temp_dir("emb_err");
    write_file(dir / "empty.txt", "");
    CHECK_THROWS_WITH_AS(load_embedding_table((dir / "empty.txt").string()),
                         doctest::Contains("empty embedding file"), DataError);

    write_file(dir / "dims.txt", "a 1 2 3 4\nb 1 2 3\n");
    CHECK_THROWS_WITH_AS(load_embedding_table((dir / "dims.txt").string()),
                         doctest::Contains("line 2"), DataError);

    write_file(dir / "nan.txt", "a 1 x 3\n");
    CHECK_THROWS_AS(load_embedding_table((dir / "nan.txt").string()), DataError);
}

TEST_CASE("embedding table: duplicate words resolve to last occurrence") {
    auto dir = temp_dir("emb_dup");
    write_file(dir / "dup.txt", "w 1 1\nw 2 2\n");
    EmbeddingTable t = load_embedding_table((dir / "dup.txt").string());
    CHECK(t.size() == 1);
    CHECK(t.at("w")(0) == 2.0);
}

TEST_CASE("emotion embedding matrix") {
    auto dir = temp_dir("emb_mat");
    write_file(dir / "vecs.txt", "happy 1 2\nsad 3 4\n");
    EmbeddingTable t = load_embedding_table((dir / "vecs.txt").string());

    MatrixXd e = emotion_embedding_matrix(t, {{"happy", "sad"}});
    CHECK(e.rows() == 2);
    CHECK(e(0, 1) == 2.0);
    CHECK(e(1, 0) == 3.0);

    CHECK_THROWS_WITH_AS(emotion_embedding_matrix(t, {{"happy", "zxqv"}}),
                         doctest::Contains("zxqv"), DataError);

    MatrixXd dup = emotion_embedding_matrix(t, {{"sad", "sad"}});
    CHECK(dup.row(0) == dup.row(1));
}

TEST_CASE("tensor file round trip") {
    auto dir = temp_dir("tensor");
    std::vector<double> vals{1.5, -2.0, 0.25, 8.0, 0.0, 3.0};
    write_tensor((dir / "t.mmer").string(), {1, 2, 3}, vals, TensorDType::Float32);
    TensorFile t = read_tensor((dir / "t.mmer").string(), TensorDType::Float32);
    REQUIRE(t.dims == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(t.values == vals);  // exactly representable in float32
}

TEST_CASE("synthetic generation is deterministic") {
    SyntheticConfig cfg;
    cfg.k_emotions = 3;
    cfg.seq_len = 6;
    cfg.feature_dims = {5, 4, 3};
    cfg.train_count = 20;
    cfg.valid_count = 5;
    cfg.test_count = 5;
    cfg.seed = 42;
    SyntheticResult a = generate_synthetic(cfg);
    SyntheticResult b = generate_synthetic(cfg);
    REQUIRE(a.dataset.train.size() == 20);
    for (std::size_t i = 0; i < a.dataset.train.size(); ++i) {
        CHECK(a.dataset.train[i].text_seq == b.dataset.train[i].text_seq);
        CHECK(a.dataset.train[i].acoustic_seq == b.dataset.train[i].acoustic_seq);
        CHECK(a.dataset.train[i].visual_seq == b.dataset.train[i].visual_seq);
        CHECK(a.dataset.train[i].labels == b.dataset.train[i].labels);
    }
}

TEST_CASE("zero-noise synthetic data is separable by the planted-direction oracle") {
    SyntheticConfig cfg;
    cfg.k_emotions = 2;
    cfg.seq_len = 4;
    cfg.feature_dims = {4, 4, 4};
    cfg.train_count = 100;
    cfg.valid_count = 10;
    cfg.test_count = 10;
    cfg.noise_sigma = 0.0;
    cfg.seed = 3;
    SyntheticResult r = generate_synthetic(cfg);
    for (int m = 0; m < 3; ++m) {
        for (const auto& s : r.dataset.train) {
            VectorXd pred = r.oracle.classify(s, m, 0.5);
            CHECK(pred == s.labels);
        }
    }
}

TEST_CASE("synthetic positive rates match configured marginals") {
    SyntheticConfig cfg;
    cfg.k_emotions = 4;
    cfg.seq_len = 4;
    cfg.feature_dims = {6, 6, 6};
    cfg.train_count = 2000;
    cfg.valid_count = 10;
    cfg.test_count = 10;
    cfg.noise_sigma = 0.5;
    cfg.marginals = {0.2, 0.3, 0.4, 0.5};
    cfg.seed = 9;
    SyntheticResult r = generate_synthetic(cfg);
    for (int k = 0; k < 4; ++k) {
        double rate = 0.0;
        for (const auto& s : r.dataset.train) rate += s.labels(k);
        rate /= static_cast<double>(r.dataset.train.size());
        CHECK(std::abs(rate - cfg.marginals[static_cast<std::size_t>(k)]) < 0.05);
    }
}

TEST_CASE("dataset container round trip reproduces byte-identical payloads") {
    SyntheticConfig cfg;
    cfg.k_emotions = 3;
    cfg.seq_len = 5;
    cfg.feature_dims = {4, 3, 2};
    cfg.train_count = 8;
    cfg.valid_count = 4;
    cfg.test_count = 4;
    cfg.seed = 17;
    Dataset ds = generate_synthetic(cfg).dataset;

    auto dir1 = temp_dir("roundtrip1");
    auto dir2 = temp_dir("roundtrip2");
    write_dataset(ds, dir1.string());
    Dataset loaded = load_dataset((dir1 / "manifest.json").string());
    CHECK(loaded.train.size() == 8);
    CHECK(loaded.vocabulary.names == ds.vocabulary.names);
    write_dataset(loaded, dir2.string());
    for (const auto& entry : fs::directory_iterator(dir1)) {
        auto name = entry.path().filename();
        CHECK(slurp(entry.path()) == slurp(dir2 / name));
    }
}

TEST_CASE("dataset loader rejects malformed containers") {
    SyntheticConfig cfg;
    cfg.k_emotions = 2;
    cfg.seq_len = 3;
    cfg.feature_dims = {2, 2, 2};
    cfg.train_count = 4;
    cfg.valid_count = 2;
    cfg.test_count = 2;
    Dataset ds = generate_synthetic(cfg).dataset;
    auto dir = temp_dir("malformed");
    write_dataset(ds, dir.string());

    SUBCASE("label value outside {0,1}") {
        write_file(dir / "train_labels.csv", "0,2\n0,0\n1,0\n0,1\n");
        CHECK_THROWS_AS(load_dataset((dir / "manifest.json").string()), DataError);
    }
    SUBCASE("labels row of wrong length") {
        write_file(dir / "train_labels.csv", "0\n0,0\n1,0\n0,1\n");
        CHECK_THROWS_AS(load_dataset((dir / "manifest.json").string()), DataError);
    }
    SUBCASE("tensor shape mismatch vs manifest") {
        std::vector<double> vals(2 * 3 * 2, 0.0);
        write_tensor((dir / "train_text.mmer").string(), {2, 3, 2}, vals, TensorDType::Float32);
        CHECK_THROWS_AS(load_dataset((dir / "manifest.json").string()), DataError);
    }
}

TEST_CASE("few-shot subsampling") {
    SyntheticConfig cfg;
    cfg.k_emotions = 2;
    cfg.seq_len = 3;
    cfg.feature_dims = {2, 2, 2};
    cfg.train_count = 600;
    cfg.valid_count = 2;
    cfg.test_count = 2;
    cfg.marginals = {0.5, 0.1};
    cfg.seed = 5;
    Dataset ds = generate_synthetic(cfg).dataset;

    long positives = 0;
    for (const auto& s : ds.train) positives += s.labels(0) > 0.5;

    auto set = subsample_fewshot(ds, 0, 0.01, 1);
    const auto expected_pos =
        static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(positives)));
    CHECK(set.size() == 2 * expected_pos);
    std::size_t pos_seen = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i < expected_pos) {
            CHECK(set[i].labels(0) == 1.0);
            ++pos_seen;
        } else {
            CHECK(set[i].labels(0) == 0.0);
        }
    }
    CHECK(pos_seen == expected_pos);

    // Tiny positive pool floors at one of each.
    Dataset tiny = ds;
    tiny.train.clear();
    for (const auto& s : ds.train) {
        if (s.labels(0) > 0.5 && tiny.train.size() < 50) tiny.train.push_back(s);
    }
    for (const auto& s : ds.train)
        if (s.labels(0) < 0.5 && tiny.train.size() < 100) tiny.train.push_back(s);
    auto small = subsample_fewshot(tiny, 0, 0.01, 1);
    CHECK(small.size() == 2);

    // Full fraction takes every positive.
    auto full = subsample_fewshot(tiny, 0, 1.0, 1);
    CHECK(full.size() == 100);

    // Determinism.
    auto again = subsample_fewshot(ds, 0, 0.01, 1);
    REQUIRE(again.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(again[i].labels == set[i].labels);
}

TEST_CASE("restrict_labels subsets and reorders label columns") {
    SyntheticConfig cfg;
    cfg.k_emotions = 3;
    cfg.seq_len = 3;
    cfg.feature_dims = {2, 2, 2};
    cfg.train_count = 10;
    cfg.valid_count = 2;
    cfg.test_count = 2;
    Dataset ds = generate_synthetic(cfg).dataset;

    Dataset r = restrict_labels(ds, {"emotion_2", "emotion_0"});
    CHECK(r.vocabulary.names == std::vector<std::string>{"emotion_2", "emotion_0"});
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(r.train[i].labels(0) == ds.train[i].labels(2));
        CHECK(r.train[i].labels(1) == ds.train[i].labels(0));
    }
    CHECK_THROWS_AS(restrict_labels(ds, {"nope"}), ConfigError);
}
