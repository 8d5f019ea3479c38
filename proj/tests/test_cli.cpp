#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(EMOREC_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path workdir() {
    fs::path dir = fs::temp_directory_path() / "emorec_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

const char* kTinyConfig = R"({
  "synthetic": {"K": 3, "T": 6, "feature_dims": [6,5,4], "train_count": 80,
                "valid_count": 30, "test_count": 30, "noise_sigma": 0.2, "seed": 5},
  "train": {"learning_rate": 0.005, "batch_size": 16, "max_epochs": 3,
            "dropout": 0.0, "hidden": [6,5,4], "num_layers": 1, "seed": 3}
})";

}  // namespace

TEST_CASE("train smoke run produces checkpoint, history, and report") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "run").string() + " train") == 0);
    CHECK(fs::exists(dir / "run" / "best.ckpt" / "model.json"));
    CHECK(fs::exists(dir / "run" / "history.jsonl"));
    CHECK(fs::exists(dir / "run" / "report.json"));

    json report = json::parse(slurp(dir / "run" / "report.json"));
    CHECK(report["config"]["train"]["seed"] == 3);
    CHECK(report["test"]["per_emotion"].size() == 3);
}

TEST_CASE("error taxonomy maps to exit codes") {
    fs::path dir = workdir();
    CHECK(run("--config " + (dir / "no_such.json").string() + " train") == 1);

    write_file(dir / "bad.json", "{ not json");
    CHECK(run("--config " + (dir / "bad.json").string() + " train") == 1);

    write_file(dir / "missing_data.json",
               R"({"dataset": "/no/such/manifest.json", "embedding_table": "x.txt"})");
    CHECK(run("--config " + (dir / "missing_data.json").string() + " train") == 2);
}

TEST_CASE("rerunning the same config and seed reproduces report.json byte for byte") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "det_a").string() + " train") == 0);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "det_b").string() + " train") == 0);

    json a = json::parse(slurp(dir / "det_a" / "report.json"));
    json b = json::parse(slurp(dir / "det_b" / "report.json"));
    a["config"].erase("output_dir");
    b["config"].erase("output_dir");
    CHECK(a == b);
}

TEST_CASE("EMOREC_SEED env var overrides the configured seed") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    const std::string cmd = std::string("EMOREC_SEED=7 ") + EMOREC_BIN + " --config " +
                            (dir / "cfg.json").string() + " --out " +
                            (dir / "seeded").string() + " train >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    json report = json::parse(slurp(dir / "seeded" / "report.json"));
    CHECK(report["config"]["train"]["seed"] == 7);
}

TEST_CASE("ablate emits all seven masks and agrees with evaluate on T+A+V") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "base").string() + " train") == 0);
    const std::string ckpt = (dir / "base" / "best.ckpt").string();
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --checkpoint " + ckpt +
                " --out " + (dir / "abl").string() + " ablate") == 0);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --checkpoint " + ckpt +
                " --out " + (dir / "ev").string() + " evaluate") == 0);

    json abl = json::parse(slurp(dir / "abl" / "ablation.json"));
    json ev = json::parse(slurp(dir / "ev" / "report.json"));
    for (const char* key : {"T+A+V", "T+A", "T+V", "A+V", "T", "A", "V"})
        CHECK(abl["masks"].contains(key));
    CHECK(abl["masks"]["T+A+V"] == ev["test"]);
}

TEST_CASE("sweep writes a well-formed CSV and a plot file") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "sw_base").string() + " train") == 0);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --checkpoint " +
                (dir / "sw_base" / "best.ckpt").string() + " --out " +
                (dir / "sw").string() + " sweep") == 0);

    std::ifstream csv(dir / "sw" / "sweep.csv");
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "threshold,emotion,w_acc,w_f1");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 9 * 3);  // default 9 thresholds, 3 emotions
    CHECK(fs::exists(dir / "sw" / "sweep.svg"));
}

TEST_CASE("zero-shot on a word already in the vocabulary is a config error") {
    fs::path dir = workdir();
    json cfg = json::parse(kTinyConfig);
    cfg["unseen_emotion"] = "emotion_0";
    write_file(dir / "seen.json", cfg.dump());
    REQUIRE(run("--config " + (dir / "seen.json").string() + " --out " +
                (dir / "zs_base").string() + " train") == 0);
    CHECK(run("--config " + (dir / "seen.json").string() + " --checkpoint " +
              (dir / "zs_base" / "best.ckpt").string() + " --out " +
              (dir / "zs").string() + " zero-shot") == 1);
}

TEST_CASE("synth writes a loadable dataset container") {
    fs::path dir = workdir();
    write_file(dir / "cfg.json", kTinyConfig);
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "gen").string() + " synth") == 0);
    CHECK(fs::exists(dir / "gen" / "dataset" / "manifest.json"));
    CHECK(fs::exists(dir / "gen" / "embeddings.txt"));

    json cfg = json::parse(kTinyConfig);
    cfg.erase("synthetic");
    cfg["dataset"] = (dir / "gen" / "dataset" / "manifest.json").string();
    cfg["embedding_table"] = (dir / "gen" / "embeddings.txt").string();
    write_file(dir / "from_disk.json", cfg.dump());
    CHECK(run("--config " + (dir / "from_disk.json").string() + " --out " +
              (dir / "disk_run").string() + " train") == 0);
}
