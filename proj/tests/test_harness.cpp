#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dada/error.hpp"
#include "dada/harness.hpp"
#include "dada/models.hpp"

using namespace dada;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(bool(in));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// small-but-complete spec on the synthetic mixture
ExperimentSpec tiny_spec(const std::string& out) {
    ExperimentSpec spec;
    spec.modes = {Mode::c, Mode::dada};
    spec.data.k = 3;
    spec.data.sigma = 0.6;
    spec.data.pool_per_class = 30;
    spec.data.test_per_class = 20;
    spec.n_per_class = {5, 10, 20};
    spec.seeds = {1, 2, 3, 4, 5};
    spec.train.k_g = 2;
    spec.train.k_c = 2;
    spec.train.batch = 15;
    spec.train.d_z = 4;
    spec.train.augmentation_ratio = 2;
    spec.aug_hidden = {8};
    spec.clf_hidden = {8};
    spec.out_dir = out;
    return spec;
}

}  // namespace

TEST_CASE("mode names round-trip and reject unknowns") {
    const std::vector<Mode> all{Mode::c,        Mode::c_aug,       Mode::dada,
                                Mode::dada_aug, Mode::vanilla_gan, Mode::k_plus_one};
    std::set<std::string> names;
    for (Mode m : all) {
        CHECK(mode_from_name(mode_name(m)) == m);
        names.insert(mode_name(m));
    }
    CHECK(names.size() == all.size());
    CHECK_THROWS_AS(mode_from_name("gan"), ConfigError);
}

TEST_CASE("config text: comments, whitespace, and malformed lines") {
    const std::string text = R"(
# experiment shape
modes = c, dada   # trailing comment
n_per_class=5,10
  seeds = 7
train.k_g = 3
adam.lr = 0.001
augment.jitter = true
)";
    auto kv = parse_config_text(text);
    CHECK(kv.at("modes") == "c, dada");
    CHECK(kv.at("seeds") == "7");

    auto spec = spec_from_config(kv);
    CHECK(spec.modes == std::vector<Mode>{Mode::c, Mode::dada});
    CHECK(spec.n_per_class == std::vector<int>{5, 10});
    CHECK(spec.seeds == std::vector<std::uint64_t>{7});
    CHECK(spec.train.k_g == 3);
    CHECK(spec.train.adam.lr == doctest::Approx(0.001));
    CHECK(spec.aug_ops.jitter);
    // untouched keys keep their defaults
    CHECK(spec.train.k_c == 600);
    CHECK(spec.train.batch == 32);
    CHECK(spec.data.k == 3);

    CHECK_THROWS_AS(parse_config_text("just a line"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("= value"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("a = 1\na = 2"), ConfigError);
    CHECK_THROWS_WITH_AS(spec_from_config({{"train.kg", "1"}}),
                         doctest::Contains("train.kg"), ConfigError);
    CHECK_THROWS_AS(spec_from_config({{"train.k_g", "soon"}}), ConfigError);
    CHECK_THROWS_AS(spec_from_config({{"adam.lr", "fast"}}), ConfigError);
    CHECK_THROWS_AS(spec_from_config({{"augment.jitter", "yep"}}), ConfigError);
    CHECK_THROWS_AS(spec_from_config({{"seeds", "-3"}}), ConfigError);
    CHECK_THROWS_AS(spec_from_config({{"data.source", "parquet"}}), ConfigError);
    CHECK_THROWS_AS(parse_config_file("/nonexistent/x.cfg"), IoError);
}

TEST_CASE("resolved config echoes every field and re-parses to the same spec") {
    auto spec = tiny_spec("/tmp/unused");
    spec.aug_ops.jitter = true;
    spec.aug_ops.jitter_sigma = 0.03;
    spec.train.lambda_fm = 0.5;
    spec.data.sigma = 0.45;

    auto kv = resolved_config(spec);
    CHECK(kv.at("modes") == "c,dada");
    CHECK(kv.at("n_per_class") == "5,10,20");
    CHECK(kv.at("train.k_g") == "2");
    CHECK(kv.at("data.sigma") == "0.45");
    CHECK(kv.at("augment.jitter") == "true");

    auto rebuilt = spec_from_config(kv);
    CHECK(resolved_config(rebuilt) == kv);
}

TEST_CASE("spec validation rejects inconsistent experiment shapes") {
    auto base = tiny_spec("/tmp/dada_harness_validate");
    auto expect_bad = [](ExperimentSpec s) { CHECK_THROWS_AS(run_experiment(s), ConfigError); };

    ExperimentSpec s = base;
    s.modes.clear();
    expect_bad(s);
    s = base;
    s.modes = {Mode::c, Mode::c};
    expect_bad(s);
    s = base;
    s.n_per_class = {};
    expect_bad(s);
    s = base;
    s.n_per_class = {0};
    expect_bad(s);
    s = base;
    s.seeds = {};
    expect_bad(s);
    s = base;
    s.seeds = {1, 1};
    expect_bad(s);
    s = base;
    s.workers = 0;
    expect_bad(s);
    s = base;
    s.n_per_class = {40};  // pool has only 30 per class
    expect_bad(s);
    s = base;
    s.modes = {Mode::c_aug};
    expect_bad(s);  // no augment op enabled
    s = base;
    s.modes = {Mode::c_aug};
    s.aug_ops.jitter = true;
    s.aug_multiplier = 1;
    expect_bad(s);
    s = base;
    s.modes = {Mode::dada_aug};
    s.aug_ops.rotate = true;  // geometric op on vector data
    expect_bad(s);
    s = base;
    s.data.sigma = 0.0;
    expect_bad(s);
    s = base;
    s.data.kind = DataSource::Kind::csv;
    expect_bad(s);  // no csv path
}

TEST_CASE("experiment matrix: counting, determinism, resume, and parallel equality") {
    TempDir dir("dada_harness_matrix");
    auto spec = tiny_spec(dir.str());

    auto result = run_experiment(spec);
    REQUIRE(result.cells.size() == 30);  // 2 modes x 3 n x 5 seeds
    for (const auto& cell : result.cells) {
        CHECK(cell.ok);
        CHECK(cell.error.empty());
        CHECK(cell.test_acc >= 0.0);
        CHECK(cell.test_acc <= 1.0);
        CHECK(fs::exists(dir.path / cell.runlog_path));
        CHECK(fs::exists(dir.path / "cells" /
                         (mode_name(cell.mode) + "_n" + std::to_string(cell.n_per_class) +
                          "_s" + std::to_string(cell.seed) + ".json")));
    }
    REQUIRE(result.summary.size() == 6);
    for (const auto& row : result.summary) CHECK(row.n_seeds == 5);
    CHECK(result.wall_seconds > 0.0);
    CHECK(fs::exists(dir.path / "timings.json"));

    const std::string first = read_file(dir.path / "result.json");

    // resume from existing cells reproduces the file bit-for-bit
    fs::remove(dir.path / "result.json");
    run_experiment(spec);
    CHECK(read_file(dir.path / "result.json") == first);

    // a full recompute (fresh directory) also reproduces it, in parallel
    fs::remove_all(dir.path);
    spec.workers = 3;
    auto parallel = run_experiment(spec);
    // config echoes the worker count, so compare cells and summary instead
    auto first_doc = nlohmann::json::parse(first);
    auto parallel_doc = nlohmann::json::parse(read_file(dir.path / "result.json"));
    CHECK(parallel_doc.at("cells") == first_doc.at("cells"));
    CHECK(parallel_doc.at("summary") == first_doc.at("summary"));
    CHECK(parallel.cells.size() == 30);
}

TEST_CASE("experiment matrix: cell reuse is observable and repairable") {
    TempDir dir("dada_harness_resume");
    auto spec = tiny_spec(dir.str());
    spec.modes = {Mode::c};
    spec.n_per_class = {5};
    spec.seeds = {1, 2};
    auto result = run_experiment(spec);
    REQUIRE(result.cells.size() == 2);
    const double true_acc = result.cells[0].test_acc;

    // a hand-edited cell is trusted (resume skips it) ...
    const auto cell_path = dir.path / "cells" / "c_n5_s1.json";
    auto doc = nlohmann::json::parse(read_file(cell_path));
    doc["test_acc"] = 0.123;
    std::ofstream(cell_path) << doc.dump(2) << "\n";
    auto reused = run_experiment(spec);
    CHECK(reused.cells[0].test_acc == doctest::Approx(0.123));

    // ... a corrupt one is recomputed
    std::ofstream(cell_path) << "not json";
    auto repaired = run_experiment(spec);
    CHECK(repaired.cells[0].test_acc == doctest::Approx(true_acc));
}

TEST_CASE("experiment matrix: failures stay contained in their cells") {
    TempDir dir("dada_harness_fail");
    auto spec = tiny_spec(dir.str());
    spec.seeds = {1, 2};
    spec.n_per_class = {5};
    spec.clf_hidden = {};  // no hidden layer: dada's feature matching has nothing to tap
    auto result = run_experiment(spec);
    REQUIRE(result.cells.size() == 4);
    int ok = 0, failed = 0;
    for (const auto& cell : result.cells) {
        if (cell.mode == Mode::c) {
            CHECK(cell.ok);
            ++ok;
        } else {
            CHECK_FALSE(cell.ok);
            CHECK_FALSE(cell.error.empty());
            CHECK(std::isnan(cell.test_acc));
            ++failed;
        }
    }
    CHECK(ok == 2);
    CHECK(failed == 2);
    // aggregates skip failed cells; the file still records them as null
    for (const auto& row : result.summary) {
        if (row.mode == Mode::dada) {
            CHECK(row.n_seeds == 0);
            CHECK(std::isnan(row.mean_acc));
        } else {
            CHECK(row.n_seeds == 2);
        }
    }
    auto doc = nlohmann::json::parse(read_file(dir.path / "result.json"));
    bool saw_null = false;
    for (const auto& cell : doc.at("cells")) {
        if (cell.at("mode") == "dada") {
            CHECK(cell.at("test_acc").is_null());
            saw_null = true;
        }
    }
    CHECK(saw_null);
}

TEST_CASE("every mode runs; generator-free modes build no augmenter") {
    TempDir dir("dada_harness_modes");
    auto spec = tiny_spec(dir.str());
    spec.modes = {Mode::c,        Mode::c_aug,       Mode::dada,
                  Mode::dada_aug, Mode::vanilla_gan, Mode::k_plus_one};
    spec.aug_ops.jitter = true;
    spec.n_per_class = {5};
    spec.seeds = {1};
    auto result = run_experiment(spec);
    REQUIRE(result.cells.size() == 6);
    for (const auto& cell : result.cells) {
        INFO(mode_name(cell.mode), ": ", cell.error);
        CHECK(cell.ok);
    }

    // mode c alone never constructs an augmenter
    TempDir dir2("dada_harness_modes_c");
    auto c_only = tiny_spec(dir2.str());
    c_only.modes = {Mode::c};
    c_only.n_per_class = {5};
    c_only.seeds = {1};
    const long before = AugmenterNet::constructed_count();
    run_experiment(c_only);
    CHECK(AugmenterNet::constructed_count() == before);

    // the per-class ensemble constructs exactly k generators
    TempDir dir3("dada_harness_modes_v");
    auto v_only = tiny_spec(dir3.str());
    v_only.modes = {Mode::vanilla_gan};
    v_only.n_per_class = {5};
    v_only.seeds = {1};
    const long before_v = AugmenterNet::constructed_count();
    run_experiment(v_only);
    CHECK(AugmenterNet::constructed_count() == before_v + 3);
}

TEST_CASE("result files load back and drive curve emission") {
    TempDir dir("dada_harness_curves");
    auto spec = tiny_spec(dir.str());
    spec.n_per_class = {5, 10};
    spec.seeds = {1, 2, 3};
    auto result = run_experiment(spec);

    auto loaded = load_result((dir.path / "result.json").string());
    CHECK(loaded.config == result.config);
    REQUIRE(loaded.cells.size() == result.cells.size());
    for (std::size_t i = 0; i < loaded.cells.size(); ++i) {
        CHECK(loaded.cells[i].test_acc == doctest::Approx(result.cells[i].test_acc));
        CHECK(loaded.cells[i].runlog_path == result.cells[i].runlog_path);
    }
    REQUIRE(loaded.summary.size() == 4);

    // summary must be recomputable from the per-seed cells
    for (const auto& row : loaded.summary) {
        std::vector<double> accs;
        for (const auto& cell : loaded.cells) {
            if (cell.mode == row.mode && cell.n_per_class == row.n_per_class && cell.ok) {
                accs.push_back(cell.test_acc);
            }
        }
        REQUIRE(static_cast<int>(accs.size()) == row.n_seeds);
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / static_cast<double>(accs.size()));
        CHECK(row.mean_acc == doctest::Approx(mean).epsilon(1e-12));
        CHECK(row.std_acc == doctest::Approx(sd).epsilon(1e-12));
    }

    const auto csv_path = dir.path / "curves.csv";
    emit_curves(loaded, csv_path.string());
    std::stringstream csv(read_file(csv_path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(csv, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);  // header + 2 modes x 2 n
    CHECK(lines[0] == "mode,n_per_class,mean_acc,std_acc,n_seeds");
    CHECK(lines[1].substr(0, 4) == "c,5,");

    CHECK_THROWS_AS(emit_curves(ExperimentResult{}, csv_path.string()), UsageError);
    CHECK_THROWS_AS(emit_curves(loaded, "/nonexistent_dir/x.csv"), IoError);
    CHECK_THROWS_AS(load_result("/nonexistent/result.json"), IoError);
    const auto bad = dir.path / "bad.json";
    std::ofstream(bad) << "{\"cells\": 3}";
    CHECK_THROWS_AS(load_result(bad.string()), FormatError);
}

TEST_CASE("generated-sample dumps: csv for vectors, image files for grids") {
    TempDir dir("dada_harness_dump");

    auto aug = AugmenterNet::make(4, 3, {8}, 2, 5);
    dump_generated(aug, 4, dir.str(), 9);
    const auto csv_path = dir.path / "generated.csv";
    std::stringstream csv(read_file(csv_path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(csv, line)) lines.push_back(line);
    REQUIRE(lines.size() == 13);  // header + 3 classes x 4
    CHECK(lines[0] == "y,x1,x2");
    int per_class[3] = {0, 0, 0};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::stringstream row(lines[i]);
        std::string cell;
        std::getline(row, cell, ',');
        const int y = std::stoi(cell);
        REQUIRE(y >= 1);
        REQUIRE(y <= 3);
        ++per_class[y - 1];
        while (std::getline(row, cell, ',')) {
            const double v = std::stod(cell);
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(per_class[0] == 4);
    CHECK(per_class[1] == 4);
    CHECK(per_class[2] == 4);

    const std::string bytes = read_file(csv_path);
    dump_generated(aug, 4, dir.str(), 9);
    CHECK(read_file(csv_path) == bytes);  // same seed, same file
    dump_generated(aug, 4, dir.str(), 10);
    CHECK(read_file(csv_path) != bytes);

    // grid output: one graymap per sample, saturated net hits both endpoints
    TempDir gdir("dada_harness_dump_grid");
    auto gaug = AugmenterNet::make(4, 3, {}, 6, 5);
    auto params = gaug.parameters();
    std::fill(params[0].values().begin(), params[0].values().end(), 0.0);
    params[1].values() = {20.0, -20.0, 20.0, -20.0, 20.0, -20.0};  // tanh saturates
    dump_generated(gaug, 4, gdir.str(), 9, 2, 3, 1);
    int artifacts = 0;
    for (const auto& entry : fs::directory_iterator(gdir.path)) {
        ++artifacts;
        CHECK(entry.path().extension() == ".pgm");
    }
    CHECK(artifacts == 12);  // k=3, 4 per class
    std::stringstream pgm(read_file(gdir.path / "gen_class1_0.pgm"));
    std::string magic;
    int w = 0, h = 0, maxval = -1;
    pgm >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxval == 255);
    std::vector<int> pixels;
    int px = 0;
    while (pgm >> px) pixels.push_back(px);
    CHECK(pixels == std::vector<int>{255, 0, 255, 0, 255, 0});  // exact endpoints

    CHECK_THROWS_AS(dump_generated(gaug, 0, gdir.str(), 1), ConfigError);
    CHECK_THROWS_AS(dump_generated(gaug, 1, gdir.str(), 1, 2, 3, 2), ConfigError);
    CHECK_THROWS_AS(dump_generated(gaug, 1, gdir.str(), 1, 2, 2, 1), DimensionError);
}
