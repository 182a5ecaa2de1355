#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dada/data.hpp"
#include "dada/models.hpp"
#include "dada/trainer.hpp"

namespace dada {

// Experiment arms. c trains a plain classifier on the subsample alone; c_aug
// on its classically augmented expansion; dada runs the two-phase adversarial
// pipeline (dada_aug: classical augmentation first); vanilla_gan trains one
// binary-loss generator per class and feeds a plain classifier from the
// ensemble; k_plus_one is the dada pipeline with the (k+1)-way head.
enum class Mode { c, c_aug, dada, dada_aug, vanilla_gan, k_plus_one };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);  // ConfigError on unknown names

// Where the training pool and held-out test set come from.
struct DataSource {
    enum class Kind { synthetic, idx, csv };
    Kind kind = Kind::synthetic;

    // synthetic: k Gaussians on a circle; pool subsampled per cell, test set
    // drawn fresh from the same mixture at its own seed
    int k = 3;
    double radius = 2.0;
    double sigma = 0.8;
    int pool_per_class = 200;
    std::uint64_t pool_seed = 77;
    int test_per_class = 500;
    std::uint64_t test_seed = 9999;

    // idx: explicit train/test image+label file pairs
    std::string train_images, train_labels, test_images, test_labels;

    // csv: one file, stratified split
    std::string csv_path;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 1;
};

struct ExperimentSpec {
    std::vector<Mode> modes{Mode::c, Mode::dada};
    DataSource data;
    std::vector<int> n_per_class{5, 10, 20};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    TrainConfig train;

    std::vector<std::int64_t> aug_hidden{32};
    std::vector<std::int64_t> clf_hidden{32};
    int feature_tap = -1;

    AugmentOps aug_ops;      // for the *_aug modes
    int aug_multiplier = 2;  // output size multiple of traditional_augment

    std::string out_dir = "out";
    int workers = 1;
};

// ---- flat config ---------------------------------------------------------------

// "key = value" lines with '#' comments; dotted keys (train.k_g, adam.lr,
// data.sigma, ...). Unknown keys are rejected.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);
ExperimentSpec spec_from_config(const std::map<std::string, std::string>& kv);

// Every key with its final value (defaults applied), enough to re-run the
// experiment bit-identically.
std::map<std::string, std::string> resolved_config(const ExperimentSpec& spec);

// ---- results -------------------------------------------------------------------

struct CellResult {
    Mode mode = Mode::c;
    int n_per_class = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;        // empty when ok
    double test_acc = 0.0;    // NaN when failed
    std::string runlog_path;  // relative to the output directory
};

struct SummaryRow {
    Mode mode = Mode::c;
    int n_per_class = 0;
    double mean_acc = 0.0;  // over succeeding seeds; NaN when none succeeded
    double std_acc = 0.0;   // population standard deviation
    int n_seeds = 0;        // succeeding seeds entering the aggregate
};

struct ExperimentResult {
    std::map<std::string, std::string> config;  // resolved spec echo
    std::vector<CellResult> cells;              // sorted by (mode, n, seed)
    std::vector<SummaryRow> summary;
    double wall_seconds = 0.0;  // kept out of result.json (timings.json instead)
};

// Runs the modes x n_per_class x seeds matrix. Each cell is isolated: an
// aborting run is recorded as a failed cell and the matrix continues. Cells
// already present under <out>/cells/ are reused, making the matrix resumable
// at cell granularity. Writes <out>/result.json (deterministic for a given
// spec) and <out>/timings.json (wall time). Workers > 1 runs cells in
// parallel; aggregation stays single-writer.
ExperimentResult run_experiment(const ExperimentSpec& spec);

ExperimentResult load_result(const std::string& result_json_path);

// CSV "mode,n_per_class,mean_acc,std_acc,n_seeds", one row per summary entry.
void emit_curves(const ExperimentResult& result, const std::string& out_path);

// Writes count_per_class samples per class drawn from the augmenter. With
// grid extents (h, w, c): one portable graymap (c=1) or pixmap (c=3) per
// sample, values mapped from [-1,1] onto [0,255] with exact endpoints.
// Without extents: one CSV ("generated.csv") of all samples with the class
// in the first column.
void dump_generated(const AugmenterNet& aug, int count_per_class, const std::string& out_dir,
                    std::uint64_t seed, std::int64_t h = 0, std::int64_t w = 0,
                    std::int64_t c = 0);

}  // namespace dada
