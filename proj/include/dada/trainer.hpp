#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dada/data.hpp"
#include "dada/models.hpp"

namespace dada {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int k_g = 200;       // generation-phase epochs
    int k_c = 600;       // classification-phase epochs
    int batch = 32;      // B; class-balanced, so B >= k
    int g_inner = 1;     // augmenter updates per classifier update
    double lambda_fm = 1.0;
    AdamConfig adam;
    std::int64_t d_z = 100;
    std::uint64_t seed = 0;
    double input_sigma = 0.05;       // classifier input noise (applied at model build)
    int augmentation_ratio = 10;     // generated-to-real volume in phase II
    bool fixed_generated_set = false;  // pre-draw the generated pool once
    int eval_every = 0;  // 0: accuracies only on the final epoch; n: every n epochs

    void validate(int k) const;  // throws ConfigError on any bad field
};

// Adam with bias correction over a fixed parameter list. Parameters without
// an accumulated gradient are left untouched by step().
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    // One update from the gradients currently on the parameters.
    // Non-finite gradients abort with an error naming the parameter.
    void step();
    void zero_grad();
    long step_count() const { return t_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// Class-balanced minibatch index stream: every batch holds at least one
// sample of every class (quota B/k each, remainder to the lowest class
// indices), cycling through per-class shuffled queues.
class BalancedBatcher {
public:
    BalancedBatcher(const Dataset& d, int batch, std::mt19937_64* rng);
    std::vector<std::size_t> next();

private:
    const Dataset* data_;
    int batch_;
    std::mt19937_64* rng_;
    std::vector<std::vector<std::size_t>> queues_;  // per class
    std::vector<std::size_t> cursor_;
};

struct EpochRecord {
    int phase = 0;
    int epoch = 0;          // 1-based within its phase
    double loss_C = 0.0;
    double loss_G = 0.0;    // NaN when the epoch trains no augmenter
    double train_acc = 0.0;  // NaN when not measured this epoch
    double test_acc = 0.0;   // NaN when not measured this epoch
};

struct RunLog {
    std::vector<EpochRecord> records;
    // update bookkeeping; phases must not mix their loss kinds
    long phase1_classifier_updates = 0;
    long phase1_augmenter_updates = 0;
    long phase2_classifier_updates = 0;
    long balance_violations = 0;  // batches missing some class (expected 0)

    void append(EpochRecord rec);  // enforces (phase, epoch) ordering
    void merge(const RunLog& other);
    // one structured record per line; NaN fields serialize as null
    void write_jsonl(const std::string& path) const;
};

// Generation phase: adversarial training of augmenter and classifier.
// Head two_k trains the two-group objectives with feature matching;
// k_plus_one trains the (k+1)-class baseline with feature matching; binary
// trains the real/fake baseline without feature matching. Deterministic per
// cfg.seed. If test is given, accuracies are measured per eval_every.
RunLog train_phase1(AugmenterNet& aug, ClassifierNet& clf, const Dataset& data,
                    const TrainConfig& cfg, const Dataset* test = nullptr);

// Classification phase: the frozen augmenter only provides data; the
// classifier trains on real + generated batches (folded objective for
// two_k, (k+1)-class cross-entropy for k_plus_one). The augmenter's
// parameters are checksummed before and after.
RunLog train_phase2(const AugmenterNet& aug, ClassifierNet& clf, const Dataset& data,
                    const TrainConfig& cfg, const Dataset* test = nullptr);

// Extra labeled batches for plain classifier training (e.g. a generator
// ensemble): returns (samples, labels) of the requested size.
using SampleProvider =
    std::function<std::pair<Tensor, std::vector<int>>(int batch, std::mt19937_64& rng)>;

// Plain k-way classifier training (no adversary). With a provider, every
// step trains on a real batch plus a provided batch and the epoch count of
// steps scales by augmentation_ratio, mirroring the phase-II volume.
RunLog train_classifier_plain(ClassifierNet& clf, const Dataset& data, const TrainConfig& cfg,
                              const Dataset* test = nullptr,
                              const SampleProvider* provider = nullptr);

// Fraction of samples whose predicted class matches the label (eval mode).
double evaluate(const ClassifierNet& clf, const Dataset& test);

}  // namespace dada
