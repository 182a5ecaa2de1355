#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dada/losses.hpp"
#include "dada/tensor.hpp"

namespace dada {

// One dense layer: W is (fan_in x fan_out), b is (fan_out).
struct DenseLayer {
    Tensor W;
    Tensor b;
};

// He-initialized dense stack over the extents in `dims` (n+1 extents give n
// layers): weights ~ normal(0, sqrt(2/fan_in)), biases zero, deterministic
// per seed.
std::vector<DenseLayer> init_params(const std::vector<std::int64_t>& dims, std::uint64_t seed);

// Rows of one-hot class indicators (labels 1-based), no gradient.
Tensor one_hot_rows(const std::vector<int>& y, int k);

// Class-conditional sample generator: each linear stage consumes the
// previous activation with the class one-hot concatenated, hidden stages use
// ReLU, the output stage uses tanh (samples live in (-1,1)).
class AugmenterNet {
public:
    static AugmenterNet make(std::int64_t d_z, int k, std::vector<std::int64_t> hidden,
                             std::int64_t d_out, std::uint64_t seed);

    std::vector<Tensor> parameters() const;
    void freeze();          // drops requires_grad on every parameter
    bool frozen() const;    // true iff no parameter requires gradient
    void save(const std::string& path) const;
    void load(const std::string& path);  // shapes must match this net

    std::int64_t d_z() const { return d_z_; }
    int k() const { return k_; }
    std::int64_t d_out() const { return d_out_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    // Total constructions since process start; lets tests assert that
    // generator-free experiment modes never build one.
    static long constructed_count();

private:
    AugmenterNet() = default;
    std::int64_t d_z_ = 0;
    int k_ = 0;
    std::int64_t d_out_ = 0;
    std::vector<std::int64_t> hidden_;
    std::vector<DenseLayer> layers_;
};

// One synthetic sample per (z row, label); differentiable through the net.
Tensor augment(const AugmenterNet& net, const Tensor& z, const std::vector<int>& y);

// Same forward pass with an explicit conditioning matrix (batch x k); lets
// tests ablate the one-hot to verify it reaches every stage.
Tensor augment_conditioned(const AugmenterNet& net, const Tensor& z, const Tensor& cond);

// Classifier with a selectable output head, optional Gaussian input noise
// during training, and a hidden-layer feature tap.
class ClassifierNet {
public:
    // feature_tap: 1-based hidden-layer index, or -1 for the last hidden
    // layer. Head/width consistency is fixed by construction; invalid taps
    // and non-positive widths are rejected here, not at the first batch.
    static ClassifierNet make(std::int64_t d_in, int k, HeadMode head,
                              std::vector<std::int64_t> hidden, double input_sigma = 0.05,
                              int feature_tap = -1, std::uint64_t seed = 0);

    std::vector<Tensor> parameters() const;
    void save(const std::string& path) const;
    void load(const std::string& path);

    std::int64_t d_in() const { return d_in_; }
    int k() const { return k_; }
    HeadMode head() const { return head_; }
    std::int64_t logit_width() const;
    double input_sigma() const { return sigma_; }
    int feature_tap() const { return tap_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

private:
    ClassifierNet() = default;
    std::int64_t d_in_ = 0;
    int k_ = 0;
    HeadMode head_ = HeadMode::two_k;
    std::vector<std::int64_t> hidden_;
    double sigma_ = 0.0;
    int tap_ = 0;  // 0 = no hidden layer to tap
    std::vector<DenseLayer> layers_;
};

// Logits for a batch. In train mode with sigma > 0 an i.i.d. normal(0, sigma)
// perturbation is added to x first, drawn from *rng (required then); eval
// mode never perturbs and ignores rng.
Tensor classify(const ClassifierNet& net, const Tensor& x, bool train_mode,
                std::mt19937_64* rng = nullptr);

// Activations at the feature-tap layer, noise-free and differentiable.
Tensor features(const ClassifierNet& net, const Tensor& x);

// ---- parameter serialization ------------------------------------------------
// Flat binary file: magic "DADA", version u32, matrix count u32, then per
// matrix rows u32, cols u32, row-major little-endian 64-bit reals. Rank-1
// tensors are stored as a single row.

void save_parameters(const std::vector<Tensor>& params, const std::string& path);
std::vector<Tensor> load_parameters(const std::string& path);

// FNV-1a over every parameter's raw bytes in order; detects any drift.
std::uint64_t parameter_checksum(const std::vector<Tensor>& params);

}  // namespace dada
