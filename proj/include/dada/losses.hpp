#pragma once

#include <vector>

#include "dada/error.hpp"
#include "dada/tensor.hpp"

namespace dada {

// Classifier output-head layouts. two_k: indices 1..k are "real class i",
// k+1..2k are "generated class i". k_plus_one: 1..k real classes plus one
// shared "generated" bucket. binary: real-vs-generated only. plain_k:
// ordinary k-way classifier with no generated buckets.
enum class HeadMode { two_k, k_plus_one, binary, plain_k };

// Probability vector of length 2k; index i in 1..k is real class i,
// index k+i is generated class i (1-based convention throughout).
struct TwoKDistribution {
    std::vector<double> p;
    explicit TwoKDistribution(std::vector<double> probs);
    int k() const { return static_cast<int>(p.size() / 2); }
};

// One-hot ground-truth vector of length 2k.
struct TwoKTarget {
    std::vector<double> t;
    explicit TwoKTarget(std::vector<double> onehot);
    int k() const { return static_cast<int>(t.size() / 2); }
    int hot_index() const;  // 1-based position of the single 1
};

// Test-time class distribution: q_i = p_i + p_{k+i}.
struct FoldedDistribution {
    std::vector<double> q;
    explicit FoldedDistribution(std::vector<double> probs);
};

// One-hot target at index y (real) or k+y (generated); y is 1-based.
TwoKTarget build_2k_target(int y, bool is_real, int k);

FoldedDistribution fold(const TwoKDistribution& p);

// ---- training losses -------------------------------------------------------
// All logits are rank-2 (batch x width); labels are 1-based class ids with
// one entry per batch row. Returned tensors are differentiable scalars.

// Generation-phase classifier loss: real samples are pushed toward index y,
// generated samples toward index k+y, both as cross-entropy on the full
// 2k softmax.
Tensor loss_C_phase1(const Tensor& logits_real, const std::vector<int>& y_real,
                     const Tensor& logits_fake, const std::vector<int>& y_fake, int k);

// Generation-phase augmenter loss: generated samples are pushed toward the
// REAL index y of their conditioning class.
Tensor loss_G_phase1(const Tensor& logits_fake, const std::vector<int>& y_fake, int k);

// Class-conditional feature matching: mean over classes of the L2 distance
// between per-class feature means. The real-side means are constants; the
// gradient reaches generated features only.
Tensor loss_feature_matching(const Tensor& f_real, const std::vector<int>& y_real,
                             const Tensor& f_fake, const std::vector<int>& y_fake, int k);

// Total augmenter objective: generation loss + lambda * feature matching.
// With lambda == 0 this returns the generation loss tensor itself.
Tensor loss_G_total(const Tensor& g_phase1, const Tensor& fm, double lambda);

// Augmentation-phase classifier loss: folded cross-entropy
// -log(p_y + p_{k+y}) averaged over the real batch plus the same folded
// cross-entropy averaged over the generated batch.
Tensor loss_C_phase2(const Tensor& logits_real, const std::vector<int>& y_real,
                     const Tensor& logits_fake, const std::vector<int>& y_fake, int k);

// ---- baseline losses -------------------------------------------------------

enum class BaselineMode { vanilla_2class, k_plus_one };

// Classifier-side baseline loss over one mixed batch. vanilla_2class expects
// width-2 logits (index 1 real, index 2 generated). k_plus_one expects width
// k+1 logits; real samples target their class y, generated samples target
// index k+1. Each present group (real/generated) contributes its mean.
Tensor loss_baseline(BaselineMode mode, const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<bool>& is_real, int k);

// Generator-side baseline loss: vanilla targets the "real" index; k_plus_one
// targets the conditioning class y.
Tensor loss_baseline_G(BaselineMode mode, const Tensor& logits_fake,
                       const std::vector<int>& y_fake, int k);

// Ordinary k-way cross-entropy for plain classifiers.
Tensor loss_plain_ce(const Tensor& logits, const std::vector<int>& labels, int k);

// ---- prediction --------------------------------------------------------------

// Predicted 1-based class for one sample (rank-1 logits or a single row).
// two_k folds the softmax; k_plus_one and plain_k take the argmax over the
// first k entries; ties resolve to the lowest class index. binary heads
// carry no class information -> usage error.
int predict(const Tensor& logits, HeadMode mode, int k);

// Row-wise prediction for a rank-2 batch.
std::vector<int> predict_batch(const Tensor& logits, HeadMode mode, int k);

// ---- shared internals (exposed for tests) -----------------------------------

// Mean over rows of (logsumexp(row) - row[target]); targets are 0-based.
Tensor group_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets);

// Mean over rows of (logsumexp(row) - log(exp(row[a]) + exp(row[b]))).
Tensor folded_group_cross_entropy(const Tensor& logits,
                                  const std::vector<std::int64_t>& targets_a,
                                  const std::vector<std::int64_t>& targets_b);

}  // namespace dada
