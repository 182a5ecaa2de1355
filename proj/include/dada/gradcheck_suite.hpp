#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dada {

struct GradCaseResult {
    std::string name;          // op family under check
    int instances = 0;         // random instances exercised
    int failures = 0;          // instances whose analytic/numeric gradients disagree
    double worst_rel_err = 0;  // largest relative error seen across instances
    std::string note;          // detail for the first failing instance
};

struct GradSuiteReport {
    std::vector<GradCaseResult> cases;
    bool all_passed() const;
    int total_instances() const;
};

// Central-difference verification of every differentiable building block:
// the training losses (adversarial classifier/generator pair, feature
// matching, the weighted generator total, the folded classification loss,
// both baseline losses, plain cross-entropy) on random logits, plus
// end-to-end sweeps through augmenter and classifier networks. Each family
// draws `instances_per_case` random instances with k in {1,2,3,5} and batch
// size <= 8, and compares against numeric gradients at `tol`.
GradSuiteReport run_gradient_suite(std::uint64_t seed = 0, int instances_per_case = 100,
                                   double tol = 1e-4);

}  // namespace dada
