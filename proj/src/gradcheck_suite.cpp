#include "dada/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "dada/losses.hpp"
#include "dada/models.hpp"
#include "dada/rng.hpp"
#include "dada/tensor.hpp"

namespace dada {

namespace {

constexpr double kStep = 1e-5;
constexpr int kChoices[4] = {1, 2, 3, 5};

struct Instance {
    std::mt19937_64 rng;
    int k = 0;
    std::int64_t batch = 0;

    explicit Instance(std::uint64_t seed) : rng(seed) {
        k = kChoices[std::uniform_int_distribution<int>(0, 3)(rng)];
        batch = std::uniform_int_distribution<std::int64_t>(1, 8)(rng);
    }

    Tensor randn(std::int64_t rows, std::int64_t cols, double scale = 2.0) {
        std::normal_distribution<double> dist(0.0, scale);
        std::vector<double> v(static_cast<std::size_t>(rows * cols));
        for (auto& x : v) x = dist(rng);
        return Tensor::from({rows, cols}, std::move(v));
    }

    std::vector<int> labels(std::int64_t n) {
        std::uniform_int_distribution<int> dist(1, k);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (auto& v : y) v = dist(rng);
        return y;
    }

    std::vector<bool> flags(std::int64_t n) {
        std::bernoulli_distribution dist(0.5);
        std::vector<bool> f(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = dist(rng);
        return f;
    }
};

// one family = `instances` random cases of (make params+closure, grad-check)
using CaseBody = std::function<void(Instance&, std::vector<std::pair<std::function<Tensor()>,
                                                                     Tensor>>&)>;

GradCaseResult run_family(const std::string& name, std::uint64_t seed, int instances,
                          double tol, const CaseBody& body) {
    GradCaseResult result;
    result.name = name;
    const std::uint64_t family_salt = std::hash<std::string>{}(name);
    for (int i = 0; i < instances; ++i) {
        Instance inst(mix_seed(seed, family_salt + static_cast<std::uint64_t>(i)));
        std::vector<std::pair<std::function<Tensor()>, Tensor>> checks;
        body(inst, checks);
        for (auto& [f, param] : checks) {
            auto report = grad_check(f, param, kStep, tol);
            ++result.instances;
            result.worst_rel_err = std::max(result.worst_rel_err, report.max_rel_err);
            if (!report.passed) {
                ++result.failures;
                if (result.note.empty()) {
                    result.note = name + " instance " + std::to_string(i) +
                                  ": max rel err " + std::to_string(report.max_rel_err);
                }
            }
        }
    }
    return result;
}

}  // namespace

bool GradSuiteReport::all_passed() const {
    for (const auto& c : cases) {
        if (c.failures > 0) return false;
    }
    return !cases.empty();
}

int GradSuiteReport::total_instances() const {
    int n = 0;
    for (const auto& c : cases) n += c.instances;
    return n;
}

GradSuiteReport run_gradient_suite(std::uint64_t seed, int instances_per_case, double tol) {
    GradSuiteReport report;
    auto add = [&](const std::string& name, const CaseBody& body) {
        report.cases.push_back(run_family(name, seed, instances_per_case, tol, body));
    };

    using Checks = std::vector<std::pair<std::function<Tensor()>, Tensor>>;

    // adversarial classifier loss: real toward y, generated toward its
    // shifted group; gradient wrt both logit blocks
    add("classifier_adversarial", [](Instance& in, Checks& checks) {
        auto lr = in.randn(in.batch, 2 * in.k);
        auto lf = in.randn(in.batch, 2 * in.k);
        lr.set_requires_grad(true);
        lf.set_requires_grad(true);
        auto yr = in.labels(in.batch);
        auto yf = in.labels(in.batch);
        auto f = [=] { return loss_C_phase1(lr, yr, lf, yf, in.k); };
        checks.push_back({f, lr});
        checks.push_back({f, lf});
    });

    // adversarial generator loss: generated logits pushed toward the real group
    add("generator_adversarial", [](Instance& in, Checks& checks) {
        auto lf = in.randn(in.batch, 2 * in.k);
        lf.set_requires_grad(true);
        auto y = in.labels(in.batch);
        checks.push_back({[=] { return loss_G_phase1(lf, y, in.k); }, lf});
    });

    // per-class feature-mean matching; the real side is held constant by the op
    add("feature_matching", [](Instance& in, Checks& checks) {
        const std::int64_t width = 1 + in.batch % 5;
        auto fr = in.randn(in.batch, width);
        auto ff = in.randn(in.batch, width);
        ff.set_requires_grad(true);
        auto y = in.labels(in.batch);  // same labels: class sets match
        checks.push_back({[=, k = in.k] { return loss_feature_matching(fr, y, ff, y, k); },
                          ff});
    });

    // folded classification loss (real and generated terms share the code path)
    add("classifier_folded", [](Instance& in, Checks& checks) {
        auto lr = in.randn(in.batch, 2 * in.k);
        auto lg = in.randn(in.batch, 2 * in.k);
        lr.set_requires_grad(true);
        lg.set_requires_grad(true);
        auto yr = in.labels(in.batch);
        auto yg = in.labels(in.batch);
        auto f = [=] { return loss_C_phase2(lr, yr, lg, yg, in.k); };
        checks.push_back({f, lr});
        checks.push_back({f, lg});
    });

    // two-class real/fake baseline, classifier and generator sides
    add("baseline_vanilla", [](Instance& in, Checks& checks) {
        auto l = in.randn(in.batch, 2);
        l.set_requires_grad(true);
        auto y = in.labels(in.batch);
        auto is_real = in.flags(in.batch);
        checks.push_back(
            {[=, k = in.k] {
                 return loss_baseline(BaselineMode::vanilla_2class, l, y, is_real, k);
             },
             l});
        auto lg = in.randn(in.batch, 2);
        lg.set_requires_grad(true);
        checks.push_back(
            {[=, k = in.k] { return loss_baseline_G(BaselineMode::vanilla_2class, lg, y, k); },
             lg});
    });

    // (k+1)-class baseline, classifier and generator sides
    add("baseline_k_plus_one", [](Instance& in, Checks& checks) {
        auto l = in.randn(in.batch, in.k + 1);
        l.set_requires_grad(true);
        auto y = in.labels(in.batch);
        auto is_real = in.flags(in.batch);
        checks.push_back(
            {[=, k = in.k] { return loss_baseline(BaselineMode::k_plus_one, l, y, is_real, k); },
             l});
        auto lg = in.randn(in.batch, in.k + 1);
        lg.set_requires_grad(true);
        checks.push_back(
            {[=, k = in.k] { return loss_baseline_G(BaselineMode::k_plus_one, lg, y, k); },
             lg});
    });

    // plain k-way cross-entropy
    add("plain_cross_entropy", [](Instance& in, Checks& checks) {
        auto l = in.randn(in.batch, in.k);
        l.set_requires_grad(true);
        auto y = in.labels(in.batch);
        checks.push_back({[=, k = in.k] { return loss_plain_ce(l, y, k); }, l});
    });

    // full generator objective through augmenter + classifier: the weighted
    // sum of the adversarial term and feature matching, differentiated wrt
    // the augmenter's first weight matrix
    add("generator_pipeline", [](Instance& in, Checks& checks) {
        const std::int64_t d = 3;
        auto aug = AugmenterNet::make(2, in.k, {5}, d, in.rng());
        auto clf = ClassifierNet::make(d, in.k, HeadMode::two_k, {5}, 0.0, -1, in.rng());
        auto z = in.randn(in.batch, 2, 1.0);
        auto x_real = in.randn(in.batch, d, 0.5);
        auto y = in.labels(in.batch);
        const double lambda = std::uniform_real_distribution<double>(0.1, 2.0)(in.rng);
        auto f = [=] {
            auto x_fake = augment(aug, z, y);
            auto g = loss_G_phase1(classify(clf, x_fake, false), y, in.k);
            auto fm = loss_feature_matching(features(clf, x_real), y,
                                            features(clf, x_fake), y, in.k);
            return loss_G_total(g, fm, lambda);
        };
        checks.push_back({f, aug.parameters()[0]});
    });

    // adversarial classifier objective differentiated wrt a classifier weight
    add("classifier_pipeline", [](Instance& in, Checks& checks) {
        const std::int64_t d = 3;
        auto clf = ClassifierNet::make(d, in.k, HeadMode::two_k, {5}, 0.0, -1, in.rng());
        auto x_real = in.randn(in.batch, d, 0.5);
        auto x_fake = in.randn(in.batch, d, 0.5);
        auto yr = in.labels(in.batch);
        auto yf = in.labels(in.batch);
        auto f = [=] {
            return loss_C_phase1(classify(clf, x_real, false), yr,
                                 classify(clf, x_fake, false), yf, in.k);
        };
        checks.push_back({f, clf.parameters()[0]});
    });

    return report;
}

}  // namespace dada
