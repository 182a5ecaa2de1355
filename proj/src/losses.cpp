#include "dada/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace dada {

namespace {

void check_labels(const std::vector<int>& y, int k, std::size_t batch, const char* who) {
    if (y.size() != batch) {
        throw DimensionError(std::string(who) + ": " + std::to_string(y.size()) +
                             " labels for " + std::to_string(batch) + " rows");
    }
    for (int c : y) {
        if (c < 1 || c > k) {
            throw DomainError(std::string(who) + ": class label " + std::to_string(c) +
                              " outside 1.." + std::to_string(k));
        }
    }
}

void check_batch(const Tensor& logits, std::int64_t width, const char* who) {
    if (logits.rank() != 2) throw DimensionError(std::string(who) + ": logits must be rank-2");
    if (logits.cols() != width) {
        throw DimensionError(std::string(who) + ": logit width " +
                             std::to_string(logits.cols()) + ", expected " +
                             std::to_string(width));
    }
    if (logits.rows() == 0) throw UsageError(std::string(who) + ": empty batch");
}

std::vector<std::int64_t> real_cols(const std::vector<int>& y) {
    std::vector<std::int64_t> cols(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cols[i] = y[i] - 1;
    return cols;
}

std::vector<std::int64_t> fake_cols(const std::vector<int>& y, int k) {
    std::vector<std::int64_t> cols(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cols[i] = k + y[i] - 1;
    return cols;
}

}  // namespace

// ---- domain types ------------------------------------------------------------

TwoKDistribution::TwoKDistribution(std::vector<double> probs) : p(std::move(probs)) {
    if (p.empty() || p.size() % 2 != 0) {
        throw DimensionError("TwoKDistribution needs a non-empty even-length vector, got " +
                             std::to_string(p.size()));
    }
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw DomainError("TwoKDistribution entry " + std::to_string(v) + " < 0");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw DomainError("TwoKDistribution sums to " + std::to_string(sum) + ", not 1");
    }
}

TwoKTarget::TwoKTarget(std::vector<double> onehot) : t(std::move(onehot)) {
    if (t.empty() || t.size() % 2 != 0) {
        throw DimensionError("TwoKTarget needs a non-empty even-length vector");
    }
    int ones = 0;
    for (double v : t) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            throw DomainError("TwoKTarget entries must be 0 or 1");
        }
    }
    if (ones != 1) throw DomainError("TwoKTarget must have exactly one 1");
}

int TwoKTarget::hot_index() const {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == 1.0) return static_cast<int>(i) + 1;
    }
    throw DomainError("TwoKTarget has no hot entry");  // unreachable after validation
}

FoldedDistribution::FoldedDistribution(std::vector<double> probs) : q(std::move(probs)) {
    if (q.empty()) throw DimensionError("FoldedDistribution must be non-empty");
    double sum = 0.0;
    for (double v : q) {
        if (v < 0.0) throw DomainError("FoldedDistribution entry < 0");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw DomainError("FoldedDistribution sums to " + std::to_string(sum) + ", not 1");
    }
}

TwoKTarget build_2k_target(int y, bool is_real, int k) {
    if (k < 1) throw DomainError("build_2k_target: k must be >= 1");
    if (y < 1 || y > k) {
        throw DomainError("build_2k_target: class " + std::to_string(y) + " outside 1.." +
                          std::to_string(k));
    }
    std::vector<double> t(static_cast<std::size_t>(2 * k), 0.0);
    t[static_cast<std::size_t>(is_real ? y - 1 : k + y - 1)] = 1.0;
    return TwoKTarget(std::move(t));
}

FoldedDistribution fold(const TwoKDistribution& p) {
    const int k = p.k();
    std::vector<double> q(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) q[i] = p.p[i] + p.p[k + i];
    return FoldedDistribution(std::move(q));
}

// ---- shared internals ----------------------------------------------------------

Tensor group_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets) {
    return mean_all(sub(logsumexp_rows(logits), gather_cols(logits, targets)));
}

Tensor folded_group_cross_entropy(const Tensor& logits,
                                  const std::vector<std::int64_t>& targets_a,
                                  const std::vector<std::int64_t>& targets_b) {
    return mean_all(sub(logsumexp_rows(logits),
                        logaddexp(gather_cols(logits, targets_a),
                                  gather_cols(logits, targets_b))));
}

// ---- training losses -------------------------------------------------------------

Tensor loss_C_phase1(const Tensor& logits_real, const std::vector<int>& y_real,
                     const Tensor& logits_fake, const std::vector<int>& y_fake, int k) {
    check_batch(logits_real, 2 * k, "loss_C_phase1(real)");
    check_batch(logits_fake, 2 * k, "loss_C_phase1(generated)");
    check_labels(y_real, k, static_cast<std::size_t>(logits_real.rows()), "loss_C_phase1(real)");
    check_labels(y_fake, k, static_cast<std::size_t>(logits_fake.rows()),
                 "loss_C_phase1(generated)");
    return add(group_cross_entropy(logits_real, real_cols(y_real)),
               group_cross_entropy(logits_fake, fake_cols(y_fake, k)));
}

Tensor loss_G_phase1(const Tensor& logits_fake, const std::vector<int>& y_fake, int k) {
    check_batch(logits_fake, 2 * k, "loss_G_phase1");
    check_labels(y_fake, k, static_cast<std::size_t>(logits_fake.rows()), "loss_G_phase1");
    return group_cross_entropy(logits_fake, real_cols(y_fake));
}

Tensor loss_feature_matching(const Tensor& f_real, const std::vector<int>& y_real,
                             const Tensor& f_fake, const std::vector<int>& y_fake, int k) {
    if (f_real.rank() != 2 || f_fake.rank() != 2) {
        throw DimensionError("loss_feature_matching: features must be rank-2");
    }
    if (f_real.cols() != f_fake.cols()) {
        throw DimensionError("loss_feature_matching: feature widths differ: " +
                             std::to_string(f_real.cols()) + " vs " +
                             std::to_string(f_fake.cols()));
    }
    if (f_real.rows() == 0 || f_fake.rows() == 0) {
        throw UsageError("loss_feature_matching: empty batch");
    }
    check_labels(y_real, k, static_cast<std::size_t>(f_real.rows()),
                 "loss_feature_matching(real)");
    check_labels(y_fake, k, static_cast<std::size_t>(f_fake.rows()),
                 "loss_feature_matching(generated)");

    std::set<int> classes_real(y_real.begin(), y_real.end());
    std::set<int> classes_fake(y_fake.begin(), y_fake.end());
    if (classes_real != classes_fake) {
        throw UsageError(
            "loss_feature_matching: class sets differ between real and generated batches");
    }

    const Tensor real_const = f_real.detach();
    Tensor total;
    for (int c : classes_real) {
        std::vector<std::int64_t> rows_r, rows_f;
        for (std::size_t i = 0; i < y_real.size(); ++i)
            if (y_real[i] == c) rows_r.push_back(static_cast<std::int64_t>(i));
        for (std::size_t i = 0; i < y_fake.size(); ++i)
            if (y_fake[i] == c) rows_f.push_back(static_cast<std::int64_t>(i));
        auto mean_r = mean_axis0(select_rows(real_const, rows_r));
        auto mean_f = mean_axis0(select_rows(f_fake, rows_f));
        auto diff = sub(mean_r, mean_f);
        auto norm = sqrt_op(sum_all(mul(diff, diff)));
        total = total.defined() ? add(total, norm) : norm;
    }
    return scale(total, 1.0 / static_cast<double>(classes_real.size()));
}

Tensor loss_G_total(const Tensor& g_phase1, const Tensor& fm, double lambda) {
    if (lambda < 0.0) {
        throw ConfigError("loss_G_total: lambda must be >= 0, got " + std::to_string(lambda));
    }
    if (g_phase1.size() != 1 || fm.size() != 1) {
        throw UsageError("loss_G_total: both components must be scalars");
    }
    if (lambda == 0.0) return g_phase1;
    return add(g_phase1, scale(fm, lambda));
}

Tensor loss_C_phase2(const Tensor& logits_real, const std::vector<int>& y_real,
                     const Tensor& logits_fake, const std::vector<int>& y_fake, int k) {
    check_batch(logits_real, 2 * k, "loss_C_phase2(real)");
    check_batch(logits_fake, 2 * k, "loss_C_phase2(generated)");
    check_labels(y_real, k, static_cast<std::size_t>(logits_real.rows()), "loss_C_phase2(real)");
    check_labels(y_fake, k, static_cast<std::size_t>(logits_fake.rows()),
                 "loss_C_phase2(generated)");
    return add(folded_group_cross_entropy(logits_real, real_cols(y_real), fake_cols(y_real, k)),
               folded_group_cross_entropy(logits_fake, real_cols(y_fake), fake_cols(y_fake, k)));
}

// ---- baseline losses --------------------------------------------------------------

Tensor loss_baseline(BaselineMode mode, const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<bool>& is_real, int k) {
    const std::int64_t width = mode == BaselineMode::vanilla_2class ? 2 : k + 1;
    check_batch(logits, width, "loss_baseline");
    const auto batch = static_cast<std::size_t>(logits.rows());
    if (is_real.size() != batch) {
        throw DimensionError("loss_baseline: " + std::to_string(is_real.size()) +
                             " real/generated flags for " + std::to_string(batch) + " rows");
    }
    if (mode == BaselineMode::k_plus_one) check_labels(labels, k, batch, "loss_baseline");

    std::vector<std::int64_t> rows_real, rows_fake, cols_real, cols_fake;
    for (std::size_t i = 0; i < batch; ++i) {
        if (is_real[i]) {
            rows_real.push_back(static_cast<std::int64_t>(i));
            cols_real.push_back(mode == BaselineMode::vanilla_2class ? 0 : labels[i] - 1);
        } else {
            rows_fake.push_back(static_cast<std::int64_t>(i));
            cols_fake.push_back(mode == BaselineMode::vanilla_2class ? 1 : k);
        }
    }
    Tensor total;
    if (!rows_real.empty()) {
        total = group_cross_entropy(select_rows(logits, rows_real), cols_real);
    }
    if (!rows_fake.empty()) {
        auto fake_term = group_cross_entropy(select_rows(logits, rows_fake), cols_fake);
        total = total.defined() ? add(total, fake_term) : fake_term;
    }
    return total;  // non-empty batch guaranteed by check_batch
}

Tensor loss_baseline_G(BaselineMode mode, const Tensor& logits_fake,
                       const std::vector<int>& y_fake, int k) {
    const std::int64_t width = mode == BaselineMode::vanilla_2class ? 2 : k + 1;
    check_batch(logits_fake, width, "loss_baseline_G");
    std::vector<std::int64_t> cols;
    if (mode == BaselineMode::vanilla_2class) {
        cols.assign(static_cast<std::size_t>(logits_fake.rows()), 0);
    } else {
        check_labels(y_fake, k, static_cast<std::size_t>(logits_fake.rows()),
                     "loss_baseline_G");
        cols = real_cols(y_fake);
    }
    return group_cross_entropy(logits_fake, cols);
}

Tensor loss_plain_ce(const Tensor& logits, const std::vector<int>& labels, int k) {
    check_batch(logits, k, "loss_plain_ce");
    check_labels(labels, k, static_cast<std::size_t>(logits.rows()), "loss_plain_ce");
    return group_cross_entropy(logits, real_cols(labels));
}

// ---- prediction ----------------------------------------------------------------------

namespace {

int argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best) + 1;
}

std::vector<double> single_row(const Tensor& logits) {
    if (logits.rank() == 1) return logits.values();
    if (logits.rank() == 2 && logits.rows() == 1) return logits.values();
    throw DimensionError("predict: need rank-1 logits or a single-row batch");
}

int predict_row(const double* row, HeadMode mode, int k, std::int64_t width) {
    switch (mode) {
        case HeadMode::two_k: {
            if (width != 2 * k) throw DimensionError("predict: two_k head needs width 2k");
            // softmax then fold; max-subtraction keeps huge logits finite
            double mx = row[0];
            for (std::int64_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            std::vector<double> p(static_cast<std::size_t>(width));
            for (std::int64_t j = 0; j < width; ++j) {
                p[j] = std::exp(row[j] - mx);
                sum += p[j];
            }
            std::vector<double> q(static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) q[i] = (p[i] + p[k + i]) / sum;
            return argmax_lowest(q);
        }
        case HeadMode::k_plus_one:
            if (width != k + 1) throw DimensionError("predict: k_plus_one head needs width k+1");
            return argmax_lowest(std::vector<double>(row, row + k));
        case HeadMode::plain_k:
            if (width != k) throw DimensionError("predict: plain_k head needs width k");
            return argmax_lowest(std::vector<double>(row, row + k));
        case HeadMode::binary:
            throw UsageError("predict: a binary real/generated head carries no class label");
    }
    throw UsageError("predict: unknown head mode");
}

}  // namespace

int predict(const Tensor& logits, HeadMode mode, int k) {
    auto row = single_row(logits);
    return predict_row(row.data(), mode, k, static_cast<std::int64_t>(row.size()));
}

std::vector<int> predict_batch(const Tensor& logits, HeadMode mode, int k) {
    if (logits.rank() != 2) throw DimensionError("predict_batch: logits must be rank-2");
    const std::int64_t rows = logits.rows(), width = logits.cols();
    std::vector<int> out(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i) {
        out[i] = predict_row(logits.values().data() + i * width, mode, k, width);
    }
    return out;
}

}  // namespace dada
