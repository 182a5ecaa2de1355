#include "dada/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "dada/losses.hpp"
#include "dada/rng.hpp"

namespace dada {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Tensor gather_samples(const Dataset& d, const std::vector<std::size_t>& idx) {
    const auto dim = static_cast<std::size_t>(d.dim());
    std::vector<double> values;
    values.reserve(idx.size() * dim);
    for (std::size_t i : idx) {
        const auto& x = d.samples[i].x;
        values.insert(values.end(), x.begin(), x.end());
    }
    return Tensor::from(
        {static_cast<std::int64_t>(idx.size()), static_cast<std::int64_t>(dim)},
        std::move(values));
}

std::vector<int> gather_labels(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (std::size_t i : idx) y.push_back(d.samples[i].y);
    return y;
}

Tensor draw_latents(std::mt19937_64& rng, std::int64_t n, std::int64_t d_z) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> z(static_cast<std::size_t>(n * d_z));
    for (auto& v : z) v = dist(rng);
    return Tensor::from({n, d_z}, std::move(z));
}

std::vector<int> draw_uniform_labels(std::mt19937_64& rng, int n, int k) {
    std::uniform_int_distribution<int> dist(1, k);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = dist(rng);
    return y;
}

bool head_predicts(HeadMode head) { return head != HeadMode::binary; }

bool eval_now(const TrainConfig& cfg, int epoch, int total) {
    if (epoch == total) return true;
    return cfg.eval_every > 0 && epoch % cfg.eval_every == 0;
}

long count_missing_classes(const std::vector<int>& y, int k) {
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    for (int c : y) seen[static_cast<std::size_t>(c - 1)] = 1;
    long missing = 0;
    for (char s : seen) missing += (s == 0);
    return missing;
}

}  // namespace

// ---- config -------------------------------------------------------------------

void TrainConfig::validate(int k) const {
    if (k < 1) throw ConfigError("train config: k must be >= 1");
    if (k_g < 0 || k_c < 0) throw ConfigError("train config: epoch counts must be >= 0");
    if (batch < 1) throw ConfigError("train config: batch size must be >= 1");
    if (batch < k) {
        throw ConfigError("train config: class-balanced batches need batch >= k (batch " +
                          std::to_string(batch) + ", k " + std::to_string(k) + ")");
    }
    if (g_inner < 1) throw ConfigError("train config: g_inner must be >= 1");
    if (lambda_fm < 0.0) throw ConfigError("train config: lambda_fm must be >= 0");
    if (!(adam.lr > 0.0)) throw ConfigError("train config: learning rate must be > 0");
    if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
        throw ConfigError("train config: betas must be in [0,1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("train config: adam epsilon must be > 0");
    if (d_z < 1) throw ConfigError("train config: d_z must be >= 1");
    if (input_sigma < 0.0) throw ConfigError("train config: input noise sigma must be >= 0");
    if (augmentation_ratio < 1) {
        throw ConfigError("train config: augmentation ratio must be >= 1");
    }
    if (eval_every < 0) throw ConfigError("train config: eval_every must be >= 0");
}

// ---- Adam ---------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("adam: learning rate must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        if (!p.has_grad()) continue;
        const auto& g = p.grad();
        auto& values = p.values();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                const std::string label = p.name().empty() ? "#" + std::to_string(pi)
                                                           : p.name();
                throw DomainError("adam: non-finite gradient in parameter '" + label +
                                  "' at index " + std::to_string(i));
            }
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            values[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

// ---- BalancedBatcher ------------------------------------------------------------

BalancedBatcher::BalancedBatcher(const Dataset& d, int batch, std::mt19937_64* rng)
    : data_(&d), batch_(batch), rng_(rng) {
    if (rng == nullptr) throw UsageError("balanced batcher needs a random generator");
    if (batch < d.k) {
        throw ConfigError("balanced batcher: batch " + std::to_string(batch) +
                          " cannot cover k=" + std::to_string(d.k) + " classes");
    }
    queues_.resize(static_cast<std::size_t>(d.k));
    cursor_.assign(static_cast<std::size_t>(d.k), 0);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        queues_[static_cast<std::size_t>(d.samples[i].y - 1)].push_back(i);
    }
    for (int cls = 0; cls < d.k; ++cls) {
        auto& q = queues_[static_cast<std::size_t>(cls)];
        if (q.empty()) {
            throw ConfigError("balanced batcher: class " + std::to_string(cls + 1) +
                              " has no samples");
        }
        std::shuffle(q.begin(), q.end(), *rng_);
    }
}

std::vector<std::size_t> BalancedBatcher::next() {
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_));
    const int k = data_->k;
    const int base = batch_ / k;
    const int extra = batch_ % k;
    for (int cls = 0; cls < k; ++cls) {
        const int quota = base + (cls < extra ? 1 : 0);
        auto& q = queues_[static_cast<std::size_t>(cls)];
        auto& cur = cursor_[static_cast<std::size_t>(cls)];
        for (int i = 0; i < quota; ++i) {
            if (cur == q.size()) {
                std::shuffle(q.begin(), q.end(), *rng_);
                cur = 0;
            }
            out.push_back(q[cur++]);
        }
    }
    return out;
}

// ---- RunLog -------------------------------------------------------------------

void RunLog::append(EpochRecord rec) {
    if (!records.empty()) {
        const auto& last = records.back();
        const bool ordered = rec.phase > last.phase ||
                             (rec.phase == last.phase && rec.epoch > last.epoch);
        if (!ordered) {
            throw UsageError("run log: records must advance in (phase, epoch) order");
        }
    }
    records.push_back(rec);
}

void RunLog::merge(const RunLog& other) {
    for (const auto& rec : other.records) append(rec);
    phase1_classifier_updates += other.phase1_classifier_updates;
    phase1_augmenter_updates += other.phase1_augmenter_updates;
    phase2_classifier_updates += other.phase2_classifier_updates;
    balance_violations += other.balance_violations;
}

void RunLog::write_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    auto field = [](double v) {
        return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
    };
    for (const auto& rec : records) {
        nlohmann::json line{{"phase", rec.phase},       {"epoch", rec.epoch},
                            {"loss_C", field(rec.loss_C)}, {"loss_G", field(rec.loss_G)},
                            {"train_acc", field(rec.train_acc)},
                            {"test_acc", field(rec.test_acc)}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

// ---- evaluation ------------------------------------------------------------------

double evaluate(const ClassifierNet& clf, const Dataset& test) {
    if (test.samples.empty()) throw UsageError("evaluate: empty test set");
    const std::size_t chunk = 512;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        const std::size_t stop = std::min(test.size(), start + chunk);
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = start; i < stop; ++i) idx[i - start] = i;
        auto logits = classify(clf, gather_samples(test, idx), false);
        auto preds = predict_batch(logits, clf.head(), clf.k());
        for (std::size_t i = start; i < stop; ++i) {
            if (preds[i - start] == test.samples[i].y) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// ---- phase I ---------------------------------------------------------------------

RunLog train_phase1(AugmenterNet& aug, ClassifierNet& clf, const Dataset& data,
                    const TrainConfig& cfg, const Dataset* test) {
    const int k = data.k;
    cfg.validate(k);
    if (clf.k() != k || aug.k() != k) {
        throw ConfigError("phase 1: model class count does not match the dataset");
    }
    if (aug.d_out() != data.dim() || clf.d_in() != data.dim()) {
        throw DimensionError("phase 1: model feature widths do not match the dataset");
    }
    if (clf.head() == HeadMode::plain_k) {
        throw UsageError("phase 1: a plain classifier head has no adversarial objective");
    }
    const bool use_fm = clf.head() != HeadMode::binary && cfg.lambda_fm > 0.0;

    std::mt19937_64 rng(mix_seed(cfg.seed, 1));
    BalancedBatcher batcher(data, cfg.batch, &rng);
    Adam adam_c(clf.parameters(), cfg.adam);
    Adam adam_g(aug.parameters(), cfg.adam);

    RunLog log;
    const auto steps = ceil_div(data.size(), static_cast<std::size_t>(cfg.batch));
    for (int epoch = 1; epoch <= cfg.k_g; ++epoch) {
        double loss_c_sum = 0.0, loss_g_sum = 0.0;
        long g_updates = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            auto idx = batcher.next();
            auto x_real = gather_samples(data, idx);
            auto y_real = gather_labels(data, idx);
            log.balance_violations += count_missing_classes(y_real, k);

            // classifier update: real toward its class, generated toward the
            // matching generated-group index (labels drawn uniformly)
            adam_c.zero_grad();
            adam_g.zero_grad();
            auto y_gen = draw_uniform_labels(rng, cfg.batch, k);
            auto x_gen = augment(aug, draw_latents(rng, cfg.batch, cfg.d_z), y_gen).detach();
            auto logits_real = classify(clf, x_real, true, &rng);
            auto logits_gen = classify(clf, x_gen, true, &rng);
            Tensor lc;
            if (clf.head() == HeadMode::two_k) {
                lc = loss_C_phase1(logits_real, y_real, logits_gen, y_gen, k);
            } else {
                const auto mode = clf.head() == HeadMode::binary ? BaselineMode::vanilla_2class
                                                                 : BaselineMode::k_plus_one;
                auto combined = concat(logits_real, logits_gen, 0);
                std::vector<int> labels = y_real;
                labels.insert(labels.end(), y_gen.begin(), y_gen.end());
                std::vector<bool> flags(labels.size(), false);
                std::fill(flags.begin(), flags.begin() + static_cast<long>(y_real.size()),
                          true);
                lc = loss_baseline(mode, combined, labels, flags, k);
            }
            backward(lc);
            adam_c.step();
            ++log.phase1_classifier_updates;
            loss_c_sum += lc.item();

            // augmenter updates: fresh latents, labels equal to the real batch
            for (int inner = 0; inner < cfg.g_inner; ++inner) {
                adam_c.zero_grad();
                adam_g.zero_grad();
                auto x_fake = augment(aug, draw_latents(rng, cfg.batch, cfg.d_z), y_real);
                auto logits_fake = classify(clf, x_fake, true, &rng);
                Tensor lg;
                if (clf.head() == HeadMode::two_k) {
                    lg = loss_G_phase1(logits_fake, y_real, k);
                } else {
                    const auto mode = clf.head() == HeadMode::binary
                                          ? BaselineMode::vanilla_2class
                                          : BaselineMode::k_plus_one;
                    lg = loss_baseline_G(mode, logits_fake, y_real, k);
                }
                if (use_fm) {
                    auto fm = loss_feature_matching(features(clf, x_real), y_real,
                                                    features(clf, x_fake), y_real, k);
                    lg = loss_G_total(lg, fm, cfg.lambda_fm);
                }
                backward(lg);
                adam_g.step();
                ++log.phase1_augmenter_updates;
                loss_g_sum += lg.item();
                ++g_updates;
            }
        }

        EpochRecord rec;
        rec.phase = 1;
        rec.epoch = epoch;
        rec.loss_C = loss_c_sum / static_cast<double>(steps);
        rec.loss_G = g_updates > 0 ? loss_g_sum / static_cast<double>(g_updates) : kNaN;
        rec.train_acc = kNaN;
        rec.test_acc = kNaN;
        if (head_predicts(clf.head()) && eval_now(cfg, epoch, cfg.k_g)) {
            rec.train_acc = evaluate(clf, data);
            if (test != nullptr) rec.test_acc = evaluate(clf, *test);
        }
        log.append(rec);
    }
    return log;
}

// ---- phase II --------------------------------------------------------------------

RunLog train_phase2(const AugmenterNet& aug, ClassifierNet& clf, const Dataset& data,
                    const TrainConfig& cfg, const Dataset* test) {
    const int k = data.k;
    cfg.validate(k);
    if (!aug.frozen()) {
        throw UsageError("phase 2: the augmenter must be frozen (data provider only)");
    }
    if (clf.k() != k || aug.k() != k) {
        throw ConfigError("phase 2: model class count does not match the dataset");
    }
    if (clf.head() != HeadMode::two_k && clf.head() != HeadMode::k_plus_one) {
        throw UsageError("phase 2: classifier head carries no class structure to train");
    }
    const std::uint64_t checksum_before = parameter_checksum(aug.parameters());

    std::mt19937_64 rng(mix_seed(cfg.seed, 2));
    BalancedBatcher batcher(data, cfg.batch, &rng);
    Adam adam_c(clf.parameters(), cfg.adam);

    // optional fixed pool: augmentation_ratio * |D| samples drawn once
    Tensor pool_x;
    std::vector<int> pool_y;
    std::size_t pool_cursor = 0;
    if (cfg.fixed_generated_set) {
        const auto pool_n =
            static_cast<int>(data.size() * static_cast<std::size_t>(cfg.augmentation_ratio));
        pool_y = draw_uniform_labels(rng, pool_n, k);
        pool_x = augment(aug, draw_latents(rng, pool_n, cfg.d_z), pool_y).detach();
    }
    auto next_generated = [&](int n) -> std::pair<Tensor, std::vector<int>> {
        if (!cfg.fixed_generated_set) {
            auto y = draw_uniform_labels(rng, n, k);
            return {augment(aug, draw_latents(rng, n, cfg.d_z), y), y};
        }
        std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const std::size_t j = (pool_cursor + static_cast<std::size_t>(i)) % pool_y.size();
            rows[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(j);
            y[static_cast<std::size_t>(i)] = pool_y[j];
        }
        pool_cursor = (pool_cursor + static_cast<std::size_t>(n)) % pool_y.size();
        return {select_rows(pool_x, rows), y};
    };

    RunLog log;
    const auto steps =
        ceil_div(data.size() * static_cast<std::size_t>(cfg.augmentation_ratio),
                 static_cast<std::size_t>(cfg.batch));
    for (int epoch = 1; epoch <= cfg.k_c; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            auto idx = batcher.next();
            auto x_real = gather_samples(data, idx);
            auto y_real = gather_labels(data, idx);
            log.balance_violations += count_missing_classes(y_real, k);

            adam_c.zero_grad();
            auto [x_gen, y_gen] = next_generated(cfg.batch);
            auto logits_real = classify(clf, x_real, true, &rng);
            auto logits_gen = classify(clf, x_gen, true, &rng);
            Tensor loss;
            if (clf.head() == HeadMode::two_k) {
                loss = loss_C_phase2(logits_real, y_real, logits_gen, y_gen, k);
            } else {
                auto combined = concat(logits_real, logits_gen, 0);
                std::vector<int> labels = y_real;
                labels.insert(labels.end(), y_gen.begin(), y_gen.end());
                std::vector<bool> flags(labels.size(), false);
                std::fill(flags.begin(), flags.begin() + static_cast<long>(y_real.size()),
                          true);
                loss = loss_baseline(BaselineMode::k_plus_one, combined, labels, flags, k);
            }
            backward(loss);
            adam_c.step();
            ++log.phase2_classifier_updates;
            loss_sum += loss.item();
        }

        EpochRecord rec;
        rec.phase = 2;
        rec.epoch = epoch;
        rec.loss_C = loss_sum / static_cast<double>(steps);
        rec.loss_G = kNaN;
        rec.train_acc = kNaN;
        rec.test_acc = kNaN;
        if (eval_now(cfg, epoch, cfg.k_c)) {
            rec.train_acc = evaluate(clf, data);
            if (test != nullptr) rec.test_acc = evaluate(clf, *test);
        }
        log.append(rec);
    }

    if (parameter_checksum(aug.parameters()) != checksum_before) {
        throw UsageError("phase 2: augmenter parameters changed while frozen");
    }
    return log;
}

// ---- plain classifier training ------------------------------------------------------

RunLog train_classifier_plain(ClassifierNet& clf, const Dataset& data, const TrainConfig& cfg,
                              const Dataset* test, const SampleProvider* provider) {
    const int k = data.k;
    cfg.validate(k);
    if (clf.head() != HeadMode::plain_k) {
        throw UsageError("plain training needs a plain k-way classifier head");
    }
    if (clf.k() != k) throw ConfigError("plain training: classifier k does not match data");

    std::mt19937_64 rng(mix_seed(cfg.seed, 2));
    BalancedBatcher batcher(data, cfg.batch, &rng);
    Adam adam_c(clf.parameters(), cfg.adam);

    const std::size_t volume =
        provider != nullptr ? data.size() * static_cast<std::size_t>(cfg.augmentation_ratio)
                            : data.size();
    const auto steps = ceil_div(volume, static_cast<std::size_t>(cfg.batch));

    RunLog log;
    for (int epoch = 1; epoch <= cfg.k_c; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            auto idx = batcher.next();
            auto x = gather_samples(data, idx);
            auto y = gather_labels(data, idx);
            log.balance_violations += count_missing_classes(y, k);

            adam_c.zero_grad();
            Tensor logits;
            if (provider != nullptr) {
                auto [x_extra, y_extra] = (*provider)(cfg.batch, rng);
                logits = concat(classify(clf, x, true, &rng),
                                classify(clf, x_extra, true, &rng), 0);
                y.insert(y.end(), y_extra.begin(), y_extra.end());
            } else {
                logits = classify(clf, x, true, &rng);
            }
            auto loss = loss_plain_ce(logits, y, k);
            backward(loss);
            adam_c.step();
            ++log.phase2_classifier_updates;
            loss_sum += loss.item();
        }

        EpochRecord rec;
        rec.phase = 2;
        rec.epoch = epoch;
        rec.loss_C = loss_sum / static_cast<double>(steps);
        rec.loss_G = kNaN;
        rec.train_acc = kNaN;
        rec.test_acc = kNaN;
        if (eval_now(cfg, epoch, cfg.k_c)) {
            rec.train_acc = evaluate(clf, data);
            if (test != nullptr) rec.test_acc = evaluate(clf, *test);
        }
        log.append(rec);
    }
    return log;
}

}  // namespace dada
