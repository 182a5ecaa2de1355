// Acceptance gate. Runs the release criteria end to end and prints one
// PASS/FAIL line per criterion; exits nonzero if any criterion fails.
// Tolerances are pinned here, next to the checks that use them.
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dada/data.hpp"
#include "dada/gradcheck_suite.hpp"
#include "dada/harness.hpp"
#include "dada/losses.hpp"
#include "dada/models.hpp"
#include "dada/rng.hpp"
#include "dada/tensor.hpp"
#include "dada/trainer.hpp"

namespace {

using namespace dada;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

template <typename Fn>
void criterion(const char* name, Fn fn) {
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) failures++;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    va_list args;
    va_start(args, f);
    char buf[512];
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

bool bits_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

// ---- criterion 1: gradient suite ------------------------------------------

Outcome check_gradient_suite() {
    const double tol = 1e-4;
    const int per_case = 100;
    const double budget_s = 60.0;
    auto t0 = std::chrono::steady_clock::now();
    GradSuiteReport rep = run_gradient_suite(0, per_case, tol);
    double dt = seconds_since(t0);

    double worst = 0.0;
    bool counts_ok = !rep.cases.empty();
    for (const auto& c : rep.cases) {
        worst = std::max(worst, c.worst_rel_err);
        if (c.instances < per_case) counts_ok = false;
    }
    bool pass = rep.all_passed() && counts_ok && dt < budget_s;
    return {pass, fmt("%zu families, %ld checks, worst rel err %.2e (tol %.0e), %.1f s (budget %.0f s)",
                      rep.cases.size(), rep.total_instances(), worst, tol, dt, budget_s)};
}

// ---- criterion 2: two-group labels, folding, prediction --------------------

Outcome check_labels_and_folding() {
    const double fold_tol = 1e-9;

    // k=2 reference targets: real class 1 hits index 1, generated class 1
    // hits index k+1 = 3 (1-based), as length-4 one-hot vectors.
    auto real1 = build_2k_target(1, true, 2).t;
    auto fake1 = build_2k_target(1, false, 2).t;
    if (real1 != std::vector<double>{1, 0, 0, 0}) {
        return {false, "real class-1 target is not [1,0,0,0]"};
    }
    if (fake1 != std::vector<double>{0, 0, 1, 0}) {
        return {false, "generated class-1 target is not [0,0,1,0]"};
    }

    std::mt19937_64 rng(424242);
    std::normal_distribution<double> logit(0.0, 4.0);
    std::uniform_real_distribution<double> shift(-25.0, 25.0);
    const int trials = 100000;
    double worst_sum = 0.0;
    long shift_mismatch = 0;
    for (int t = 0; t < trials; ++t) {
        int k = 1 + static_cast<int>(rng() % 5);
        std::vector<double> lo(2 * static_cast<std::size_t>(k));
        for (auto& v : lo) v = logit(rng);

        // stable softmax, then folded class distribution must renormalize
        double mx = lo[0];
        for (double v : lo) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : lo) z += std::exp(v - mx);
        std::vector<double> p(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) p[i] = std::exp(lo[i] - mx) / z;
        FoldedDistribution q = fold(TwoKDistribution(p));
        double s = 0.0;
        for (double v : q.q) s += v;
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));

        Tensor a = Tensor::from({static_cast<std::int64_t>(lo.size())}, lo);
        double c = shift(rng);
        std::vector<double> lo2 = lo;
        for (auto& v : lo2) v += c;
        Tensor b = Tensor::from({static_cast<std::int64_t>(lo.size())}, lo2);
        if (predict(a, HeadMode::two_k, k) != predict(b, HeadMode::two_k, k)) shift_mismatch++;
    }
    bool pass = worst_sum <= fold_tol && shift_mismatch == 0;
    return {pass, fmt("targets exact; fold sums off by <= %.2e over %d draws (tol %.0e); "
                      "%ld shift-variant predictions",
                      worst_sum, trials, fold_tol, shift_mismatch)};
}

// ---- criterion 3: loss identities ------------------------------------------

Outcome check_loss_identities() {
    const double tol = 1e-12;
    std::mt19937_64 rng(1337);
    std::normal_distribution<double> nd(0.0, 2.0);

    // (i) at k=1 the two-group objective collapses to the plain real/fake GAN
    double worst_i = 0.0;
    for (int t = 0; t < 1000; ++t) {
        int b = 1 + static_cast<int>(rng() % 8);
        std::vector<double> vr(2 * static_cast<std::size_t>(b)), vf(vr.size());
        for (auto& v : vr) v = nd(rng);
        for (auto& v : vf) v = nd(rng);
        Tensor lr = Tensor::from({b, 2}, vr);
        Tensor lf = Tensor::from({b, 2}, vf);
        std::vector<int> ys(static_cast<std::size_t>(b), 1);

        std::vector<double> mixed = vr;
        mixed.insert(mixed.end(), vf.begin(), vf.end());
        Tensor both = Tensor::from({2 * b, 2}, mixed);
        std::vector<int> labels(2 * static_cast<std::size_t>(b), 1);
        std::vector<bool> is_real(2 * static_cast<std::size_t>(b), false);
        for (int i = 0; i < b; ++i) is_real[static_cast<std::size_t>(i)] = true;

        double two_group = loss_C_phase1(lr, ys, lf, ys, 1).item();
        double vanilla = loss_baseline(BaselineMode::vanilla_2class, both, labels, is_real, 1).item();
        worst_i = std::max(worst_i, std::abs(two_group - vanilla));

        double g2 = loss_G_phase1(lf, ys, 1).item();
        double gv = loss_baseline_G(BaselineMode::vanilla_2class, lf, ys, 1).item();
        worst_i = std::max(worst_i, std::abs(g2 - gv));
    }

    // (ii) the folded objective treats the real and generated batches with the
    // same term: identical logits and labels give exactly equal halves
    bool exact_ii = true;
    for (int t = 0; t < 1000; ++t) {
        int k = 1 + static_cast<int>(rng() % 5);
        int b = 1 + static_cast<int>(rng() % 8);
        std::vector<double> v(static_cast<std::size_t>(b) * 2 * k);
        for (auto& x : v) x = nd(rng);
        Tensor lo = Tensor::from({b, 2 * k}, v);
        std::vector<int> ys(static_cast<std::size_t>(b));
        for (auto& y : ys) y = 1 + static_cast<int>(rng() % k);
        std::vector<std::int64_t> a(ys.size()), bb(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) {
            a[i] = ys[i] - 1;
            bb[i] = k + ys[i] - 1;
        }
        double one_term = folded_group_cross_entropy(lo, a, bb).item();
        double total = loss_C_phase2(lo, ys, lo, ys, k).item();
        if (!bits_equal(total, one_term + one_term)) exact_ii = false;
    }

    // (iii) lambda = 0 returns the generation loss node itself
    Tensor lf = Tensor::from({2, 4}, {0.3, -1.0, 0.2, 0.9, 1.4, -0.2, 0.0, 0.5});
    Tensor g = loss_G_phase1(lf, {1, 2}, 2);
    Tensor fm = Tensor::scalar(3.75);
    Tensor total = loss_G_total(g, fm, 0.0);
    bool exact_iii = total.node() == g.node() && bits_equal(total.item(), g.item());

    bool pass = worst_i <= tol && exact_ii && exact_iii;
    return {pass, fmt("k=1 two-group vs real/fake off by <= %.2e (tol %.0e); folded halves %s; "
                      "lambda=0 identity %s",
                      worst_i, tol, exact_ii ? "bit-equal" : "DIFFER",
                      exact_iii ? "holds" : "BROKEN")};
}

// ---- criterion 4: adam against a scalar re-implementation ------------------

Outcome check_adam_oracle() {
    const double traj_tol = 1e-12;
    const double first_tol = 1e-9;

    AdamConfig acfg;
    acfg.lr = 0.01;
    std::vector<double> w0 = {0.8, -1.2, 2.0, -0.31, 0.05};

    Tensor w = Tensor::from({5}, w0, true);
    w.set_name("w");
    Adam opt({w}, acfg);

    // independent scalar Adam on f(w) = sum w_i^2, gradient 2w
    std::vector<double> wo = w0, m(w0.size(), 0.0), v(w0.size(), 0.0);
    double worst = 0.0;
    for (int t = 1; t <= 10; ++t) {
        opt.zero_grad();
        Tensor loss = sum_all(mul(w, w));
        backward(loss);
        opt.step();

        for (std::size_t i = 0; i < wo.size(); ++i) {
            double g = 2.0 * wo[i];
            m[i] = acfg.beta1 * m[i] + (1.0 - acfg.beta1) * g;
            v[i] = acfg.beta2 * v[i] + (1.0 - acfg.beta2) * g * g;
            double mh = m[i] / (1.0 - std::pow(acfg.beta1, t));
            double vh = v[i] / (1.0 - std::pow(acfg.beta2, t));
            wo[i] -= acfg.lr * mh / (std::sqrt(vh) + acfg.eps);
        }
        for (std::size_t i = 0; i < wo.size(); ++i) {
            worst = std::max(worst, std::abs(w.values()[i] - wo[i]));
        }
    }

    // bias correction makes the very first step size equal the learning rate
    Tensor w2 = Tensor::from({3}, {0.5, -0.75, 2.0}, true);
    Adam opt2({w2}, acfg);
    Tensor loss2 = sum_all(mul(w2, w2));
    backward(loss2);
    opt2.step();
    double worst_first = 0.0;
    std::vector<double> w2_0 = {0.5, -0.75, 2.0};
    for (std::size_t i = 0; i < w2_0.size(); ++i) {
        worst_first = std::max(worst_first, std::abs(std::abs(w2.values()[i] - w2_0[i]) - acfg.lr));
    }

    bool pass = worst <= traj_tol && worst_first <= first_tol;
    return {pass, fmt("10-step trajectory off by <= %.2e (tol %.0e); first step within %.2e of lr "
                      "(tol %.0e)",
                      worst, traj_tol, worst_first, first_tol)};
}

// ---- criterion 5: training determinism and run contracts --------------------

bool logs_bit_identical(const RunLog& a, const RunLog& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& x = a.records[i];
        const auto& y = b.records[i];
        if (x.phase != y.phase || x.epoch != y.epoch) return false;
        if (!bits_equal(x.loss_C, y.loss_C) || !bits_equal(x.loss_G, y.loss_G)) return false;
        if (!bits_equal(x.train_acc, y.train_acc) || !bits_equal(x.test_acc, y.test_acc)) {
            return false;
        }
    }
    return a.phase1_classifier_updates == b.phase1_classifier_updates &&
           a.phase1_augmenter_updates == b.phase1_augmenter_updates &&
           a.phase2_classifier_updates == b.phase2_classifier_updates &&
           a.balance_violations == b.balance_violations;
}

Outcome check_training_contracts() {
    auto means = circle_means(3, 2.0);
    Dataset train = gen_gaussian_mixture(3, 20, means, 0.3, 5);
    Dataset test = gen_gaussian_mixture(3, 30, means, 0.3, 6);

    TrainConfig cfg;
    cfg.k_g = 50;
    cfg.k_c = 50;
    cfg.batch = 12;
    cfg.d_z = 8;
    cfg.eval_every = 10;
    cfg.seed = 7;

    struct RunOut {
        RunLog l1, l2;
        std::uint64_t pre = 0, post = 0;
    };
    auto one_run = [&]() {
        RunOut r;
        AugmenterNet aug = AugmenterNet::make(cfg.d_z, 3, {16}, 2, 21);
        ClassifierNet clf = ClassifierNet::make(2, 3, HeadMode::two_k, {16}, cfg.input_sigma,
                                                -1, 22);
        r.l1 = train_phase1(aug, clf, train, cfg, &test);
        aug.freeze();
        r.pre = parameter_checksum(aug.parameters());
        r.l2 = train_phase2(aug, clf, train, cfg, &test);
        r.post = parameter_checksum(aug.parameters());
        return r;
    };

    RunOut a = one_run();
    RunOut b = one_run();

    bool identical = logs_bit_identical(a.l1, b.l1) && logs_bit_identical(a.l2, b.l2);
    bool frozen_ok = a.pre == a.post && b.pre == b.post;
    long violations = a.l1.balance_violations + a.l2.balance_violations +
                      b.l1.balance_violations + b.l2.balance_violations;
    bool pass = identical && frozen_ok && violations == 0;
    return {pass, fmt("two 50-epoch runs %s; provider checksum %s across the classification "
                      "phase; %ld unbalanced batches",
                      identical ? "bit-identical" : "DIVERGED",
                      frozen_ok ? "unchanged" : "CHANGED", violations)};
}

// ---- criteria 6 and 7: the low-data benchmark -------------------------------

struct BenchState {
    bool ran = false;
    double c_mean = std::nan("");
    double dada_mean = std::nan("");
};
BenchState bench;

const SummaryRow* find_row(const ExperimentResult& r, Mode m) {
    for (const auto& row : r.summary) {
        if (row.mode == m && row.n_per_class == 5) return &row;
    }
    return nullptr;
}

fs::path bench_root() {
    return fs::temp_directory_path() / "dada_acceptance_bench";
}

ExperimentSpec bench_spec(std::vector<Mode> modes, const char* sub) {
#ifndef DADA_ACCEPTANCE_CFG
#error "DADA_ACCEPTANCE_CFG must point at the benchmark config"
#endif
    ExperimentSpec spec = spec_from_config(parse_config_file(DADA_ACCEPTANCE_CFG));
    spec.modes = std::move(modes);
    spec.out_dir = (bench_root() / sub).string();
    unsigned hw = std::thread::hardware_concurrency();
    spec.workers = static_cast<int>(std::max(1u, std::min(4u, hw)));
    return spec;
}

Outcome check_low_data_margin() {
    const double margin = 0.02;
    const double band_lo = 0.70, band_hi = 0.85;
    const double budget_s = 600.0;

    std::error_code ec;
    fs::remove_all(bench_root(), ec);  // never resume from stale cells

    ExperimentSpec spec = bench_spec({Mode::c, Mode::dada}, "margin");
    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res = run_experiment(spec);
    double dt = seconds_since(t0);

    long failed = 0;
    for (const auto& c : res.cells) {
        if (!c.ok) failed++;
    }
    const SummaryRow* c_row = find_row(res, Mode::c);
    const SummaryRow* d_row = find_row(res, Mode::dada);
    if (!c_row || !d_row) return {false, "summary rows missing"};

    bench.ran = true;
    bench.c_mean = c_row->mean_acc;
    bench.dada_mean = d_row->mean_acc;

    bool band_ok = c_row->mean_acc >= band_lo && c_row->mean_acc <= band_hi;
    bool margin_ok = d_row->mean_acc >= c_row->mean_acc + margin;
    bool seeds_ok = c_row->n_seeds == 10 && d_row->n_seeds == 10 && failed == 0;
    bool pass = band_ok && margin_ok && seeds_ok && dt < budget_s;
    return {pass, fmt("plain %.4f (band [%.2f, %.2f]); augmented %.4f (needs >= plain + %.2f); "
                      "%ld failed cells; %.0f s (budget %.0f s)",
                      c_row->mean_acc, band_lo, band_hi, d_row->mean_acc, margin, failed, dt,
                      budget_s)};
}

Outcome check_generator_baseline_ordering() {
    const double tie = 0.01;
    if (!bench.ran) return {false, "margin benchmark did not produce means"};

    ExperimentSpec spec = bench_spec({Mode::vanilla_gan}, "ordering");
    ExperimentResult res = run_experiment(spec);
    long failed = 0;
    for (const auto& c : res.cells) {
        if (!c.ok) failed++;
    }
    const SummaryRow* v_row = find_row(res, Mode::vanilla_gan);
    if (!v_row) return {false, "summary row missing"};

    bool pass = failed == 0 && v_row->n_seeds == 10 &&
                bench.dada_mean >= v_row->mean_acc - tie;
    return {pass, fmt("class-conditional %.4f vs per-class ensemble %.4f (ties within %.2f); "
                      "%ld failed cells",
                      bench.dada_mean, v_row->mean_acc, tie, failed)};
}

// ---- criterion 8: data layer -------------------------------------------------

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void push_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

std::vector<unsigned char> read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome check_data_layer() {
    // (a) IDX pair -> dataset -> re-encoded IDX pair, byte for byte
    fs::path dir = fs::temp_directory_path() / "dada_acceptance_idx";
    fs::create_directories(dir);
    fs::path img_path = dir / "images.idx";
    fs::path lab_path = dir / "labels.idx";

    const unsigned h = 2, w = 3, n = 4;
    std::mt19937_64 rng(99);
    std::vector<std::vector<unsigned char>> images(n);
    std::vector<unsigned char> labels = {0, 2, 9, 2};
    for (auto& im : images) {
        im.resize(h * w);
        for (auto& px : im) px = static_cast<unsigned char>(rng() % 256);
    }
    images[0] = {0, 255, 1, 254, 127, 128};  // endpoint and mid-range bytes

    {
        std::ofstream img(img_path, std::ios::binary | std::ios::trunc);
        write_be32(img, 0x00000803u);
        write_be32(img, n);
        write_be32(img, h);
        write_be32(img, w);
        for (const auto& im : images) {
            img.write(reinterpret_cast<const char*>(im.data()),
                      static_cast<std::streamsize>(im.size()));
        }
        std::ofstream lab(lab_path, std::ios::binary | std::ios::trunc);
        write_be32(lab, 0x00000801u);
        write_be32(lab, n);
        lab.write(reinterpret_cast<const char*>(labels.data()),
                  static_cast<std::streamsize>(labels.size()));
    }

    Dataset d = load_idx(img_path.string(), lab_path.string());
    std::vector<unsigned char> img_bytes, lab_bytes;
    push_be32(img_bytes, 0x00000803u);
    push_be32(img_bytes, static_cast<std::uint32_t>(d.size()));
    push_be32(img_bytes, static_cast<std::uint32_t>(d.h));
    push_be32(img_bytes, static_cast<std::uint32_t>(d.w));
    push_be32(lab_bytes, 0x00000801u);
    push_be32(lab_bytes, static_cast<std::uint32_t>(d.size()));
    for (const auto& s : d.samples) {
        for (double v : s.x) {
            img_bytes.push_back(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5)));
        }
        lab_bytes.push_back(static_cast<unsigned char>(s.y - 1));
    }
    bool idx_ok = img_bytes == read_all(img_path) && lab_bytes == read_all(lab_path);

    // (b) subsampling: deterministic, exact per-class counts, subset of the pool
    auto means = circle_means(3, 2.0);
    Dataset pool = gen_gaussian_mixture(3, 50, means, 0.5, 11);
    SubsampleSpec ss;
    ss.n_per_class = 7;
    ss.seed = 42;
    Dataset s1 = subsample(pool, ss);
    Dataset s2 = subsample(pool, ss);
    bool sub_det = s1.size() == s2.size();
    if (sub_det) {
        for (std::size_t i = 0; i < s1.size(); ++i) {
            if (s1.samples[i].x != s2.samples[i].x || s1.samples[i].y != s2.samples[i].y) {
                sub_det = false;
                break;
            }
        }
    }
    auto counts = s1.class_counts();
    bool sub_counts = counts == std::vector<std::size_t>{7, 7, 7};
    long not_in_pool = 0;
    for (const auto& s : s1.samples) {
        bool found = false;
        for (const auto& p : pool.samples) {
            if (p.y == s.y && p.x == s.x) {
                found = true;
                break;
            }
        }
        if (!found) not_in_pool++;
    }

    // (c) classic augmentation keeps every source label, 10^4 samples
    auto means5 = circle_means(5, 2.0);
    Dataset src = gen_gaussian_mixture(5, 2000, means5, 0.5, 31);
    AugmentOps ops;
    ops.jitter = true;
    ops.jitter_sigma = 0.2;
    Dataset aug = traditional_augment(src, ops, 2, 77);
    long label_violations = 0;
    if (aug.size() != 2 * src.size()) label_violations = -1;
    if (label_violations == 0) {
        for (std::size_t i = 0; i < aug.size(); ++i) {
            if (aug.samples[i].y != src.samples[i % src.size()].y) label_violations++;
        }
    }

    bool pass = idx_ok && sub_det && sub_counts && not_in_pool == 0 && label_violations == 0;
    return {pass, fmt("idx re-encode %s; subsample %s with counts %s, %ld strays; "
                      "%ld label violations across %zu augmented rows",
                      idx_ok ? "byte-exact" : "DIFFERS", sub_det ? "deterministic" : "UNSTABLE",
                      sub_counts ? "exact" : "WRONG", not_in_pool, label_violations, aug.size())};
}

}  // namespace

int main() {
    criterion("gradient suite", check_gradient_suite);
    criterion("two-group labels and folding", check_labels_and_folding);
    criterion("loss identities", check_loss_identities);
    criterion("adam bias-corrected steps", check_adam_oracle);
    criterion("training determinism and contracts", check_training_contracts);
    criterion("low-data benchmark margin", check_low_data_margin);
    criterion("generator-baseline ordering", check_generator_baseline_ordering);
    criterion("data layer round trips", check_data_layer);

    std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}
