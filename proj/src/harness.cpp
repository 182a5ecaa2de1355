#include "dada/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dada/error.hpp"
#include "dada/losses.hpp"
#include "dada/rng.hpp"

namespace fs = std::filesystem;

namespace dada {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---- small parsing/formatting helpers --------------------------------------------

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' needs an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto x = std::stoull(v, &used);
        if (used != v.size() || !v.empty() && v[0] == '-') throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' needs a non-negative integer, got '" + v +
                          "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' needs a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' needs true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    return nlohmann::json(v).dump();  // shortest round-trip form
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T, typename F>
std::string join_list(const std::vector<T>& xs, F fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += fmt(xs[i]);
    }
    return out;
}

nlohmann::json acc_json(double v) {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

double acc_from_json(const nlohmann::json& j) {
    return j.is_null() ? kNaN : j.get<double>();
}

// ---- cells ----------------------------------------------------------------------

std::string cell_key(Mode mode, int n, std::uint64_t seed) {
    return mode_name(mode) + "_n" + std::to_string(n) + "_s" + std::to_string(seed);
}

nlohmann::json cell_to_json(const CellResult& c) {
    return nlohmann::json{{"mode", mode_name(c.mode)}, {"n_per_class", c.n_per_class},
                          {"seed", c.seed},           {"ok", c.ok},
                          {"error", c.error},         {"test_acc", acc_json(c.test_acc)},
                          {"runlog", c.runlog_path}};
}

CellResult cell_from_json(const nlohmann::json& j) {
    CellResult c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.n_per_class = j.at("n_per_class").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ok = j.at("ok").get<bool>();
    c.error = j.at("error").get<std::string>();
    c.test_acc = acc_from_json(j.at("test_acc"));
    c.runlog_path = j.at("runlog").get<std::string>();
    return c;
}

Tensor draw_latents(std::mt19937_64& rng, std::int64_t n, std::int64_t d_z) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> z(static_cast<std::size_t>(n * d_z));
    for (auto& v : z) v = dist(rng);
    return Tensor::from({n, d_z}, std::move(z));
}

// per-class generator ensemble: binary-loss generator trained on each class
// alone, samples labeled by their generator's index
std::vector<AugmenterNet> train_class_generators(const ExperimentSpec& spec,
                                                 const Dataset& d, const TrainConfig& cfg,
                                                 std::uint64_t seed) {
    std::vector<AugmenterNet> gens;
    for (int cls = 1; cls <= d.k; ++cls) {
        std::vector<LabeledSample> members;
        for (const auto& s : d.samples) {
            if (s.y == cls) members.push_back({s.x, 1});
        }
        auto sub = Dataset::vectors(std::move(members), 1);
        auto gen = AugmenterNet::make(cfg.d_z, 1, spec.aug_hidden, d.dim(),
                                      mix_seed(seed, 20 + static_cast<std::uint64_t>(cls)));
        auto disc = ClassifierNet::make(d.dim(), 1, HeadMode::binary, spec.clf_hidden,
                                        cfg.input_sigma, spec.feature_tap,
                                        mix_seed(seed, 40 + static_cast<std::uint64_t>(cls)));
        TrainConfig gcfg = cfg;
        gcfg.seed = mix_seed(seed, 60 + static_cast<std::uint64_t>(cls));
        train_phase1(gen, disc, sub, gcfg);
        gen.freeze();
        gens.push_back(std::move(gen));
    }
    return gens;
}

CellResult run_cell(const ExperimentSpec& spec, const Dataset& pool, const Dataset& test,
                    Mode mode, int n, std::uint64_t seed, const fs::path& out_dir) {
    CellResult cell;
    cell.mode = mode;
    cell.n_per_class = n;
    cell.seed = seed;
    cell.test_acc = kNaN;
    try {
        auto d = subsample(pool, SubsampleSpec{n, mix_seed(seed, 10)});
        TrainConfig cfg = spec.train;
        cfg.seed = seed;
        const auto dim = pool.dim();
        const int k = pool.k;
        auto make_clf = [&](HeadMode head) {
            return ClassifierNet::make(dim, k, head, spec.clf_hidden, cfg.input_sigma,
                                       spec.feature_tap, mix_seed(seed, 12));
        };
        auto classically_augmented = [&] {
            return traditional_augment(d, spec.aug_ops, spec.aug_multiplier,
                                       mix_seed(seed, 13));
        };

        RunLog log;
        ClassifierNet clf = make_clf(HeadMode::plain_k);
        switch (mode) {
            case Mode::c:
                log = train_classifier_plain(clf, d, cfg, &test);
                break;
            case Mode::c_aug: {
                auto da = classically_augmented();
                log = train_classifier_plain(clf, da, cfg, &test);
                break;
            }
            case Mode::dada:
            case Mode::dada_aug:
            case Mode::k_plus_one: {
                const Dataset base = mode == Mode::dada_aug ? classically_augmented() : d;
                auto aug = AugmenterNet::make(cfg.d_z, k, spec.aug_hidden, dim,
                                              mix_seed(seed, 11));
                clf = make_clf(mode == Mode::k_plus_one ? HeadMode::k_plus_one
                                                        : HeadMode::two_k);
                log = train_phase1(aug, clf, base, cfg, &test);
                aug.freeze();
                log.merge(train_phase2(aug, clf, base, cfg, &test));
                break;
            }
            case Mode::vanilla_gan: {
                auto gens = train_class_generators(spec, d, cfg, seed);
                SampleProvider provider = [&](int nb, std::mt19937_64& rng) {
                    std::uniform_int_distribution<int> pick(1, k);
                    std::vector<int> y(static_cast<std::size_t>(nb));
                    for (auto& v : y) v = pick(rng);
                    std::vector<double> values(static_cast<std::size_t>(nb) *
                                               static_cast<std::size_t>(dim));
                    for (int cls = 1; cls <= k; ++cls) {
                        std::vector<std::size_t> rows;
                        for (std::size_t i = 0; i < y.size(); ++i) {
                            if (y[i] == cls) rows.push_back(i);
                        }
                        if (rows.empty()) continue;
                        const auto m = static_cast<std::int64_t>(rows.size());
                        auto xs = augment(gens[static_cast<std::size_t>(cls - 1)],
                                          draw_latents(rng, m, cfg.d_z),
                                          std::vector<int>(rows.size(), 1));
                        const auto& xv = xs.values();
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            std::copy_n(xv.begin() + static_cast<long>(r * dim), dim,
                                        values.begin() + static_cast<long>(rows[r] * dim));
                        }
                    }
                    return std::make_pair(
                        Tensor::from({nb, dim}, std::move(values)), y);
                };
                log = train_classifier_plain(clf, d, cfg, &test, &provider);
                break;
            }
        }

        cell.test_acc = evaluate(clf, test);
        cell.runlog_path = "logs/" + cell_key(mode, n, seed) + ".jsonl";
        log.write_jsonl((out_dir / cell.runlog_path).string());
        cell.ok = true;
    } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
        cell.test_acc = kNaN;
        cell.runlog_path.clear();
    }
    return cell;
}

void validate_spec(const ExperimentSpec& spec) {
    if (spec.modes.empty()) throw ConfigError("experiment: no modes selected");
    if (std::set<Mode>(spec.modes.begin(), spec.modes.end()).size() != spec.modes.size()) {
        throw ConfigError("experiment: duplicate modes");
    }
    if (spec.n_per_class.empty()) throw ConfigError("experiment: empty n_per_class list");
    for (int n : spec.n_per_class) {
        if (n < 1) throw ConfigError("experiment: n_per_class entries must be >= 1");
    }
    if (std::set<int>(spec.n_per_class.begin(), spec.n_per_class.end()).size() !=
        spec.n_per_class.size()) {
        throw ConfigError("experiment: duplicate n_per_class entries");
    }
    if (spec.seeds.empty()) throw ConfigError("experiment: empty seeds list");
    if (std::set<std::uint64_t>(spec.seeds.begin(), spec.seeds.end()).size() !=
        spec.seeds.size()) {
        throw ConfigError("experiment: duplicate seeds");
    }
    if (spec.workers < 1) throw ConfigError("experiment: workers must be >= 1");
    if (spec.out_dir.empty()) throw ConfigError("experiment: empty output directory");

    const bool wants_classic =
        std::any_of(spec.modes.begin(), spec.modes.end(),
                    [](Mode m) { return m == Mode::c_aug || m == Mode::dada_aug; });
    if (wants_classic) {
        if (spec.aug_multiplier < 2) {
            throw ConfigError("experiment: augmented modes need augment.multiplier >= 2");
        }
        const auto& o = spec.aug_ops;
        if (!o.rotate && !o.translate && !o.flip_h && !o.jitter) {
            throw ConfigError(
                "experiment: augmented modes need at least one augment.* op enabled");
        }
    }

    const auto& ds = spec.data;
    switch (ds.kind) {
        case DataSource::Kind::synthetic:
            if (ds.k < 2) throw ConfigError("data: synthetic mixture needs k >= 2");
            if (!(ds.radius > 0.0)) throw ConfigError("data: radius must be > 0");
            if (!(ds.sigma > 0.0)) throw ConfigError("data: sigma must be > 0");
            if (ds.pool_per_class < 1 || ds.test_per_class < 1) {
                throw ConfigError("data: per-class sample counts must be >= 1");
            }
            break;
        case DataSource::Kind::idx:
            if (ds.train_images.empty() || ds.train_labels.empty() ||
                ds.test_images.empty() || ds.test_labels.empty()) {
                throw ConfigError("data: idx source needs all four file paths");
            }
            break;
        case DataSource::Kind::csv:
            if (ds.csv_path.empty()) throw ConfigError("data: csv source needs data.csv");
            if (!(ds.test_fraction > 0.0 && ds.test_fraction < 1.0)) {
                throw ConfigError("data: test fraction must be inside (0,1)");
            }
            break;
    }
}

std::pair<Dataset, Dataset> load_pool_and_test(const DataSource& ds) {
    switch (ds.kind) {
        case DataSource::Kind::synthetic: {
            const auto means = circle_means(ds.k, ds.radius);
            auto pool =
                gen_gaussian_mixture(ds.k, ds.pool_per_class, means, ds.sigma, ds.pool_seed);
            auto test =
                gen_gaussian_mixture(ds.k, ds.test_per_class, means, ds.sigma, ds.test_seed);
            return {std::move(pool), std::move(test)};
        }
        case DataSource::Kind::idx: {
            auto pool = load_idx(ds.train_images, ds.train_labels);
            auto test = load_idx(ds.test_images, ds.test_labels);
            if (pool.k != test.k) {
                throw ConfigError("data: train and test sets disagree on class count");
            }
            return {std::move(pool), std::move(test)};
        }
        case DataSource::Kind::csv: {
            auto full = load_csv(ds.csv_path);
            return split(full, ds.test_fraction, ds.split_seed);
        }
    }
    throw ConfigError("data: unknown source kind");
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace

// ---- names ---------------------------------------------------------------------

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::c: return "c";
        case Mode::c_aug: return "c_aug";
        case Mode::dada: return "dada";
        case Mode::dada_aug: return "dada_aug";
        case Mode::vanilla_gan: return "vanilla_gan";
        case Mode::k_plus_one: return "k_plus_one";
    }
    throw ConfigError("unknown mode value");
}

Mode mode_from_name(const std::string& name) {
    if (name == "c") return Mode::c;
    if (name == "c_aug") return Mode::c_aug;
    if (name == "dada") return Mode::dada;
    if (name == "dada_aug") return Mode::dada_aug;
    if (name == "vanilla_gan") return Mode::vanilla_gan;
    if (name == "k_plus_one") return Mode::k_plus_one;
    throw ConfigError("unknown mode '" + name +
                      "' (expected c, c_aug, dada, dada_aug, vanilla_gan, k_plus_one)");
}

// ---- config --------------------------------------------------------------------

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (kv.count(key)) {
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        }
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

ExperimentSpec spec_from_config(const std::map<std::string, std::string>& kv) {
    ExperimentSpec spec;
    for (const auto& [key, value] : kv) {
        if (key == "modes") {
            spec.modes.clear();
            for (const auto& name : split_list(value)) spec.modes.push_back(mode_from_name(name));
        } else if (key == "n_per_class") {
            spec.n_per_class.clear();
            for (const auto& s : split_list(value)) {
                spec.n_per_class.push_back(static_cast<int>(parse_int(key, s)));
            }
        } else if (key == "seeds") {
            spec.seeds.clear();
            for (const auto& s : split_list(value)) spec.seeds.push_back(parse_u64(key, s));
        } else if (key == "out") {
            spec.out_dir = value;
        } else if (key == "workers") {
            spec.workers = static_cast<int>(parse_int(key, value));
        } else if (key == "data.source") {
            if (value == "synthetic") spec.data.kind = DataSource::Kind::synthetic;
            else if (value == "idx") spec.data.kind = DataSource::Kind::idx;
            else if (value == "csv") spec.data.kind = DataSource::Kind::csv;
            else throw ConfigError("config: data.source must be synthetic, idx, or csv");
        } else if (key == "data.k") {
            spec.data.k = static_cast<int>(parse_int(key, value));
        } else if (key == "data.radius") {
            spec.data.radius = parse_double(key, value);
        } else if (key == "data.sigma") {
            spec.data.sigma = parse_double(key, value);
        } else if (key == "data.pool_per_class") {
            spec.data.pool_per_class = static_cast<int>(parse_int(key, value));
        } else if (key == "data.pool_seed") {
            spec.data.pool_seed = parse_u64(key, value);
        } else if (key == "data.test_per_class") {
            spec.data.test_per_class = static_cast<int>(parse_int(key, value));
        } else if (key == "data.test_seed") {
            spec.data.test_seed = parse_u64(key, value);
        } else if (key == "data.train_images") {
            spec.data.train_images = value;
        } else if (key == "data.train_labels") {
            spec.data.train_labels = value;
        } else if (key == "data.test_images") {
            spec.data.test_images = value;
        } else if (key == "data.test_labels") {
            spec.data.test_labels = value;
        } else if (key == "data.csv") {
            spec.data.csv_path = value;
        } else if (key == "data.test_fraction") {
            spec.data.test_fraction = parse_double(key, value);
        } else if (key == "data.split_seed") {
            spec.data.split_seed = parse_u64(key, value);
        } else if (key == "model.aug_hidden") {
            spec.aug_hidden.clear();
            for (const auto& s : split_list(value)) spec.aug_hidden.push_back(parse_int(key, s));
        } else if (key == "model.clf_hidden") {
            spec.clf_hidden.clear();
            for (const auto& s : split_list(value)) spec.clf_hidden.push_back(parse_int(key, s));
        } else if (key == "model.feature_tap") {
            spec.feature_tap = static_cast<int>(parse_int(key, value));
        } else if (key == "train.k_g") {
            spec.train.k_g = static_cast<int>(parse_int(key, value));
        } else if (key == "train.k_c") {
            spec.train.k_c = static_cast<int>(parse_int(key, value));
        } else if (key == "train.batch") {
            spec.train.batch = static_cast<int>(parse_int(key, value));
        } else if (key == "train.g_inner") {
            spec.train.g_inner = static_cast<int>(parse_int(key, value));
        } else if (key == "train.lambda_fm") {
            spec.train.lambda_fm = parse_double(key, value);
        } else if (key == "train.d_z") {
            spec.train.d_z = parse_int(key, value);
        } else if (key == "train.input_sigma") {
            spec.train.input_sigma = parse_double(key, value);
        } else if (key == "train.augmentation_ratio") {
            spec.train.augmentation_ratio = static_cast<int>(parse_int(key, value));
        } else if (key == "train.fixed_generated_set") {
            spec.train.fixed_generated_set = parse_bool(key, value);
        } else if (key == "train.eval_every") {
            spec.train.eval_every = static_cast<int>(parse_int(key, value));
        } else if (key == "adam.lr") {
            spec.train.adam.lr = parse_double(key, value);
        } else if (key == "adam.beta1") {
            spec.train.adam.beta1 = parse_double(key, value);
        } else if (key == "adam.beta2") {
            spec.train.adam.beta2 = parse_double(key, value);
        } else if (key == "adam.eps") {
            spec.train.adam.eps = parse_double(key, value);
        } else if (key == "augment.rotate") {
            spec.aug_ops.rotate = parse_bool(key, value);
        } else if (key == "augment.max_rotate_deg") {
            spec.aug_ops.max_rotate_deg = parse_double(key, value);
        } else if (key == "augment.translate") {
            spec.aug_ops.translate = parse_bool(key, value);
        } else if (key == "augment.max_translate") {
            spec.aug_ops.max_translate = static_cast<int>(parse_int(key, value));
        } else if (key == "augment.flip_h") {
            spec.aug_ops.flip_h = parse_bool(key, value);
        } else if (key == "augment.jitter") {
            spec.aug_ops.jitter = parse_bool(key, value);
        } else if (key == "augment.jitter_sigma") {
            spec.aug_ops.jitter_sigma = parse_double(key, value);
        } else if (key == "augment.multiplier") {
            spec.aug_multiplier = static_cast<int>(parse_int(key, value));
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    return spec;
}

std::map<std::string, std::string> resolved_config(const ExperimentSpec& spec) {
    std::map<std::string, std::string> kv;
    kv["modes"] = join_list(spec.modes, [](Mode m) { return mode_name(m); });
    kv["n_per_class"] =
        join_list(spec.n_per_class, [](int n) { return std::to_string(n); });
    kv["seeds"] =
        join_list(spec.seeds, [](std::uint64_t s) { return std::to_string(s); });
    kv["out"] = spec.out_dir;
    kv["workers"] = std::to_string(spec.workers);

    const auto& ds = spec.data;
    kv["data.source"] = ds.kind == DataSource::Kind::synthetic ? "synthetic"
                        : ds.kind == DataSource::Kind::idx     ? "idx"
                                                               : "csv";
    kv["data.k"] = std::to_string(ds.k);
    kv["data.radius"] = fmt_double(ds.radius);
    kv["data.sigma"] = fmt_double(ds.sigma);
    kv["data.pool_per_class"] = std::to_string(ds.pool_per_class);
    kv["data.pool_seed"] = std::to_string(ds.pool_seed);
    kv["data.test_per_class"] = std::to_string(ds.test_per_class);
    kv["data.test_seed"] = std::to_string(ds.test_seed);
    kv["data.train_images"] = ds.train_images;
    kv["data.train_labels"] = ds.train_labels;
    kv["data.test_images"] = ds.test_images;
    kv["data.test_labels"] = ds.test_labels;
    kv["data.csv"] = ds.csv_path;
    kv["data.test_fraction"] = fmt_double(ds.test_fraction);
    kv["data.split_seed"] = std::to_string(ds.split_seed);

    kv["model.aug_hidden"] =
        join_list(spec.aug_hidden, [](std::int64_t w) { return std::to_string(w); });
    kv["model.clf_hidden"] =
        join_list(spec.clf_hidden, [](std::int64_t w) { return std::to_string(w); });
    kv["model.feature_tap"] = std::to_string(spec.feature_tap);

    const auto& t = spec.train;
    kv["train.k_g"] = std::to_string(t.k_g);
    kv["train.k_c"] = std::to_string(t.k_c);
    kv["train.batch"] = std::to_string(t.batch);
    kv["train.g_inner"] = std::to_string(t.g_inner);
    kv["train.lambda_fm"] = fmt_double(t.lambda_fm);
    kv["train.d_z"] = std::to_string(t.d_z);
    kv["train.input_sigma"] = fmt_double(t.input_sigma);
    kv["train.augmentation_ratio"] = std::to_string(t.augmentation_ratio);
    kv["train.fixed_generated_set"] = fmt_bool(t.fixed_generated_set);
    kv["train.eval_every"] = std::to_string(t.eval_every);
    kv["adam.lr"] = fmt_double(t.adam.lr);
    kv["adam.beta1"] = fmt_double(t.adam.beta1);
    kv["adam.beta2"] = fmt_double(t.adam.beta2);
    kv["adam.eps"] = fmt_double(t.adam.eps);

    const auto& o = spec.aug_ops;
    kv["augment.rotate"] = fmt_bool(o.rotate);
    kv["augment.max_rotate_deg"] = fmt_double(o.max_rotate_deg);
    kv["augment.translate"] = fmt_bool(o.translate);
    kv["augment.max_translate"] = std::to_string(o.max_translate);
    kv["augment.flip_h"] = fmt_bool(o.flip_h);
    kv["augment.jitter"] = fmt_bool(o.jitter);
    kv["augment.jitter_sigma"] = fmt_double(o.jitter_sigma);
    kv["augment.multiplier"] = std::to_string(spec.aug_multiplier);
    return kv;
}

// ---- experiment matrix ------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    validate_spec(spec);
    const auto t0 = std::chrono::steady_clock::now();

    auto [pool, test] = load_pool_and_test(spec.data);
    const int max_n = *std::max_element(spec.n_per_class.begin(), spec.n_per_class.end());
    const auto counts = pool.class_counts();
    for (std::size_t cls = 0; cls < counts.size(); ++cls) {
        if (counts[cls] < static_cast<std::size_t>(max_n)) {
            throw ConfigError("experiment: class " + std::to_string(cls + 1) + " has only " +
                              std::to_string(counts[cls]) +
                              " pool samples, n_per_class asks for " + std::to_string(max_n));
        }
    }
    const bool wants_classic =
        std::any_of(spec.modes.begin(), spec.modes.end(),
                    [](Mode m) { return m == Mode::c_aug || m == Mode::dada_aug; });
    if (wants_classic && pool.layout == Layout::vector_d &&
        (spec.aug_ops.rotate || spec.aug_ops.translate || spec.aug_ops.flip_h)) {
        throw ConfigError("experiment: geometric augment ops need grid-shaped data");
    }

    const fs::path out(spec.out_dir);
    std::error_code ec;
    fs::create_directories(out / "cells", ec);
    fs::create_directories(out / "logs", ec);
    if (ec) throw IoError("cannot create output directories under '" + spec.out_dir + "'");

    struct Cell {
        Mode mode;
        int n;
        std::uint64_t seed;
    };
    std::vector<Cell> todo;
    for (Mode mode : spec.modes) {
        for (int n : spec.n_per_class) {
            for (std::uint64_t seed : spec.seeds) todo.push_back({mode, n, seed});
        }
    }

    std::vector<CellResult> cells(todo.size());
    std::atomic<std::size_t> cursor{0};
    std::vector<std::exception_ptr> troubles(
        static_cast<std::size_t>(std::max(1, spec.workers)));
    auto worker = [&](std::size_t wi) {
        try {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= todo.size()) break;
                const auto& c = todo[i];
                const fs::path cell_path =
                    out / "cells" / (cell_key(c.mode, c.n, c.seed) + ".json");
                std::optional<CellResult> prior;
                if (fs::exists(cell_path)) {
                    try {
                        std::ifstream in(cell_path);
                        prior = cell_from_json(nlohmann::json::parse(in));
                    } catch (const std::exception&) {
                        prior.reset();  // unreadable cell: recompute
                    }
                }
                if (prior) {
                    cells[i] = *prior;
                    continue;
                }
                cells[i] = run_cell(spec, pool, test, c.mode, c.n, c.seed, out);
                std::ofstream cf(cell_path, std::ios::trunc);
                if (!cf) throw IoError("cannot write '" + cell_path.string() + "'");
                cf << cell_to_json(cells[i]).dump(2) << "\n";
            }
        } catch (...) {
            troubles[wi] = std::current_exception();
        }
    };
    const auto n_workers = static_cast<std::size_t>(
        std::min<std::size_t>(static_cast<std::size_t>(spec.workers), todo.size()));
    if (n_workers <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t wi = 0; wi < n_workers; ++wi) threads.emplace_back(worker, wi);
        for (auto& t : threads) t.join();
    }
    for (const auto& trouble : troubles) {
        if (trouble) std::rethrow_exception(trouble);
    }

    ExperimentResult result;
    result.config = resolved_config(spec);
    result.cells = std::move(cells);
    std::sort(result.cells.begin(), result.cells.end(),
              [](const CellResult& a, const CellResult& b) {
                  return std::tuple(static_cast<int>(a.mode), a.n_per_class, a.seed) <
                         std::tuple(static_cast<int>(b.mode), b.n_per_class, b.seed);
              });

    std::vector<Mode> modes_sorted = spec.modes;
    std::sort(modes_sorted.begin(), modes_sorted.end());
    std::vector<int> ns_sorted = spec.n_per_class;
    std::sort(ns_sorted.begin(), ns_sorted.end());
    for (Mode mode : modes_sorted) {
        for (int n : ns_sorted) {
            std::vector<double> accs;
            for (const auto& c : result.cells) {
                if (c.mode == mode && c.n_per_class == n && c.ok) accs.push_back(c.test_acc);
            }
            SummaryRow row;
            row.mode = mode;
            row.n_per_class = n;
            row.n_seeds = static_cast<int>(accs.size());
            if (accs.empty()) {
                row.mean_acc = kNaN;
                row.std_acc = kNaN;
            } else {
                row.mean_acc = mean_of(accs);
                double ss = 0.0;
                for (double a : accs) ss += (a - row.mean_acc) * (a - row.mean_acc);
                row.std_acc = std::sqrt(ss / static_cast<double>(accs.size()));
            }
            result.summary.push_back(row);
        }
    }

    nlohmann::json doc;
    doc["config"] = result.config;
    doc["cells"] = nlohmann::json::array();
    for (const auto& c : result.cells) doc["cells"].push_back(cell_to_json(c));
    doc["summary"] = nlohmann::json::array();
    for (const auto& row : result.summary) {
        doc["summary"].push_back(nlohmann::json{{"mode", mode_name(row.mode)},
                                                {"n_per_class", row.n_per_class},
                                                {"mean_acc", acc_json(row.mean_acc)},
                                                {"std_acc", acc_json(row.std_acc)},
                                                {"n_seeds", row.n_seeds}});
    }
    {
        std::ofstream rf(out / "result.json", std::ios::trunc);
        if (!rf) throw IoError("cannot write result.json under '" + spec.out_dir + "'");
        rf << doc.dump(2) << "\n";
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::ofstream tf(out / "timings.json", std::ios::trunc);
        if (tf) tf << nlohmann::json{{"wall_seconds", result.wall_seconds}}.dump(2) << "\n";
    }
    return result;
}

ExperimentResult load_result(const std::string& result_json_path) {
    std::ifstream in(result_json_path);
    if (!in) throw IoError("cannot open result file '" + result_json_path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
        ExperimentResult result;
        result.config = doc.at("config").get<std::map<std::string, std::string>>();
        for (const auto& j : doc.at("cells")) result.cells.push_back(cell_from_json(j));
        for (const auto& j : doc.at("summary")) {
            SummaryRow row;
            row.mode = mode_from_name(j.at("mode").get<std::string>());
            row.n_per_class = j.at("n_per_class").get<int>();
            row.mean_acc = acc_from_json(j.at("mean_acc"));
            row.std_acc = acc_from_json(j.at("std_acc"));
            row.n_seeds = j.at("n_seeds").get<int>();
            result.summary.push_back(row);
        }
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed result file '" + result_json_path + "': " + e.what());
    }
}

void emit_curves(const ExperimentResult& result, const std::string& out_path) {
    if (result.summary.empty()) throw UsageError("emit_curves: result has no summary rows");
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write curves file '" + out_path + "'");
    out << "mode,n_per_class,mean_acc,std_acc,n_seeds\n";
    for (const auto& row : result.summary) {
        out << mode_name(row.mode) << "," << row.n_per_class << ","
            << fmt_double(row.mean_acc) << "," << fmt_double(row.std_acc) << ","
            << row.n_seeds << "\n";
    }
    if (!out) throw IoError("write failed for curves file '" + out_path + "'");
}

void dump_generated(const AugmenterNet& aug, int count_per_class, const std::string& out_dir,
                    std::uint64_t seed, std::int64_t h, std::int64_t w, std::int64_t c) {
    if (count_per_class < 1) throw ConfigError("dump: count_per_class must be >= 1");
    const bool grid = h != 0 || w != 0 || c != 0;
    if (grid) {
        if (h < 1 || w < 1 || c < 1) throw ConfigError("dump: grid extents must be >= 1");
        if (c != 1 && c != 3) throw ConfigError("dump: channel count must be 1 or 3");
        if (h * w * c != aug.d_out()) {
            throw DimensionError("dump: grid " + std::to_string(h) + "x" + std::to_string(w) +
                                 "x" + std::to_string(c) + " does not match output width " +
                                 std::to_string(aug.d_out()));
        }
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dump directory '" + out_dir + "'");

    std::mt19937_64 rng(seed);
    auto to_byte = [](double v) {
        const long b = std::lround((v + 1.0) * 127.5);
        return std::clamp(b, 0L, 255L);
    };
    std::ofstream csv;
    if (!grid) {
        csv.open(fs::path(out_dir) / "generated.csv", std::ios::trunc);
        if (!csv) throw IoError("cannot write generated.csv under '" + out_dir + "'");
        csv << "y";
        for (std::int64_t j = 1; j <= aug.d_out(); ++j) csv << ",x" << j;
        csv << "\n";
    }
    for (int cls = 1; cls <= aug.k(); ++cls) {
        auto xs = augment(aug, draw_latents(rng, count_per_class, aug.d_z()),
                          std::vector<int>(static_cast<std::size_t>(count_per_class), cls));
        const auto& xv = xs.values();
        for (int i = 0; i < count_per_class; ++i) {
            const auto* row = xv.data() + static_cast<std::size_t>(i) *
                                              static_cast<std::size_t>(aug.d_out());
            if (!grid) {
                csv << cls;
                for (std::int64_t j = 0; j < aug.d_out(); ++j)
                    csv << "," << fmt_double(row[j]);
                csv << "\n";
                continue;
            }
            const auto name = "gen_class" + std::to_string(cls) + "_" + std::to_string(i) +
                              (c == 1 ? ".pgm" : ".ppm");
            std::ofstream img(fs::path(out_dir) / name, std::ios::trunc);
            if (!img) throw IoError("cannot write '" + name + "' under '" + out_dir + "'");
            img << (c == 1 ? "P2" : "P3") << "\n" << w << " " << h << "\n255\n";
            for (std::int64_t p = 0; p < h * w * c; ++p) {
                img << to_byte(row[p]) << ((p + 1) % (w * c) == 0 ? "\n" : " ");
            }
            if (!img) throw IoError("write failed for '" + name + "'");
        }
    }
    if (!grid && !csv) throw IoError("write failed for generated.csv");
}

}  // namespace dada
