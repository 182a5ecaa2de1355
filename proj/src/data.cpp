#include "dada/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dada/rng.hpp"

namespace dada {

namespace {

void validate(const Dataset& d, const char* who) {
    const std::int64_t dim = d.layout == Layout::grid_hwc ? d.h * d.w * d.c : d.dim();
    if (d.k < 1) throw ConfigError(std::string(who) + ": class count must be >= 1");
    for (const auto& s : d.samples) {
        if (s.y < 1 || s.y > d.k) {
            throw DomainError(std::string(who) + ": label " + std::to_string(s.y) +
                              " outside 1.." + std::to_string(d.k));
        }
        if (static_cast<std::int64_t>(s.x.size()) != dim) {
            throw DimensionError(std::string(who) + ": sample with " +
                                 std::to_string(s.x.size()) + " features, layout needs " +
                                 std::to_string(dim));
        }
        for (double v : s.x) {
            if (!(v >= -1.0 && v <= 1.0)) {
                throw DomainError(std::string(who) + ": feature value " + std::to_string(v) +
                                  " outside [-1,1]");
            }
        }
    }
}

}  // namespace

Dataset Dataset::vectors(std::vector<LabeledSample> samples, int k) {
    Dataset d;
    d.samples = std::move(samples);
    d.k = k;
    d.layout = Layout::vector_d;
    if (d.samples.empty()) throw ConfigError("dataset: no samples");
    validate(d, "dataset");
    return d;
}

Dataset Dataset::grids(std::vector<LabeledSample> samples, int k, std::int64_t h,
                       std::int64_t w, std::int64_t c) {
    if (h < 1 || w < 1 || c < 1) throw ConfigError("dataset: grid extents must be >= 1");
    Dataset d;
    d.samples = std::move(samples);
    d.k = k;
    d.layout = Layout::grid_hwc;
    d.h = h;
    d.w = w;
    d.c = c;
    if (d.samples.empty()) throw ConfigError("dataset: no samples");
    validate(d, "dataset");
    return d;
}

std::int64_t Dataset::dim() const {
    if (layout == Layout::grid_hwc) return h * w * c;
    return samples.empty() ? 0 : static_cast<std::int64_t>(samples.front().x.size());
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.y - 1)];
    return counts;
}

Tensor dataset_matrix(const Dataset& d) {
    const auto dim = static_cast<std::size_t>(d.dim());
    std::vector<double> values;
    values.reserve(d.size() * dim);
    for (const auto& s : d.samples) values.insert(values.end(), s.x.begin(), s.x.end());
    return Tensor::from({static_cast<std::int64_t>(d.size()), static_cast<std::int64_t>(dim)},
                        std::move(values));
}

std::vector<int> dataset_labels(const Dataset& d) {
    std::vector<int> y;
    y.reserve(d.size());
    for (const auto& s : d.samples) y.push_back(s.y);
    return y;
}

// ---- synthetic data -----------------------------------------------------------

double gaussian_mixture_scale(const std::vector<std::vector<double>>& means, double sigma) {
    double extreme = 0.0;
    for (const auto& m : means) {
        for (double v : m) extreme = std::max(extreme, std::fabs(v));
    }
    return extreme + 4.0 * sigma;
}

std::vector<std::vector<double>> circle_means(int k, double radius) {
    if (k < 1) throw ConfigError("circle_means: k must be >= 1");
    std::vector<std::vector<double>> means;
    for (int i = 0; i < k; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / k;
        means.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    }
    return means;
}

Dataset gen_gaussian_mixture(int k, int n_per_class,
                             const std::vector<std::vector<double>>& means, double sigma,
                             std::uint64_t seed) {
    if (k < 1) throw ConfigError("gaussian mixture: k must be >= 1");
    if (static_cast<int>(means.size()) < k) {
        throw ConfigError("gaussian mixture: " + std::to_string(means.size()) +
                          " means for k=" + std::to_string(k));
    }
    if (n_per_class < 1) throw ConfigError("gaussian mixture: n_per_class must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("gaussian mixture: sigma must be > 0");
    const std::size_t dim = means[0].size();
    for (const auto& m : means) {
        if (m.size() != dim) throw DimensionError("gaussian mixture: mean dimensions differ");
    }

    const double scale = gaussian_mixture_scale(means, sigma);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<LabeledSample> samples;
    samples.reserve(static_cast<std::size_t>(k) * static_cast<std::size_t>(n_per_class));
    for (int cls = 0; cls < k; ++cls) {
        for (int i = 0; i < n_per_class; ++i) {
            LabeledSample s;
            s.y = cls + 1;
            s.x.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                const double raw = means[cls][j] + noise(rng);
                s.x[j] = std::clamp(raw, -scale, scale) / scale;
            }
            samples.push_back(std::move(s));
        }
    }
    return Dataset::vectors(std::move(samples), k);
}

// ---- dataset transforms ----------------------------------------------------------

namespace {

Dataset with_samples(const Dataset& source, std::vector<LabeledSample> samples) {
    if (source.layout == Layout::grid_hwc) {
        return Dataset::grids(std::move(samples), source.k, source.h, source.w, source.c);
    }
    return Dataset::vectors(std::move(samples), source.k);
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& d) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.k));
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        by_class[static_cast<std::size_t>(d.samples[i].y - 1)].push_back(i);
    }
    return by_class;
}

}  // namespace

Dataset subsample(const Dataset& d, const SubsampleSpec& spec) {
    if (spec.n_per_class < 1) throw ConfigError("subsample: n_per_class must be >= 1");
    auto by_class = indices_by_class(d);
    std::vector<LabeledSample> picked;
    picked.reserve(static_cast<std::size_t>(spec.n_per_class) * static_cast<std::size_t>(d.k));
    for (int cls = 0; cls < d.k; ++cls) {
        auto& pool = by_class[static_cast<std::size_t>(cls)];
        if (pool.size() < static_cast<std::size_t>(spec.n_per_class)) {
            throw ConfigError("subsample: class " + std::to_string(cls + 1) + " has " +
                              std::to_string(pool.size()) + " samples, need " +
                              std::to_string(spec.n_per_class));
        }
        std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(cls)));
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int i = 0; i < spec.n_per_class; ++i) {
            picked.push_back(d.samples[pool[static_cast<std::size_t>(i)]]);
        }
    }
    return with_samples(d, std::move(picked));
}

namespace {

LabeledSample rotate_sample(const LabeledSample& s, const Dataset& d, double deg) {
    const double rad = deg * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (static_cast<double>(d.w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(d.h) - 1.0) / 2.0;
    LabeledSample out;
    out.y = s.y;
    out.x.resize(s.x.size());
    for (std::int64_t r = 0; r < d.h; ++r) {
        for (std::int64_t col = 0; col < d.w; ++col) {
            // inverse-rotate the destination cell into the source image
            const double dx = static_cast<double>(col) - cx;
            const double dy = static_cast<double>(r) - cy;
            const auto src_c = static_cast<std::int64_t>(std::lround(cs * dx + sn * dy + cx));
            const auto src_r = static_cast<std::int64_t>(std::lround(-sn * dx + cs * dy + cy));
            const std::int64_t cc = std::clamp<std::int64_t>(src_c, 0, d.w - 1);
            const std::int64_t cr = std::clamp<std::int64_t>(src_r, 0, d.h - 1);
            for (std::int64_t ch = 0; ch < d.c; ++ch) {
                out.x[static_cast<std::size_t>((r * d.w + col) * d.c + ch)] =
                    s.x[static_cast<std::size_t>((cr * d.w + cc) * d.c + ch)];
            }
        }
    }
    return out;
}

LabeledSample translate_sample(const LabeledSample& s, const Dataset& d, int dx, int dy) {
    LabeledSample out;
    out.y = s.y;
    out.x.assign(s.x.size(), -1.0);  // vacated cells take the background value
    for (std::int64_t r = 0; r < d.h; ++r) {
        const std::int64_t sr = r - dy;
        if (sr < 0 || sr >= d.h) continue;
        for (std::int64_t col = 0; col < d.w; ++col) {
            const std::int64_t sc = col - dx;
            if (sc < 0 || sc >= d.w) continue;
            for (std::int64_t ch = 0; ch < d.c; ++ch) {
                out.x[static_cast<std::size_t>((r * d.w + col) * d.c + ch)] =
                    s.x[static_cast<std::size_t>((sr * d.w + sc) * d.c + ch)];
            }
        }
    }
    return out;
}

LabeledSample flip_sample(const LabeledSample& s, const Dataset& d) {
    LabeledSample out;
    out.y = s.y;
    out.x.resize(s.x.size());
    for (std::int64_t r = 0; r < d.h; ++r) {
        for (std::int64_t col = 0; col < d.w; ++col) {
            for (std::int64_t ch = 0; ch < d.c; ++ch) {
                out.x[static_cast<std::size_t>((r * d.w + col) * d.c + ch)] =
                    s.x[static_cast<std::size_t>((r * d.w + (d.w - 1 - col)) * d.c + ch)];
            }
        }
    }
    return out;
}

LabeledSample jitter_sample(const LabeledSample& s, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    LabeledSample out;
    out.y = s.y;
    out.x.resize(s.x.size());
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        out.x[i] = std::clamp(s.x[i] + noise(rng), -1.0, 1.0);
    }
    return out;
}

}  // namespace

Dataset traditional_augment(const Dataset& d, const AugmentOps& ops, int multiplier,
                            std::uint64_t seed) {
    if (multiplier < 1) throw ConfigError("augment: multiplier must be >= 1");
    enum class Op { rotate, translate, flip, jitter };
    std::vector<Op> enabled;
    if (ops.rotate) enabled.push_back(Op::rotate);
    if (ops.translate) enabled.push_back(Op::translate);
    if (ops.flip_h) enabled.push_back(Op::flip);
    if (ops.jitter) enabled.push_back(Op::jitter);
    if (d.layout == Layout::vector_d && (ops.rotate || ops.translate || ops.flip_h)) {
        throw ConfigError(
            "augment: rotation/translation/flip need a grid layout; vector data takes "
            "jitter only");
    }
    if (multiplier > 1 && enabled.empty()) {
        throw ConfigError("augment: multiplier > 1 with no ops enabled");
    }
    if (ops.jitter && !(ops.jitter_sigma > 0.0)) {
        throw ConfigError("augment: jitter sigma must be > 0");
    }

    std::vector<LabeledSample> out = d.samples;  // originals always included
    out.reserve(d.size() * static_cast<std::size_t>(multiplier));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_op(0, enabled.empty() ? 0
                                                                          : enabled.size() - 1);
    std::uniform_real_distribution<double> pick_angle(-ops.max_rotate_deg, ops.max_rotate_deg);
    std::uniform_int_distribution<int> pick_shift(-ops.max_translate, ops.max_translate);

    for (int round = 1; round < multiplier; ++round) {
        for (const auto& s : d.samples) {
            switch (enabled[pick_op(rng)]) {
                case Op::rotate: out.push_back(rotate_sample(s, d, pick_angle(rng))); break;
                case Op::translate:
                    out.push_back(translate_sample(s, d, pick_shift(rng), pick_shift(rng)));
                    break;
                case Op::flip: out.push_back(flip_sample(s, d)); break;
                case Op::jitter: out.push_back(jitter_sample(s, ops.jitter_sigma, rng)); break;
            }
        }
    }
    return with_samples(d, std::move(out));
}

std::pair<Dataset, Dataset> split(const Dataset& d, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test fraction must be in (0,1), got " +
                          std::to_string(test_fraction));
    }
    auto by_class = indices_by_class(d);
    std::vector<LabeledSample> train, test;
    for (int cls = 0; cls < d.k; ++cls) {
        auto& pool = by_class[static_cast<std::size_t>(cls)];
        if (pool.size() < 2) {
            throw ConfigError("split: class " + std::to_string(cls + 1) + " has " +
                              std::to_string(pool.size()) + " samples; need at least 2");
        }
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
        std::shuffle(pool.begin(), pool.end(), rng);
        auto n_test = static_cast<std::size_t>(
            std::lround(test_fraction * static_cast<double>(pool.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, pool.size() - 1);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            (i < n_test ? test : train).push_back(d.samples[pool[i]]);
        }
    }
    return {with_samples(d, std::move(train)), with_samples(d, std::move(test))};
}

// ---- IDX ingestion -----------------------------------------------------------------

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw FormatError(path + ": truncated IDX header");
    }
    return (static_cast<std::uint32_t>(bytes[0]) << 24) |
           (static_cast<std::uint32_t>(bytes[1]) << 16) |
           (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open '" + images_path + "'");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open '" + labels_path + "'");

    const std::uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != 0x00000803u) {
        std::ostringstream os;
        os << images_path << ": image magic 0x" << std::hex << img_magic
           << ", expected 0x803";
        throw FormatError(os.str());
    }
    const std::uint32_t n_images = read_be_u32(img, images_path);
    const std::uint32_t h = read_be_u32(img, images_path);
    const std::uint32_t w = read_be_u32(img, images_path);

    const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        std::ostringstream os;
        os << labels_path << ": label magic 0x" << std::hex << lab_magic
           << ", expected 0x801";
        throw FormatError(os.str());
    }
    const std::uint32_t n_labels = read_be_u32(lab, labels_path);
    if (n_images != n_labels) {
        throw FormatError("IDX pair: " + std::to_string(n_images) + " images but " +
                          std::to_string(n_labels) + " labels");
    }
    if (n_images == 0) throw FormatError(images_path + ": empty IDX file");

    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> buf(pixels);
    std::vector<LabeledSample> samples;
    samples.reserve(n_images);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(pixels))) {
            throw FormatError(images_path + ": truncated at image " + std::to_string(i));
        }
        unsigned char raw_label = 0;
        if (!lab.read(reinterpret_cast<char*>(&raw_label), 1)) {
            throw FormatError(labels_path + ": truncated at label " + std::to_string(i));
        }
        LabeledSample s;
        s.y = static_cast<int>(raw_label) + 1;  // file labels are 0-based
        max_label = std::max(max_label, s.y);
        s.x.resize(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            s.x[p] = static_cast<double>(buf[p]) / 127.5 - 1.0;
        }
        samples.push_back(std::move(s));
    }
    return Dataset::grids(std::move(samples), max_label, static_cast<std::int64_t>(h),
                          static_cast<std::int64_t>(w), 1);
}

// ---- CSV ingestion -----------------------------------------------------------------

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.empty() || header[0] != "y") {
        throw FormatError(path + ": header must start with 'y'");
    }
    const std::size_t dim = header.size() - 1;
    if (dim == 0) throw FormatError(path + ": no feature columns");

    std::vector<LabeledSample> raw;
    int max_label = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        LabeledSample s;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col == 0) {
                    s.y = std::stoi(cell);
                } else {
                    s.x.push_back(std::stod(cell));
                }
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(line_no) + ": bad value '" +
                                  cell + "'");
            }
            ++col;
        }
        if (s.x.size() != dim) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(dim) + " features, got " +
                              std::to_string(s.x.size()));
        }
        if (s.y < 1) {
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": labels must be 1-based positive integers");
        }
        max_label = std::max(max_label, s.y);
        raw.push_back(std::move(s));
    }
    if (raw.empty()) throw FormatError(path + ": no data rows");

    // per-column min-max rescale into [-1,1]; record ranges in the sidecar
    std::vector<double> mins(dim, std::numeric_limits<double>::infinity());
    std::vector<double> maxs(dim, -std::numeric_limits<double>::infinity());
    for (const auto& s : raw) {
        for (std::size_t j = 0; j < dim; ++j) {
            mins[j] = std::min(mins[j], s.x[j]);
            maxs[j] = std::max(maxs[j], s.x[j]);
        }
    }
    for (auto& s : raw) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double range = maxs[j] - mins[j];
            s.x[j] = range > 0.0 ? 2.0 * (s.x[j] - mins[j]) / range - 1.0 : 0.0;
        }
    }

    nlohmann::json meta;
    for (std::size_t j = 0; j < dim; ++j) {
        meta["columns"].push_back(
            {{"name", header[j + 1]}, {"min", mins[j]}, {"max", maxs[j]}});
    }
    std::ofstream side(path + ".meta.json", std::ios::trunc);
    if (!side) throw IoError("cannot write '" + path + ".meta.json'");
    side << meta.dump(2) << "\n";

    return Dataset::vectors(std::move(raw), max_label);
}

}  // namespace dada
