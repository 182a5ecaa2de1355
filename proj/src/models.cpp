#include "dada/models.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dada/rng.hpp"

namespace dada {

namespace {

std::atomic<long> g_augmenter_constructions{0};

void check_positive_widths(const std::vector<std::int64_t>& dims, const char* who) {
    if (dims.size() < 2) throw ConfigError(std::string(who) + ": need at least one layer");
    for (std::int64_t w : dims) {
        if (w < 1) {
            throw ConfigError(std::string(who) + ": zero or negative layer width " +
                              std::to_string(w));
        }
    }
}

Tensor linear(const Tensor& x, const DenseLayer& layer) {
    return add_rowvec(matmul(x, layer.W), layer.b);
}

}  // namespace

std::vector<DenseLayer> init_params(const std::vector<std::int64_t>& dims, std::uint64_t seed) {
    check_positive_widths(dims, "init_params");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    layers.reserve(dims.size() - 1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::int64_t fan_in = dims[i], fan_out = dims[i + 1];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        std::vector<double> w(static_cast<std::size_t>(fan_in * fan_out));
        for (auto& v : w) v = dist(rng);
        DenseLayer layer;
        layer.W = Tensor::from({fan_in, fan_out}, std::move(w), true);
        layer.W.set_name("W" + std::to_string(i));
        layer.b = Tensor::zeros({fan_out}, true);
        layer.b.set_name("b" + std::to_string(i));
        layers.push_back(std::move(layer));
    }
    return layers;
}

Tensor one_hot_rows(const std::vector<int>& y, int k) {
    if (k < 1) throw DomainError("one_hot_rows: k must be >= 1");
    std::vector<double> values(y.size() * static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 1 || y[i] > k) {
            throw DomainError("one_hot_rows: label " + std::to_string(y[i]) + " outside 1.." +
                              std::to_string(k));
        }
        values[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(y[i] - 1)] = 1.0;
    }
    return Tensor::from({static_cast<std::int64_t>(y.size()), k}, std::move(values));
}

// ---- AugmenterNet -----------------------------------------------------------

AugmenterNet AugmenterNet::make(std::int64_t d_z, int k, std::vector<std::int64_t> hidden,
                                std::int64_t d_out, std::uint64_t seed) {
    if (d_z < 1) throw ConfigError("augmenter: d_z must be >= 1");
    if (k < 1) throw ConfigError("augmenter: k must be >= 1");
    if (d_out < 1) throw ConfigError("augmenter: output dimension must be >= 1");

    for (std::int64_t h : hidden) {
        if (h < 1) throw ConfigError("augmenter: zero or negative hidden width");
    }

    AugmenterNet net;
    net.d_z_ = d_z;
    net.k_ = k;
    net.d_out_ = d_out;
    net.hidden_ = std::move(hidden);

    // Every stage input carries the class one-hot, so fan-ins are offset by k.
    std::vector<std::int64_t> layer_dims;  // alternates [in0, out0, in1, out1, ...]
    layer_dims.push_back(d_z + k);
    for (std::int64_t h : net.hidden_) {
        layer_dims.push_back(h);
        layer_dims.push_back(h + k);
    }
    layer_dims.push_back(d_out);
    for (std::size_t i = 0; i + 1 < layer_dims.size(); i += 2) {
        auto stack = init_params({layer_dims[i], layer_dims[i + 1]}, mix_seed(seed, i / 2));
        net.layers_.push_back(std::move(stack[0]));
    }
    g_augmenter_constructions.fetch_add(1, std::memory_order_relaxed);
    return net;
}

std::vector<Tensor> AugmenterNet::parameters() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers_) {
        out.push_back(layer.W);
        out.push_back(layer.b);
    }
    return out;
}

void AugmenterNet::freeze() {
    for (auto& layer : layers_) {
        layer.W.set_requires_grad(false);
        layer.b.set_requires_grad(false);
    }
}

bool AugmenterNet::frozen() const {
    for (const auto& layer : layers_) {
        if (layer.W.requires_grad() || layer.b.requires_grad()) return false;
    }
    return true;
}

void AugmenterNet::save(const std::string& path) const { save_parameters(parameters(), path); }

long AugmenterNet::constructed_count() {
    return g_augmenter_constructions.load(std::memory_order_relaxed);
}

Tensor augment_conditioned(const AugmenterNet& net, const Tensor& z, const Tensor& cond) {
    if (z.rank() != 2 || z.cols() != net.d_z()) {
        throw DimensionError("augment: latent batch must be (n x " + std::to_string(net.d_z()) +
                             ")");
    }
    if (cond.rank() != 2 || cond.cols() != net.k() || cond.rows() != z.rows()) {
        throw DimensionError("augment: conditioning matrix must be (n x k)");
    }
    Tensor h = z;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor in = concat(h, cond, 1);
        Tensor lin = linear(in, layers[i]);
        h = (i + 1 < layers.size()) ? relu(lin) : tanh_op(lin);
    }
    return h;
}

Tensor augment(const AugmenterNet& net, const Tensor& z, const std::vector<int>& y) {
    if (z.rank() != 2 || static_cast<std::size_t>(z.rows()) != y.size()) {
        throw DimensionError("augment: need one label per latent row");
    }
    return augment_conditioned(net, z, one_hot_rows(y, net.k()));
}

// ---- ClassifierNet ----------------------------------------------------------

std::int64_t ClassifierNet::logit_width() const {
    switch (head_) {
        case HeadMode::two_k: return 2 * static_cast<std::int64_t>(k_);
        case HeadMode::k_plus_one: return k_ + 1;
        case HeadMode::binary: return 2;
        case HeadMode::plain_k: return k_;
    }
    throw UsageError("classifier: unknown head mode");
}

ClassifierNet ClassifierNet::make(std::int64_t d_in, int k, HeadMode head,
                                  std::vector<std::int64_t> hidden, double input_sigma,
                                  int feature_tap, std::uint64_t seed) {
    if (d_in < 1) throw ConfigError("classifier: input dimension must be >= 1");
    if (k < 1) throw ConfigError("classifier: k must be >= 1");
    if (input_sigma < 0.0) throw ConfigError("classifier: input noise sigma must be >= 0");

    ClassifierNet net;
    net.d_in_ = d_in;
    net.k_ = k;
    net.head_ = head;
    net.sigma_ = input_sigma;
    net.hidden_ = std::move(hidden);

    const int n_hidden = static_cast<int>(net.hidden_.size());
    if (feature_tap == -1) {
        net.tap_ = n_hidden;  // last hidden layer; 0 when there is none
    } else if (feature_tap >= 1 && feature_tap <= n_hidden) {
        net.tap_ = feature_tap;
    } else {
        throw ConfigError("classifier: feature tap " + std::to_string(feature_tap) +
                          " does not address a hidden layer (have " + std::to_string(n_hidden) +
                          ")");
    }

    std::vector<std::int64_t> dims;
    dims.push_back(d_in);
    for (std::int64_t h : net.hidden_) dims.push_back(h);
    dims.push_back(net.logit_width());
    net.layers_ = init_params(dims, seed);
    return net;
}

std::vector<Tensor> ClassifierNet::parameters() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers_) {
        out.push_back(layer.W);
        out.push_back(layer.b);
    }
    return out;
}

void ClassifierNet::save(const std::string& path) const { save_parameters(parameters(), path); }

namespace {

Tensor classifier_forward(const ClassifierNet& net, const Tensor& x, bool train_mode,
                          std::mt19937_64* rng, int stop_after_hidden) {
    if (x.rank() != 2 || x.cols() != net.d_in()) {
        throw DimensionError("classify: input batch must be (n x " + std::to_string(net.d_in()) +
                             ")");
    }
    Tensor h = x;
    if (train_mode && net.input_sigma() > 0.0) {
        if (rng == nullptr) {
            throw UsageError("classify: train mode with input noise needs a random generator");
        }
        std::normal_distribution<double> noise(0.0, net.input_sigma());
        std::vector<double> eps(x.size());
        for (auto& e : eps) e = noise(*rng);
        h = add(h, Tensor::from(x.shape(), std::move(eps)));
    }
    const auto& layers = net.layers();
    const int n_hidden = static_cast<int>(layers.size()) - 1;
    for (int i = 0; i < n_hidden; ++i) {
        h = leaky_relu(linear(h, layers[static_cast<std::size_t>(i)]), 0.2);
        if (stop_after_hidden == i + 1) return h;
    }
    return linear(h, layers.back());
}

}  // namespace

Tensor classify(const ClassifierNet& net, const Tensor& x, bool train_mode,
                std::mt19937_64* rng) {
    return classifier_forward(net, x, train_mode, rng, 0);
}

Tensor features(const ClassifierNet& net, const Tensor& x) {
    if (net.feature_tap() < 1) {
        throw ConfigError("features: classifier has no hidden layer to tap");
    }
    return classifier_forward(net, x, false, nullptr, net.feature_tap());
}

// ---- serialization ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'A', 'D', 'A'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; add byte swaps for this platform");

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw FormatError(path + ": truncated parameter file");
    }
    return v;
}

}  // namespace

void save_parameters(const std::vector<Tensor>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        std::uint32_t rows = 1, cols = 0;
        if (p.rank() == 2) {
            rows = static_cast<std::uint32_t>(p.shape()[0]);
            cols = static_cast<std::uint32_t>(p.shape()[1]);
        } else if (p.rank() == 1) {
            cols = static_cast<std::uint32_t>(p.shape()[0]);
        } else {
            throw UsageError("save_parameters: only rank-1/rank-2 tensors are stored");
        }
        write_u32(out, rows);
        write_u32(out, cols);
        out.write(reinterpret_cast<const char*>(p.values().data()),
                  static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<Tensor> load_parameters(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(path + ": not a parameter file (bad magic)");
    }
    const std::uint32_t version = read_u32(in, path);
    if (version != kVersion) {
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32(in, path);
    std::vector<Tensor> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t rows = read_u32(in, path);
        const std::uint32_t cols = read_u32(in, path);
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        if (!in.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * sizeof(double)))) {
            throw FormatError(path + ": truncated parameter file");
        }
        if (rows == 1) {
            params.push_back(Tensor::from({static_cast<std::int64_t>(cols)}, std::move(values)));
        } else {
            params.push_back(Tensor::from(
                {static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)},
                std::move(values)));
        }
    }
    return params;
}

namespace {

void load_into_layers(std::vector<DenseLayer>& layers, const std::string& path,
                      const char* who) {
    auto params = load_parameters(path);
    if (params.size() != layers.size() * 2) {
        throw FormatError(std::string(who) + ": '" + path + "' holds " +
                          std::to_string(params.size()) + " matrices, net needs " +
                          std::to_string(layers.size() * 2));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor& w = params[2 * i];
        Tensor& b = params[2 * i + 1];
        if (w.size() != layers[i].W.size() || b.size() != layers[i].b.size()) {
            throw FormatError(std::string(who) + ": '" + path + "' layer " + std::to_string(i) +
                              " shape mismatch");
        }
        layers[i].W.values() = w.values();
        layers[i].b.values() = b.values();
    }
}

}  // namespace

void AugmenterNet::load(const std::string& path) {
    load_into_layers(layers_, path, "augmenter load");
}

void ClassifierNet::load(const std::string& path) {
    load_into_layers(layers_, path, "classifier load");
}

std::uint64_t parameter_checksum(const std::vector<Tensor>& params) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.values().data());
        for (std::size_t i = 0; i < p.size() * sizeof(double); ++i) {
            hash ^= bytes[i];
            hash *= 0x100000001b3ULL;
        }
    }
    return hash;
}

}  // namespace dada
