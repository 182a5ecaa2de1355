#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dada/error.hpp"
#include "dada/tensor.hpp"

namespace dada {

struct LabeledSample {
    std::vector<double> x;  // features in [-1,1]
    int y = 0;              // 1-based class label
};

enum class Layout { vector_d, grid_hwc };

// Immutable labeled dataset. Constructed through the factories below, which
// enforce: labels in 1..k, one shared feature layout, values in [-1,1].
struct Dataset {
    std::vector<LabeledSample> samples;
    int k = 0;
    Layout layout = Layout::vector_d;
    std::int64_t h = 0, w = 0, c = 0;  // grid extents (grid layout only)

    static Dataset vectors(std::vector<LabeledSample> samples, int k);
    static Dataset grids(std::vector<LabeledSample> samples, int k, std::int64_t h,
                         std::int64_t w, std::int64_t c);

    std::int64_t dim() const;                 // feature length per sample
    std::size_t size() const { return samples.size(); }
    std::vector<std::size_t> class_counts() const;  // index 0 = class 1
};

// All samples stacked into one (n x dim) tensor, and the matching labels.
Tensor dataset_matrix(const Dataset& d);
std::vector<int> dataset_labels(const Dataset& d);

struct SubsampleSpec {
    int n_per_class = 0;
    std::uint64_t seed = 0;
};

// ---- synthetic data -----------------------------------------------------------

// k isotropic Gaussians, n_per_class draws each, clipped to the mixture's
// 4-sigma envelope and rescaled into [-1,1]. Deterministic per seed.
Dataset gen_gaussian_mixture(int k, int n_per_class,
                             const std::vector<std::vector<double>>& means, double sigma,
                             std::uint64_t seed);

// The divisor used by gen_gaussian_mixture's rescale; mean_i / scale is the
// class center in dataset coordinates.
double gaussian_mixture_scale(const std::vector<std::vector<double>>& means, double sigma);

// Evenly spaced class means on a circle of the given radius (first mean at
// angle 0); the default benchmark geometry.
std::vector<std::vector<double>> circle_means(int k, double radius);

// ---- dataset transforms ---------------------------------------------------------

// Exactly n_per_class samples of every class, drawn without replacement.
Dataset subsample(const Dataset& d, const SubsampleSpec& spec);

// Label-preserving classical augmentation. Output is multiplier * |d|
// samples: the originals plus randomly parameterized transforms of them.
// Geometric ops need the grid layout; vector data takes jitter only.
struct AugmentOps {
    bool rotate = false;
    double max_rotate_deg = 15.0;
    bool translate = false;
    int max_translate = 2;
    bool flip_h = false;
    bool jitter = false;
    double jitter_sigma = 0.05;
};

Dataset traditional_augment(const Dataset& d, const AugmentOps& ops, int multiplier,
                            std::uint64_t seed);

// Stratified train/test split; disjoint, union = d, deterministic per seed.
std::pair<Dataset, Dataset> split(const Dataset& d, double test_fraction, std::uint64_t seed);

// ---- file ingestion ----------------------------------------------------------------

// Big-endian IDX pair (images magic 0x00000803 over u8 n*h*w, labels magic
// 0x00000801); pixels map to [-1,1] via x/127.5 - 1, labels shift to 1-based.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with header "y,x1,...,xd"; features min-max rescaled per column into
// [-1,1], with the column ranges recorded next to the file in
// "<path>.meta.json".
Dataset load_csv(const std::string& path);

}  // namespace dada
