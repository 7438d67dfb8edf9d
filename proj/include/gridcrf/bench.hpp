#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcrf/inference.hpp"
#include "gridcrf/learning.hpp"
#include "gridcrf/model.hpp"

namespace gridcrf {
namespace bench {

enum class ShapeFamily { digits_like_blobs, random_polygons };
enum class NoiseKind { gumbel, gaussian };

const char* shape_family_name(ShapeFamily f);
const char* noise_kind_name(NoiseKind k);
ShapeFamily shape_family_from_name(const std::string& s);
NoiseKind noise_kind_from_name(const std::string& s);

struct SyntheticSpec {
    int height = 16;
    int width = 16;
    int num_train = 50;
    int num_test = 20;
    ShapeFamily shape_family = ShapeFamily::random_polygons;
    NoiseKind noise_kind = NoiseKind::gumbel;
    double snr = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

// Binary ground-truth masks plus corrupted grayscale inputs. The Dataset
// items carry features built from the corrupted images and the clean masks
// as labels; `images` keeps the corrupted intensities for file output.
struct SyntheticData {
    Dataset train;
    Dataset test;
    std::vector<std::vector<double>> train_images;
    std::vector<std::vector<double>> test_images;
    std::vector<Labeling> train_truth; // same labelings as in train.items
    std::vector<Labeling> test_truth;
};

// Corruption: x = clip(y + sigma*g, 0, 1) with sigma = std(y)/snr per image
// and g zero-mean unit-variance noise of the chosen family.
SyntheticData generate_dataset(const SyntheticSpec& spec);

// Per-image helpers used by generate_dataset and the CLI.
Labeling generate_mask(ShapeFamily family, int height, int width, CounterRng& rng);
std::vector<double> corrupt_image(const Labeling& mask, NoiseKind kind, double snr,
                                  CounterRng& rng);

// Unary features (intensity, 1); pairwise features (intensity_a, intensity_b,
// 1) in canonical edge order. K = 2.
GridModel build_features(const std::vector<double>& image, int height, int width);

struct IouReport {
    std::vector<double> per_class_iou;
    double mean_iou = 0.0;
};

// Per-class intersection over union; a class absent from both prediction and
// truth scores 1. Mean is the arithmetic mean over classes.
IouReport iou(const Labeling& pred, const Labeling& truth, int num_labels);

struct MethodScore {
    Method method;
    IouReport iou;        // aggregated over test images
    double wallclock_ms = 0.0;
};

struct ExperimentResult {
    Weights weights;
    std::vector<double> train_trace;
    std::vector<MethodScore> per_method;
};

struct ExperimentConfig {
    TrainConfig train;
    InferenceConfig inference; // seed field ignored; per-image seeds derived
    bool pooled = false;       // pool pixel counts across images instead of
                               // averaging per-image IoU
    int threads = 1;
};

// Trains one set of weights by PL on the generated training split and runs
// every requested method with those weights on the test split. Per-image
// inference seeds depend on (spec seed, method, image index) only, so the
// method list order cannot affect scores.
ExperimentResult run_experiment(const SyntheticSpec& spec, const std::vector<Method>& methods,
                                const ExperimentConfig& config);

} // namespace bench
} // namespace gridcrf
