#include "gridcrf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "gridcrf/parallel.hpp"

namespace gridcrf {
namespace bench {

const char* shape_family_name(ShapeFamily f) {
    return f == ShapeFamily::digits_like_blobs ? "digits_like_blobs" : "random_polygons";
}

const char* noise_kind_name(NoiseKind k) { return k == NoiseKind::gumbel ? "gumbel" : "gaussian"; }

ShapeFamily shape_family_from_name(const std::string& s) {
    if (s == "digits_like_blobs") return ShapeFamily::digits_like_blobs;
    if (s == "random_polygons") return ShapeFamily::random_polygons;
    throw std::invalid_argument("unknown shape_family: " + s);
}

NoiseKind noise_kind_from_name(const std::string& s) {
    if (s == "gumbel") return NoiseKind::gumbel;
    if (s == "gaussian") return NoiseKind::gaussian;
    throw std::invalid_argument("unknown noise_kind: " + s);
}

void SyntheticSpec::validate() const {
    if (height < 4 || width < 4) throw std::invalid_argument("SyntheticSpec: sizes must be >= 4");
    if (num_train < 1 || num_test < 1)
        throw std::invalid_argument("SyntheticSpec: counts must be >= 1");
    if (!(snr > 0.0)) throw std::invalid_argument("SyntheticSpec: snr must be positive");
}

namespace {

constexpr double kGumbelStd = 1.2825498301618641; // pi / sqrt(6)

double foreground_fraction(const Labeling& mask) {
    double s = 0.0;
    for (int v : mask) s += v;
    return s / static_cast<double>(mask.size());
}

void fill_rect(Labeling& mask, int h, int w, int cy, int cx, int hh, int hw) {
    for (int r = std::max(0, cy - hh); r <= std::min(h - 1, cy + hh); ++r)
        for (int c = std::max(0, cx - hw); c <= std::min(w - 1, cx + hw); ++c)
            mask[static_cast<size_t>(r) * w + c] = 1;
}

void fill_ellipse(Labeling& mask, int h, int w, int cy, int cx, int hh, int hw) {
    for (int r = std::max(0, cy - hh); r <= std::min(h - 1, cy + hh); ++r)
        for (int c = std::max(0, cx - hw); c <= std::min(w - 1, cx + hw); ++c) {
            const double dy = static_cast<double>(r - cy) / (hh + 0.5);
            const double dx = static_cast<double>(c - cx) / (hw + 0.5);
            if (dy * dy + dx * dx <= 1.0) mask[static_cast<size_t>(r) * w + c] = 1;
        }
}

void fill_disk(Labeling& mask, int h, int w, double cy, double cx, double radius) {
    for (int r = std::max(0, static_cast<int>(cy - radius) - 1);
         r <= std::min(h - 1, static_cast<int>(cy + radius) + 1); ++r)
        for (int c = std::max(0, static_cast<int>(cx - radius) - 1);
             c <= std::min(w - 1, static_cast<int>(cx + radius) + 1); ++c) {
            const double dy = r - cy, dx = c - cx;
            if (dy * dy + dx * dx <= radius * radius) mask[static_cast<size_t>(r) * w + c] = 1;
        }
}

Labeling polygons_mask(int h, int w, CounterRng& rng) {
    Labeling mask(static_cast<size_t>(h) * w, 0);
    const int count = 1 + static_cast<int>(rng.next_below(3));
    for (int s = 0; s < count; ++s) {
        const int cy = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(h)));
        const int cx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w)));
        const int hh = 1 + static_cast<int>(rng.next_below(std::max(1, h / 3)));
        const int hw = 1 + static_cast<int>(rng.next_below(std::max(1, w / 3)));
        if (rng.next_below(2) == 0)
            fill_rect(mask, h, w, cy, cx, hh, hw);
        else
            fill_ellipse(mask, h, w, cy, cx, hh, hw);
    }
    return mask;
}

// Thick polyline strokes, a stand-in for digit-like silhouettes.
Labeling blobs_mask(int h, int w, CounterRng& rng) {
    Labeling mask(static_cast<size_t>(h) * w, 0);
    const int points = 3 + static_cast<int>(rng.next_below(3));
    const double radius = std::max(1.0, std::min(h, w) / 7.0);
    double py = static_cast<double>(rng.next_below(static_cast<std::uint64_t>(h)));
    double px = static_cast<double>(rng.next_below(static_cast<std::uint64_t>(w)));
    for (int p = 1; p < points; ++p) {
        const double ny = static_cast<double>(rng.next_below(static_cast<std::uint64_t>(h)));
        const double nx = static_cast<double>(rng.next_below(static_cast<std::uint64_t>(w)));
        const int steps = 1 + static_cast<int>(std::hypot(ny - py, nx - px));
        for (int t = 0; t <= steps; ++t) {
            const double a = static_cast<double>(t) / steps;
            fill_disk(mask, h, w, py + a * (ny - py), px + a * (nx - px), radius);
        }
        py = ny;
        px = nx;
    }
    return mask;
}

} // namespace

Labeling generate_mask(ShapeFamily family, int height, int width, CounterRng& rng) {
    const double lo = family == ShapeFamily::random_polygons ? 0.2 : 0.08;
    const double hi = family == ShapeFamily::random_polygons ? 0.6 : 0.5;
    Labeling mask;
    for (int attempt = 0; attempt < 64; ++attempt) {
        mask = family == ShapeFamily::random_polygons ? polygons_mask(height, width, rng)
                                                      : blobs_mask(height, width, rng);
        const double f = foreground_fraction(mask);
        if (f >= lo && f <= hi) break;
    }
    return mask;
}

std::vector<double> corrupt_image(const Labeling& mask, NoiseKind kind, double snr,
                                  CounterRng& rng) {
    const double p = foreground_fraction(mask);
    const double sigma = std::sqrt(std::max(p * (1.0 - p), 0.0)) / snr;
    std::vector<double> img(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        double g;
        if (kind == NoiseKind::gumbel) {
            g = sample_gumbel_one(rng) / kGumbelStd;
        } else {
            const double u1 = rng.next_unit_open();
            const double u2 = rng.next_unit_open();
            g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
        img[i] = std::clamp(static_cast<double>(mask[i]) + sigma * g, 0.0, 1.0);
    }
    return img;
}

GridModel build_features(const std::vector<double>& image, int height, int width) {
    if (image.size() != static_cast<size_t>(height) * static_cast<size_t>(width))
        throw std::invalid_argument("build_features: image size mismatch");
    GridModel model(height, width, 2, 2, 3);
    for (int n = 0; n < model.num_nodes(); ++n) {
        auto f = model.unary_features(n);
        f[0] = image[static_cast<size_t>(n)];
        f[1] = 1.0;
    }
    for (int e = 0; e < model.num_edges(); ++e) {
        const Edge& ed = model.edge(e);
        auto f = model.pairwise_features(e);
        f[0] = image[static_cast<size_t>(ed.a)];
        f[1] = image[static_cast<size_t>(ed.b)];
        f[2] = 1.0;
    }
    return model;
}

SyntheticData generate_dataset(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData data;
    auto make_split = [&](int count, std::uint64_t stream_base, Dataset& out,
                          std::vector<std::vector<double>>& images,
                          std::vector<Labeling>& truths) {
        for (int i = 0; i < count; ++i) {
            CounterRng rng(spec.seed, stream_base + static_cast<std::uint64_t>(i));
            Labeling mask = generate_mask(spec.shape_family, spec.height, spec.width, rng);
            std::vector<double> img = corrupt_image(mask, spec.noise_kind, spec.snr, rng);
            out.items.emplace_back(build_features(img, spec.height, spec.width), mask);
            images.push_back(std::move(img));
            truths.push_back(std::move(mask));
        }
    };
    // streams 0.. for train, 2^32.. for test
    make_split(spec.num_train, 0, data.train, data.train_images, data.train_truth);
    make_split(spec.num_test, 1ull << 32, data.test, data.test_images, data.test_truth);
    return data;
}

IouReport iou(const Labeling& pred, const Labeling& truth, int num_labels) {
    if (pred.size() != truth.size()) throw std::invalid_argument("iou: shape mismatch");
    IouReport rep;
    rep.per_class_iou.resize(static_cast<size_t>(num_labels));
    for (int l = 0; l < num_labels; ++l) {
        std::uint64_t inter = 0, uni = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            const bool a = pred[i] == l, b = truth[i] == l;
            inter += a && b;
            uni += a || b;
        }
        rep.per_class_iou[static_cast<size_t>(l)] =
            uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        rep.mean_iou += rep.per_class_iou[static_cast<size_t>(l)];
    }
    rep.mean_iou /= static_cast<double>(num_labels);
    return rep;
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index) {
    return mix64(mix64(base + tag) + index);
}

} // namespace

ExperimentResult run_experiment(const SyntheticSpec& spec, const std::vector<Method>& methods,
                                const ExperimentConfig& config) {
    spec.validate();
    const SyntheticData data = generate_dataset(spec);

    TrainConfig tc = config.train;
    tc.threads = config.threads;
    const Weights init(2, 2, 3);
    TrainResult trained = train(data.train, init, tc);

    ExperimentResult result{std::move(trained.weights), std::move(trained.trace), {}};
    const int K = 2;
    const size_t n_test = data.test.items.size();

    for (Method m : methods) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Labeling> preds(n_test);
        parallel_for(static_cast<std::int64_t>(n_test), config.threads, [&](std::int64_t i) {
            InferenceConfig ic = config.inference;
            ic.method = m;
            ic.threads = 1; // parallelism lives at the image level here
            ic.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(m) + 1,
                                  static_cast<std::uint64_t>(i));
            preds[static_cast<size_t>(i)] =
                run_inference(data.test.items[static_cast<size_t>(i)].first, result.weights, ic)
                    .labels;
        });
        const auto t1 = std::chrono::steady_clock::now();

        MethodScore score;
        score.method = m;
        score.wallclock_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (config.pooled) {
            // pooled pixel counts across the whole test split
            std::vector<std::uint64_t> inter(K, 0), uni(K, 0);
            for (size_t i = 0; i < n_test; ++i)
                for (size_t px = 0; px < preds[i].size(); ++px)
                    for (int l = 0; l < K; ++l) {
                        const bool a = preds[i][px] == l, b = data.test_truth[i][px] == l;
                        inter[static_cast<size_t>(l)] += a && b;
                        uni[static_cast<size_t>(l)] += a || b;
                    }
            score.iou.per_class_iou.resize(static_cast<size_t>(K));
            for (int l = 0; l < K; ++l) {
                score.iou.per_class_iou[static_cast<size_t>(l)] =
                    uni[static_cast<size_t>(l)] == 0
                        ? 1.0
                        : static_cast<double>(inter[static_cast<size_t>(l)]) /
                              static_cast<double>(uni[static_cast<size_t>(l)]);
                score.iou.mean_iou += score.iou.per_class_iou[static_cast<size_t>(l)];
            }
            score.iou.mean_iou /= static_cast<double>(K);
        } else {
            score.iou.per_class_iou.assign(static_cast<size_t>(K), 0.0);
            for (size_t i = 0; i < n_test; ++i) {
                const IouReport r = iou(preds[i], data.test_truth[i], K);
                for (int l = 0; l < K; ++l)
                    score.iou.per_class_iou[static_cast<size_t>(l)] +=
                        r.per_class_iou[static_cast<size_t>(l)];
            }
            for (int l = 0; l < K; ++l) {
                score.iou.per_class_iou[static_cast<size_t>(l)] /= static_cast<double>(n_test);
                score.iou.mean_iou += score.iou.per_class_iou[static_cast<size_t>(l)];
            }
            score.iou.mean_iou /= static_cast<double>(K);
        }
        result.per_method.push_back(std::move(score));
    }
    return result;
}

} // namespace bench
} // namespace gridcrf
