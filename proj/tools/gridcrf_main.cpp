// Command-line front end: generate / train / infer / eval / verify / bench.
//
// Conventions: machine-readable output goes to stdout, logs and the
// resolved-config line go to stderr. Exit codes: 0 success, 2 usage or
// validation error, 1 internal error. Every subcommand accepts --config
// pointing at a JSON file whose keys mirror the long flag names; explicit
// flags win over the file.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridcrf/bench.hpp"
#include "gridcrf/inference.hpp"
#include "gridcrf/learning.hpp"
#include "gridcrf/model_io.hpp"
#include "gridcrf/oracle.hpp"
#include "gridcrf/parallel.hpp"
#include "gridcrf/pgm.hpp"
#include "gridcrf/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridcrf;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --config <file>: a JSON object whose keys mirror the long flag names of
// the invoked subcommand. The file's entries are expanded into extra argv
// tokens for any flag not already given explicitly, so command-line flags
// always win. Handled before CLI11 sees the arguments.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == "--config") {
            if (i + 1 >= tokens.size()) throw UsageError("--config needs a file argument");
            config_path = tokens[i + 1];
            tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (tokens[i].rfind("--config=", 0) == 0) {
            config_path = tokens[i].substr(9);
            tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config_path.empty()) return tokens;

    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file " + config_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw UsageError("config root must be a JSON object");

    auto given = [&](const std::string& flag) {
        for (const std::string& t : tokens)
            if (t == flag || t.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    for (const auto& [key, value] : doc.items()) {
        const std::string flag = "--" + key;
        if (given(flag)) continue;
        if (value.is_boolean()) {
            tokens.push_back(flag + (value.get<bool>() ? "=true" : "=false"));
        } else if (value.is_string()) {
            tokens.push_back(flag);
            tokens.push_back(value.get<std::string>());
        } else if (value.is_number() || value.is_null()) {
            tokens.push_back(flag);
            tokens.push_back(value.dump());
        } else {
            throw UsageError("config key '" + key + "' must be a scalar");
        }
    }
    return tokens;
}

void add_config_help(CLI::App* sub) {
    // registered for --help only; the token is consumed by expand_config
    static std::string dummy;
    sub->add_option("--config", dummy,
                    "JSON file whose keys mirror these flags; flags override");
}

void log_resolved(const json& cfg) { std::cerr << "resolved-config: " << cfg.dump() << "\n"; }

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bench::SyntheticSpec load_spec(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open spec file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("spec is not valid JSON: " + std::string(e.what()));
    }
    bench::SyntheticSpec spec;
    if (doc.contains("height")) spec.height = doc["height"].get<int>();
    if (doc.contains("width")) spec.width = doc["width"].get<int>();
    if (doc.contains("num_train")) spec.num_train = doc["num_train"].get<int>();
    if (doc.contains("num_test")) spec.num_test = doc["num_test"].get<int>();
    if (doc.contains("shape_family"))
        spec.shape_family = bench::shape_family_from_name(doc["shape_family"].get<std::string>());
    if (doc.contains("noise_kind"))
        spec.noise_kind = bench::noise_kind_from_name(doc["noise_kind"].get<std::string>());
    if (doc.contains("snr")) spec.snr = doc["snr"].get<double>();
    if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
    return spec;
}

json spec_to_json(const bench::SyntheticSpec& spec) {
    return json{{"height", spec.height},
                {"width", spec.width},
                {"num_train", spec.num_train},
                {"num_test", spec.num_test},
                {"shape_family", bench::shape_family_name(spec.shape_family)},
                {"noise_kind", bench::noise_kind_name(spec.noise_kind)},
                {"snr", spec.snr},
                {"seed", spec.seed}};
}

PgmImage label_map(const Labeling& labels, int width, int height, int num_labels) {
    PgmImage img;
    img.width = width;
    img.height = height;
    img.maxval = std::max(num_labels - 1, 1);
    img.pixels.assign(labels.begin(), labels.end());
    return img;
}

std::vector<double> gray_image(const PgmImage& img) {
    std::vector<double> out(img.pixels.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(img.pixels[i]) / static_cast<double>(img.maxval);
    return out;
}

// ----- generate ------------------------------------------------------------

struct GenerateArgs {
    std::string spec_path;
    std::string out_dir;
    std::int64_t seed = -1; // <0: keep the spec's seed
};

int cmd_generate(const GenerateArgs& args) {
    bench::SyntheticSpec spec = load_spec(args.spec_path);
    if (args.seed >= 0) spec.seed = static_cast<std::uint64_t>(args.seed);
    spec.validate();

    json resolved = spec_to_json(spec);
    resolved["subcommand"] = "generate";
    resolved["out"] = args.out_dir;
    log_resolved(resolved);

    const bench::SyntheticData data = bench::generate_dataset(spec);
    const fs::path out(args.out_dir);
    fs::create_directories(out / "train");
    fs::create_directories(out / "test");

    json manifest;
    manifest["version"] = 1;
    manifest["spec"] = spec_to_json(spec);
    manifest["height"] = spec.height;
    manifest["width"] = spec.width;
    manifest["num_labels"] = 2;

    auto write_split = [&](const char* name, const std::vector<std::vector<double>>& images,
                           const std::vector<Labeling>& truths) {
        json files = json::array();
        for (size_t i = 0; i < images.size(); ++i) {
            char img_name[64], truth_name[64];
            std::snprintf(img_name, sizeof img_name, "%s/img_%04zu.pgm", name, i);
            std::snprintf(truth_name, sizeof truth_name, "%s/truth_%04zu.pgm", name, i);
            write_pgm_p5(out / img_name, to_gray(images[i], spec.width, spec.height));
            write_pgm_p2(out / truth_name, label_map(truths[i], spec.width, spec.height, 2));
            files.push_back({{"image", img_name}, {"truth", truth_name}});
        }
        manifest[name] = std::move(files);
    };
    write_split("train", data.train_images, data.train_truth);
    write_split("test", data.test_images, data.test_truth);

    std::ofstream mf(out / "manifest.json");
    if (!mf) throw UsageError("cannot write manifest in " + out.string());
    mf << manifest.dump(2) << "\n";
    std::cout << manifest.dump() << "\n";
    return 0;
}

// ----- train ---------------------------------------------------------------

struct TrainArgs {
    std::string data_dir;
    std::string out_model;
    std::string trace_path;
    TrainConfig config;
    bool symmetric_pairwise = false;

    TrainArgs() { config.threads = 0; } // all cores
};

Dataset load_training_split(const fs::path& dir, int& height, int& width) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw UsageError("no manifest.json in " + dir.string());
    const json manifest = json::parse(mf);
    height = manifest.at("height").get<int>();
    width = manifest.at("width").get<int>();
    Dataset data;
    for (const auto& entry : manifest.at("train")) {
        const PgmImage img = read_pgm(dir / entry.at("image").get<std::string>());
        const PgmImage truth = read_pgm(dir / entry.at("truth").get<std::string>());
        if (img.width != width || img.height != height)
            throw UsageError("image size disagrees with manifest");
        Labeling y(truth.pixels.begin(), truth.pixels.end());
        data.items.emplace_back(bench::build_features(gray_image(img), height, width),
                                std::move(y));
    }
    return data;
}

int cmd_train(const TrainArgs& args) {
    int height = 0, width = 0;
    const Dataset data = load_training_split(args.data_dir, height, width);

    json resolved{{"subcommand", "train"},
                  {"data", args.data_dir},
                  {"out", args.out_model},
                  {"lr", args.config.learning_rate},
                  {"iters", args.config.max_iters},
                  {"l2", args.config.l2_weight},
                  {"batch", args.config.batch_size},
                  {"grad-tol", args.config.grad_tol},
                  {"freeze-pairwise", args.config.freeze_pairwise},
                  {"symmetric-pairwise", args.symmetric_pairwise},
                  {"threads", args.config.threads},
                  {"seed", args.config.seed}};
    log_resolved(resolved);

    const Weights init(2, 2, 3, args.symmetric_pairwise);
    TrainResult result{init, {}, {}};
    try {
        result = train(data, init, args.config);
    } catch (const TrainDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    save_model(args.out_model, data.items.front().first, result.weights);

    const fs::path trace = args.trace_path.empty()
                               ? fs::path(args.out_model).replace_extension(".trace.csv")
                               : fs::path(args.trace_path);
    std::ofstream tf(trace);
    if (!tf) throw UsageError("cannot write trace file " + trace.string());
    tf << "iter,objective,grad_norm\n";
    for (size_t i = 0; i < result.trace.size(); ++i)
        tf << i << ',' << fmt_full(result.trace[i]) << ',' << fmt_full(result.grad_norms[i])
           << "\n";

    std::cout << json{{"model", args.out_model},
                      {"trace", trace.string()},
                      {"iterations", result.trace.size() - 1},
                      {"objective", result.trace.back()},
                      {"grad_norm", result.grad_norms.back()}}
                     .dump()
              << "\n";
    return 0;
}

// ----- infer ---------------------------------------------------------------

struct InferArgs {
    std::string model_path;
    std::string image_path;
    std::string method = "locpmap";
    std::string icm_init = "unary_argmax";
    InferenceConfig config; // threads 0 resolves to all cores
    InferArgs() { config.threads = 0; }
    int prob_class = -1; // <0: probability of the predicted label
    std::string out_labels;
    std::string out_prob;
    std::string out_var;
};

int cmd_infer(const InferArgs& args) {
    const auto method = method_from_name(args.method);
    if (!method) {
        std::cerr << "error: unknown method '" << args.method << "'; valid methods:";
        for (const auto& name : method_names()) std::cerr << ' ' << name;
        std::cerr << "\n";
        return 2;
    }

    auto [doc_model, weights] = load_model(args.model_path);
    if (doc_model.d_unary() != 2 || doc_model.d_pairwise() != 3)
        throw UsageError("model document does not carry intensity features (d_unary 2, "
                         "d_pairwise 3); cannot build features from an image");

    const PgmImage img = read_pgm(args.image_path);
    const GridModel model = bench::build_features(gray_image(img), img.height, img.width);

    InferenceConfig cfg = args.config;
    cfg.method = *method;
    if (args.icm_init == "random")
        cfg.icm_init = IcmInit::random;
    else if (args.icm_init == "unary_argmax")
        cfg.icm_init = IcmInit::unary_argmax;
    else
        throw UsageError("icm-init must be unary_argmax or random");

    json resolved{{"subcommand", "infer"},
                  {"model", args.model_path},
                  {"image", args.image_path},
                  {"method", args.method},
                  {"samples", cfg.num_samples},
                  {"sweeps", cfg.max_sweeps},
                  {"tol", cfg.tol},
                  {"dropout", cfg.dropout_fraction},
                  {"gibbs-samples", cfg.gibbs_samples},
                  {"burn-in", cfg.resolved_burn_in()},
                  {"sa-t0", cfg.sa_t0},
                  {"sa-alpha", cfg.sa_alpha},
                  {"damping", cfg.lbp_damping},
                  {"icm-init", args.icm_init},
                  {"threads", cfg.threads},
                  {"seed", cfg.seed}};
    log_resolved(resolved);

    const InferenceResult result = run_inference(model, weights, cfg);
    const int K = model.num_labels();

    json output{{"method", args.method},
                {"samples_used", result.samples_used},
                {"sweeps_run", result.sweeps_run}};
    if (!args.out_labels.empty()) {
        write_pgm_p2(args.out_labels, label_map(result.labels, img.width, img.height, K));
        output["labels"] = args.out_labels;
    }
    if (!args.out_prob.empty()) {
        if (args.prob_class >= K) throw UsageError("prob-class out of range");
        std::vector<double> p(result.labels.size());
        for (size_t i = 0; i < p.size(); ++i) {
            const int cls = args.prob_class >= 0 ? args.prob_class : result.labels[i];
            p[i] = result.node_prob[i * static_cast<size_t>(K) + static_cast<size_t>(cls)];
        }
        write_pgm_p5(args.out_prob, to_gray(p, img.width, img.height));
        output["prob"] = args.out_prob;
    }
    if (!args.out_var.empty()) {
        write_pgm_p5(args.out_var, to_gray(result.node_var, img.width, img.height));
        output["var"] = args.out_var;
    }
    std::cout << output.dump() << "\n";
    return 0;
}

// ----- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string pred_dir;
    std::string truth_dir;
    std::string out_base;
};

// Label-map files are paired across the two directories by the trailing
// number in the file name; corrupted inputs (img_*) are skipped.
std::vector<std::pair<std::int64_t, fs::path>> label_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    std::vector<std::pair<std::int64_t, fs::path>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
        const std::string stem = entry.path().stem().string();
        if (stem.rfind("img_", 0) == 0) continue;
        std::int64_t index = -1;
        for (size_t i = 0; i < stem.size(); ++i)
            if (std::isdigit(static_cast<unsigned char>(stem[i]))) {
                index = std::strtoll(stem.c_str() + i, nullptr, 10);
                break;
            }
        if (index >= 0) out.emplace_back(index, entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_eval(const EvalArgs& args) {
    json resolved{{"subcommand", "eval"}, {"pred", args.pred_dir}, {"truth", args.truth_dir}};
    log_resolved(resolved);

    const auto preds = label_files(args.pred_dir);
    const auto truths = label_files(args.truth_dir);
    if (preds.empty()) throw UsageError("no numbered label maps in " + args.pred_dir);
    if (preds.size() != truths.size())
        throw UsageError("prediction/truth counts differ: " + std::to_string(preds.size()) +
                         " vs " + std::to_string(truths.size()));

    std::string csv = "image,class,iou,mean_iou\n";
    json items = json::array();
    std::vector<double> sum_class;
    double sum_mean = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].first != truths[i].first)
            throw UsageError("prediction/truth indices do not line up at " +
                             preds[i].second.string());
        const PgmImage p = read_pgm(preds[i].second);
        const PgmImage t = read_pgm(truths[i].second);
        if (p.width != t.width || p.height != t.height)
            throw UsageError("size mismatch at " + preds[i].second.string());
        const int K = std::max(p.maxval, t.maxval) + 1;
        const Labeling pl(p.pixels.begin(), p.pixels.end());
        const Labeling tl(t.pixels.begin(), t.pixels.end());
        const bench::IouReport rep = bench::iou(pl, tl, K);
        if (sum_class.size() < rep.per_class_iou.size())
            sum_class.resize(rep.per_class_iou.size(), 0.0);
        const std::string name = preds[i].second.filename().string();
        for (size_t l = 0; l < rep.per_class_iou.size(); ++l) {
            csv += name + ',' + std::to_string(l) + ',' + fmt_g(rep.per_class_iou[l]) + ',' +
                   fmt_g(rep.mean_iou) + "\n";
            sum_class[l] += rep.per_class_iou[l];
        }
        sum_mean += rep.mean_iou;
        items.push_back({{"image", name},
                         {"per_class_iou", rep.per_class_iou},
                         {"mean_iou", rep.mean_iou}});
    }
    const double n = static_cast<double>(preds.size());
    json overall{{"mean_iou", sum_mean / n}, {"per_class_iou", json::array()}};
    for (size_t l = 0; l < sum_class.size(); ++l) {
        csv += "overall," + std::to_string(l) + ',' + fmt_g(sum_class[l] / n) + ',' +
               fmt_g(sum_mean / n) + "\n";
        overall["per_class_iou"].push_back(sum_class[l] / n);
    }

    std::cout << csv;
    if (!args.out_base.empty()) {
        std::ofstream cf(args.out_base + ".csv");
        cf << csv;
        std::ofstream jf(args.out_base + ".json");
        jf << json{{"images", items}, {"overall", overall}}.dump(2) << "\n";
    }
    return 0;
}

// ----- verify --------------------------------------------------------------

struct VerifyArgs {
    std::string check = "all";
    std::uint64_t draws = 200000;
    std::uint64_t seed = 0;
    std::string out_path;
};

int cmd_verify(const VerifyArgs& args) {
    json resolved{{"subcommand", "verify"},
                  {"check", args.check},
                  {"draws", args.draws},
                  {"seed", args.seed}};
    log_resolved(resolved);

    verify::Report report;
    try {
        report = verify::run_checks(args.check, args.draws, args.seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    json doc{{"draws", args.draws}, {"seed", args.seed}, {"all_pass", report.all_pass}};
    if (report.low_precision)
        doc["warning"] = "insufficient precision: too few draws to resolve the tolerances";
    json checks = json::array();
    for (const auto& c : report.checks)
        checks.push_back({{"name", c.name},
                          {"exact", c.exact},
                          {"empirical", c.empirical},
                          {"std_error", c.std_error},
                          {"deviation", c.deviation},
                          {"tolerance", c.tolerance},
                          {"pass", c.pass},
                          {"low_precision", c.low_precision}});
    doc["checks"] = std::move(checks);

    std::cout << doc.dump(2) << "\n";
    if (!args.out_path.empty()) {
        std::ofstream out(args.out_path);
        out << doc.dump(2) << "\n";
    }
    return report.all_pass ? 0 : 1;
}

// ----- bench ---------------------------------------------------------------

struct BenchArgs {
    std::string spec_path;
    std::string methods = "icm,locpmap,icm_iter,gibbs,mean_field,sa";
    std::string seeds = "0";
    std::string out_dir;
    bool pooled = false;
    int threads = 0;  // 0: all cores
    double lr = 0.0;  // 0: auto-scale by training terms
    int iters = 300;
    double l2 = 0.0;
    double grad_tol = 0.0;
    InferenceConfig inference;
};

int cmd_bench(const BenchArgs& args) {
    bench::SyntheticSpec base_spec = load_spec(args.spec_path);

    std::vector<Method> methods;
    for (const std::string& name : split_csv(args.methods)) {
        const auto m = method_from_name(name);
        if (!m) {
            std::cerr << "error: unknown method '" << name << "'; valid methods:";
            for (const auto& valid : method_names()) std::cerr << ' ' << valid;
            std::cerr << "\n";
            return 2;
        }
        methods.push_back(*m);
    }
    if (methods.empty()) throw UsageError("no methods requested");

    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_csv(args.seeds)) seeds.push_back(std::stoull(s));
    if (seeds.empty()) throw UsageError("no seeds requested");

    bench::ExperimentConfig config;
    config.pooled = args.pooled;
    config.threads = resolve_threads(args.threads);
    config.inference = args.inference;
    config.train.max_iters = args.iters;
    config.train.l2_weight = args.l2;
    config.train.grad_tol = args.grad_tol;
    config.train.learning_rate =
        args.lr > 0.0 ? args.lr
                      : 2.0 / (static_cast<double>(base_spec.num_train) * base_spec.height *
                               base_spec.width);

    json resolved = spec_to_json(base_spec);
    resolved["subcommand"] = "bench";
    resolved["methods"] = args.methods;
    resolved["seeds"] = args.seeds;
    resolved["out"] = args.out_dir;
    resolved["pooled"] = args.pooled;
    resolved["threads"] = config.threads;
    resolved["lr"] = config.train.learning_rate;
    resolved["iters"] = config.train.max_iters;
    resolved["l2"] = config.train.l2_weight;
    resolved["grad-tol"] = config.train.grad_tol;
    resolved["samples"] = config.inference.num_samples;
    log_resolved(resolved);

    const fs::path out(args.out_dir);
    fs::create_directories(out);

    std::string summary = "method,seed,mean_iou\n";
    std::string timings = "method,seed,wallclock_ms\n";
    json all = json::array();
    for (std::uint64_t seed : seeds) {
        bench::SyntheticSpec spec = base_spec;
        spec.seed = seed;
        const bench::ExperimentResult result = bench::run_experiment(spec, methods, config);

        std::string rows = "method,seed,class,iou,mean_iou\n";
        json seed_doc{{"seed", seed}, {"methods", json::array()}};
        for (const auto& score : result.per_method) {
            for (size_t l = 0; l < score.iou.per_class_iou.size(); ++l)
                rows += std::string(method_name(score.method)) + ',' + std::to_string(seed) +
                        ',' + std::to_string(l) + ',' + fmt_g(score.iou.per_class_iou[l]) + ',' +
                        fmt_g(score.iou.mean_iou) + "\n";
            summary += std::string(method_name(score.method)) + ',' + std::to_string(seed) + ',' +
                       fmt_g(score.iou.mean_iou) + "\n";
            timings += std::string(method_name(score.method)) + ',' + std::to_string(seed) + ',' +
                       fmt_g(score.wallclock_ms) + "\n";
            seed_doc["methods"].push_back({{"method", method_name(score.method)},
                                           {"per_class_iou", score.iou.per_class_iou},
                                           {"mean_iou", score.iou.mean_iou},
                                           {"wallclock_ms", score.wallclock_ms}});
        }
        std::ofstream rf(out / ("results_seed" + std::to_string(seed) + ".csv"));
        rf << rows;
        all.push_back(std::move(seed_doc));
        std::cerr << "seed " << seed << " done\n";
    }

    std::ofstream sf(out / "summary.csv");
    sf << summary;
    std::ofstream tf(out / "timings.csv");
    tf << timings;
    std::ofstream jf(out / "results.json");
    jf << json{{"spec", spec_to_json(base_spec)}, {"runs", all}}.dump(2) << "\n";

    std::cout << summary;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"grid CRF toolkit: pseudolikelihood learning and approximate inference"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "write a synthetic denoising dataset");
    generate->add_option("--spec", gen.spec_path, "synthetic spec JSON")->required();
    generate->add_option("--out", gen.out_dir, "output directory")->required();
    generate->add_option("--seed", gen.seed, "override the spec seed");
    add_config_help(generate);

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "pseudolikelihood training");
    train_cmd->add_option("--data", tr.data_dir, "dataset directory (from generate)")->required();
    train_cmd->add_option("--out", tr.out_model, "output model JSON")->required();
    train_cmd->add_option("--trace", tr.trace_path, "trace CSV path (default: <out>.trace.csv)");
    train_cmd->add_option("--lr", tr.config.learning_rate, "learning rate")
        ->capture_default_str();
    train_cmd->add_option("--iters", tr.config.max_iters, "max iterations")
        ->capture_default_str();
    train_cmd->add_option("--l2", tr.config.l2_weight, "l2 penalty")->capture_default_str();
    train_cmd->add_option("--batch", tr.config.batch_size, "minibatch size (0: full batch)")
        ->capture_default_str();
    train_cmd->add_option("--grad-tol", tr.config.grad_tol, "stop at this gradient norm")
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed, "shuffle seed")->capture_default_str();
    train_cmd->add_option("--threads", tr.config.threads, "worker threads (0: all cores)")
        ->capture_default_str();
    train_cmd->add_flag("--freeze-pairwise", tr.config.freeze_pairwise,
                        "keep pairwise weights at their initial value");
    train_cmd->add_flag("--symmetric-pairwise", tr.symmetric_pairwise,
                        "tie pairwise weights across ordered label pairs");
    add_config_help(train_cmd);

    InferArgs inf;
    CLI::App* infer = app.add_subcommand("infer", "predict labels for one image");
    infer->add_option("--model", inf.model_path, "model JSON")->required();
    infer->add_option("--image", inf.image_path, "input PGM")->required();
    infer->add_option("--method", inf.method, "inference method")->capture_default_str();
    infer->add_option("--samples", inf.config.num_samples, "locpmap/icm_iter repeats")
        ->capture_default_str();
    infer->add_option("--sweeps", inf.config.max_sweeps, "max sweeps")->capture_default_str();
    infer->add_option("--tol", inf.config.tol, "convergence tolerance")->capture_default_str();
    infer->add_option("--dropout", inf.config.dropout_fraction, "icm_iter dropout fraction")
        ->capture_default_str();
    infer->add_option("--gibbs-samples", inf.config.gibbs_samples, "kept gibbs sweeps")
        ->capture_default_str();
    infer->add_option("--burn-in", inf.config.burn_in, "gibbs burn-in (-1: 20%)")
        ->capture_default_str();
    infer->add_option("--sa-t0", inf.config.sa_t0, "annealing start temperature")
        ->capture_default_str();
    infer->add_option("--sa-alpha", inf.config.sa_alpha, "annealing decay")
        ->capture_default_str();
    infer->add_option("--damping", inf.config.lbp_damping, "lbp damping in [0,1)")
        ->capture_default_str();
    infer->add_option("--icm-init", inf.icm_init, "icm start: unary_argmax or random")
        ->capture_default_str();
    infer->add_option("--seed", inf.config.seed, "sampling seed")->capture_default_str();
    infer->add_option("--threads", inf.config.threads, "worker threads (0: all cores)")
        ->capture_default_str();
    infer->add_option("--prob-class", inf.prob_class,
                      "class for the probability map (-1: predicted label)")
        ->capture_default_str();
    infer->add_option("--out-labels", inf.out_labels, "label map output (P2)");
    infer->add_option("--out-prob", inf.out_prob, "probability map output (P5)");
    infer->add_option("--out-var", inf.out_var, "variance map output (P5)");
    add_config_help(infer);

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "IoU of predictions against truth");
    eval_cmd->add_option("--pred", ev.pred_dir, "directory of predicted label maps")->required();
    eval_cmd->add_option("--truth", ev.truth_dir, "directory of truth label maps")->required();
    eval_cmd->add_option("--out", ev.out_base, "write <out>.csv and <out>.json");
    add_config_help(eval_cmd);

    VerifyArgs ver;
    CLI::App* verify_cmd = app.add_subcommand("verify", "probability identity checks");
    verify_cmd->add_option("--check", ver.check, "gumbelmax, theorem1, zb, gradcheck, or all")
        ->capture_default_str();
    verify_cmd->add_option("--draws", ver.draws, "Monte Carlo draws")->capture_default_str();
    verify_cmd->add_option("--seed", ver.seed, "model/noise seed")->capture_default_str();
    verify_cmd->add_option("--out", ver.out_path, "also write the JSON report here");
    add_config_help(verify_cmd);

    BenchArgs be;
    CLI::App* bench_cmd = app.add_subcommand("bench", "end-to-end denoising benchmark");
    bench_cmd->add_option("--spec", be.spec_path, "synthetic spec JSON")->required();
    bench_cmd->add_option("--methods", be.methods, "comma-separated method list")
        ->capture_default_str();
    bench_cmd->add_option("--seeds", be.seeds, "comma-separated dataset seeds")
        ->capture_default_str();
    bench_cmd->add_option("--out", be.out_dir, "output directory")->required();
    bench_cmd->add_flag("--pooled", be.pooled, "pool pixel counts instead of per-image IoU");
    bench_cmd->add_option("--threads", be.threads, "worker threads (0: all cores)")
        ->capture_default_str();
    bench_cmd->add_option("--lr", be.lr, "learning rate (0: auto-scale)")->capture_default_str();
    bench_cmd->add_option("--iters", be.iters, "training iterations")->capture_default_str();
    bench_cmd->add_option("--l2", be.l2, "l2 penalty")->capture_default_str();
    bench_cmd->add_option("--grad-tol", be.grad_tol, "training stop tolerance")
        ->capture_default_str();
    bench_cmd->add_option("--samples", be.inference.num_samples, "locpmap/icm_iter repeats")
        ->capture_default_str();
    bench_cmd->add_option("--sweeps", be.inference.max_sweeps, "max sweeps")
        ->capture_default_str();
    bench_cmd->add_option("--gibbs-samples", be.inference.gibbs_samples, "kept gibbs sweeps")
        ->capture_default_str();
    bench_cmd->add_option("--dropout", be.inference.dropout_fraction, "icm_iter dropout")
        ->capture_default_str();
    bench_cmd->add_option("--sa-t0", be.inference.sa_t0, "annealing start temperature")
        ->capture_default_str();
    bench_cmd->add_option("--sa-alpha", be.inference.sa_alpha, "annealing decay")
        ->capture_default_str();
    bench_cmd->add_option("--damping", be.inference.lbp_damping, "lbp damping")
        ->capture_default_str();
    add_config_help(bench_cmd);

    try {
        std::vector<std::string> tokens = expand_config(argc, argv);
        std::reverse(tokens.begin(), tokens.end()); // CLI11 consumes back to front
        app.parse(std::move(tokens));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (infer->parsed()) return cmd_infer(inf);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (verify_cmd->parsed()) return cmd_verify(ver);
        if (bench_cmd->parsed()) return cmd_bench(be);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
