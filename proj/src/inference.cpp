#include "gridcrf/inference.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

#include "gridcrf/parallel.hpp"

namespace gridcrf {

const char* method_name(Method m) {
    switch (m) {
        case Method::icm: return "icm";
        case Method::locpmap: return "locpmap";
        case Method::icm_iter: return "icm_iter";
        case Method::gibbs: return "gibbs";
        case Method::mean_field: return "mean_field";
        case Method::lbp: return "lbp";
        case Method::sa: return "sa";
    }
    return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
    for (Method m : {Method::icm, Method::locpmap, Method::icm_iter, Method::gibbs,
                     Method::mean_field, Method::lbp, Method::sa})
        if (name == method_name(m)) return m;
    return std::nullopt;
}

std::vector<std::string> method_names() {
    std::vector<std::string> out;
    for (Method m : {Method::icm, Method::locpmap, Method::icm_iter, Method::gibbs,
                     Method::mean_field, Method::lbp, Method::sa})
        out.emplace_back(method_name(m));
    return out;
}

void InferenceConfig::validate() const {
    if (num_samples < 1) throw std::invalid_argument("InferenceConfig: num_samples must be >= 1");
    if (max_sweeps < 1) throw std::invalid_argument("InferenceConfig: max_sweeps must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("InferenceConfig: tol must be positive");
    if (dropout_fraction < 0.0 || dropout_fraction >= 1.0)
        throw std::invalid_argument("InferenceConfig: dropout_fraction must be in [0,1)");
    if (gibbs_samples < 1) throw std::invalid_argument("InferenceConfig: gibbs_samples must be >= 1");
    if (!(sa_t0 > 0.0)) throw std::invalid_argument("InferenceConfig: sa_t0 must be positive");
    if (sa_alpha <= 0.0 || sa_alpha >= 1.0)
        throw std::invalid_argument("InferenceConfig: sa_alpha must be in (0,1)");
    if (lbp_damping < 0.0 || lbp_damping >= 1.0)
        throw std::invalid_argument("InferenceConfig: lbp_damping must be in [0,1)");
}

namespace {

int argmax_lowest(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    return best;
}

Labeling random_labeling(CounterRng& rng, const GridModel& model) {
    Labeling y(static_cast<size_t>(model.num_nodes()));
    for (int& l : y)
        l = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(model.num_labels())));
    return y;
}

Labeling unary_argmax_labeling(const GridModel& model, const Weights& weights) {
    const int K = model.num_labels();
    Labeling y(static_cast<size_t>(model.num_nodes()));
    std::vector<double> s(static_cast<size_t>(K));
    for (int n = 0; n < model.num_nodes(); ++n) {
        for (int l = 0; l < K; ++l)
            s[static_cast<size_t>(l)] = log_potential_unary(model, weights, n, l);
        y[static_cast<size_t>(n)] = argmax_lowest(s);
    }
    return y;
}

// Singleton conditional scores with the unary term of masked nodes dropped.
void node_scores_masked(const GridModel& model, const Weights& weights, const Labeling& y,
                        int node, const std::uint8_t* unary_mask, std::span<double> out) {
    node_scores(model, weights, y, node, out);
    if (unary_mask && unary_mask[node]) {
        const auto feat = model.unary_features(node);
        for (int l = 0; l < model.num_labels(); ++l) {
            double dot = 0.0;
            const auto w = weights.unary(l);
            for (size_t k = 0; k < feat.size(); ++k) dot += w[k] * feat[k];
            out[static_cast<size_t>(l)] -= dot;
        }
    }
}

// Raster-order coordinate ascent; each accepted move cannot lower the score.
std::pair<Labeling, int> icm_impl(const GridModel& model, const Weights& weights,
                                  const Labeling& init, int max_sweeps,
                                  const std::uint8_t* unary_mask) {
    const int K = model.num_labels();
    Labeling y = init;
    std::vector<double> s(static_cast<size_t>(K));
    int sweeps = 0;
    for (; sweeps < max_sweeps;) {
        ++sweeps;
        bool changed = false;
        for (int n = 0; n < model.num_nodes(); ++n) {
            node_scores_masked(model, weights, y, n, unary_mask, s);
            const int best = argmax_lowest(s);
            assert(s[static_cast<size_t>(best)] >=
                   s[static_cast<size_t>(y[static_cast<size_t>(n)])] - 1e-12);
            if (best != y[static_cast<size_t>(n)]) {
                y[static_cast<size_t>(n)] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return {std::move(y), sweeps};
}

InferenceResult aggregate_samples(const GridModel& model, const std::vector<Labeling>& samples,
                                  int total_sweeps) {
    const int K = model.num_labels();
    const int n = model.num_nodes();
    InferenceResult res;
    res.node_prob.assign(static_cast<size_t>(n) * K, 0.0);
    for (const Labeling& y : samples)
        for (int i = 0; i < n; ++i)
            res.node_prob[static_cast<size_t>(i) * K +
                          static_cast<size_t>(y[static_cast<size_t>(i)])] += 1.0;
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& p : res.node_prob) p *= inv;

    res.labels.resize(static_cast<size_t>(n));
    res.node_var.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::span<const double> row(res.node_prob.data() + static_cast<size_t>(i) * K,
                                          static_cast<size_t>(K));
        const int l = argmax_lowest(row);
        res.labels[static_cast<size_t>(i)] = l;
        const double p = row[static_cast<size_t>(l)];
        res.node_var[static_cast<size_t>(i)] = p * (1.0 - p);
    }
    res.samples_used = static_cast<int>(samples.size());
    res.sweeps_run = total_sweeps;
    return res;
}

InferenceResult point_result(const GridModel& model, Labeling labels, int sweeps) {
    const int K = model.num_labels();
    InferenceResult res;
    res.node_prob.assign(static_cast<size_t>(model.num_nodes()) * K, 0.0);
    res.node_var.assign(static_cast<size_t>(model.num_nodes()), 0.0);
    for (int i = 0; i < model.num_nodes(); ++i)
        res.node_prob[static_cast<size_t>(i) * K +
                      static_cast<size_t>(labels[static_cast<size_t>(i)])] = 1.0;
    res.labels = std::move(labels);
    res.samples_used = 1;
    res.sweeps_run = sweeps;
    return res;
}

int sample_from_probs(std::span<const double> probs, double u) {
    double c = 0.0;
    for (int l = 0; l < static_cast<int>(probs.size()); ++l) {
        c += probs[static_cast<size_t>(l)];
        if (u <= c) return l;
    }
    return static_cast<int>(probs.size()) - 1;
}

std::pair<Labeling, int> locpmap_sample_impl(const GridModel& model, const Weights& weights,
                                             const GumbelSource& source,
                                             const BlockPartition& partition,
                                             const InferenceConfig& config) {
    CounterRng rng = source.rng();
    const PerturbationTable table = make_perturbation(rng, model, partition);
    Labeling y = random_labeling(rng, model);

    // Block-ICM on the perturbed scores.
    int sweeps = 0;
    for (; sweeps < config.max_sweeps;) {
        ++sweeps;
        bool changed = false;
        for (size_t b = 0; b < partition.num_blocks(); ++b) {
            const auto& block = partition.blocks()[b];
            const std::vector<double> scores =
                perturbed_block_score(model, weights, table, y, b);
            std::int64_t best = argmax_lowest(scores);
            for (int t = static_cast<int>(block.size()) - 1; t >= 0; --t) {
                const int l = static_cast<int>(best % model.num_labels());
                best /= model.num_labels();
                if (y[static_cast<size_t>(block[static_cast<size_t>(t)])] != l) {
                    y[static_cast<size_t>(block[static_cast<size_t>(t)])] = l;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    return {std::move(y), sweeps};
}

} // namespace

std::pair<Labeling, int> icm(const GridModel& model, const Weights& weights,
                             const Labeling& init, const InferenceConfig& config) {
    config.validate();
    check_labeling(model, init);
    return icm_impl(model, weights, init, config.max_sweeps, nullptr);
}

Labeling locpmap_sample(const GridModel& model, const Weights& weights,
                        const GumbelSource& source, const BlockPartition& partition,
                        const InferenceConfig& config) {
    config.validate();
    return locpmap_sample_impl(model, weights, source, partition, config).first;
}

InferenceResult locpmap_predict(const GridModel& model, const Weights& weights,
                                const InferenceConfig& config, const BlockPartition& partition) {
    config.validate();
    const int S = config.num_samples;
    std::vector<Labeling> samples(static_cast<size_t>(S));
    std::vector<int> sweeps(static_cast<size_t>(S), 0);
    parallel_for(S, config.threads, [&](std::int64_t s) {
        auto [y, sw] = locpmap_sample_impl(
            model, weights, GumbelSource{config.seed, static_cast<std::uint64_t>(s)}, partition,
            config);
        samples[static_cast<size_t>(s)] = std::move(y);
        sweeps[static_cast<size_t>(s)] = sw;
    });
    int total = 0;
    for (int sw : sweeps) total += sw;
    return aggregate_samples(model, samples, total);
}

InferenceResult icm_iter(const GridModel& model, const Weights& weights,
                         const InferenceConfig& config) {
    config.validate();
    const int S = config.num_samples;
    const int n = model.num_nodes();
    const int masked =
        static_cast<int>(std::lround(config.dropout_fraction * static_cast<double>(n)));
    std::vector<Labeling> samples(static_cast<size_t>(S));
    std::vector<int> sweeps(static_cast<size_t>(S), 0);
    parallel_for(S, config.threads, [&](std::int64_t s) {
        CounterRng rng(config.seed, static_cast<std::uint64_t>(s));
        // partial Fisher-Yates for the dropout mask
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
        for (int i = 0; i < masked; ++i) {
            const int j =
                i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
            mask[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
        }
        const Labeling init = random_labeling(rng, model);
        auto [y, sw] = icm_impl(model, weights, init, config.max_sweeps, mask.data());
        samples[static_cast<size_t>(s)] = std::move(y);
        sweeps[static_cast<size_t>(s)] = sw;
    });
    int total = 0;
    for (int sw : sweeps) total += sw;
    return aggregate_samples(model, samples, total);
}

InferenceResult gibbs(const GridModel& model, const Weights& weights,
                      const InferenceConfig& config) {
    config.validate();
    const int K = model.num_labels();
    const int n = model.num_nodes();
    const int burn = config.resolved_burn_in();
    const int kept = config.gibbs_samples;

    CounterRng rng(config.seed, 0);
    Labeling y = random_labeling(rng, model);
    std::vector<double> counts(static_cast<size_t>(n) * K, 0.0);
    std::vector<double> s(static_cast<size_t>(K));
    for (int sweep = 0; sweep < burn + kept; ++sweep) {
        for (int node = 0; node < n; ++node) {
            node_scores(model, weights, y, node, s);
            softmax_inplace(s);
            y[static_cast<size_t>(node)] = sample_from_probs(s, rng.next_unit_open());
        }
        if (sweep >= burn)
            for (int node = 0; node < n; ++node)
                counts[static_cast<size_t>(node) * K +
                       static_cast<size_t>(y[static_cast<size_t>(node)])] += 1.0;
    }

    InferenceResult res;
    res.node_prob.resize(counts.size());
    for (size_t i = 0; i < counts.size(); ++i)
        res.node_prob[i] = counts[i] / static_cast<double>(kept);
    res.labels.resize(static_cast<size_t>(n));
    res.node_var.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::span<const double> row(res.node_prob.data() + static_cast<size_t>(i) * K,
                                          static_cast<size_t>(K));
        const int l = argmax_lowest(row);
        res.labels[static_cast<size_t>(i)] = l;
        const double p = row[static_cast<size_t>(l)];
        res.node_var[static_cast<size_t>(i)] = p * (1.0 - p);
    }
    res.samples_used = kept;
    res.sweeps_run = burn + kept;
    return res;
}

InferenceResult mean_field(const GridModel& model, const Weights& weights,
                           const InferenceConfig& config) {
    config.validate();
    const int K = model.num_labels();
    const int n = model.num_nodes();
    std::vector<double> q(static_cast<size_t>(n) * K, 1.0 / static_cast<double>(K));
    std::vector<double> s(static_cast<size_t>(K));

    int sweeps = 0;
    bool converged = false;
    for (; sweeps < config.max_sweeps && !converged;) {
        ++sweeps;
        double max_change = 0.0;
        for (int node = 0; node < n; ++node) {
            for (int l = 0; l < K; ++l)
                s[static_cast<size_t>(l)] = log_potential_unary(model, weights, node, l);
            for (int e : model.incident_edges(node)) {
                const Edge& ed = model.edge(e);
                const int other = ed.a == node ? ed.b : ed.a;
                const double* qo = q.data() + static_cast<size_t>(other) * K;
                for (int l = 0; l < K; ++l) {
                    double acc = 0.0;
                    for (int lp = 0; lp < K; ++lp) {
                        const double pw = ed.a == node
                                              ? log_potential_pairwise(model, weights, e, l, lp)
                                              : log_potential_pairwise(model, weights, e, lp, l);
                        acc += qo[lp] * pw;
                    }
                    s[static_cast<size_t>(l)] += acc;
                }
            }
            softmax_inplace(s);
            double* qn = q.data() + static_cast<size_t>(node) * K;
            for (int l = 0; l < K; ++l) {
                max_change = std::max(max_change, std::abs(qn[l] - s[static_cast<size_t>(l)]));
                qn[l] = s[static_cast<size_t>(l)];
            }
        }
        converged = max_change < config.tol;
    }

    InferenceResult res;
    res.node_prob = std::move(q);
    res.labels.resize(static_cast<size_t>(n));
    res.node_var.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::span<const double> row(res.node_prob.data() + static_cast<size_t>(i) * K,
                                          static_cast<size_t>(K));
        const int l = argmax_lowest(row);
        res.labels[static_cast<size_t>(i)] = l;
        const double p = row[static_cast<size_t>(l)];
        res.node_var[static_cast<size_t>(i)] = p * (1.0 - p);
    }
    res.samples_used = 1;
    res.sweeps_run = sweeps;
    return res;
}

InferenceResult loopy_bp(const GridModel& model, const Weights& weights,
                         const InferenceConfig& config) {
    config.validate();
    const int K = model.num_labels();
    const int n = model.num_nodes();
    const int E = model.num_edges();
    const double lambda = 1.0 - config.lbp_damping;

    // msg[(2e+dir)*K + l]: dir 0 carries a->b, dir 1 carries b->a; always
    // normalized to sum 1.
    std::vector<double> msg(static_cast<size_t>(2 * E) * K, 1.0 / static_cast<double>(K));
    std::vector<double> base(static_cast<size_t>(K));
    std::vector<double> out(static_cast<size_t>(K));

    auto incoming = [&](int edge, int to_node) -> double* {
        const int dir = model.edge(edge).b == to_node ? 0 : 1;
        return msg.data() + (static_cast<size_t>(2 * edge + dir)) * K;
    };

    // Update the message sent from `from` across `edge`.
    auto update = [&](int edge, int from) -> double {
        const Edge& ed = model.edge(edge);
        for (int l = 0; l < K; ++l)
            base[static_cast<size_t>(l)] = log_potential_unary(model, weights, from, l);
        for (int e : model.incident_edges(from)) {
            if (e == edge) continue;
            const double* in = incoming(e, from);
            for (int l = 0; l < K; ++l)
                base[static_cast<size_t>(l)] += std::log(std::max(in[l], 1e-300));
        }
        for (int lt = 0; lt < K; ++lt) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int lf = 0; lf < K; ++lf) {
                const double pw = ed.a == from
                                      ? log_potential_pairwise(model, weights, edge, lf, lt)
                                      : log_potential_pairwise(model, weights, edge, lt, lf);
                mx = std::max(mx, base[static_cast<size_t>(lf)] + pw);
            }
            double sum = 0.0;
            for (int lf = 0; lf < K; ++lf) {
                const double pw = ed.a == from
                                      ? log_potential_pairwise(model, weights, edge, lf, lt)
                                      : log_potential_pairwise(model, weights, edge, lt, lf);
                sum += std::exp(base[static_cast<size_t>(lf)] + pw - mx);
            }
            out[static_cast<size_t>(lt)] = mx + std::log(sum);
        }
        softmax_inplace(out);
        double* m = msg.data() + (static_cast<size_t>(2 * edge + (ed.a == from ? 0 : 1))) * K;
        double change = 0.0;
        double norm = 0.0;
        for (int l = 0; l < K; ++l) {
            const double v = (1.0 - lambda) * m[l] + lambda * out[static_cast<size_t>(l)];
            change = std::max(change, std::abs(v - m[l]));
            m[l] = v;
            norm += v;
        }
        for (int l = 0; l < K; ++l) m[l] /= norm;
        return change;
    };

    int sweeps = 0;
    bool converged = false;
    for (; sweeps < config.max_sweeps && !converged;) {
        ++sweeps;
        double max_change = 0.0;
        for (int e = 0; e < E; ++e) max_change = std::max(max_change, update(e, model.edge(e).a));
        for (int e = E - 1; e >= 0; --e)
            max_change = std::max(max_change, update(e, model.edge(e).b));
        converged = max_change < config.tol;
    }

    InferenceResult res;
    res.node_prob.resize(static_cast<size_t>(n) * K);
    res.labels.resize(static_cast<size_t>(n));
    res.node_var.resize(static_cast<size_t>(n));
    for (int node = 0; node < n; ++node) {
        std::span<double> b(res.node_prob.data() + static_cast<size_t>(node) * K,
                            static_cast<size_t>(K));
        for (int l = 0; l < K; ++l)
            b[static_cast<size_t>(l)] = log_potential_unary(model, weights, node, l);
        for (int e : model.incident_edges(node)) {
            const double* in = incoming(e, node);
            for (int l = 0; l < K; ++l)
                b[static_cast<size_t>(l)] += std::log(std::max(in[l], 1e-300));
        }
        softmax_inplace(b);
        const int l = argmax_lowest(b);
        res.labels[static_cast<size_t>(node)] = l;
        const double p = b[static_cast<size_t>(l)];
        res.node_var[static_cast<size_t>(node)] = p * (1.0 - p);
    }
    res.samples_used = 1;
    res.sweeps_run = sweeps;
    return res;
}

InferenceResult simulated_annealing(const GridModel& model, const Weights& weights,
                                    const InferenceConfig& config) {
    config.validate();
    const int K = model.num_labels();
    const int n = model.num_nodes();
    CounterRng rng(config.seed, 0);
    Labeling y = random_labeling(rng, model);
    std::vector<double> s(static_cast<size_t>(K));
    double temp = config.sa_t0;
    for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
        const double t = std::max(temp, 1e-12);
        for (int node = 0; node < n; ++node) {
            node_scores(model, weights, y, node, s);
            for (double& v : s) v /= t;
            softmax_inplace(s);
            y[static_cast<size_t>(node)] = sample_from_probs(s, rng.next_unit_open());
        }
        temp *= config.sa_alpha;
    }
    auto [final_y, icm_sweeps] = icm_impl(model, weights, y, 1, nullptr);
    return point_result(model, std::move(final_y), config.max_sweeps + icm_sweeps);
}

InferenceResult run_inference(const GridModel& model, const Weights& weights,
                              const InferenceConfig& config, const BlockPartition* partition) {
    config.validate();
    switch (config.method) {
        case Method::icm: {
            CounterRng rng(config.seed, 0);
            const Labeling init = config.icm_init == IcmInit::unary_argmax
                                      ? unary_argmax_labeling(model, weights)
                                      : random_labeling(rng, model);
            auto [y, sweeps] = icm_impl(model, weights, init, config.max_sweeps, nullptr);
            return point_result(model, std::move(y), sweeps);
        }
        case Method::locpmap: {
            if (partition) return locpmap_predict(model, weights, config, *partition);
            return locpmap_predict(model, weights, config,
                                   BlockPartition::singletons(model.num_nodes()));
        }
        case Method::icm_iter: return icm_iter(model, weights, config);
        case Method::gibbs: return gibbs(model, weights, config);
        case Method::mean_field: return mean_field(model, weights, config);
        case Method::lbp: return loopy_bp(model, weights, config);
        case Method::sa: return simulated_annealing(model, weights, config);
    }
    throw std::invalid_argument("run_inference: unknown method");
}

} // namespace gridcrf
