#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gridcrf/oracle.hpp"

using namespace gridcrf;
using namespace gridcrf::oracle;

namespace {

void randomize(GridModel& model, Weights& weights, std::uint64_t seed, double scale = 1.0) {
    CounterRng rng(seed, 0);
    auto u = [&] { return scale * (2.0 * rng.next_unit_open() - 1.0); };
    for (int n = 0; n < model.num_nodes(); ++n)
        for (double& v : model.unary_features(n)) v = u();
    for (int e = 0; e < model.num_edges(); ++e)
        for (double& v : model.pairwise_features(e)) v = u();
    for (double& v : weights.unary_flat()) v = u();
    for (double& v : weights.pairwise_flat()) v = u();
}

// single-node model with the given unary log-potentials
struct SingleNode {
    GridModel model;
    Weights weights;
    SingleNode(std::vector<double> logs)
        : model(1, 1, static_cast<int>(logs.size()), 1, 1),
          weights(static_cast<int>(logs.size()), 1, 1) {
        model.unary_features(0)[0] = 1.0;
        for (size_t l = 0; l < logs.size(); ++l) weights.unary(static_cast<int>(l))[0] = logs[l];
    }
};

} // namespace

TEST_CASE("labeling index round trip") {
    for (std::uint64_t i = 0; i < 27; ++i) {
        const Labeling y = labeling_from_index(i, 3, 3);
        CHECK(index_of_labeling(y, 3) == i);
    }
    // lexicographic: node 0 most significant
    CHECK(labeling_from_index(1, 3, 2) == Labeling{0, 0, 1});
    CHECK(labeling_from_index(4, 3, 2) == Labeling{1, 0, 0});
}

TEST_CASE("exact partition function") {
    SUBCASE("zero weights: n * ln K") {
        GridModel m(2, 3, 3, 1, 1);
        Weights w(3, 1, 1);
        CHECK(exact_partition(m, w) == doctest::Approx(6.0 * std::log(3.0)).epsilon(1e-12));
    }
    SUBCASE("single node with logs (ln 3, ln 1): ln 4") {
        SingleNode s({std::log(3.0), 0.0});
        CHECK(exact_partition(s.model, s.weights) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("matches reverse-order recomputation") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 42);
        const double log_z = exact_partition(m, w);
        // independent recomputation in reverse enumeration order
        std::vector<double> totals;
        for (std::uint64_t i = 16; i-- > 0;)
            totals.push_back(total_log_potential(m, w, labeling_from_index(i, 4, 2)));
        const double mx = *std::max_element(totals.begin(), totals.end());
        double s = 0.0;
        for (double t : totals) s += std::exp(t - mx);
        CHECK(log_z == doctest::Approx(mx + std::log(s)).epsilon(1e-12));
    }
    SUBCASE("budget exceeded") {
        GridModel m(5, 5, 4, 1, 1); // 4^25 >> 2^20
        Weights w(4, 1, 1);
        CHECK_THROWS_AS(exact_partition(m, w), BudgetExceeded);
        EnumerationBudget tiny{8};
        GridModel m2(2, 2, 2, 1, 1);
        Weights w2(2, 1, 1);
        CHECK_THROWS_AS(exact_partition(m2, w2, tiny), BudgetExceeded);
    }
}

TEST_CASE("exact distribution") {
    SUBCASE("uniform under zero weights") {
        GridModel m(2, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        const auto dist = exact_distribution(m, w);
        for (double p : dist) CHECK(p == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
    }
    SUBCASE("single-node softmax") {
        SingleNode s({std::log(3.0), 0.0});
        const auto dist = exact_distribution(s.model, s.weights);
        CHECK(dist[0] == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(dist[1] == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("consistent with the partition function and sums to one") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 8);
        const auto dist = exact_distribution(m, w);
        const double log_z = exact_partition(m, w);
        double sum = 0.0;
        for (std::uint64_t i = 0; i < 16; ++i) {
            const Labeling y = labeling_from_index(i, 4, 2);
            CHECK(dist[static_cast<size_t>(i)] ==
                  doctest::Approx(std::exp(total_log_potential(m, w, y) - log_z)).epsilon(1e-12));
            sum += dist[static_cast<size_t>(i)];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("exact marginals") {
    SUBCASE("uniform case") {
        GridModel m(2, 2, 3, 1, 1);
        Weights w(3, 1, 1);
        const auto marg = exact_marginals(m, w);
        for (double p : marg) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("pairwise-zero: per-node softmax") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        m.unary_features(0)[0] = 1.0;
        m.unary_features(1)[0] = 1.0;
        w.unary(0)[0] = std::log(3.0);
        const auto marg = exact_marginals(m, w);
        CHECK(marg[0] == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(marg[1] == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("2x2 random: matches summing the distribution") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 12);
        const auto marg = exact_marginals(m, w);
        const auto dist = exact_distribution(m, w);
        for (int node = 0; node < 4; ++node)
            for (int l = 0; l < 2; ++l) {
                double p = 0.0;
                for (std::uint64_t i = 0; i < 16; ++i)
                    if (labeling_from_index(i, 4, 2)[static_cast<size_t>(node)] == l)
                        p += dist[static_cast<size_t>(i)];
                CHECK(marg[static_cast<size_t>(node) * 2 + static_cast<size_t>(l)] ==
                      doctest::Approx(p).epsilon(1e-12));
            }
    }
}

TEST_CASE("exact sampling") {
    SUBCASE("deterministic under the seed") {
        GridModel m(2, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        randomize(m, w, 4);
        const auto a = exact_sample(m, w, GumbelSource{10, 0}, 50);
        const auto b = exact_sample(m, w, GumbelSource{10, 0}, 50);
        CHECK(a == b);
    }
    SUBCASE("degenerate model always returns its one labeling") {
        SingleNode s({50.0, 0.0});
        const auto draws = exact_sample(s.model, s.weights, GumbelSource{3, 0}, 200);
        for (const auto& y : draws) CHECK(y == Labeling{0});
    }
    SUBCASE("frequencies match the distribution (chi-square sanity)") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 15);
        const size_t n = 100000;
        const auto draws = exact_sample(m, w, GumbelSource{11, 0}, n);
        const auto dist = exact_distribution(m, w);
        std::vector<size_t> counts(16, 0);
        for (const auto& y : draws) ++counts[static_cast<size_t>(index_of_labeling(y, 2))];
        double chi2 = 0.0;
        for (size_t i = 0; i < 16; ++i) {
            const double expect = dist[i] * static_cast<double>(n);
            chi2 += (static_cast<double>(counts[i]) - expect) *
                    (static_cast<double>(counts[i]) - expect) / expect;
        }
        // df = 15; generous bound, deterministic under the fixed seed
        CHECK(chi2 < 60.0);
    }
}

TEST_CASE("exact MAP") {
    SUBCASE("unary-only: per-node argmax") {
        GridModel m(1, 3, 2, 1, 1);
        Weights w(2, 1, 1);
        for (int n = 0; n < 3; ++n) m.unary_features(n)[0] = n == 1 ? -1.0 : 1.0;
        w.unary(0)[0] = 1.0; // theta(l=0) = feature, theta(l=1) = 0
        CHECK(exact_map(m, w) == Labeling{0, 1, 0});
    }
    SUBCASE("uniform model: all-zeros by tie-break") {
        GridModel m(2, 2, 3, 1, 1);
        Weights w(3, 1, 1);
        CHECK(exact_map(m, w) == Labeling{0, 0, 0, 0});
    }
}

TEST_CASE("local maxima enumeration") {
    SUBCASE("global partition has exactly one maximum per draw") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        randomize(m, w, 19);
        const auto global = BlockPartition::global(2);
        for (std::uint64_t d = 0; d < 10000; ++d) {
            const auto table = make_perturbation(GumbelSource{123, d}, m, global);
            CHECK(enumerate_local_maxima(m, w, table).size() == 1);
        }
    }
    SUBCASE("zero noise, unary-only, strict argmax: the single unary argmax") {
        GridModel m(2, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        for (int n = 0; n < 4; ++n) m.unary_features(n)[0] = n % 2 ? 1.0 : -1.0;
        w.unary(0)[0] = 2.0;
        const auto zeros = PerturbationTable::zeros(BlockPartition::singletons(4), 2);
        const auto loc = enumerate_local_maxima(m, w, zeros);
        REQUIRE(loc.size() == 1);
        CHECK(loc[0] == Labeling{1, 0, 1, 0});
    }
    SUBCASE("2x2 verified by an independent per-labeling check loop") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 23);
        const auto singles = BlockPartition::singletons(4);
        const auto table = make_perturbation(GumbelSource{99, 5}, m, singles);
        const auto loc = enumerate_local_maxima(m, w, table);

        auto perturbed_total = [&](const Labeling& y) {
            return total_log_potential(m, w, y) + table.perturbation_of(y, 2);
        };
        std::vector<Labeling> expected;
        for (std::uint64_t i = 0; i < 16; ++i) {
            const Labeling y = labeling_from_index(i, 4, 2);
            bool is_max = true;
            for (int node = 0; node < 4 && is_max; ++node) {
                Labeling alt = y;
                for (int l = 0; l < 2; ++l) {
                    alt[static_cast<size_t>(node)] = l;
                    if (perturbed_total(alt) > perturbed_total(y)) is_max = false;
                }
            }
            if (is_max) expected.push_back(y);
        }
        CHECK(loc == expected);
        CHECK(loc.size() >= 1); // at least one local maximum always exists
    }
}

TEST_CASE("expected local-maxima count") {
    SUBCASE("global partition gives exactly 1") {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            GridModel m(2, 2, 2, 2, 2);
            Weights w(2, 2, 2);
            randomize(m, w, seed);
            CHECK(expected_local_maxima(m, w, BlockPartition::global(4)) ==
                  doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    SUBCASE("singletons, zero weights, 2 binary nodes: 1.0") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        CHECK(expected_local_maxima(m, w, BlockPartition::singletons(2)) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches the Monte Carlo mean within 3 SE, and is >= 1") {
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 33);
        const auto singles = BlockPartition::singletons(4);
        const double zb = expected_local_maxima(m, w, singles);
        CHECK(zb >= 1.0);

        const auto all = local_membership_check_all(m, w, singles, 100000, GumbelSource{321, 0});
        CHECK(std::abs(all.mean_local_maxima - zb) < 3.0 * all.mean_local_maxima_se);
    }
}

TEST_CASE("gumbel-max check") {
    SUBCASE("uniform model stays within 3 SE everywhere") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        const auto rep = gumbelmax_check(m, w, 100000, GumbelSource{42, 0});
        CHECK(rep.pass);
        CHECK(rep.max_abs_deviation < 3.0 * std::sqrt(0.25 * 0.75 / 100000.0));
    }
    SUBCASE("3-node chain, K=3, 200k draws: max deviation < 0.01") {
        GridModel m(1, 3, 3, 2, 2);
        Weights w(3, 2, 2);
        randomize(m, w, 77);
        const auto rep = gumbelmax_check(m, w, 200000, GumbelSource{7, 0});
        CHECK(rep.pass);
        CHECK(rep.max_abs_deviation < 0.01);
    }
    SUBCASE("deterministic under the seed") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        randomize(m, w, 2);
        const auto a = gumbelmax_check(m, w, 5000, GumbelSource{5, 0});
        const auto b = gumbelmax_check(m, w, 5000, GumbelSource{5, 0});
        CHECK(a.empirical == b.empirical);
        CHECK(a.max_abs_deviation == b.max_abs_deviation);
        CHECK(a.low_precision); // 5000 draws cannot resolve 0.01
    }
}

TEST_CASE("local membership check") {
    SUBCASE("zero weights, singletons, 2x2 binary: product is 1/16") {
        GridModel m(2, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        const auto rep = local_membership_check(m, w, BlockPartition::singletons(4), {0, 1, 1, 0},
                                        50000, GumbelSource{9, 0}, 0.005);
        CHECK(rep.exact == doctest::Approx(0.0625).epsilon(1e-12));
        CHECK(std::abs(rep.empirical - 0.0625) < 0.005);
        CHECK(rep.pass);
    }
    SUBCASE("global partition reduces to the exact distribution") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        randomize(m, w, 3);
        const auto dist = exact_distribution(m, w);
        const Labeling y{1, 0};
        const auto rep = local_membership_check(m, w, BlockPartition::global(2), y, 50000,
                                        GumbelSource{17, 0}, 0.02);
        CHECK(rep.exact ==
              doctest::Approx(dist[static_cast<size_t>(index_of_labeling(y, 2))]).epsilon(1e-12));
        CHECK(rep.pass);
    }
    SUBCASE("size-2 blocks on a 2x3 grid (composite likelihood)") {
        GridModel m(2, 3, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 51);
        const BlockPartition blocks({{0, 3}, {1, 4}, {2, 5}}, 6);
        const auto all = local_membership_check_all(m, w, blocks, 50000, GumbelSource{29, 0}, 0.02);
        for (const auto& rep : all.per_labeling) CHECK(rep.pass);
    }
}
