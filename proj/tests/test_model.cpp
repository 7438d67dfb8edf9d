#include <doctest.h>

#include <cmath>
#include <limits>

#include "gridcrf/model.hpp"
#include "gridcrf/model_io.hpp"
#include "gridcrf/oracle.hpp"
#include "gridcrf/rng.hpp"

using namespace gridcrf;

namespace {

void randomize(GridModel& model, Weights& weights, std::uint64_t seed) {
    CounterRng rng(seed, 0);
    auto u = [&] { return 2.0 * rng.next_unit_open() - 1.0; };
    for (int n = 0; n < model.num_nodes(); ++n)
        for (double& v : model.unary_features(n)) v = u();
    for (int e = 0; e < model.num_edges(); ++e)
        for (double& v : model.pairwise_features(e)) v = u();
    for (double& v : weights.unary_flat()) v = u();
    for (double& v : weights.pairwise_flat()) v = u();
}

// Straight-line recomputation of the total by explicit double loop, kept
// independent of total_log_potential; edges summed in reverse order so the
// value is also checked against enumeration-order effects.
double total_by_hand(const GridModel& model, const Weights& weights, const Labeling& y) {
    double t = 0.0;
    for (int e = model.num_edges() - 1; e >= 0; --e) {
        const Edge& ed = model.edge(e);
        const auto f = model.pairwise_features(e);
        const auto w = weights.pairwise(y[static_cast<size_t>(ed.a)], y[static_cast<size_t>(ed.b)]);
        for (size_t k = 0; k < f.size(); ++k) t += f[k] * w[k];
    }
    for (int n = model.num_nodes() - 1; n >= 0; --n) {
        const auto f = model.unary_features(n);
        const auto w = weights.unary(y[static_cast<size_t>(n)]);
        for (size_t k = 0; k < f.size(); ++k) t += f[k] * w[k];
    }
    return t;
}

} // namespace

TEST_CASE("grid topology is 4-connected without wraparound") {
    const GridModel m(3, 4, 2, 1, 1);
    CHECK(m.num_nodes() == 12);
    CHECK(m.num_edges() == 3 * 3 + 4 * 2); // h*(w-1) + w*(h-1)
    for (const Edge& e : m.edges()) {
        CHECK(e.a < e.b);
        const bool right = e.b == e.a + 1 && (e.a % 4) != 3;
        const bool down = e.b == e.a + 4;
        CHECK((right || down));
    }
    // corner has 2 incident edges, interior 4
    CHECK(m.incident_edges(0).size() == 2);
    CHECK(m.incident_edges(5).size() == 4);
}

TEST_CASE("unary log-potential is the feature dot product") {
    GridModel m(1, 2, 2, 2, 1);
    Weights w(2, 2, 1);

    SUBCASE("zero weights give zero") {
        CHECK(log_potential_unary(m, w, 0, 0) == 0.0);
        CHECK(log_potential_unary(m, w, 1, 1) == 0.0);
    }
    SUBCASE("scalar product") {
        GridModel m1(1, 2, 2, 1, 1);
        Weights w1(2, 1, 1);
        m1.unary_features(0)[0] = 2.0;
        w1.unary(1)[0] = 0.5;
        CHECK(log_potential_unary(m1, w1, 0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("two-dimensional hand case") {
        m.unary_features(0)[0] = 1.0;
        m.unary_features(0)[1] = -1.0;
        w.unary(0)[0] = 0.3;
        w.unary(0)[1] = 0.2;
        CHECK(log_potential_unary(m, w, 0, 0) == doctest::Approx(0.1).epsilon(1e-12));
    }
    SUBCASE("bad indices throw") {
        CHECK_THROWS_AS(log_potential_unary(m, w, 7, 0), std::invalid_argument);
        CHECK_THROWS_AS(log_potential_unary(m, w, 0, 5), std::invalid_argument);
    }
}

TEST_CASE("pairwise log-potential and symmetry flag") {
    GridModel m(1, 2, 2, 1, 1);
    Weights w(2, 1, 1);

    SUBCASE("zero weights") { CHECK(log_potential_pairwise(m, w, 0, 0, 1) == 0.0); }
    SUBCASE("scalar case") {
        m.pairwise_features(0)[0] = 3.0;
        w.pairwise(0, 1)[0] = -1.0;
        CHECK(log_potential_pairwise(m, w, 0, 0, 1) == doctest::Approx(-3.0));
    }
    SUBCASE("symmetric flag makes the table symmetric") {
        m.pairwise_features(0)[0] = 1.7;
        w.set_symmetric_pairwise(true);
        w.pairwise(0, 1)[0] = 0.4;
        w.pairwise(1, 0)[0] = 0.4;
        w.validate();
        CHECK(log_potential_pairwise(m, w, 0, 0, 1) ==
              log_potential_pairwise(m, w, 0, 1, 0));
        w.pairwise(1, 0)[0] = 0.5;
        CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    }
}

TEST_CASE("total log-potential") {
    SUBCASE("zero weights give zero") {
        GridModel m(2, 2, 3, 2, 2);
        Weights w(3, 2, 2);
        randomize(m, w, 11);
        for (double& v : w.unary_flat()) v = 0.0;
        for (double& v : w.pairwise_flat()) v = 0.0;
        CHECK(total_log_potential(m, w, {0, 1, 2, 0}) == 0.0);
    }
    SUBCASE("single-edge hand case") {
        // unary logs all 0, edge table [[1,0],[0,1]], y=(0,0) -> 1.0
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        m.pairwise_features(0)[0] = 1.0;
        w.pairwise(0, 0)[0] = 1.0;
        w.pairwise(1, 1)[0] = 1.0;
        CHECK(total_log_potential(m, w, {0, 0}) == doctest::Approx(1.0));
        CHECK(total_log_potential(m, w, {0, 1}) == doctest::Approx(0.0));
    }
    SUBCASE("matches independent recomputation on a random 2x2 model") {
        GridModel m(2, 2, 2, 3, 2);
        Weights w(2, 3, 2);
        randomize(m, w, 42);
        for (std::uint64_t i = 0; i < 16; ++i) {
            const Labeling y = oracle::labeling_from_index(i, 4, 2);
            CHECK(total_log_potential(m, w, y) ==
                  doctest::Approx(total_by_hand(m, w, y)).epsilon(1e-12));
        }
    }
    SUBCASE("invalid labeling throws") {
        GridModel m(2, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        CHECK_THROWS_AS(total_log_potential(m, w, {0, 1, 0}), std::invalid_argument);
        CHECK_THROWS_AS(total_log_potential(m, w, {0, 1, 0, 2}), std::invalid_argument);
    }
}

TEST_CASE("block conditionals") {
    SUBCASE("single free node, no neighbors") {
        GridModel m(1, 2, 2, 1, 1); // edge present but zero feature
        Weights w(2, 1, 1);
        const std::vector<int> block{0};
        auto cond = block_conditional(m, w, {0, 0}, block);
        CHECK(cond[0] == doctest::Approx(0.5));
        CHECK(cond[1] == doctest::Approx(0.5));

        // unary logs (ln 3, 0) -> (0.75, 0.25)
        m.unary_features(0)[0] = 1.0;
        w.unary(0)[0] = std::log(3.0);
        cond = block_conditional(m, w, {0, 0}, block);
        CHECK(cond[0] == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(cond[1] == doctest::Approx(0.25).epsilon(1e-12));
    }

    SUBCASE("matches exact enumeration on a 1x2 grid") {
        GridModel m(1, 2, 2, 1, 1);
        Weights w(2, 1, 1);
        randomize(m, w, 7);
        const Labeling y{0, 1};
        const std::vector<int> block{0};
        const auto cond = block_conditional(m, w, y, block);
        // p(y0 | y1=1) from the exact joint
        const auto dist = oracle::exact_distribution(m, w);
        const double p01 = dist[oracle::index_of_labeling({0, 1}, 2)];
        const double p11 = dist[oracle::index_of_labeling({1, 1}, 2)];
        CHECK(cond[0] == doctest::Approx(p01 / (p01 + p11)).epsilon(1e-12));
        CHECK(cond[1] == doctest::Approx(p11 / (p01 + p11)).epsilon(1e-12));
    }

    SUBCASE("sums to one for every block and conditioning labeling") {
        GridModel m(2, 3, 3, 2, 2);
        Weights w(3, 2, 2);
        randomize(m, w, 99);
        CounterRng rng(5, 1);
        const std::vector<std::vector<int>> blocks{{0}, {3}, {0, 1}, {2, 5}, {0, 1, 4, 3}};
        for (const auto& block : blocks) {
            for (int rep = 0; rep < 5; ++rep) {
                Labeling y(6);
                for (int& l : y) l = static_cast<int>(rng.next_below(3));
                const auto cond = block_conditional(m, w, y, block);
                double sum = 0.0;
                for (double p : cond) {
                    CHECK(p > 0.0);
                    sum += p;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }

    SUBCASE("adding a constant to one node's unary logs leaves conditionals unchanged") {
        // the constant rides on a bias feature shared by both labels
        GridModel m(2, 2, 2, 2, 2);
        Weights w(2, 2, 2);
        randomize(m, w, 21);
        for (int n = 0; n < 4; ++n) m.unary_features(n)[1] = n == 1 ? 1.0 : 0.0;
        Weights shifted = w;
        for (int l = 0; l < 2; ++l) shifted.unary(l)[1] = w.unary(l)[1] + 3.7;

        const std::vector<std::vector<int>> blocks{{0}, {1}, {2}, {3}, {1, 3}, {0, 2}};
        CounterRng rng(6, 0);
        for (const auto& block : blocks) {
            Labeling y(4);
            for (int& l : y) l = static_cast<int>(rng.next_below(2));
            const auto before = block_conditional(m, w, y, block);
            const auto after = block_conditional(m, shifted, y, block);
            for (size_t i = 0; i < before.size(); ++i)
                CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-10));
        }
    }

    SUBCASE("oversized block is rejected") {
        GridModel m(3, 4, 3, 1, 1); // 12 nodes, K=3: 3^5 = 243 <= 256, 3^6 > 256
        Weights w(3, 1, 1);
        Labeling y(12, 0);
        const std::vector<int> big{0, 1, 2, 3, 4, 5};
        CHECK_THROWS_AS(block_conditional(m, w, y, big), UnsupportedBlockSize);
        const std::vector<int> ok{0, 1, 2, 3, 4};
        CHECK(block_conditional(m, w, y, ok).size() == 243);
    }
}

TEST_CASE("total log-potential consistent with exact distribution") {
    GridModel m(2, 3, 2, 2, 2); // 6 binary nodes
    Weights w(2, 2, 2);
    randomize(m, w, 3);
    const double log_z = oracle::exact_partition(m, w);
    const auto dist = oracle::exact_distribution(m, w);
    for (std::uint64_t i = 0; i < dist.size(); ++i) {
        const Labeling y = oracle::labeling_from_index(i, 6, 2);
        const double p = std::exp(total_log_potential(m, w, y) - log_z);
        CHECK(p == doctest::Approx(dist[static_cast<size_t>(i)]).epsilon(1e-10));
    }
}

TEST_CASE("block partition validation") {
    CHECK_THROWS_AS(BlockPartition({{0, 1}, {1, 2}}, 4), std::invalid_argument);
    CHECK_THROWS_AS(BlockPartition({{0, 9}}, 4), std::invalid_argument);
    CHECK_THROWS_AS(BlockPartition({{}}, 4), std::invalid_argument);
    const auto singles = BlockPartition::singletons(4);
    CHECK(singles.num_blocks() == 4);
    const auto global = BlockPartition::global(4);
    CHECK(global.num_blocks() == 1);
    CHECK(global.blocks()[0].size() == 4);
}

TEST_CASE("model json round-trip is exact") {
    GridModel m(3, 2, 2, 2, 3);
    Weights w(2, 2, 3, true);
    CounterRng rng(17, 0);
    for (int n = 0; n < m.num_nodes(); ++n)
        for (double& v : m.unary_features(n))
            v = (rng.next_unit_open() - 0.5) *
                std::pow(10.0, static_cast<double>(rng.next_below(40)) - 20.0);
    for (int e = 0; e < m.num_edges(); ++e)
        for (double& v : m.pairwise_features(e)) v = rng.next_unit_open();
    for (double& v : w.unary_flat()) v = (rng.next_unit_open() - 0.5) * 1e8;
    for (int a = 0; a < 2; ++a)
        for (int b = a; b < 2; ++b)
            for (int k = 0; k < 3; ++k) {
                const double v = rng.next_unit_open();
                w.pairwise(a, b)[static_cast<size_t>(k)] = v;
                w.pairwise(b, a)[static_cast<size_t>(k)] = v;
            }

    const std::string text = model_to_json(m, w);
    auto [m2, w2] = model_from_json(text);
    CHECK(m2.height() == m.height());
    CHECK(m2.width() == m.width());
    CHECK(w2.symmetric_pairwise());
    for (int n = 0; n < m.num_nodes(); ++n)
        for (int k = 0; k < m.d_unary(); ++k)
            CHECK(m2.unary_features(n)[static_cast<size_t>(k)] ==
                  m.unary_features(n)[static_cast<size_t>(k)]);
    for (int e = 0; e < m.num_edges(); ++e)
        for (int k = 0; k < m.d_pairwise(); ++k)
            CHECK(m2.pairwise_features(e)[static_cast<size_t>(k)] ==
                  m.pairwise_features(e)[static_cast<size_t>(k)]);
    CHECK(w2.unary_flat() == w.unary_flat());
    CHECK(w2.pairwise_flat() == w.pairwise_flat());

    // second round-trip produces identical text
    CHECK(model_to_json(m2, w2) == text);
}

TEST_CASE("model json rejects non-finite and malformed input") {
    GridModel m(1, 2, 2, 1, 1);
    Weights w(2, 1, 1);
    m.unary_features(0)[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(model_to_json(m, w), std::invalid_argument);
    CHECK_THROWS_AS(model_from_json("{\"version\":99}"), std::invalid_argument);
}
