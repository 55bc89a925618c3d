#include "lac/analysis.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace lac;

namespace {

Pool random_pool(std::uint64_t seed, std::size_t n_members = 4)
{
    SyntheticPoolConfig cfg;
    cfg.n_classes = 4;
    cfg.n_train = 300;
    cfg.n_test = 200;
    cfg.seed = seed;
    const std::vector<std::vector<std::size_t>> subsets{{0, 1}, {1, 2, 3}, {0, 3}, {0, 1, 2, 3}, {2}, {0, 2}};
    for (std::size_t i = 0; i < n_members; ++i)
        cfg.classifiers.push_back({"m" + std::to_string(i), subsets[i], 0.8,
            i % 2 ? OffSubsetBehavior::confident_random_in_subset : OffSubsetBehavior::uniform_over_all, 1.0, {}});
    return generate_synthetic(cfg);
}

ResponseTable one_row(std::vector<float> r)
{
    ResponseTable t;
    t.n_examples = 1;
    t.n_classifiers = 1;
    t.n_classes = r.size();
    t.labels = {0};
    t.responses = std::move(r);
    return t;
}

} // namespace

TEST(Discretize, ArgmaxAndConfidenceBit)
{
    const std::vector<float> a{0.05f, 0.95f, 0.0f};
    const std::vector<float> b{0.4f, 0.6f, 0.0f};
    const std::vector<float> c{0.9f, 0.1f, 0.0f};
    const std::vector<float> tie{0.5f, 0.5f, 0.0f};
    EXPECT_EQ(discretize(a), 3);
    EXPECT_EQ(discretize(b), 2);
    EXPECT_EQ(discretize(c), 1);
    EXPECT_EQ(discretize(tie), 0);
}

TEST(OracleFixed, PerfectMemberScoresOne)
{
    SyntheticPoolConfig cfg;
    cfg.n_classes = 5;
    cfg.n_train = 200;
    cfg.n_test = 200;
    cfg.classifiers = {{"noise", {0}, 1.0, OffSubsetBehavior::uniform_over_all, 1.0, {}},
        {"exact", {0, 1, 2, 3, 4}, 1.0, OffSubsetBehavior::uniform_over_all, 1.0, {}}};
    const auto pool = generate_synthetic(cfg);
    const auto r = oracle_fixed(pool, 1);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.subset, (std::vector<std::size_t>{1}));
}

TEST(Oracles, RouterPoolValuesAreExact)
{
    const auto pool = generate_synthetic(router_pool_config());
    EXPECT_EQ(oracle_fixed(pool, 2).accuracy, 0.75);
    EXPECT_EQ(oracle_fixed(pool, 1).accuracy, 0.5);
    EXPECT_EQ(oracle_fixed(pool, 3).accuracy, 1.0);
    const auto a = oracle_adaptive(pool, 2);
    EXPECT_EQ(a.accuracy, 1.0);
    EXPECT_EQ(a.root, 0u);
}

TEST(Oracles, AdaptiveDominatesFixed)
{
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto pool = random_pool(seed);
        for (std::size_t h = 1; h <= 3; ++h)
            EXPECT_GE(oracle_adaptive(pool, h).accuracy, oracle_fixed(pool, h).accuracy) << "seed " << seed;
    }
}

TEST(Oracles, FullDepthTreeEqualsFullSubset)
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto pool = random_pool(seed, 3);
        EXPECT_EQ(oracle_adaptive(pool, 3).accuracy, oracle_fixed(pool, 3).accuracy);
    }
}

TEST(Oracles, DepthOneAdaptiveEqualsBestSingle)
{
    const auto pool = random_pool(9);
    EXPECT_EQ(oracle_adaptive(pool, 1).accuracy, oracle_fixed(pool, 1).accuracy);
}

TEST(Oracles, RefuseOversizedSearches)
{
    EXPECT_THROW(oracle_adaptive(random_pool(1), 4), ConfigError);
    auto big = router_pool_config(10, 0, 10);
    for (int i = 0; i < 4; ++i) big.classifiers.push_back(big.classifiers[1]);
    EXPECT_THROW(oracle_adaptive(generate_synthetic(big), 2), ConfigError);
    EXPECT_THROW(oracle_fixed(random_pool(1), 0), ConfigError);
    EXPECT_THROW(oracle_fixed(random_pool(1), 5), ConfigError);
}

TEST(Oracles, UnseenPatternFallsBackToTrainMajority)
{
    Pool pool;
    pool.name = "tiny";
    pool.n_classes = 3;
    pool.specs.push_back({});
    auto train = one_row({1.0f, 0.0f, 0.0f});
    train.labels = {2};
    auto test = one_row({0.0f, 1.0f, 0.0f});
    test.labels = {2};
    test.split = Split::test;
    pool.tables[0] = train;
    pool.tables[2] = test;
    EXPECT_EQ(oracle_fixed(pool, 1).accuracy, 1.0);
    EXPECT_EQ(oracle_adaptive(pool, 1).accuracy, 1.0);
}

TEST(FrequencyCurve, HorizonEqualToPoolGivesEqualShares)
{
    MetricsLog log;
    for (std::size_t e = 1; e <= 3; ++e) log.epochs.push_back({e, 0, 0, 0, 0, 0, 0.5, {1.0 / 3, 1.0 / 3, 1.0 / 3}});
    const auto c = call_frequency_curve(log);
    ASSERT_EQ(c.series.size(), 3u);
    EXPECT_EQ(c.epochs, (std::vector<std::size_t>{1, 2, 3}));
    for (const auto& s : c.series)
        for (double v : s) EXPECT_DOUBLE_EQ(v, 1.0 / 3);
    std::stringstream ss;
    write_frequency_csv(ss, c);
    std::string first, header;
    std::getline(ss, first);
    std::getline(ss, header);
    EXPECT_EQ(first[0], '#');
    EXPECT_EQ(header, "epoch,call_share_0,call_share_1,call_share_2");
    EXPECT_THROW(call_frequency_curve(MetricsLog{}), FormatError);
}

TEST(TrajectoryGraph, OutgoingProbabilitiesSumToOne)
{
    const TrajectoryCounts counts{{{0, 1}, 30}, {{0, 2}, 10}, {{1, 2}, 60}};
    const auto g = trajectory_graph(counts, 3);
    EXPECT_EQ(g.visits, (std::vector<std::size_t>{40, 90, 70}));
    std::map<std::size_t, double> sums;
    for (const auto& [from, to, p] : g.edges()) sums[from] += p;
    for (const auto& [from, s] : sums) EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(g.probability(TrajectoryGraph::start, 0), 0.4);
    EXPECT_DOUBLE_EQ(g.probability(0, 1), 0.75);
    EXPECT_EQ(g.probability(2, 0), 0.0);
    EXPECT_THROW(trajectory_graph({}, 3), UsageError);
    EXPECT_THROW(trajectory_graph({{{5}, 1}}, 3), UsageError);
}

TEST(TrajectoryGraph, DotOutputIsStable)
{
    const auto pool = generate_synthetic(router_pool_config(8, 0, 8));
    const auto g = trajectory_graph({{{0, 1}, 3}, {{0, 2}, 1}}, 3);
    std::stringstream ss;
    write_dot(ss, g, pool);
    EXPECT_EQ(ss.str(),
        "digraph lac {\n"
        "  s [label=\"s\", shape=circle];\n"
        "  n0 [label=\"R\\n0.500\"];\n"
        "  n1 [label=\"S01\\n0.375\"];\n"
        "  n2 [label=\"S23\\n0.125\"];\n"
        "  s -> n0 [label=\"1.000\"];\n"
        "  n0 -> n1 [label=\"0.750\"];\n"
        "  n0 -> n2 [label=\"0.250\"];\n"
        "}\n");
}

TEST(BudgetTable, Csv)
{
    std::stringstream ss;
    write_budget_csv(ss, {{1, 0.5, 1.0}, {2, 0.75, 2.0}});
    EXPECT_EQ(ss.str(), "horizon,accuracy,mean_cost\n1,0.5,1\n2,0.75,2\n");
}
