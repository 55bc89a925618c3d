#include "lac/envmdp.hpp"

#include <gtest/gtest.h>

using namespace lac;

namespace {

Pool costed_pool()
{
    auto cfg = router_pool_config(40, 0, 40);
    cfg.classifiers[0].cost = 1.0;
    cfg.classifiers[1].cost = 2.5;
    cfg.classifiers[2].cost = 10.0;
    return generate_synthetic(cfg);
}

} // namespace

TEST(Reset, GivesEmptyStateAndIsIdempotent)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 2, true});
    const auto a = env.reset(3);
    EXPECT_EQ(a.step, 0u);
    EXPECT_TRUE(a.called.empty());
    EXPECT_EQ(a.accumulated_cost, 0.0);
    EXPECT_EQ(a, env.reset(3));
    EXPECT_THROW(env.reset(40), UsageError);
}

TEST(Reset, FreshAfterAFullEpisode)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 2, true});
    auto s = env.reset(1);
    env.query(s, 0);
    env.query(s, 2);
    env.finalize(s, 0);
    EpisodeState fresh;
    fresh.example_index = 1;
    EXPECT_EQ(env.reset(1), fresh);
}

TEST(Query, ReturnsStoredRowAndChargesCost)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 3, true});
    auto s = env.reset(5);
    const auto obs = env.query(s, 0);
    const auto stored = pool.table(Split::test).response(5, 0);
    EXPECT_TRUE(std::equal(obs.response.begin(), obs.response.end(), stored.begin()));
    EXPECT_EQ(obs.cost, 1.0);
    env.query(s, 2);
    EXPECT_EQ(s.accumulated_cost, 11.0);
    EXPECT_EQ(s.called, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(s.step, 2u);
}

TEST(Query, RouterMassSitsOnLabelGroup)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 1, true});
    for (std::size_t e = 0; e < env.n_examples(); ++e) {
        if (env.label(e) != 0) continue;
        auto s = env.reset(e);
        const auto obs = env.query(s, 0);
        EXPECT_FLOAT_EQ(obs.response[0] + obs.response[1], 1.0f);
    }
}

TEST(Query, DuplicateUnderHardMaskIsPolicyError)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 2, true});
    auto s = env.reset(0);
    env.query(s, 1);
    EXPECT_THROW(env.query(s, 1), PolicyError);
}

TEST(Query, SoftModeRepeatsAreChargedTwice)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 2, false});
    auto s = env.reset(0);
    const auto a = env.query(s, 1);
    const auto b = env.query(s, 1);
    EXPECT_TRUE(std::equal(a.response.begin(), a.response.end(), b.response.begin()));
    EXPECT_EQ(s.accumulated_cost, 5.0);
}

TEST(Query, HorizonAndRangeAreEnforced)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 1, true});
    auto s = env.reset(0);
    EXPECT_THROW(env.query(s, 3), UsageError);
    env.query(s, 0);
    EXPECT_THROW(env.query(s, 1), UsageError);
}

TEST(Finalize, RewardFormula)
{
    EXPECT_DOUBLE_EQ(episode_reward(2, 2, 0.0, 5.0), 1.0);
    EXPECT_DOUBLE_EQ(episode_reward(1, 2, 0.0, 5.0), 0.0);
    EXPECT_NEAR(episode_reward(3, 3, 0.01, 11.0), 0.89, 1e-12);
}

TEST(Finalize, UsesAccumulatedCostAndRejectsEarlyCalls)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.01, 2, true});
    auto s = env.reset(0);
    env.query(s, 0);
    EXPECT_THROW(env.finalize(s, 0), UsageError);
    env.query(s, 2);
    EXPECT_NEAR(env.finalize(s, env.label(0)), 1.0 - 0.01 * 11.0, 1e-12);
    EXPECT_NEAR(env.finalize(s, (env.label(0) + 1) % 4), -0.11, 1e-12);
}

TEST(Environment, ConfigValidation)
{
    const auto pool = costed_pool();
    EXPECT_THROW(Environment(pool, Split::test, {0.0, 0, true}), ConfigError);
    EXPECT_THROW(Environment(pool, Split::test, {0.0, 4, true}), ConfigError);
    EXPECT_NO_THROW(Environment(pool, Split::test, {0.0, 4, false}));
    EXPECT_THROW(Environment(pool, Split::test, {-1.0, 1, true}), ConfigError);
    EXPECT_THROW(Environment(pool, Split::val, {0.0, 1, true}), UsageError);
}

TEST(Environment, ZeroLambdaRewardIsBinary)
{
    const auto pool = costed_pool();
    Environment env(pool, Split::test, {0.0, 3, true});
    for (std::size_t e = 0; e < env.n_examples(); ++e) {
        auto s = env.reset(e);
        for (std::size_t k = 0; k < 3; ++k) env.query(s, k);
        const double r = env.finalize(s, e % 4);
        EXPECT_TRUE(r == 0.0 || r == 1.0);
        EXPECT_EQ(s.accumulated_cost, 13.5);
    }
}
