#include "lac/agent.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lac;

namespace {

LacNets small_nets(std::uint64_t seed = 1, bool hard = true)
{
    AgentConfig c;
    c.n_classifiers = 4;
    c.n_classes = 3;
    c.seed = seed;
    c.hard_mask = hard;
    return LacNets::create(c);
}

} // namespace

TEST(HiddenState, LayoutAndSize)
{
    HiddenState s(4, 3);
    EXPECT_EQ(s.vector().size(), 24u);
    const std::vector<float> r{0.7f, 0.3f, 0.0f};
    s.encode(2, r);
    const auto v = s.vector();
    for (std::size_t i = 0; i < 24; ++i) {
        float expected = 0.0f;
        if (i >= 6 && i < 9) expected = r[i - 6];
        if (i >= 12 + 6 && i < 12 + 9) expected = 1.0f;
        EXPECT_EQ(v[i], expected) << i;
    }
    EXPECT_TRUE(s.called(2));
    EXPECT_FALSE(s.called(1));
}

TEST(HiddenState, DoubleWriteIsUsageError)
{
    HiddenState s(2, 2);
    const std::vector<float> r{1.0f, 0.0f};
    s.encode(0, r);
    EXPECT_THROW(s.encode(0, r), UsageError);
    EXPECT_THROW(s.encode(2, r), UsageError);
}

TEST(HiddenState, WritesCommute)
{
    const std::vector<float> a{0.2f, 0.8f}, b{1.0f, 0.0f};
    HiddenState s(3, 2);
    const auto ab = encode_response(encode_response(s, 0, a), 2, b);
    const auto ba = encode_response(encode_response(s, 2, b), 0, a);
    EXPECT_EQ(ab, ba);
}

TEST(HiddenState, MaskCountAfterTwoWrites)
{
    HiddenState s(4, 5);
    const std::vector<float> r{0, 0, 1, 0, 0};
    s.encode(0, r);
    s.encode(2, r);
    std::size_t ones = 0;
    for (std::size_t i = 20; i < 40; ++i) ones += s.vector()[i] != 0.0f;
    EXPECT_EQ(ones, 10u);
    EXPECT_EQ(s.n_called(), 2u);
}

TEST(Nets, ShapesFollowConfig)
{
    const auto n = small_nets();
    EXPECT_EQ(n.action_generator.input_dim(), 24u);
    EXPECT_EQ(n.action_generator.output_dim(), 4u);
    EXPECT_EQ(n.action_generator.layers().size(), 2u);
    EXPECT_EQ(n.decision_maker.output_dim(), 3u);
    EXPECT_EQ(n.decision_maker.layers().size(), 3u);
    EXPECT_EQ(n.decision_maker.layers()[0].out_dim(), 128u);
    EXPECT_EQ(n.baseline.output_dim(), 1u);
    EXPECT_EQ(n.baseline.layers().size(), 1u);

    AgentConfig c = n.config;
    c.baseline_depth = 2;
    const auto deep = LacNets::create(c);
    ASSERT_EQ(deep.baseline.layers().size(), 2u);
    EXPECT_EQ(deep.baseline.layers()[0].dropout, 0.2);
    c.baseline_depth = 3;
    EXPECT_THROW(LacNets::create(c), ConfigError);
}

TEST(Policy, ZeroStateIsUniformBecauseInputIsZero)
{
    // With zero input and zero biases every logit is exactly 0.
    const auto n = small_nets();
    const auto p = policy(n, HiddenState(4, 3));
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Policy, HardMaskZeroesCalledAndPreservesRatios)
{
    auto n = small_nets(5);
    HiddenState s(4, 3);
    s.encode(1, std::vector<float>{0.1f, 0.6f, 0.3f});
    const auto logits = predict(n.action_generator, s.vector());
    const auto p = policy(n, s);
    EXPECT_EQ(p[1], 0.0);
    EXPECT_NEAR(p[0] + p[2] + p[3], 1.0, 1e-12);
    const auto full = softmax(logits);
    EXPECT_NEAR(p[0] / p[2], full[0] / full[2], 1e-9);
    EXPECT_NEAR(p[3] / p[2], full[3] / full[2], 1e-9);
}

TEST(Policy, SoftMaskKeepsCalledClassifiers)
{
    auto n = small_nets(5, false);
    HiddenState s(4, 3);
    s.encode(1, std::vector<float>{0.1f, 0.6f, 0.3f});
    EXPECT_GT(policy(n, s)[1], 0.0);
}

TEST(Policy, AllCalledIsUsageError)
{
    auto n = small_nets();
    HiddenState s(4, 3);
    for (std::size_t k = 0; k < 4; ++k) s.encode(k, std::vector<float>{1, 0, 0});
    EXPECT_THROW(policy(n, s), UsageError);
}

TEST(SelectAction, ArgmaxAndDegenerate)
{
    Rng rng(1);
    const std::vector<double> one{1, 0, 0}, p{0.2, 0.5, 0.3};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(one, SelectMode::sample, &rng), 0u);
    EXPECT_EQ(select_action(p, SelectMode::argmax), 1u);
    EXPECT_EQ(select_action(std::vector<double>{0.5, 0.5}, SelectMode::argmax), 0u);
    EXPECT_THROW(select_action(p, SelectMode::sample, nullptr), UsageError);
}

TEST(SelectAction, SampleFrequenciesWithinThreeSigma)
{
    Rng rng(42);
    const std::vector<double> p{0.1, 0.6, 0.3};
    const int draws = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < draws; ++i) ++counts[select_action(p, SelectMode::sample, &rng)];
    for (std::size_t i = 0; i < 3; ++i) {
        const double sigma = std::sqrt(draws * p[i] * (1 - p[i]));
        EXPECT_LT(std::abs(counts[i] - draws * p[i]), 3 * sigma);
    }
}

TEST(Decide, DeterministicDistribution)
{
    const auto n = small_nets(3);
    HiddenState s(4, 3);
    s.encode(0, std::vector<float>{0.2f, 0.2f, 0.6f});
    const auto a = decide(n, s);
    EXPECT_EQ(a, decide(n, s));
    EXPECT_NEAR(a[0] + a[1] + a[2], 1.0, 1e-12);
}

TEST(Baseline, UntrainedIsZeroOnZeroStateAndPure)
{
    const auto n = small_nets(3);
    EXPECT_EQ(baseline_value(n, HiddenState(4, 3)), 0.0);
    HiddenState s(4, 3);
    s.encode(3, std::vector<float>{0, 1, 0});
    EXPECT_EQ(baseline_value(n, s), baseline_value(n, s));
}

TEST(Checkpoint, SaveLoadRoundTrip)
{
    auto n = small_nets(8);
    n.config.baseline_depth = 1;
    const auto dir = (std::filesystem::temp_directory_path() / "lac_agent_ckpt").string();
    std::filesystem::remove_all(dir);
    save_agent(n, dir);
    const auto back = load_agent(dir);
    EXPECT_EQ(back, n);
    EXPECT_EQ(back.config.n_classifiers, 4u);
    EXPECT_EQ(back.config.hard_mask, true);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchIsDetected)
{
    auto n = small_nets(8);
    const auto dir = (std::filesystem::temp_directory_path() / "lac_agent_bad").string();
    std::filesystem::remove_all(dir);
    save_agent(n, dir);
    auto other = small_nets(8).config;
    other.n_classes = 5;
    other.n_classifiers = 4;
    auto wrong = LacNets::create(other);
    save_checkpoint(wrong.decision_maker, dir + "/decision_maker.lacnn");
    EXPECT_THROW(load_agent(dir), FormatError);
    std::filesystem::remove_all(dir);
}
