#include "lac/pool.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

using namespace lac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("lac_pool_" + name);
    fs::remove_all(p);
    return p;
}

SyntheticPoolConfig perfect_single(std::size_t n = 200)
{
    SyntheticPoolConfig cfg;
    cfg.n_classes = 5;
    cfg.n_train = n;
    cfg.n_test = n;
    cfg.seed = 3;
    cfg.classifiers = {{"all", {0, 1, 2, 3, 4}, 1.0, OffSubsetBehavior::uniform_over_all, 1.0, {}}};
    return cfg;
}

FormatErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const FormatError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no FormatError thrown";
    return FormatErrorCode::io;
}

} // namespace

TEST(Synthetic, PerfectClassifierIsOneHotCorrect)
{
    const auto pool = generate_synthetic(perfect_single());
    const auto& t = pool.table(Split::test);
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        const auto r = t.response(e, 0);
        for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(r[c], c == t.label(e) ? 1.0f : 0.0f);
    }
    EXPECT_DOUBLE_EQ(average_responses_accuracy(pool, Split::test), 1.0);
    EXPECT_DOUBLE_EQ(*pool.specs[0].test_accuracy, 1.0);
}

TEST(Synthetic, SeedDeterministic)
{
    auto cfg = router_pool_config(300, 100, 100, 11);
    EXPECT_EQ(generate_synthetic(cfg), generate_synthetic(cfg));
    cfg.seed = 12;
    EXPECT_FALSE(generate_synthetic(cfg) == generate_synthetic(router_pool_config(300, 100, 100, 11)));
}

TEST(Synthetic, RouterRevealsGroupOfLabel)
{
    const auto pool = generate_synthetic(router_pool_config(400, 0, 400));
    const auto& t = pool.table(Split::test);
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        const auto r = t.response(e, 0);
        const bool low = t.label(e) < 2;
        EXPECT_FLOAT_EQ(r[0] + r[1], low ? 1.0f : 0.0f);
        EXPECT_FLOAT_EQ(r[0], r[1]);
        EXPECT_FLOAT_EQ(r[2], r[3]);
    }
}

TEST(Synthetic, SpecialistsExactInPairConfidentElsewhere)
{
    const auto pool = generate_synthetic(router_pool_config(400, 0, 400));
    const auto& t = pool.table(Split::test);
    std::size_t off_low = 0, off_count = 0;
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        const auto s01 = t.response(e, 1);
        const std::size_t y = t.label(e);
        if (y < 2) {
            EXPECT_EQ(s01[y], 1.0f);
        } else {
            EXPECT_EQ(s01[0] + s01[1], 1.0f);
            EXPECT_TRUE(s01[0] == 1.0f || s01[1] == 1.0f);
            off_low += s01[0] == 1.0f;
            ++off_count;
        }
    }
    // stratified choices split evenly
    EXPECT_EQ(2 * off_low, off_count);
}

TEST(Synthetic, StratifiedLabelsAreExactlyBalanced)
{
    const auto pool = generate_synthetic(router_pool_config(4000, 2000, 2000));
    std::vector<std::size_t> counts(4, 0);
    for (auto y : pool.table(Split::test).labels) ++counts[y];
    for (auto c : counts) EXPECT_EQ(c, 500u);
}

TEST(Synthetic, HalfAccuracyPairMatchesClosedForm)
{
    // Two classes, one classifier right with probability 0.5: expected accuracy 0.5.
    SyntheticPoolConfig cfg;
    cfg.n_classes = 2;
    cfg.n_train = 1;
    cfg.n_test = 20000;
    cfg.seed = 5;
    cfg.classifiers = {{"coin", {0, 1}, 0.5, OffSubsetBehavior::uniform_over_all, 1.0, {}}};
    const auto pool = generate_synthetic(cfg);
    const double acc = average_responses_accuracy(pool, Split::test);
    const double sigma = std::sqrt(0.25 / 20000.0);
    EXPECT_NEAR(acc, 0.5, 2 * sigma);
}

TEST(Synthetic, SubsetCoverageMatchesBinomialExpectation)
{
    // Perfect on {0,1,2} of 6 classes, uniform elsewhere: 0.5 + 0.5/6 in expectation.
    SyntheticPoolConfig cfg;
    cfg.n_classes = 6;
    cfg.n_train = 1;
    cfg.n_test = 30000;
    cfg.seed = 9;
    cfg.classifiers = {{"half", {0, 1, 2}, 1.0, OffSubsetBehavior::uniform_over_all, 1.0, {}}};
    const auto pool = generate_synthetic(cfg);
    const double p = 0.5 + 0.5 / 6.0;
    const double sigma = std::sqrt(p * (1 - p) / 30000.0) + std::sqrt(0.25 / 30000.0);
    EXPECT_NEAR(average_responses_accuracy(pool, Split::test), p, 2 * sigma);
}

TEST(Synthetic, EmptySubsetIsConfigError)
{
    auto cfg = perfect_single();
    cfg.classifiers[0].class_subset.clear();
    EXPECT_THROW(generate_synthetic(cfg), ConfigError);
    cfg = perfect_single();
    cfg.classifiers.clear();
    EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Synthetic, ConfigJsonRoundTrip)
{
    const auto cfg = router_pool_config(10, 5, 5, 3);
    const auto back = synthetic_config_from_json(to_json(cfg));
    EXPECT_EQ(generate_synthetic(back), generate_synthetic(cfg));
}

TEST(AverageResponses, MatchesIndependentLoop)
{
    const auto pool = generate_synthetic(router_pool_config(200, 0, 600));
    const auto& t = pool.table(Split::test);
    double credit = 0.0;
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        double mean[4] = {0, 0, 0, 0};
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t c = 0; c < 4; ++c) mean[c] += t.response(e, k)[c] / 3.0;
        double best = *std::max_element(mean, mean + 4);
        int ties = 0;
        for (double m : mean) ties += m == best;
        if (mean[t.label(e)] == best) credit += 1.0 / ties;
    }
    EXPECT_DOUBLE_EQ(average_responses_accuracy(pool, Split::test), credit / t.n_examples);
}

TEST(Format, FileSizeFollowsLayout)
{
    ResponseTable t(1000, 3, 4, Split::test);
    for (std::size_t e = 0; e < 1000; ++e)
        for (std::size_t k = 0; k < 3; ++k) t.response(e, k)[0] = 1.0f;
    EXPECT_EQ(encode_table(t).size(), 32u + 1000 * 2 + 1000 * 3 * 4 * 4);
}

TEST(Format, EmptyTableIsHeaderOnly)
{
    ResponseTable t(0, 2, 3, Split::val);
    const auto bytes = encode_table(t);
    EXPECT_EQ(bytes.size(), kTableHeaderBytes);
    EXPECT_EQ(decode_table(bytes), t);
}

TEST(Format, HeaderBytesAreLittleEndian)
{
    ResponseTable t(2, 1, 3, Split::test);
    t.labels = {2, 1};
    t.response(0, 0)[2] = 1.0f;
    t.response(1, 0)[1] = 1.0f;
    const auto b = encode_table(t);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 8), std::string("LACRT1\0\0", 8));
    EXPECT_EQ(b[8], 2);
    EXPECT_EQ(b[12], 1);
    EXPECT_EQ(b[16], 3);
    EXPECT_EQ(b[20], 2);
    for (int i = 24; i < 32; ++i) EXPECT_EQ(b[i], 0);
    EXPECT_EQ(b[32], 2);
    EXPECT_EQ(b[33], 0);
    // 1.0f = 0x3F800000, stored low byte first
    const std::size_t first = 32 + 4 + 4 * 2;
    EXPECT_EQ(b[first], 0x00);
    EXPECT_EQ(b[first + 3], 0x3F);
}

TEST(Format, DistinctErrorCodes)
{
    const auto pool = generate_synthetic(perfect_single(20));
    const auto good = encode_table(pool.table(Split::test));

    auto bad = good;
    bad[0] = 'X';
    EXPECT_EQ(code_of([&] { decode_table(bad); }), FormatErrorCode::bad_magic);

    bad = good;
    bad.resize(bad.size() - 1);
    EXPECT_EQ(code_of([&] { decode_table(bad); }), FormatErrorCode::truncated);

    bad = good;
    bad.push_back(0);
    EXPECT_EQ(code_of([&] { decode_table(bad); }), FormatErrorCode::truncated);

    bad = good;
    // first response entry -> 0.5 breaks the row sum whatever it was
    const std::size_t first = 32 + 2 * 20;
    const std::uint32_t half = std::bit_cast<std::uint32_t>(0.5f);
    for (int i = 0; i < 4; ++i) bad[first + i] = static_cast<std::uint8_t>(half >> (8 * i));
    EXPECT_EQ(code_of([&] { decode_table(bad); }), FormatErrorCode::row_sum);

    bad = good;
    bad[32] = 9; // label 9 of 5 classes
    EXPECT_EQ(code_of([&] { decode_table(bad); }), FormatErrorCode::out_of_range);
}

TEST(Format, ErrorMessageNamesOffset)
{
    std::vector<std::uint8_t> junk(40, 0);
    try {
        decode_table(junk);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
        EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
    }
}

TEST(PoolIo, SaveLoadRoundTripAndStableBytes)
{
    const auto pool = generate_synthetic(router_pool_config(100, 50, 50));
    const auto dir = scratch("roundtrip");
    save_pool(pool, dir.string());
    const auto back = load_pool_dir(dir.string());
    EXPECT_EQ(back, pool);
    const auto dir2 = scratch("roundtrip2");
    save_pool(back, dir2.string());
    for (auto s : kAllSplits) {
        const auto a = io::read_file((dir / table_filename(s)).string());
        const auto b = io::read_file((dir2 / table_filename(s)).string());
        EXPECT_EQ(a, b);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST(PoolIo, ManifestTableCountMismatch)
{
    const auto pool = generate_synthetic(router_pool_config(20, 0, 20));
    const auto dir = scratch("mismatch");
    save_pool(pool, dir.string());
    auto j = manifest_json(pool);
    j["classifiers"].push_back(j["classifiers"][0]);
    j["classifiers"][3]["id"] = 3;
    std::ofstream((dir / "manifest.json").string()) << j.dump();
    EXPECT_EQ(code_of([&] { load_pool_dir(dir.string()); }), FormatErrorCode::count_mismatch);
    fs::remove_all(dir);
}

TEST(PoolIo, MissingFileIsIoError)
{
    EXPECT_EQ(code_of([] { load_table("/nonexistent/lac/train.lacrt"); }), FormatErrorCode::io);
}

TEST(SubsetView, FullListIsIdentity)
{
    const auto pool = generate_synthetic(router_pool_config(50, 0, 50));
    EXPECT_EQ(subset_view(pool, {0, 1, 2}), pool);
}

TEST(SubsetView, RenumbersAndKeepsProvenance)
{
    const auto pool = generate_synthetic(router_pool_config(50, 0, 50));
    const auto sub = subset_view(pool, {2, 0});
    ASSERT_EQ(sub.size(), 2u);
    EXPECT_EQ(sub.specs[0].id, 0u);
    EXPECT_EQ(sub.specs[0].name, "S23");
    EXPECT_EQ(sub.specs[0].origin_id, 2u);
    const auto& a = pool.table(Split::test);
    const auto& b = sub.table(Split::test);
    for (std::size_t e = 0; e < a.n_examples; ++e) {
        EXPECT_TRUE(std::equal(a.response(e, 2).begin(), a.response(e, 2).end(), b.response(e, 0).begin()));
        EXPECT_TRUE(std::equal(a.response(e, 0).begin(), a.response(e, 0).end(), b.response(e, 1).begin()));
    }
}

TEST(SubsetView, ComposesLikeASingleView)
{
    SyntheticPoolConfig cfg;
    cfg.n_classes = 3;
    cfg.n_train = 30;
    cfg.n_test = 30;
    for (int i = 0; i < 6; ++i)
        cfg.classifiers.push_back({"c" + std::to_string(i), {0, 1, 2}, 0.6, OffSubsetBehavior::uniform_over_all, 1.0, {}});
    const auto pool = generate_synthetic(cfg);
    const auto twice = subset_view(subset_view(pool, {0, 2, 3, 5}), {3, 1});
    const auto once = subset_view(pool, {5, 2});
    EXPECT_EQ(twice, once);
}

TEST(SubsetView, RejectsDuplicatesAndRange)
{
    const auto pool = generate_synthetic(router_pool_config(10, 0, 10));
    EXPECT_THROW(subset_view(pool, {0, 0}), UsageError);
    EXPECT_THROW(subset_view(pool, {3}), UsageError);
    EXPECT_THROW(subset_view(pool, {}), UsageError);
}

TEST(PoolInvariant, EverySynthesizedRowIsADistribution)
{
    const auto pool = generate_synthetic(router_pool_config(300, 300, 300));
    for (auto s : kAllSplits) EXPECT_NO_THROW(validate_table(pool.table(s)));
}
