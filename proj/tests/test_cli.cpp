#include "lac/pool.hpp"
#include "lac/training.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace lac;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
            ("lac_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(path("router.json")) << to_json(router_pool_config(300, 100, 200, 3)).dump(2);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    int run(const std::string& args) const
    {
        const std::string cmd = std::string(LAC_CLI_PATH) + " --quiet --threads 1 " + args + " >>" +
            path("log.txt") + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string slurp(const std::string& p) const
    {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void make_pool(const std::string& name = "pool")
    {
        ASSERT_EQ(run("pool synth --config " + path("router.json") + " --out " + path(name)), 0) << slurp(path("log.txt"));
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, HelpAndUsageErrors)
{
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("no-such-command"), 64);
    EXPECT_EQ(run("pool synth"), 64);
}

TEST_F(Cli, SynthValidateAndRunManifest)
{
    make_pool();
    EXPECT_TRUE(fs::exists(path("pool/manifest.json")));
    EXPECT_TRUE(fs::exists(path("pool/train.lacrt")));
    EXPECT_EQ(run("pool validate --pool " + path("pool")), 0);
    const auto j = nlohmann::json::parse(slurp(path("pool/run.json")));
    EXPECT_EQ(j.at("command"), "pool synth");
    EXPECT_EQ(j.at("seed"), 3);
    EXPECT_EQ(j.at("outputs").size(), 4u);
    EXPECT_EQ(j.at("inputs").begin().value().get<std::string>().size(), 64u);
}

TEST_F(Cli, CorruptTableFailsValidation)
{
    make_pool();
    {
        std::fstream f(path("pool/test.lacrt"), std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    EXPECT_EQ(run("pool validate --pool " + path("pool")), 2);
    EXPECT_NE(slurp(path("log.txt")).find("offset"), std::string::npos);
    EXPECT_EQ(run("pool validate --pool " + path("missing")), 3);
}

TEST_F(Cli, SubsetKeepsChosenMembers)
{
    make_pool();
    ASSERT_EQ(run("pool subset --pool " + path("pool") + " --ids 2,0 --out " + path("sub")), 0);
    const auto pool = load_pool_dir(path("sub"));
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(pool.specs[0].name, "S23");
    EXPECT_EQ(pool.specs[1].name, "R");
    EXPECT_EQ(run("pool subset --pool " + path("pool") + " --ids 0,9 --out " + path("bad")), 64);
}

TEST_F(Cli, TrainIsByteDeterministic)
{
    make_pool();
    const std::string args = "train-lac --pool " + path("pool") + " --horizon 2 --epochs 2 --batch-size 64 --seed 5";
    ASSERT_EQ(run(args + " --out " + path("a")), 0) << slurp(path("log.txt"));
    ASSERT_EQ(run(args + " --out " + path("b")), 0);
    const auto a = slurp(path("a/metrics.csv"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(path("b/metrics.csv")));
    EXPECT_EQ(slurp(path("a/agent/action_generator.lacnn")), slurp(path("b/agent/action_generator.lacnn")));
    EXPECT_TRUE(fs::exists(path("a/run.json")));
    EXPECT_TRUE(fs::exists(path("a/agent/train.json")));
}

TEST_F(Cli, TrainRejectsBadConfig)
{
    make_pool();
    EXPECT_EQ(run("train-lac --pool " + path("pool") + " --out " + path("x") + " --horizon 0"), 64);
    EXPECT_EQ(run("train-lac --pool " + path("pool") + " --out " + path("x") + " --horizon 4"), 64);
    std::ofstream(path("bad.json")) << "{\"gamma\": \"lots\"}";
    EXPECT_EQ(run("train-lac --pool " + path("pool") + " --out " + path("x") + " --config " + path("bad.json")), 64);
}

TEST_F(Cli, EvalAndReports)
{
    make_pool();
    ASSERT_EQ(run("train-lac --pool " + path("pool") + " --horizon 2 --epochs 2 --out " + path("run")), 0);
    ASSERT_EQ(run("eval-lac --pool " + path("pool") + " --ckpt " + path("run/agent") + " --out " + path("eval.json")),
        0);
    const auto ev = nlohmann::json::parse(slurp(path("eval.json")));
    EXPECT_TRUE(ev.at("duplicate_free").get<bool>());
    EXPECT_TRUE(ev.at("first_step_identical").get<bool>());
    EXPECT_TRUE(fs::exists(path("eval.json.run.json")));

    ASSERT_EQ(run("report trajectories --pool " + path("pool") + " --ckpt " + path("run/agent") + " --out " +
                  path("traj.dot")),
        0);
    EXPECT_EQ(slurp(path("traj.dot")).rfind("digraph lac {", 0), 0u);

    ASSERT_EQ(run("report frequencies --metrics " + path("run/metrics.csv") + " --out " + path("freq.csv")), 0);
    EXPECT_NE(slurp(path("freq.csv")).find("epoch,call_share_0,call_share_1,call_share_2"), std::string::npos);

    ASSERT_EQ(run("report oracle --pool " + path("pool") + " --k 2 --out " + path("oracle.json")), 0);
    const auto o = nlohmann::json::parse(slurp(path("oracle.json")));
    EXPECT_EQ(o.at("oracle_fixed").get<double>(), 0.75);
    EXPECT_EQ(o.at("oracle_adaptive").get<double>(), 1.0);

    EXPECT_EQ(run("eval-lac --pool " + path("pool") + " --ckpt " + path("run/agent") + " --mode greedy"), 64);
}

TEST_F(Cli, BudgetReport)
{
    make_pool();
    ASSERT_EQ(run("report budget --pool " + path("pool") + " --horizons 1,2 --epochs 1 --out " + path("budget.csv")),
        0);
    const auto text = slurp(path("budget.csv"));
    EXPECT_EQ(text.rfind("horizon,accuracy,mean_cost\n1,", 0), 0u);
    EXPECT_NE(text.find("\n2,"), std::string::npos);
}

TEST_F(Cli, BoostAndBagWriteCurvesDeterministically)
{
    for (const std::string kind : {"boost", "bag"}) {
        const std::string args = kind + " --rounds 2 --epochs 3 --seed 1";
        ASSERT_EQ(run(args + " --out " + path(kind + "_a")), 0) << slurp(path("log.txt"));
        ASSERT_EQ(run(args + " --out " + path(kind + "_b")), 0);
        const auto a = slurp(path(kind + "_a/curve.csv"));
        EXPECT_EQ(a.rfind("round,train_loss,val_loss,train_acc,val_acc\n", 0), 0u);
        EXPECT_EQ(a, slurp(path(kind + "_b/curve.csv")));
        EXPECT_TRUE(fs::exists(path(kind + "_a/committee/committee.json")));
    }
    EXPECT_EQ(run("boost --shrinkage 2 --out " + path("bad")), 64);
}

TEST_F(Cli, StackVariants)
{
    make_pool();
    ASSERT_EQ(run("stack --pool " + path("pool") + " --subset 0,1 --epochs 2 --out " + path("s.csv")), 0);
    EXPECT_EQ(slurp(path("s.csv")).rfind("subset,k,val_acc,test_acc\n0;1,2,", 0), 0u);
    ASSERT_EQ(run("stack --pool " + path("pool") + " --best-k 2 --epochs 2 --out " + path("best.csv")), 0);
    ASSERT_EQ(run("stack --pool " + path("pool") + " --best-k 2 --epochs 2 --out " + path("best2.csv")), 0);
    EXPECT_EQ(slurp(path("best.csv")), slurp(path("best2.csv")));
    ASSERT_EQ(run("stack --pool " + path("pool") + " --knn 3 --out " + path("knn.csv")), 0);
    EXPECT_EQ(run("stack --pool " + path("pool") + " --depth 4"), 64);
}

TEST_F(Cli, DataDirResolvesRelativePaths)
{
    const std::string env = "LAC_DATA_DIR=" + dir_.string() + " ";
    const std::string cmd = env + LAC_CLI_PATH + " --quiet pool synth --config router.json --out rel >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(path("rel/manifest.json")));
}
