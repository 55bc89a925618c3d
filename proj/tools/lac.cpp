// lac: command-line front end for pools, agent training and the baseline studies.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation failure,
// 3 I/O failure, 64 usage error.

#include "lac/analysis.hpp"
#include "lac/gdboost.hpp"
#include "lac/stacker.hpp"
#include "lac/training.hpp"
#include "run_manifest.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace lac;
using cli::RunManifest;

namespace {

/// Relative artifact paths live under $LAC_DATA_DIR when it is set.
std::string resolve(const std::string& path)
{
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* root = std::getenv("LAC_DATA_DIR");
    if (root == nullptr || *root == '\0') return path;
    return fs::absolute(fs::path(root) / path).string();
}

void resolve_all(std::initializer_list<std::string*> paths)
{
    for (auto* p : paths) *p = resolve(*p);
}

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrorCode::io, 0, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void ensure_parent(const std::string& path)
{
    const auto parent = fs::path(path).parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw FormatError(FormatErrorCode::io, 0, "cannot create " + parent.string());
}

template <class Writer>
void write_text(const std::string& path, Writer&& writer)
{
    ensure_parent(path);
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw FormatError(FormatErrorCode::io, 0, "cannot write " + path);
    writer(out);
    if (!out) throw FormatError(FormatErrorCode::io, 0, "short write to " + path);
}

std::string manifest_path_for(const std::string& out)
{
    return fs::is_directory(out) ? (fs::path(out) / "run.json").string() : out + ".run.json";
}

void finish(RunManifest& m, const std::string& out)
{
    m.add_output(out);
    m.write(manifest_path_for(out));
}

std::vector<std::size_t> parse_ids(const std::string& text, std::size_t pool_size)
{
    if (text == "all") {
        std::vector<std::size_t> ids(pool_size);
        for (std::size_t i = 0; i < pool_size; ++i) ids[i] = i;
        return ids;
    }
    std::vector<std::size_t> ids;
    for (const auto& cell : split_csv_line(text)) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            ids.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("not a classifier id list: " + text);
        }
    }
    return ids;
}

struct Common {
    std::size_t threads = default_threads();
    bool quiet = false;
};

// ---------------------------------------------------------------------------
// pool

struct PoolArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string manifest;
    std::vector<std::string> tables;
    std::string pool;
    std::string ids;
};

int cmd_pool_synth(const PoolArgs& a)
{
    RunManifest m("pool synth");
    m.set_config(a.config);
    m.add_input(a.config);
    auto cfg = synthetic_config_from_json(read_json(a.config));
    if (a.seed) cfg.seed = *a.seed;
    m.set_seed(cfg.seed);
    const auto pool = generate_synthetic(cfg);
    const auto out = resolve(a.out);
    save_pool(pool, out);
    finish(m, out);
    std::printf("wrote pool '%s' (%zu classifiers, %zu classes) to %s\n", pool.name.c_str(), pool.size(),
        pool.n_classes, out.c_str());
    return 0;
}

int cmd_pool_import(const PoolArgs& a)
{
    RunManifest m("pool import");
    m.add_input(a.manifest);
    for (const auto& t : a.tables) m.add_input(t);
    const auto pool = load_pool(a.manifest, a.tables);
    const auto out = resolve(a.out);
    save_pool(pool, out);
    finish(m, out);
    std::printf("imported pool '%s' to %s\n", pool.name.c_str(), out.c_str());
    return 0;
}

int cmd_pool_validate(const PoolArgs& a)
{
    const auto pool = a.manifest.empty() ? load_pool_dir(resolve(a.pool)) : load_pool(a.manifest, a.tables);
    std::printf("ok: pool '%s', %zu classifiers, %zu classes", pool.name.c_str(), pool.size(), pool.n_classes);
    for (auto s : kAllSplits)
        if (pool.has(s)) std::printf(", %s %zu", to_string(s), pool.table(s).n_examples);
    std::printf("\n");
    return 0;
}

int cmd_pool_subset(const PoolArgs& a)
{
    RunManifest m("pool subset");
    const auto in = resolve(a.pool);
    m.add_input(in);
    const auto pool = load_pool_dir(in);
    const auto sub = subset_view(pool, parse_ids(a.ids, pool.size()));
    const auto out = resolve(a.out);
    save_pool(sub, out);
    finish(m, out);
    std::printf("wrote %zu-classifier subset to %s\n", sub.size(), out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// agent

struct TrainArgs {
    std::string pool;
    std::string out;
    std::string config;
    std::optional<std::size_t> horizon;
    std::optional<double> gamma, alpha, beta, lambda, lr;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size;
    std::optional<std::string> optimizer;
    bool soft_mask = false;
    std::optional<std::size_t> action_hidden, decision_hidden;
    std::optional<int> baseline_depth;
};

/// Config file first, then flags; flags win.
TrainConfig build_train_config(const TrainArgs& a, const Common& c)
{
    TrainConfig cfg;
    nlohmann::json j = a.config.empty() ? nlohmann::json::object() : read_json(a.config);
    cfg = train_config_from_json(j);
    if (a.epochs) {
        cfg.epochs = *a.epochs;
        if (!j.contains("lr_drop_epochs")) cfg.lr_drop_epochs = scaled_lr_drops(cfg.epochs);
    }
    if (a.horizon) cfg.horizon = *a.horizon;
    if (a.gamma) cfg.gamma = *a.gamma;
    if (a.alpha) cfg.alpha = *a.alpha;
    if (a.beta) cfg.beta = *a.beta;
    if (a.lambda) cfg.lambda = *a.lambda;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (a.seed) cfg.seed = *a.seed;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.optimizer) cfg = train_config_from_json({{"optimizer", *a.optimizer}}, cfg);
    cfg.threads = c.threads;
    cfg.validate();
    return cfg;
}

AgentConfig build_agent_config(const TrainArgs& a, const Pool& pool, const TrainConfig& t)
{
    AgentConfig ac;
    if (!a.config.empty()) {
        const auto j = read_json(a.config);
        if (j.contains("agent")) ac = agent_config_from_json(j["agent"]);
    }
    ac.n_classifiers = pool.size();
    ac.n_classes = pool.n_classes;
    ac.seed = t.seed;
    if (a.soft_mask) ac.hard_mask = false;
    if (a.action_hidden) ac.action_hidden = *a.action_hidden;
    if (a.decision_hidden) ac.decision_hidden = *a.decision_hidden;
    if (a.baseline_depth) ac.baseline_depth = *a.baseline_depth;
    ac.validate();
    return ac;
}

int cmd_train_lac(const TrainArgs& a, const Common& c)
{
    RunManifest m("train-lac");
    const auto cfg = build_train_config(a, c);
    m.set_seed(cfg.seed);
    if (!a.config.empty()) {
        m.set_config(a.config);
        m.add_input(a.config);
    }
    const auto pool_dir = resolve(a.pool);
    m.add_input(pool_dir);
    const auto pool = load_pool_dir(pool_dir);
    const auto ac = build_agent_config(a, pool, cfg);

    auto result = train(pool, LacNets::create(ac), cfg, [&](const EpochMetrics& e) {
        if (!c.quiet)
            std::fprintf(stderr, "epoch %zu/%zu loss %.5f test_acc %.4f\n", e.epoch, cfg.epochs, e.loss_total,
                e.test_accuracy);
    });
    const auto out = resolve(a.out);
    const auto agent_dir = (fs::path(out) / "agent").string();
    save_agent(result.nets, agent_dir);
    write_text((fs::path(agent_dir) / "train.json").string(), [&](std::ostream& os) { os << to_json(cfg).dump(2) << '\n'; });
    write_text((fs::path(out) / "metrics.csv").string(), [&](std::ostream& os) { result.log.write_csv(os); });
    finish(m, out);
    if (result.diverged) {
        std::fprintf(stderr, "training stopped early: %s\n", result.diagnostic.c_str());
        return 1;
    }
    const double acc = result.log.epochs.empty() ? 0.0 : result.log.epochs.back().test_accuracy;
    std::printf("test accuracy %.4f after %zu epochs; checkpoint in %s\n", acc, result.log.epochs.size(),
        agent_dir.c_str());
    return 0;
}

struct EvalArgs {
    std::string pool;
    std::string ckpt;
    std::string split = "test";
    std::optional<std::size_t> horizon;
    double lambda = 0.0;
    std::string mode = "argmax";
    std::uint64_t seed = 0;
    std::string out;
};

std::size_t checkpoint_horizon(const std::string& ckpt, const std::optional<std::size_t>& flag)
{
    if (flag) return *flag;
    const auto p = fs::path(ckpt) / "train.json";
    if (fs::exists(p)) return train_config_from_json(read_json(p.string())).horizon;
    throw ConfigError("--horizon is required for checkpoints without train.json");
}

Evaluation run_eval(const EvalArgs& a, const Common& c, const Pool& pool, const LacNets& nets)
{
    if (a.mode != "argmax" && a.mode != "sample") throw ConfigError("--mode must be argmax or sample");
    EvalOptions opt;
    opt.horizon = checkpoint_horizon(resolve(a.ckpt), a.horizon);
    opt.lambda = a.lambda;
    opt.mode = a.mode == "sample" ? SelectMode::sample : SelectMode::argmax;
    opt.seed = a.seed;
    opt.threads = c.threads;
    if (nets.config.n_classifiers != pool.size() || nets.config.n_classes != pool.n_classes)
        throw ConfigError("checkpoint does not match the pool's shape");
    return evaluate(pool, nets, split_from_string(a.split), opt);
}

int cmd_eval_lac(const EvalArgs& a, const Common& c)
{
    RunManifest m("eval-lac");
    m.set_seed(a.seed);
    const auto pool_dir = resolve(a.pool);
    const auto ckpt = resolve(a.ckpt);
    m.add_input(pool_dir);
    m.add_input(ckpt);
    const auto pool = load_pool_dir(pool_dir);
    const auto nets = load_agent(ckpt);
    const auto ev = run_eval(a, c, pool, nets);
    nlohmann::json j{{"split", a.split}, {"accuracy", ev.accuracy}, {"mean_cost", ev.mean_cost},
        {"mean_reward", ev.mean_reward}, {"call_share", ev.call_share}, {"duplicate_free", ev.duplicate_free},
        {"first_step_identical", ev.first_step_identical}};
    j["trajectories"] = nlohmann::json::array();
    for (const auto& [path, n] : ev.trajectories) j["trajectories"].push_back({{"path", path}, {"count", n}});
    std::printf("%s accuracy %.4f, mean cost %.4f, %zu distinct trajectories\n", a.split.c_str(), ev.accuracy,
        ev.mean_cost, ev.trajectories.size());
    if (!a.out.empty()) {
        const auto out = resolve(a.out);
        write_text(out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
        finish(m, out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// boosting and bagging

struct EnsembleArgs {
    std::string pool;
    std::string blobs;
    std::size_t rounds = 10;
    double shrinkage = 0.5;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-2;
    std::vector<std::size_t> hidden{32};
    std::optional<bool> weight_transfer;
    std::size_t bag_size = 0;
    std::uint64_t seed = 0;
    std::string out;
};

std::pair<FeatureDataset, FeatureDataset> ensemble_data(const EnsembleArgs& a, RunManifest& m)
{
    if (!a.pool.empty()) {
        const auto dir = resolve(a.pool);
        m.add_input(dir);
        const auto pool = load_pool_dir(dir);
        if (!pool.has(Split::val)) throw ConfigError("boosting on a pool needs a val split");
        auto from = [&](Split s) {
            const auto& t = pool.table(s);
            return FeatureDataset{stacker_inputs(t, all_ids(pool)), table_labels(t), pool.n_classes};
        };
        return {from(Split::train), from(Split::val)};
    }
    BlobConfig cfg;
    if (!a.blobs.empty()) {
        m.add_input(a.blobs);
        m.set_config(a.blobs);
        const auto j = read_json(a.blobs);
        try {
            cfg.n_classes = j.value("n_classes", cfg.n_classes);
            cfg.dim = j.value("dim", cfg.dim);
            cfg.n_train = j.value("n_train", cfg.n_train);
            cfg.n_val = j.value("n_val", cfg.n_val);
            cfg.radius = j.value("radius", cfg.radius);
            cfg.spread = j.value("spread", cfg.spread);
            cfg.label_noise = j.value("label_noise", cfg.label_noise);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed blob config: ") + e.what());
        }
    }
    cfg.seed = a.seed;
    return make_blob_splits(cfg);
}

int write_ensemble(const EnsembleResult& res, const std::string& kind, const EnsembleArgs& a, RunManifest& m)
{
    const auto out = resolve(a.out);
    write_text((fs::path(out) / "curve.csv").string(), [&](std::ostream& os) { write_curve_csv(os, res.curve); });
    save_committee(res.committee, (fs::path(out) / "committee").string(), kind);
    finish(m, out);
    const auto& last = res.curve.back();
    std::printf("%s: %zu members, train loss %.5g, val acc %.4f\n", kind.c_str(), res.committee.members.size(),
        last.train_loss, last.val_acc);
    return 0;
}

FitConfig fit_config(const EnsembleArgs& a) { return {a.epochs, a.batch_size, a.lr, a.seed}; }

int cmd_boost(const EnsembleArgs& a)
{
    RunManifest m("boost");
    m.set_seed(a.seed);
    const auto [train, val] = ensemble_data(a, m);
    BoostConfig cfg;
    cfg.rounds = a.rounds;
    cfg.shrinkage = a.shrinkage;
    cfg.hidden = a.hidden;
    cfg.fit = fit_config(a);
    cfg.weight_transfer = a.weight_transfer.value_or(true);
    cfg.seed = a.seed;
    return write_ensemble(boost(train, val, cfg), "boost", a, m);
}

int cmd_bag(const EnsembleArgs& a)
{
    RunManifest m("bag");
    m.set_seed(a.seed);
    const auto [train, val] = ensemble_data(a, m);
    BagConfig cfg;
    cfg.rounds = a.rounds;
    cfg.bag_size = a.bag_size;
    cfg.hidden = a.hidden;
    cfg.fit = fit_config(a);
    cfg.weight_transfer = a.weight_transfer.value_or(false);
    cfg.seed = a.seed;
    return write_ensemble(bag(train, val, cfg), "bag", a, m);
}

// ---------------------------------------------------------------------------
// stacking

struct StackArgs {
    std::string pool;
    int depth = 3;
    std::string subset = "all";
    std::optional<std::size_t> best_k;
    std::optional<std::size_t> knn;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_stack(const StackArgs& a, const Common& c)
{
    RunManifest m("stack");
    m.set_seed(a.seed);
    const auto dir = resolve(a.pool);
    m.add_input(dir);
    const auto pool = load_pool_dir(dir);
    const auto subset = parse_ids(a.subset, pool.size());
    std::vector<StackerResult> rows;
    if (a.knn) {
        const double acc = knn_stacker(pool, *a.knn, subset, Split::train, Split::test, c.threads);
        StackerResult r;
        r.subset = subset;
        r.val_acc = pool.has(Split::val) ? knn_stacker(pool, *a.knn, subset, Split::train, Split::val, c.threads) : 0.0;
        r.test_acc = acc;
        rows.push_back(r);
    } else {
        StackerConfig cfg;
        cfg.depth = a.depth;
        cfg.epochs = a.epochs;
        cfg.seed = a.seed;
        if (a.best_k) {
            auto search = best_subset(pool, *a.best_k, cfg, c.threads);
            std::printf("best %zu-subset %s: val %.4f test %.4f\n", *a.best_k,
                subset_label(search.results[search.best].subset).c_str(), search.results[search.best].val_acc,
                search.results[search.best].test_acc);
            rows = std::move(search.results);
        } else {
            cfg.subset = subset;
            rows.push_back(train_stacker(pool, cfg));
        }
    }
    for (const auto& r : rows)
        std::printf("subset %s val %.4f test %.4f\n", subset_label(r.subset).c_str(), r.val_acc, r.test_acc);
    if (!a.out.empty()) {
        const auto out = resolve(a.out);
        write_text(out, [&](std::ostream& os) { write_stack_csv(os, rows); });
        finish(m, out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// reports

struct ReportArgs {
    EvalArgs eval;
    std::string metrics;
    std::vector<std::size_t> horizons{1, 2, 3};
    TrainArgs train;
    std::size_t k = 2;
    std::string out;
};

int cmd_report_trajectories(const ReportArgs& a, const Common& c)
{
    RunManifest m("report trajectories");
    const auto pool_dir = resolve(a.eval.pool);
    const auto ckpt = resolve(a.eval.ckpt);
    m.add_input(pool_dir);
    m.add_input(ckpt);
    const auto pool = load_pool_dir(pool_dir);
    const auto nets = load_agent(ckpt);
    const auto ev = run_eval(a.eval, c, pool, nets);
    const auto graph = trajectory_graph(ev.trajectories, pool.size());
    const auto out = resolve(a.out);
    write_text(out, [&](std::ostream& os) { write_dot(os, graph, pool); });
    finish(m, out);
    std::printf("wrote %zu edges to %s\n", graph.transitions.size(), out.c_str());
    return 0;
}

int cmd_report_frequencies(const ReportArgs& a)
{
    RunManifest m("report frequencies");
    const auto path = resolve(a.metrics);
    m.add_input(path);
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrorCode::io, 0, "cannot open " + path);
    const auto curve = call_frequency_curve(MetricsLog::read_csv(in));
    const auto out = resolve(a.out);
    write_text(out, [&](std::ostream& os) { write_frequency_csv(os, curve); });
    finish(m, out);
    return 0;
}

int cmd_report_budget(const ReportArgs& a, const Common& c)
{
    RunManifest m("report budget");
    const auto pool_dir = resolve(a.train.pool);
    m.add_input(pool_dir);
    const auto pool = load_pool_dir(pool_dir);
    std::vector<BudgetRow> rows;
    for (auto h : a.horizons) {
        TrainArgs t = a.train;
        t.horizon = h;
        const auto cfg = build_train_config(t, c);
        m.set_seed(cfg.seed);
        const auto result = train(pool, LacNets::create(build_agent_config(t, pool, cfg)), cfg);
        const auto ev = evaluate(pool, result.nets, Split::test, {h, cfg.lambda, SelectMode::argmax, cfg.seed, c.threads});
        rows.push_back({h, ev.accuracy, ev.mean_cost});
        std::printf("horizon %zu: accuracy %.4f mean cost %.4f\n", h, ev.accuracy, ev.mean_cost);
    }
    const auto out = resolve(a.out);
    write_text(out, [&](std::ostream& os) { write_budget_csv(os, rows); });
    finish(m, out);
    return 0;
}

int cmd_report_oracle(const ReportArgs& a)
{
    const auto pool = load_pool_dir(resolve(a.eval.pool));
    const auto fixed = oracle_fixed(pool, a.k);
    nlohmann::json j{{"k", a.k}, {"oracle_fixed", fixed.accuracy}, {"best_subset", fixed.subset},
        {"average_responses", average_responses_accuracy(pool, Split::test)}};
    std::printf("oracle_fixed(k=%zu) = %.4f with subset %s\n", a.k, fixed.accuracy, subset_label(fixed.subset).c_str());
    const std::size_t h = a.eval.horizon.value_or(a.k);
    if (pool.size() <= 6 && h <= 3 && h <= pool.size()) {
        const auto adaptive = oracle_adaptive(pool, h);
        j["horizon"] = h;
        j["oracle_adaptive"] = adaptive.accuracy;
        std::printf("oracle_adaptive(h=%zu) = %.4f starting with %zu\n", h, adaptive.accuracy, adaptive.root);
    }
    if (!a.out.empty()) {
        RunManifest m("report oracle");
        m.add_input(resolve(a.eval.pool));
        const auto out = resolve(a.out);
        write_text(out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
        finish(m, out);
    }
    return 0;
}

void add_train_flags(CLI::App* app, TrainArgs& t)
{
    app->add_option("--config", t.config, "training config JSON (flags override its keys)");
    app->add_option("--horizon", t.horizon, "classifier calls per example");
    app->add_option("--gamma", t.gamma, "weight of the reinforcement terms");
    app->add_option("--alpha", t.alpha, "weight of the entropy bonus");
    app->add_option("--beta", t.beta, "weight of the per-episode entropy term");
    app->add_option("--lambda", t.lambda, "price per unit of classifier cost");
    app->add_option("--lr", t.lr, "base learning rate");
    app->add_option("--seed", t.seed, "random seed");
    app->add_option("--epochs", t.epochs, "training epochs");
    app->add_option("--batch-size", t.batch_size, "episodes per batch");
    app->add_option("--optimizer", t.optimizer, "adam or sgd");
    app->add_flag("--soft-mask", t.soft_mask, "allow repeated calls (charged, no new information)");
    app->add_option("--action-hidden", t.action_hidden, "action generator hidden width");
    app->add_option("--decision-hidden", t.decision_hidden, "decision maker hidden width");
    app->add_option("--baseline-depth", t.baseline_depth, "1 (linear) or 2 layers");
}

int run(int argc, char** argv)
{
    CLI::App app{"Cost-aware sparse ensembles: pools, agent training and baselines"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--threads", common.threads, "worker threads (results do not depend on it)");
    app.add_flag("--quiet", common.quiet, "suppress per-epoch progress");

    PoolArgs pa;
    auto* pool = app.add_subcommand("pool", "create, import, check and slice response pools");
    pool->require_subcommand(1);
    auto* synth = pool->add_subcommand("synth", "generate a synthetic pool from a JSON config");
    synth->add_option("--config", pa.config, "synthetic pool config")->required();
    synth->add_option("--out", pa.out, "output directory")->required();
    synth->add_option("--seed", pa.seed, "override the config seed");
    auto* import = pool->add_subcommand("import", "copy externally built tables into a pool directory");
    import->add_option("--manifest", pa.manifest, "manifest JSON")->required();
    import->add_option("--table", pa.tables, "response table file (repeat per split)")->required();
    import->add_option("--out", pa.out, "output directory")->required();
    auto* validate = pool->add_subcommand("validate", "check a pool's files");
    validate->add_option("--pool", pa.pool, "pool directory");
    validate->add_option("--manifest", pa.manifest, "manifest JSON (instead of --pool)");
    validate->add_option("--table", pa.tables, "response table file (with --manifest)");
    auto* subset = pool->add_subcommand("subset", "keep only some classifiers");
    subset->add_option("--pool", pa.pool, "pool directory")->required();
    subset->add_option("--ids", pa.ids, "comma-separated classifier ids")->required();
    subset->add_option("--out", pa.out, "output directory")->required();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train-lac", "train the agent on a pool");
    train_cmd->add_option("--pool", ta.pool, "pool directory")->required();
    train_cmd->add_option("--out", ta.out, "run directory")->required();
    add_train_flags(train_cmd, ta);

    EvalArgs ea;
    auto add_eval_flags = [](CLI::App* cmd, EvalArgs& e) {
        cmd->add_option("--pool", e.pool, "pool directory")->required();
        cmd->add_option("--ckpt", e.ckpt, "agent checkpoint directory")->required();
        cmd->add_option("--split", e.split, "train, val or test");
        cmd->add_option("--horizon", e.horizon, "calls per example (default: from the checkpoint)");
        cmd->add_option("--lambda", e.lambda, "price per unit of cost in the reported reward");
        cmd->add_option("--mode", e.mode, "argmax or sample");
        cmd->add_option("--seed", e.seed, "seed for sample mode");
    };
    auto* eval_cmd = app.add_subcommand("eval-lac", "evaluate a trained agent");
    add_eval_flags(eval_cmd, ea);
    eval_cmd->add_option("--out", ea.out, "JSON summary");

    EnsembleArgs ba;
    auto add_ensemble_flags = [](CLI::App* cmd, EnsembleArgs& e) {
        cmd->add_option("--pool", e.pool, "train on concatenated pool responses");
        cmd->add_option("--blobs", e.blobs, "Gaussian-blob dataset config (default when no --pool)");
        cmd->add_option("--rounds", e.rounds, "number of rounds");
        cmd->add_option("--epochs", e.epochs, "epochs per base learner");
        cmd->add_option("--batch-size", e.batch_size, "base learner batch size");
        cmd->add_option("--lr", e.lr, "base learner learning rate");
        cmd->add_option("--hidden", e.hidden, "hidden widths")->delimiter(',');
        cmd->add_option("--weight-transfer", e.weight_transfer, "start each learner from the previous one");
        cmd->add_option("--seed", e.seed, "random seed");
        cmd->add_option("--out", e.out, "output directory")->required();
    };
    auto* boost_cmd = app.add_subcommand("boost", "GD-MC gradient boosting");
    add_ensemble_flags(boost_cmd, ba);
    boost_cmd->add_option("--shrinkage", ba.shrinkage, "shrinkage v in (0, 1]");
    auto* bag_cmd = app.add_subcommand("bag", "bagging with bootstrap resamples");
    add_ensemble_flags(bag_cmd, ba);
    bag_cmd->add_option("--bag-size", ba.bag_size, "resample size (default: training-set size)");

    StackArgs sa;
    auto* stack = app.add_subcommand("stack", "context-agnostic stacking baselines");
    stack->add_option("--pool", sa.pool, "pool directory")->required();
    stack->add_option("--depth", sa.depth, "3 or 5 fully connected layers");
    stack->add_option("--subset", sa.subset, "'all' or comma-separated ids");
    stack->add_option("--best-k", sa.best_k, "search every subset of this size");
    stack->add_option("--knn", sa.knn, "k-nearest-neighbour vote instead of an MLP");
    stack->add_option("--epochs", sa.epochs, "training epochs");
    stack->add_option("--seed", sa.seed, "random seed");
    stack->add_option("--out", sa.out, "results CSV");

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "reports built from runs and pools");
    report->require_subcommand(1);
    auto* traj = report->add_subcommand("trajectories", "trajectory graph as DOT");
    add_eval_flags(traj, ra.eval);
    traj->add_option("--out", ra.out, "DOT file")->required();
    auto* freq = report->add_subcommand("frequencies", "call-frequency curves from a metrics log");
    freq->add_option("--metrics", ra.metrics, "metrics CSV")->required();
    freq->add_option("--out", ra.out, "CSV file")->required();
    auto* budget = report->add_subcommand("budget", "train per horizon and tabulate accuracy");
    budget->add_option("--pool", ra.train.pool, "pool directory")->required();
    budget->add_option("--horizons", ra.horizons, "comma-separated horizons")->delimiter(',');
    add_train_flags(budget, ra.train);
    budget->add_option("--out", ra.out, "CSV file")->required();
    auto* oracle = report->add_subcommand("oracle", "brute-force fixed and adaptive oracles");
    oracle->add_option("--pool", ra.eval.pool, "pool directory")->required();
    oracle->add_option("--k", ra.k, "fixed subset size");
    oracle->add_option("--horizon", ra.eval.horizon, "adaptive horizon (default: k)");
    oracle->add_option("--out", ra.out, "JSON summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 64;
    }
    resolve_all({&pa.config, &pa.out, &pa.manifest, &pa.pool, &ta.pool, &ta.out, &ta.config, &ea.pool, &ea.ckpt,
        &ea.out, &ba.pool, &ba.blobs, &ba.out, &sa.pool, &sa.out, &ra.eval.pool, &ra.eval.ckpt, &ra.metrics,
        &ra.train.pool, &ra.train.config, &ra.out});
    for (auto& t : pa.tables) t = resolve(t);

    if (synth->parsed()) return cmd_pool_synth(pa);
    if (import->parsed()) return cmd_pool_import(pa);
    if (validate->parsed()) {
        if (pa.pool.empty() == pa.manifest.empty()) throw UsageError("give either --pool or --manifest");
        return cmd_pool_validate(pa);
    }
    if (subset->parsed()) return cmd_pool_subset(pa);
    if (train_cmd->parsed()) return cmd_train_lac(ta, common);
    if (eval_cmd->parsed()) return cmd_eval_lac(ea, common);
    if (boost_cmd->parsed()) return cmd_boost(ba);
    if (bag_cmd->parsed()) return cmd_bag(ba);
    if (stack->parsed()) return cmd_stack(sa, common);
    if (traj->parsed()) return cmd_report_trajectories(ra, common);
    if (freq->parsed()) return cmd_report_frequencies(ra);
    if (budget->parsed()) return cmd_report_budget(ra, common);
    if (oracle->parsed()) return cmd_report_oracle(ra);
    return 64;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const FormatError& e) {
        std::fprintf(stderr, "lac: %s\n", e.what());
        return e.code() == FormatErrorCode::io ? 3 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "lac: %s\n", e.what());
        return 64;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "lac: %s\n", e.what());
        return 64;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "lac: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "lac: %s\n", e.what());
        return 1;
    }
}
