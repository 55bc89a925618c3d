#pragma once

// Hybrid objective and training loop for the short-memory agent:
//   total = gamma * (action + alpha * entropy) + supervised
// with a baseline regressor trained alongside on its own gradient path.

#include "lac/agent.hpp"
#include "lac/envmdp.hpp"
#include "lac/error.hpp"
#include "lac/format.hpp"
#include "lac/numkit.hpp"
#include "lac/parallel.hpp"
#include "lac/pool.hpp"
#include "lac/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lac {

struct TrainConfig {
    double gamma = 0.01;
    double alpha = 0.5;
    double beta = 1e-4;
    double lambda = 0.0;
    std::size_t horizon = 1;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::vector<std::size_t> lr_drop_epochs{170, 190};
    double lr_drop_factor = 0.1;
    OptimizerKind optimizer = OptimizerKind::adam;
    SelectMode eval_mode = SelectMode::argmax;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const
    {
        if (!(gamma >= 0.0 && alpha >= 0.0 && beta >= 0.0)) throw ConfigError("gamma, alpha and beta must be >= 0");
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
        if (horizon == 0) throw ConfigError("horizon must be positive");
        if (epochs == 0) throw ConfigError("epochs must be positive");
        if (batch_size == 0) throw ConfigError("batch size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        for (auto e : lr_drop_epochs)
            if (e >= epochs)
                throw ConfigError("learning-rate drop at epoch " + std::to_string(e) + " is not before the last epoch " +
                    std::to_string(epochs));
    }
};

/// Drop points at the same relative positions as 170/190 of 200 epochs.
inline std::vector<std::size_t> scaled_lr_drops(std::size_t epochs)
{
    std::vector<std::size_t> out;
    for (double frac : {0.85, 0.95}) {
        const auto e = static_cast<std::size_t>(std::lround(frac * static_cast<double>(epochs)));
        if (e > 0 && e < epochs && (out.empty() || out.back() != e)) out.push_back(e);
    }
    return out;
}

inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch)
{
    double lr = cfg.learning_rate;
    for (auto e : cfg.lr_drop_epochs)
        if (epoch >= e) lr *= cfg.lr_drop_factor;
    return lr;
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
inline const char* to_string(SelectMode m) { return m == SelectMode::argmax ? "argmax" : "sample"; }

inline nlohmann::json to_json(const TrainConfig& c)
{
    return {{"gamma", c.gamma}, {"alpha", c.alpha}, {"beta", c.beta}, {"lambda", c.lambda}, {"horizon", c.horizon},
        {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
        {"lr_drop_epochs", c.lr_drop_epochs}, {"lr_drop_factor", c.lr_drop_factor},
        {"optimizer", to_string(c.optimizer)}, {"eval_mode", to_string(c.eval_mode)}, {"seed", c.seed},
        {"threads", c.threads}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {})
{
    try {
        c.gamma = j.value("gamma", c.gamma);
        c.alpha = j.value("alpha", c.alpha);
        c.beta = j.value("beta", c.beta);
        c.lambda = j.value("lambda", c.lambda);
        c.horizon = j.value("horizon", c.horizon);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lr_drop_epochs = j.value("lr_drop_epochs", c.lr_drop_epochs);
        c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
        if (j.contains("optimizer")) {
            const auto s = j["optimizer"].get<std::string>();
            if (s != "adam" && s != "sgd") throw ConfigError("optimizer must be adam or sgd");
            c.optimizer = s == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
        }
        if (j.contains("eval_mode")) {
            const auto s = j["eval_mode"].get<std::string>();
            if (s != "argmax" && s != "sample") throw ConfigError("eval_mode must be argmax or sample");
            c.eval_mode = s == "sample" ? SelectMode::sample : SelectMode::argmax;
        }
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Traces and losses

struct StepRecord {
    std::size_t action = 0;
    std::vector<double> action_logits;   // at the state before the call
    std::vector<std::uint8_t> allowed;   // hard-mask eligibility at that state
    std::vector<double> decision_logits; // at the state after the response
    double baseline = 0.0;               // b(s_{t-1}), treated as a constant

    std::vector<double> policy() const
    {
        return masked_softmax(std::span<const double>(action_logits), std::span<const std::uint8_t>(allowed));
    }
};

struct EpisodeTrace {
    std::size_t example = 0;
    std::size_t label = 0;
    std::size_t prediction = 0;
    double reward = 0.0;
    double cost = 0.0;
    std::vector<StepRecord> steps;
};

struct BatchTrace {
    std::vector<EpisodeTrace> episodes;

    std::size_t horizon() const { return episodes.empty() ? 0 : episodes.front().steps.size(); }
};

/// Mean cross-entropy of the decision at every step against the label.
inline double supervised_loss(const BatchTrace& trace)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ep : trace.episodes)
        for (const auto& st : ep.steps) {
            sum += cross_entropy(softmax(st.decision_logits), ep.label);
            ++n;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// -(1/K) sum_k sum_t A_kt log pi(a_kt | s_k,t-1), A = R - b.
inline double action_loss(const BatchTrace& trace)
{
    if (trace.episodes.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& ep : trace.episodes)
        for (const auto& st : ep.steps) {
            const double advantage = ep.reward - st.baseline;
            if (advantage == 0.0) continue;
            sum += advantage * std::log(std::max(st.policy()[st.action], kProbabilityFloor));
        }
    return -sum / static_cast<double>(trace.episodes.size());
}

namespace detail {
inline double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

/// Batch-mean policy per step.
inline std::vector<std::vector<double>> mean_policies(const BatchTrace& trace)
{
    const std::size_t T = trace.horizon();
    std::vector<std::vector<double>> mean(T);
    if (trace.episodes.empty()) return mean;
    const std::size_t N = trace.episodes.front().steps.front().action_logits.size();
    for (std::size_t t = 0; t < T; ++t) {
        mean[t].assign(N, 0.0);
        for (const auto& ep : trace.episodes) {
            const auto p = ep.steps[t].policy();
            for (std::size_t i = 0; i < N; ++i) mean[t][i] += p[i];
        }
        for (auto& v : mean[t]) v /= static_cast<double>(trace.episodes.size());
    }
    return mean;
}
} // namespace detail

struct EntropyTerms {
    double across_batch = 0.0; // sum over steps t >= 2 of sum_i pbar log pbar
    double per_episode = 0.0;  // beta * mean over (k, t) of sum_i pi log pi
    double total() const { return across_batch + per_episode; }
};

/// Negative-entropy bonus; the first step is excluded from the batch term
/// because its policy does not depend on the example.
inline EntropyTerms entropy_terms(const BatchTrace& trace, double beta)
{
    EntropyTerms out;
    const auto mean = detail::mean_policies(trace);
    for (std::size_t t = 1; t < mean.size(); ++t)
        for (auto p : mean[t]) out.across_batch += detail::plogp(p);
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& ep : trace.episodes)
        for (const auto& st : ep.steps) {
            for (auto p : st.policy()) sum += detail::plogp(p);
            ++n;
        }
    out.per_episode = n == 0 ? 0.0 : beta * sum / static_cast<double>(n);
    return out;
}

inline double entropy_bonus(const BatchTrace& trace, double beta) { return entropy_terms(trace, beta).total(); }

/// Mean squared error of b(s_{t-1}) against the episode return.
inline double baseline_loss(const BatchTrace& trace)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ep : trace.episodes)
        for (const auto& st : ep.steps) {
            const double d = st.baseline - ep.reward;
            sum += d * d;
            ++n;
        }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

struct LossBreakdown {
    double total = 0.0;
    double action = 0.0;
    double entropy = 0.0;
    double supervised = 0.0;
    double baseline = 0.0;
};

/// Gradients w.r.t. head outputs, indexed [episode][step].
struct LossGradients {
    std::vector<std::vector<std::vector<double>>> action_logits;   // d total / d action logits
    std::vector<std::vector<std::vector<double>>> decision_logits; // d total / d decision logits
    std::vector<std::vector<double>> baseline;                     // d baseline_loss / d b
};

inline std::string describe_trace(const BatchTrace& trace, std::size_t max_episodes = 4)
{
    std::ostringstream os;
    os << trace.episodes.size() << " episodes, horizon " << trace.horizon();
    for (std::size_t k = 0; k < std::min(max_episodes, trace.episodes.size()); ++k) {
        const auto& ep = trace.episodes[k];
        os << "\n  example " << ep.example << " label " << ep.label << " reward " << ep.reward << " actions [";
        for (std::size_t t = 0; t < ep.steps.size(); ++t)
            os << (t ? "," : "") << ep.steps[t].action << "(b=" << ep.steps[t].baseline << ")";
        os << "]";
    }
    return os.str();
}

inline LossBreakdown total_loss(const BatchTrace& trace, const TrainConfig& cfg, LossGradients* grads = nullptr)
{
    LossBreakdown out;
    out.action = action_loss(trace);
    const auto ent = entropy_terms(trace, cfg.beta);
    out.entropy = ent.total();
    out.supervised = supervised_loss(trace);
    out.baseline = baseline_loss(trace);
    out.total = cfg.gamma * (out.action + cfg.alpha * out.entropy) + out.supervised;
    if (!std::isfinite(out.total) || !std::isfinite(out.baseline))
        throw NumericError("non-finite loss (action " + format_real(out.action) + ", entropy " +
            format_real(out.entropy) + ", supervised " + format_real(out.supervised) + ", baseline " +
            format_real(out.baseline) + "); trace: " + describe_trace(trace));
    if (grads == nullptr) return out;

    const std::size_t K = trace.episodes.size();
    const std::size_t T = trace.horizon();
    const double steps_total = static_cast<double>(K * T);
    const auto mean = detail::mean_policies(trace);
    grads->action_logits.assign(K, {});
    grads->decision_logits.assign(K, {});
    grads->baseline.assign(K, {});
    for (std::size_t k = 0; k < K; ++k) {
        const auto& ep = trace.episodes[k];
        grads->action_logits[k].resize(T);
        grads->decision_logits[k].resize(T);
        grads->baseline[k].resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& st = ep.steps[t];
            const auto pi = st.policy();
            const std::size_t N = pi.size();

            // d(entropy)/d(pi), then through the (masked) softmax Jacobian.
            std::vector<double> u(N, 0.0);
            for (std::size_t i = 0; i < N; ++i) {
                if (pi[i] <= 0.0) continue;
                if (t >= 1 && mean[t][i] > 0.0) u[i] += (std::log(mean[t][i]) + 1.0) / static_cast<double>(K);
                u[i] += cfg.beta * (std::log(pi[i]) + 1.0) / steps_total;
            }
            double pu = 0.0;
            for (std::size_t i = 0; i < N; ++i) pu += pi[i] * u[i];

            const double advantage = ep.reward - st.baseline;
            auto& ga = grads->action_logits[k][t];
            ga.assign(N, 0.0);
            for (std::size_t i = 0; i < N; ++i) {
                const double d_action = -advantage * ((i == st.action ? 1.0 : 0.0) - pi[i]) / static_cast<double>(K);
                const double d_entropy = pi[i] * (u[i] - pu);
                ga[i] = cfg.gamma * (d_action + cfg.alpha * d_entropy);
            }

            const auto p = softmax(st.decision_logits);
            auto& gd = grads->decision_logits[k][t];
            gd.resize(p.size());
            for (std::size_t c = 0; c < p.size(); ++c)
                gd[c] = (p[c] - (c == ep.label ? 1.0 : 0.0)) / steps_total;

            grads->baseline[k][t] = 2.0 * (st.baseline - ep.reward) / steps_total;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rollouts

struct Rollout {
    EpisodeTrace trace;
    std::vector<Tape<float>> action_tapes;
    std::vector<Tape<float>> decision_tapes;
    std::vector<Tape<float>> baseline_tapes;
    std::vector<double> first_policy;
};

/// Plays one episode. The terminal prediction is the argmax of the decision
/// maker after the last call. Under soft masking a repeated call is charged
/// but leaves the hidden state unchanged.
inline Rollout rollout_episode(const LacNets& nets, const Environment& env, std::size_t example, SelectMode mode,
    Rng& rng, Mode net_mode, bool keep_tapes)
{
    Rollout out;
    auto& tr = out.trace;
    tr.example = example;
    tr.label = env.label(example);
    const std::size_t horizon = env.config().horizon;
    HiddenState state(nets.config.n_classifiers, nets.config.n_classes);
    EpisodeState episode = env.reset(example);
    for (std::size_t t = 0; t < horizon; ++t) {
        StepRecord st;
        auto a = forward(nets.action_generator, state.vector(), net_mode, &rng);
        st.action_logits.assign(a.output.begin(), a.output.end());
        st.allowed = allowed_actions(state, nets.config.hard_mask);
        const auto pi = st.policy();
        if (t == 0) out.first_policy = pi;
        st.action = select_action(pi, mode, &rng);

        auto b = forward(nets.baseline, state.vector(), net_mode, &rng);
        st.baseline = b.output[0];

        const auto obs = env.query(episode, st.action);
        if (!state.called(st.action)) state.encode(st.action, obs.response);

        auto d = forward(nets.decision_maker, state.vector(), net_mode, &rng);
        st.decision_logits.assign(d.output.begin(), d.output.end());
        tr.steps.push_back(std::move(st));
        if (keep_tapes) {
            out.action_tapes.push_back(std::move(a.tape));
            out.baseline_tapes.push_back(std::move(b.tape));
            out.decision_tapes.push_back(std::move(d.tape));
        }
    }
    tr.prediction = argmax(tr.steps.back().decision_logits);
    tr.cost = episode.accumulated_cost;
    tr.reward = env.finalize(episode, tr.prediction);
    return out;
}

struct EvalOptions {
    std::size_t horizon = 1;
    double lambda = 0.0;
    SelectMode mode = SelectMode::argmax;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct Evaluation {
    double accuracy = 0.0;
    double mean_cost = 0.0;
    double mean_reward = 0.0;
    std::vector<std::size_t> call_counts;
    std::vector<double> call_share; // calls to i / all calls
    std::map<std::vector<std::size_t>, std::size_t> trajectories;
    bool duplicate_free = true;
    bool first_step_identical = true; // step-1 policy bitwise equal for all examples
    std::vector<double> first_step_policy;
};

inline Evaluation evaluate(const Pool& pool, const LacNets& nets, Split split, const EvalOptions& opt)
{
    Environment env(pool, split, {opt.lambda, opt.horizon, nets.config.hard_mask});
    const std::size_t n = env.n_examples();
    std::vector<Rollout> rollouts(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        Rng rng(mix_seed({opt.seed, 0xE7A1ull, i}));
        rollouts[i] = rollout_episode(nets, env, i, opt.mode, rng, Mode::eval, false);
    });
    Evaluation ev;
    ev.call_counts.assign(pool.size(), 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tr = rollouts[i].trace;
        correct += tr.prediction == tr.label ? 1 : 0;
        ev.mean_cost += tr.cost;
        ev.mean_reward += tr.reward;
        std::vector<std::size_t> path;
        for (const auto& st : tr.steps) {
            if (std::find(path.begin(), path.end(), st.action) != path.end()) ev.duplicate_free = false;
            path.push_back(st.action);
            ++ev.call_counts[st.action];
        }
        ++ev.trajectories[path];
        if (i == 0) ev.first_step_policy = rollouts[i].first_policy;
        else if (rollouts[i].first_policy != ev.first_step_policy) ev.first_step_identical = false;
    }
    if (n > 0) {
        ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        ev.mean_cost /= static_cast<double>(n);
        ev.mean_reward /= static_cast<double>(n);
    }
    std::size_t total_calls = 0;
    for (auto c : ev.call_counts) total_calls += c;
    ev.call_share.assign(pool.size(), 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (total_calls) ev.call_share[i] = static_cast<double>(ev.call_counts[i]) / static_cast<double>(total_calls);
    return ev;
}

// ---------------------------------------------------------------------------
// Metrics log

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based
    double loss_total = 0.0;
    double loss_action = 0.0;
    double loss_entropy = 0.0;
    double loss_supervised = 0.0;
    double loss_baseline = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> call_freq; // share of test-split calls per classifier, sums to 1
    bool first_step_identical = true;
    bool duplicate_free = true;
};

struct MetricsLog {
    std::vector<EpochMetrics> epochs;

    void write_csv(std::ostream& os) const
    {
        const std::size_t n = epochs.empty() ? 0 : epochs.front().call_freq.size();
        os << "epoch,loss_total,loss_action,loss_entropy,loss_supervised,loss_baseline,test_accuracy";
        for (std::size_t i = 0; i < n; ++i) os << ",call_freq_" << i;
        os << '\n';
        for (const auto& e : epochs) {
            os << e.epoch << ',' << format_real(e.loss_total) << ',' << format_real(e.loss_action) << ','
               << format_real(e.loss_entropy) << ',' << format_real(e.loss_supervised) << ','
               << format_real(e.loss_baseline) << ',' << format_real(e.test_accuracy);
            for (auto f : e.call_freq) os << ',' << format_real(f);
            os << '\n';
        }
    }

    static MetricsLog read_csv(std::istream& is)
    {
        static const std::vector<std::string> fixed{"epoch", "loss_total", "loss_action", "loss_entropy",
            "loss_supervised", "loss_baseline", "test_accuracy"};
        std::string line;
        if (!std::getline(is, line)) throw FormatError(FormatErrorCode::truncated, 0, "empty metrics log");
        const auto header = split_csv_line(line);
        if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
            throw FormatError(FormatErrorCode::bad_manifest, 0, "metrics log header is not recognised");
        const std::size_t n_freq = header.size() - fixed.size();
        for (std::size_t i = 0; i < n_freq; ++i)
            if (header[fixed.size() + i] != "call_freq_" + std::to_string(i))
                throw FormatError(FormatErrorCode::bad_manifest, 0, "unexpected column " + header[fixed.size() + i]);
        MetricsLog log;
        std::size_t row = 1;
        while (std::getline(is, line)) {
            ++row;
            if (line.empty()) continue;
            const auto cells = split_csv_line(line);
            if (cells.size() != header.size())
                throw FormatError(FormatErrorCode::count_mismatch, row, "metrics row has wrong number of cells");
            try {
                EpochMetrics e;
                e.epoch = std::stoul(cells[0]);
                e.loss_total = std::stod(cells[1]);
                e.loss_action = std::stod(cells[2]);
                e.loss_entropy = std::stod(cells[3]);
                e.loss_supervised = std::stod(cells[4]);
                e.loss_baseline = std::stod(cells[5]);
                e.test_accuracy = std::stod(cells[6]);
                for (std::size_t i = 0; i < n_freq; ++i) e.call_freq.push_back(std::stod(cells[fixed.size() + i]));
                log.epochs.push_back(std::move(e));
            } catch (const std::logic_error&) {
                throw FormatError(FormatErrorCode::out_of_range, row, "unparsable number in metrics row");
            }
        }
        return log;
    }
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
    LacNets nets;
    MetricsLog log;
    bool diverged = false;
    std::string diagnostic;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

namespace detail {
inline void add_head_gradient(const DenseNet& net, const Tape<float>& tape, const std::vector<double>& d_out,
    Gradients& acc)
{
    std::vector<float> g(d_out.begin(), d_out.end());
    acc.add(backward(net, tape, std::span<const float>(g)));
}
} // namespace detail

inline TrainResult train(const Pool& pool, LacNets nets, const TrainConfig& cfg, const EpochCallback& on_epoch = {})
{
    cfg.validate();
    if (nets.config.n_classifiers != pool.size() || nets.config.n_classes != pool.n_classes)
        throw ConfigError("agent shape does not match pool");
    Environment train_env(pool, Split::train, {cfg.lambda, cfg.horizon, nets.config.hard_mask});
    pool.table(Split::test);

    auto opt_action = OptimizerState::make(cfg.optimizer, cfg.learning_rate);
    auto opt_decision = OptimizerState::make(cfg.optimizer, cfg.learning_rate);
    auto opt_baseline = OptimizerState::make(cfg.optimizer, cfg.learning_rate);

    TrainResult result;
    const std::size_t n = train_env.n_examples();
    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        opt_action.learning_rate = opt_decision.learning_rate = opt_baseline.learning_rate = lr;
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(mix_seed({cfg.seed, 0x5F1ull, epoch}));
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        const LacNets last_good = nets;
        LossBreakdown sums;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const std::size_t K = std::min(cfg.batch_size, n - start);
                std::vector<Rollout> rollouts(K);
                parallel_for(K, cfg.threads, [&](std::size_t i) {
                    Rng rng(mix_seed({cfg.seed, epoch, start, i}));
                    rollouts[i] = rollout_episode(nets, train_env, order[start + i], SelectMode::sample, rng,
                        Mode::train, true);
                });
                BatchTrace trace;
                trace.episodes.reserve(K);
                for (auto& r : rollouts) trace.episodes.push_back(r.trace);

                LossGradients g;
                const auto losses = total_loss(trace, cfg, &g);

                auto ga = Gradients::zeros_like(nets.action_generator);
                auto gd = Gradients::zeros_like(nets.decision_maker);
                auto gb = Gradients::zeros_like(nets.baseline);
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t t = 0; t < cfg.horizon; ++t) {
                        detail::add_head_gradient(nets.action_generator, rollouts[k].action_tapes[t],
                            g.action_logits[k][t], ga);
                        detail::add_head_gradient(nets.decision_maker, rollouts[k].decision_tapes[t],
                            g.decision_logits[k][t], gd);
                        detail::add_head_gradient(nets.baseline, rollouts[k].baseline_tapes[t],
                            {g.baseline[k][t]}, gb);
                    }
                optimizer_step(nets.action_generator, ga, opt_action);
                optimizer_step(nets.decision_maker, gd, opt_decision);
                optimizer_step(nets.baseline, gb, opt_baseline);

                sums.total += losses.total;
                sums.action += losses.action;
                sums.entropy += losses.entropy;
                sums.supervised += losses.supervised;
                sums.baseline += losses.baseline;
                ++batches;
            }
        } catch (const NumericError& e) {
            nets = last_good;
            result.diverged = true;
            result.diagnostic = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
            break;
        }

        EpochMetrics m;
        m.epoch = epoch + 1;
        const double nb = batches == 0 ? 1.0 : static_cast<double>(batches);
        m.loss_action = sums.action / nb;
        m.loss_entropy = sums.entropy / nb;
        m.loss_supervised = sums.supervised / nb;
        m.loss_baseline = sums.baseline / nb;
        m.loss_total = sums.total / nb;
        const auto ev = evaluate(pool, nets, Split::test,
            {cfg.horizon, cfg.lambda, cfg.eval_mode, mix_seed({cfg.seed, 0xEA1ull, epoch}), cfg.threads});
        m.test_accuracy = ev.accuracy;
        m.call_freq = ev.call_share;
        m.first_step_identical = ev.first_step_identical;
        m.duplicate_free = ev.duplicate_free;
        result.log.epochs.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    result.nets = std::move(nets);
    return result;
}

} // namespace lac
