#pragma once

// Brute-force oracles for small pools and the report artifacts built from
// training logs and evaluation trajectories.

#include "lac/error.hpp"
#include "lac/format.hpp"
#include "lac/pool.hpp"
#include "lac/stacker.hpp"
#include "lac/training.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <tuple>
#include <string>
#include <vector>

namespace lac {

inline constexpr double kConfidentThreshold = 0.9;

/// Argmax class times two, plus one when the top probability is >= 0.9.
inline std::uint16_t discretize(std::span<const float> response)
{
    const std::size_t top = argmax(response);
    const bool confident = response[top] >= static_cast<float>(kConfidentThreshold);
    return static_cast<std::uint16_t>(top * 2 + (confident ? 1 : 0));
}

namespace detail {

struct SymbolTable {
    std::vector<std::uint16_t> symbols; // n_examples x n_classifiers
    std::vector<std::size_t> labels;
    std::size_t n_classifiers = 0;

    std::uint16_t at(std::size_t e, std::size_t k) const { return symbols[e * n_classifiers + k]; }
};

inline SymbolTable symbolize(const ResponseTable& t)
{
    SymbolTable s;
    s.n_classifiers = t.n_classifiers;
    s.symbols.resize(t.n_examples * t.n_classifiers);
    s.labels.resize(t.n_examples);
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        s.labels[e] = t.label(e);
        for (std::size_t k = 0; k < t.n_classifiers; ++k) s.symbols[e * t.n_classifiers + k] = discretize(t.response(e, k));
    }
    return s;
}

/// Most frequent label among `idx`, lowest class on ties; `fallback` if empty.
inline std::size_t majority(const SymbolTable& s, const std::vector<std::size_t>& idx, std::size_t n_classes,
    std::size_t fallback)
{
    if (idx.empty()) return fallback;
    std::vector<std::size_t> counts(n_classes, 0);
    for (auto e : idx) ++counts[s.labels[e]];
    return argmax(counts);
}

inline std::size_t count_label(const SymbolTable& s, const std::vector<std::size_t>& idx, std::size_t label)
{
    std::size_t n = 0;
    for (auto e : idx) n += s.labels[e] == label ? 1 : 0;
    return n;
}

struct OracleData {
    SymbolTable fit;  // train split: estimates the decision rule
    SymbolTable eval; // test split: scored
    std::size_t n_classes = 0;
    std::size_t fallback = 0; // train majority class, used for patterns unseen in train
};

inline OracleData oracle_data(const Pool& pool)
{
    OracleData d;
    d.fit = symbolize(pool.table(Split::train));
    d.eval = symbolize(pool.table(Split::test));
    d.n_classes = pool.n_classes;
    std::vector<std::size_t> all(d.fit.labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    d.fallback = majority(d.fit, all, d.n_classes, 0);
    return d;
}

inline std::vector<std::size_t> iota_vec(std::size_t n)
{
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace detail

struct FixedOracle {
    double accuracy = 0.0;
    std::vector<std::size_t> subset;
};

/// Best test accuracy over fixed k-subsets, each read through the empirical
/// Bayes rule over discretized response patterns estimated on train.
inline FixedOracle oracle_fixed(const Pool& pool, std::size_t k)
{
    if (k == 0 || k > pool.size()) throw ConfigError("k must be in 1.." + std::to_string(pool.size()));
    const auto subsets = k_subsets(pool.size(), k);
    if (subsets.size() > 100000)
        throw ConfigError("too many subsets to enumerate (" + std::to_string(subsets.size()) +
            "); restrict the pool with `pool subset` first");
    const auto d = detail::oracle_data(pool);
    FixedOracle best;
    best.accuracy = -1.0;
    for (const auto& subset : subsets) {
        std::map<std::vector<std::uint16_t>, std::vector<std::size_t>> cells;
        std::vector<std::uint16_t> key(k);
        for (std::size_t e = 0; e < d.fit.labels.size(); ++e) {
            for (std::size_t i = 0; i < k; ++i) key[i] = d.fit.at(e, subset[i]);
            cells[key].push_back(e);
        }
        std::size_t correct = 0;
        for (std::size_t e = 0; e < d.eval.labels.size(); ++e) {
            for (std::size_t i = 0; i < k; ++i) key[i] = d.eval.at(e, subset[i]);
            const auto it = cells.find(key);
            const std::size_t pred =
                it == cells.end() ? d.fallback : detail::majority(d.fit, it->second, d.n_classes, d.fallback);
            correct += pred == d.eval.labels[e] ? 1 : 0;
        }
        const double acc = d.eval.labels.empty() ? 0.0 : static_cast<double>(correct) / d.eval.labels.size();
        if (acc > best.accuracy) best = {acc, subset};
    }
    return best;
}

struct AdaptiveOracle {
    double accuracy = 0.0;
    std::size_t root = 0; // first classifier of the best tree
};

namespace detail {

/// Best number of correct test predictions below a node of the policy tree.
inline std::size_t adaptive_search(const OracleData& d, std::vector<std::size_t>& called,
    const std::vector<std::size_t>& fit_idx, const std::vector<std::size_t>& eval_idx, std::size_t remaining,
    std::size_t n_classifiers, std::size_t* best_root)
{
    if (remaining == 0) {
        const std::size_t pred = majority(d.fit, fit_idx, d.n_classes, d.fallback);
        return count_label(d.eval, eval_idx, pred);
    }
    std::size_t best = 0;
    bool have = false;
    for (std::size_t a = 0; a < n_classifiers; ++a) {
        if (std::find(called.begin(), called.end(), a) != called.end()) continue;
        std::map<std::uint16_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> branches;
        for (auto e : fit_idx) branches[d.fit.at(e, a)].first.push_back(e);
        for (auto e : eval_idx) branches[d.eval.at(e, a)].second.push_back(e);
        called.push_back(a);
        std::size_t total = 0;
        for (const auto& [sym, part] : branches)
            total += adaptive_search(d, called, part.first, part.second, remaining - 1, n_classifiers, nullptr);
        called.pop_back();
        if (!have || total > best) {
            best = total;
            have = true;
            if (best_root) *best_root = a;
        }
    }
    return best;
}

} // namespace detail

/// Best test accuracy over depth-`horizon` policy trees that branch on the
/// discretized response just observed; leaves use the train-estimated Bayes
/// rule of the whole path.
inline AdaptiveOracle oracle_adaptive(const Pool& pool, std::size_t horizon)
{
    if (pool.size() > 6 || horizon > 3)
        throw ConfigError("adaptive oracle is limited to 6 classifiers and horizon 3; restrict the pool first");
    if (horizon == 0 || horizon > pool.size()) throw ConfigError("horizon must be in 1.." + std::to_string(pool.size()));
    const auto d = detail::oracle_data(pool);
    std::vector<std::size_t> called;
    AdaptiveOracle out;
    const std::size_t correct = detail::adaptive_search(d, called, detail::iota_vec(d.fit.labels.size()),
        detail::iota_vec(d.eval.labels.size()), horizon, pool.size(), &out.root);
    out.accuracy = d.eval.labels.empty() ? 0.0 : static_cast<double>(correct) / d.eval.labels.size();
    return out;
}

// ---------------------------------------------------------------------------
// Call frequencies

struct FrequencyCurve {
    std::vector<std::size_t> epochs;
    std::vector<std::vector<double>> series; // [classifier][epoch index]
};

inline FrequencyCurve call_frequency_curve(const MetricsLog& log)
{
    FrequencyCurve c;
    if (log.epochs.empty()) throw FormatError(FormatErrorCode::truncated, 0, "metrics log has no epochs");
    const std::size_t n = log.epochs.front().call_freq.size();
    if (n == 0) throw FormatError(FormatErrorCode::bad_manifest, 0, "metrics log has no call_freq columns");
    c.series.assign(n, {});
    for (const auto& e : log.epochs) {
        if (e.call_freq.size() != n) throw FormatError(FormatErrorCode::count_mismatch, e.epoch, "ragged call_freq");
        c.epochs.push_back(e.epoch);
        for (std::size_t i = 0; i < n; ++i) c.series[i].push_back(e.call_freq[i]);
    }
    return c;
}

inline void write_frequency_csv(std::ostream& os, const FrequencyCurve& c)
{
    os << "# share of test-split calls per classifier; each row sums to 1\n";
    os << "epoch";
    for (std::size_t i = 0; i < c.series.size(); ++i) os << ",call_share_" << i;
    os << '\n';
    for (std::size_t t = 0; t < c.epochs.size(); ++t) {
        os << c.epochs[t];
        for (const auto& s : c.series) os << ',' << format_real(s[t]);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Trajectory graphs

using TrajectoryCounts = std::map<std::vector<std::size_t>, std::size_t>;

struct TrajectoryGraph {
    static constexpr std::size_t start = static_cast<std::size_t>(-1);

    std::size_t n_classifiers = 0;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> transitions; // (from, to) -> count
    std::vector<std::size_t> visits;                                        // calls per classifier

    std::map<std::size_t, std::size_t> out_totals() const
    {
        std::map<std::size_t, std::size_t> totals;
        for (const auto& [edge, n] : transitions) totals[edge.first] += n;
        return totals;
    }

    /// Empirical P(next = to | current = from).
    double probability(std::size_t from, std::size_t to) const
    {
        const auto it = transitions.find({from, to});
        if (it == transitions.end()) return 0.0;
        return static_cast<double>(it->second) / static_cast<double>(out_totals().at(from));
    }

    std::vector<std::tuple<std::size_t, std::size_t, double>> edges() const
    {
        const auto totals = out_totals();
        std::vector<std::tuple<std::size_t, std::size_t, double>> out;
        for (const auto& [edge, n] : transitions)
            out.emplace_back(edge.first, edge.second, static_cast<double>(n) / totals.at(edge.first));
        return out;
    }
};

inline TrajectoryGraph trajectory_graph(const TrajectoryCounts& counts, std::size_t n_classifiers)
{
    if (counts.empty()) throw UsageError("no trajectories to summarize");
    TrajectoryGraph g;
    g.n_classifiers = n_classifiers;
    g.visits.assign(n_classifiers, 0);
    for (const auto& [path, n] : counts) {
        std::size_t from = TrajectoryGraph::start;
        for (auto to : path) {
            if (to >= n_classifiers) throw UsageError("trajectory names classifier " + std::to_string(to));
            g.transitions[{from, to}] += n;
            g.visits[to] += n;
            from = to;
        }
    }
    return g;
}

/// Nodes carry classifier name and call share; edges carry conditional
/// probabilities. Output order is fixed so files diff cleanly.
inline void write_dot(std::ostream& os, const TrajectoryGraph& g, const Pool& pool)
{
    std::size_t total = 0;
    for (auto v : g.visits) total += v;
    auto node = [](std::size_t id) { return id == TrajectoryGraph::start ? std::string("s") : "n" + std::to_string(id); };
    os << "digraph lac {\n";
    os << "  s [label=\"s\", shape=circle];\n";
    for (std::size_t i = 0; i < g.n_classifiers; ++i) {
        if (g.visits[i] == 0) continue;
        const double share = total ? static_cast<double>(g.visits[i]) / static_cast<double>(total) : 0.0;
        const std::string name = i < pool.specs.size() ? pool.specs[i].name : std::to_string(i);
        os << "  " << node(i) << " [label=\"" << name << "\\n" << format_fixed(share, 3) << "\"];\n";
    }
    auto edges = g.edges();
    std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
        // start node first, then by ids
        const auto fa = std::get<0>(a) == TrajectoryGraph::start ? 0 : std::get<0>(a) + 1;
        const auto fb = std::get<0>(b) == TrajectoryGraph::start ? 0 : std::get<0>(b) + 1;
        return std::tie(fa, std::get<1>(a)) < std::tie(fb, std::get<1>(b));
    });
    for (const auto& [from, to, p] : edges)
        os << "  " << node(from) << " -> " << node(to) << " [label=\"" << format_fixed(p, 3) << "\"];\n";
    os << "}\n";
}

// ---------------------------------------------------------------------------
// Budget table

struct BudgetRow {
    std::size_t horizon = 0;
    double accuracy = 0.0;
    double mean_cost = 0.0;
};

inline void write_budget_csv(std::ostream& os, const std::vector<BudgetRow>& rows)
{
    os << "horizon,accuracy,mean_cost\n";
    for (const auto& r : rows)
        os << r.horizon << ',' << format_real(r.accuracy) << ',' << format_real(r.mean_cost) << '\n';
}

} // namespace lac
