#pragma once

// Context-agnostic baselines: MLPs and k-NN over the concatenated responses
// of a fixed classifier subset.

#include "lac/error.hpp"
#include "lac/format.hpp"
#include "lac/numkit.hpp"
#include "lac/parallel.hpp"
#include "lac/pool.hpp"

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

namespace lac {

struct StackerConfig {
    int depth = 3;                     // fully connected layers, 3 or 5
    std::vector<std::size_t> hidden;   // empty = default widths for the depth
    std::vector<std::size_t> subset;   // empty = all classifiers
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    std::vector<std::size_t> widths() const
    {
        if (!hidden.empty()) return hidden;
        if (depth == 3) return {256, 128};
        if (depth == 5) return {256, 256, 128, 64};
        throw ConfigError("stacker depth must be 3 or 5");
    }

    void validate() const
    {
        if (depth != 3 && depth != 5) throw ConfigError("stacker depth must be 3 or 5");
        if (!hidden.empty() && hidden.size() + 1 != static_cast<std::size_t>(depth))
            throw ConfigError("stacker with depth " + std::to_string(depth) + " needs " +
                std::to_string(depth - 1) + " hidden widths");
        if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch size must be positive");
    }
};

inline std::vector<std::size_t> all_ids(const Pool& pool)
{
    std::vector<std::size_t> ids(pool.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
}

inline void check_subset(const Pool& pool, const std::vector<std::size_t>& subset)
{
    if (subset.empty()) throw ConfigError("stacker subset is empty");
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (subset[i] >= pool.size()) throw ConfigError("classifier id " + std::to_string(subset[i]) + " out of range");
        for (std::size_t j = 0; j < i; ++j)
            if (subset[j] == subset[i]) throw ConfigError("classifier id repeated in subset");
    }
}

/// Row e holds the responses of subset[0], subset[1], ... back to back.
inline Matrix stacker_inputs(const ResponseTable& t, const std::vector<std::size_t>& subset)
{
    Matrix x(t.n_examples, subset.size() * t.n_classes);
    for (std::size_t e = 0; e < t.n_examples; ++e)
        for (std::size_t s = 0; s < subset.size(); ++s) {
            const auto r = t.response(e, subset[s]);
            std::copy(r.begin(), r.end(), x.row(e).begin() + static_cast<std::ptrdiff_t>(s * t.n_classes));
        }
    return x;
}

inline std::vector<std::size_t> table_labels(const ResponseTable& t)
{
    std::vector<std::size_t> y(t.n_examples);
    for (std::size_t e = 0; e < t.n_examples; ++e) y[e] = t.label(e);
    return y;
}

inline double net_accuracy(const DenseNet& net, const Matrix& x, const std::vector<std::size_t>& y)
{
    if (y.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += argmax(predict(net, x.row(i))) == y[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

struct StackerResult {
    std::vector<std::size_t> subset;
    DenseNet net;
    double train_acc = 0.0;
    double val_acc = 0.0; // 0 when the pool has no validation split
    double test_acc = 0.0;
};

inline StackerResult train_stacker(const Pool& pool, const StackerConfig& cfg)
{
    cfg.validate();
    StackerResult res;
    res.subset = cfg.subset.empty() ? all_ids(pool) : cfg.subset;
    check_subset(pool, res.subset);
    const auto& train = pool.table(Split::train);
    const auto x = stacker_inputs(train, res.subset);
    const auto y = table_labels(train);

    std::vector<LayerSpec> specs;
    std::size_t prev = x.cols;
    for (auto h : cfg.widths()) {
        specs.push_back({prev, h, Activation::relu, 0.0});
        prev = h;
    }
    specs.push_back({prev, pool.n_classes, Activation::identity, 0.0});
    Rng rng(mix_seed({cfg.seed, 0x57ACull}));
    res.net = DenseNet(specs, rng);
    fit_minibatch(res.net, x, {cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.seed},
        [&](std::size_t i, const std::vector<float>& out) {
            const auto p = softmax(out);
            std::vector<float> d(out.size());
            for (std::size_t c = 0; c < out.size(); ++c) d[c] = static_cast<float>(p[c] - (c == y[i] ? 1.0 : 0.0));
            return d;
        });
    if (!res.net.all_finite()) throw NumericError("stacker diverged");

    res.train_acc = net_accuracy(res.net, x, y);
    if (pool.has(Split::val)) {
        const auto& t = pool.table(Split::val);
        res.val_acc = net_accuracy(res.net, stacker_inputs(t, res.subset), table_labels(t));
    }
    if (pool.has(Split::test)) {
        const auto& t = pool.table(Split::test);
        res.test_acc = net_accuracy(res.net, stacker_inputs(t, res.subset), table_labels(t));
    }
    return res;
}

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> k_subsets(std::size_t n, std::size_t k)
{
    std::vector<std::vector<std::size_t>> out;
    if (k == 0 || k > n) return out;
    std::vector<std::size_t> cur(k);
    for (std::size_t i = 0; i < k; ++i) cur[i] = i;
    while (true) {
        out.push_back(cur);
        std::size_t i = k;
        while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++cur[i - 1];
        for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
    }
    return out;
}

struct SubsetSearch {
    std::vector<StackerResult> results; // one per subset, lexicographic order
    std::size_t best = 0;               // index into results
};

/// Trains one stacker per k-subset and picks the best by validation accuracy
/// (train accuracy when there is no validation split); ties go to the
/// lexicographically smallest subset.
inline SubsetSearch best_subset(const Pool& pool, std::size_t k, StackerConfig cfg, std::size_t threads = 1)
{
    if (k == 0 || k > pool.size())
        throw ConfigError("subset size " + std::to_string(k) + " must be in 1.." + std::to_string(pool.size()));
    const auto subsets = k_subsets(pool.size(), k);
    SubsetSearch out;
    out.results.resize(subsets.size());
    parallel_for(subsets.size(), threads, [&](std::size_t i) {
        StackerConfig c = cfg;
        c.subset = subsets[i];
        out.results[i] = train_stacker(pool, c);
    });
    const bool use_val = pool.has(Split::val);
    for (std::size_t i = 1; i < out.results.size(); ++i) {
        const auto& r = out.results[i];
        const auto& b = out.results[out.best];
        if ((use_val ? r.val_acc : r.train_acc) > (use_val ? b.val_acc : b.train_acc)) out.best = i;
    }
    return out;
}

inline std::string subset_label(const std::vector<std::size_t>& subset)
{
    std::string s;
    for (std::size_t i = 0; i < subset.size(); ++i) s += (i ? ";" : "") + std::to_string(subset[i]);
    return s;
}

inline void write_stack_csv(std::ostream& os, const std::vector<StackerResult>& rows)
{
    os << "subset,k,val_acc,test_acc\n";
    for (const auto& r : rows)
        os << subset_label(r.subset) << ',' << r.subset.size() << ',' << format_real(r.val_acc) << ','
           << format_real(r.test_acc) << '\n';
}

/// Majority vote among the k nearest reference rows (squared Euclidean;
/// distance ties go to the lower reference index, vote ties to the lower class).
inline double knn_stacker(const Pool& pool, std::size_t k_neighbors, const std::vector<std::size_t>& subset,
    Split reference = Split::train, Split query = Split::test, std::size_t threads = 1)
{
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be at least 1");
    check_subset(pool, subset);
    const auto& ref = pool.table(reference);
    const auto& qry = pool.table(query);
    const auto xr = stacker_inputs(ref, subset);
    const auto xq = stacker_inputs(qry, subset);
    const auto yr = table_labels(ref);
    const auto yq = table_labels(qry);
    const std::size_t k = std::min(k_neighbors, ref.n_examples);
    if (qry.n_examples == 0) return 0.0;
    std::vector<std::uint8_t> hit(qry.n_examples, 0);
    parallel_for(qry.n_examples, threads, [&](std::size_t q) {
        std::vector<std::pair<double, std::size_t>> dist(ref.n_examples);
        const auto a = xq.row(q);
        for (std::size_t r = 0; r < ref.n_examples; ++r) {
            const auto b = xr.row(r);
            double d = 0.0;
            for (std::size_t c = 0; c < a.size(); ++c) {
                const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
                d += diff * diff;
            }
            dist[r] = {d, r};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::vector<std::size_t> votes(pool.n_classes, 0);
        for (std::size_t i = 0; i < k; ++i) ++votes[yr[dist[i].second]];
        hit[q] = argmax(votes) == yq[q] ? 1 : 0;
    });
    std::size_t correct = 0;
    for (auto h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(qry.n_examples);
}

} // namespace lac
