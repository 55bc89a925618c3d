#pragma once

// Classifier pools: per-example response tables for every pool member, plus
// the metadata describing each member. Pools are either synthesized with
// controlled specialization or imported from response-table files.

#include "lac/binary_io.hpp"
#include "lac/error.hpp"
#include "lac/numkit.hpp"
#include "lac/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lac {

enum class Split : std::uint32_t { train = 0, val = 1, test = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::val, Split::test};

inline const char* to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s)
{
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw UsageError("unknown split '" + s + "'");
}

enum class ClassifierSource { synthetic, imported };

struct ClassifierSpec {
    std::size_t id = 0;
    std::string name;
    double cost = 1.0;
    std::vector<std::size_t> class_subset;
    ClassifierSource source = ClassifierSource::synthetic;
    std::string arch;
    std::optional<double> test_accuracy;
    std::size_t origin_id = 0; // id in the pool this member was first created in

    bool operator==(const ClassifierSpec&) const = default;
};

struct ResponseTable {
    std::size_t n_examples = 0;
    std::size_t n_classifiers = 0;
    std::size_t n_classes = 0;
    Split split = Split::train;
    std::vector<std::uint16_t> labels;
    std::vector<float> responses; // [example][classifier][class]

    ResponseTable() = default;
    ResponseTable(std::size_t examples, std::size_t classifiers, std::size_t classes, Split s)
        : n_examples(examples)
        , n_classifiers(classifiers)
        , n_classes(classes)
        , split(s)
        , labels(examples, 0)
        , responses(examples * classifiers * classes, 0.0f)
    {
    }

    std::span<const float> response(std::size_t example, std::size_t classifier) const
    {
        return {responses.data() + (example * n_classifiers + classifier) * n_classes, n_classes};
    }

    std::span<float> response(std::size_t example, std::size_t classifier)
    {
        return {responses.data() + (example * n_classifiers + classifier) * n_classes, n_classes};
    }

    std::size_t label(std::size_t example) const { return labels[example]; }

    bool operator==(const ResponseTable&) const = default;
};

inline constexpr double kRowSumTolerance = 1e-4;
inline constexpr std::size_t kTableHeaderBytes = 32;
inline constexpr std::string_view kTableMagic{"LACRT1\0\0", 8};

/// Every row must be a distribution and every label a valid class.
inline void validate_table(const ResponseTable& t)
{
    if (t.labels.size() != t.n_examples || t.responses.size() != t.n_examples * t.n_classifiers * t.n_classes)
        throw FormatError(FormatErrorCode::count_mismatch, 0, "table buffers do not match declared counts");
    const std::size_t labels_offset = kTableHeaderBytes;
    const std::size_t responses_offset = labels_offset + 2 * t.n_examples;
    for (std::size_t e = 0; e < t.n_examples; ++e)
        if (t.labels[e] >= t.n_classes)
            throw FormatError(FormatErrorCode::out_of_range, labels_offset + 2 * e,
                "label " + std::to_string(t.labels[e]) + " of example " + std::to_string(e) + " >= n_classes");
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        for (std::size_t k = 0; k < t.n_classifiers; ++k) {
            const auto row = t.response(e, k);
            const std::size_t row_offset = responses_offset + 4 * ((e * t.n_classifiers + k) * t.n_classes);
            double sum = 0.0;
            for (std::size_t c = 0; c < row.size(); ++c) {
                const float v = row[c];
                if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                    throw FormatError(FormatErrorCode::out_of_range, row_offset + 4 * c,
                        "response outside [0,1] (example " + std::to_string(e) + ", classifier " +
                            std::to_string(k) + ")");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance)
                throw FormatError(FormatErrorCode::row_sum, row_offset,
                    "response row sums to " + std::to_string(sum) + " (example " + std::to_string(e) +
                        ", classifier " + std::to_string(k) + ")");
        }
    }
}

struct Pool {
    std::string name;
    std::size_t n_classes = 0;
    std::vector<ClassifierSpec> specs;
    std::array<std::optional<ResponseTable>, 3> tables;

    std::size_t size() const { return specs.size(); }
    bool has(Split s) const { return tables[static_cast<std::size_t>(s)].has_value(); }

    const ResponseTable& table(Split s) const
    {
        const auto& t = tables[static_cast<std::size_t>(s)];
        if (!t) throw UsageError(std::string("pool '") + name + "' has no " + to_string(s) + " split");
        return *t;
    }

    bool operator==(const Pool&) const = default;
};

inline void validate_pool(const Pool& pool)
{
    for (std::size_t i = 0; i < pool.specs.size(); ++i) {
        const auto& s = pool.specs[i];
        if (s.id != i) throw FormatError(FormatErrorCode::bad_manifest, 0, "classifier ids must be dense 0..N-1");
        if (s.class_subset.empty())
            throw FormatError(FormatErrorCode::bad_manifest, 0, "classifier " + std::to_string(i) + " has empty class subset");
        for (auto c : s.class_subset)
            if (c >= pool.n_classes)
                throw FormatError(FormatErrorCode::bad_manifest, 0,
                    "classifier " + std::to_string(i) + " subset names class " + std::to_string(c));
        if (!(s.cost >= 0.0)) throw FormatError(FormatErrorCode::bad_manifest, 0, "negative classifier cost");
    }
    for (auto split : kAllSplits) {
        if (!pool.has(split)) continue;
        const auto& t = pool.table(split);
        if (t.split != split) throw FormatError(FormatErrorCode::count_mismatch, 28, "table stored under wrong split");
        if (t.n_classifiers != pool.specs.size())
            throw FormatError(FormatErrorCode::count_mismatch, 12,
                std::string(to_string(split)) + " table has " + std::to_string(t.n_classifiers) +
                    " classifiers, manifest lists " + std::to_string(pool.specs.size()));
        if (t.n_classes != pool.n_classes)
            throw FormatError(FormatErrorCode::count_mismatch, 16,
                std::string(to_string(split)) + " table has " + std::to_string(t.n_classes) +
                    " classes, manifest says " + std::to_string(pool.n_classes));
        validate_table(t);
    }
}

// ---------------------------------------------------------------------------
// Accuracy helpers

/// Argmax accuracy where a k-way tie earns 1/k credit when the label is
/// among the tied classes, i.e. the expectation under random tie-breaking.
inline double tie_credit(std::span<const double> scores, std::size_t label)
{
    double best = -1.0;
    for (auto v : scores) best = std::max(best, v);
    std::size_t ties = 0;
    for (auto v : scores)
        if (v == best) ++ties;
    return scores[label] == best ? 1.0 / static_cast<double>(ties) : 0.0;
}

inline double classifier_accuracy(const ResponseTable& t, std::size_t classifier)
{
    if (t.n_examples == 0) return 0.0;
    double credit = 0.0;
    std::vector<double> scores(t.n_classes);
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        const auto row = t.response(e, classifier);
        std::copy(row.begin(), row.end(), scores.begin());
        credit += tie_credit(scores, t.label(e));
    }
    return credit / static_cast<double>(t.n_examples);
}

/// Accuracy of the argmax of the unweighted mean response over all members.
inline double average_responses_accuracy(const Pool& pool, Split split)
{
    const auto& t = pool.table(split);
    if (t.n_examples == 0) return 0.0;
    double credit = 0.0;
    std::vector<double> mean(t.n_classes);
    for (std::size_t e = 0; e < t.n_examples; ++e) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t k = 0; k < t.n_classifiers; ++k) {
            const auto row = t.response(e, k);
            for (std::size_t c = 0; c < t.n_classes; ++c) mean[c] += row[c];
        }
        for (auto& v : mean) v /= static_cast<double>(t.n_classifiers);
        credit += tie_credit(mean, t.label(e));
    }
    return credit / static_cast<double>(t.n_examples);
}

/// Restricts the pool to `ids` (in that order) and renumbers them 0..k-1.
inline Pool subset_view(const Pool& pool, const std::vector<std::size_t>& ids)
{
    if (ids.empty()) throw UsageError("subset view needs at least one classifier");
    std::set<std::size_t> seen;
    for (auto id : ids) {
        if (id >= pool.size()) throw UsageError("classifier id " + std::to_string(id) + " out of range");
        if (!seen.insert(id).second) throw UsageError("duplicate classifier id " + std::to_string(id));
    }
    Pool out;
    out.name = pool.name;
    out.n_classes = pool.n_classes;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto spec = pool.specs[ids[i]];
        spec.id = i;
        out.specs.push_back(std::move(spec));
    }
    for (auto split : kAllSplits) {
        if (!pool.has(split)) continue;
        const auto& src = pool.table(split);
        ResponseTable t(src.n_examples, ids.size(), src.n_classes, split);
        t.labels = src.labels;
        for (std::size_t e = 0; e < src.n_examples; ++e)
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const auto from = src.response(e, ids[i]);
                std::copy(from.begin(), from.end(), t.response(e, i).begin());
            }
        out.tables[static_cast<std::size_t>(split)] = std::move(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic pools

enum class OffSubsetBehavior { uniform_over_subset, confident_random_in_subset, uniform_over_all };

inline const char* to_string(OffSubsetBehavior b)
{
    switch (b) {
    case OffSubsetBehavior::uniform_over_subset: return "uniform_over_subset";
    case OffSubsetBehavior::confident_random_in_subset: return "confident_random_in_subset";
    case OffSubsetBehavior::uniform_over_all: return "uniform_over_all";
    }
    return "?";
}

inline OffSubsetBehavior off_subset_from_string(const std::string& s)
{
    if (s == "uniform_over_subset") return OffSubsetBehavior::uniform_over_subset;
    if (s == "confident_random_in_subset") return OffSubsetBehavior::confident_random_in_subset;
    if (s == "uniform_over_all") return OffSubsetBehavior::uniform_over_all;
    throw ConfigError("unknown off_subset_behavior '" + s + "'");
}

struct SyntheticClassifier {
    std::string name;
    std::vector<std::size_t> class_subset;
    double in_subset_accuracy = 1.0;
    OffSubsetBehavior off_subset = OffSubsetBehavior::uniform_over_all;
    double cost = 1.0;
    // Non-empty: the member reports only which group the label falls into,
    // as uniform mass over that group. class_subset is then the union.
    std::vector<std::vector<std::size_t>> groups;
};

struct SyntheticPoolConfig {
    std::string name = "synthetic";
    std::size_t n_classes = 0;
    std::vector<SyntheticClassifier> classifiers;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    std::vector<double> label_prior; // empty = uniform
    // Exact label counts and balanced "random" choices per (member, label).
    bool stratified = false;
    std::uint64_t seed = 0;
};

namespace detail {

/// Uniform choice among n candidates; in stratified mode draws without
/// replacement from a reshuffled deck per key.
class Chooser {
public:
    Chooser(Rng& rng, bool stratified) : rng_(rng), stratified_(stratified) {}

    std::size_t pick(std::uint64_t key, std::size_t n)
    {
        if (!stratified_) return rng_.below(n);
        auto& deck = decks_[{key, n}];
        if (deck.empty()) {
            deck.resize(n);
            for (std::size_t i = 0; i < n; ++i) deck[i] = i;
            rng_.shuffle(std::span<std::size_t>(deck));
        }
        const std::size_t v = deck.back();
        deck.pop_back();
        return v;
    }

private:
    Rng& rng_;
    bool stratified_;
    std::map<std::pair<std::uint64_t, std::size_t>, std::vector<std::size_t>> decks_;
};

inline std::vector<std::size_t> union_of(const std::vector<std::vector<std::size_t>>& groups)
{
    std::set<std::size_t> all;
    for (const auto& g : groups) all.insert(g.begin(), g.end());
    return {all.begin(), all.end()};
}

} // namespace detail

inline void validate_config(const SyntheticPoolConfig& cfg)
{
    if (cfg.n_classes == 0 || cfg.n_classes > 65535) throw ConfigError("n_classes must be in 1..65535");
    if (cfg.classifiers.empty()) throw ConfigError("synthetic pool needs at least one classifier");
    if (!cfg.label_prior.empty()) {
        if (cfg.label_prior.size() != cfg.n_classes) throw ConfigError("label_prior length must equal n_classes");
        double s = 0.0;
        for (auto p : cfg.label_prior) {
            if (!(p >= 0.0)) throw ConfigError("label_prior entries must be nonnegative");
            s += p;
        }
        if (!(s > 0.0)) throw ConfigError("label_prior sums to zero");
    }
    for (const auto& c : cfg.classifiers) {
        const auto subset = c.groups.empty() ? c.class_subset : detail::union_of(c.groups);
        if (subset.empty()) throw ConfigError("classifier '" + c.name + "' has an empty class subset");
        for (const auto& g : c.groups)
            if (g.empty()) throw ConfigError("classifier '" + c.name + "' has an empty group");
        for (auto k : subset)
            if (k >= cfg.n_classes) throw ConfigError("classifier '" + c.name + "' names class " + std::to_string(k));
        if (!(c.in_subset_accuracy >= 0.0 && c.in_subset_accuracy <= 1.0))
            throw ConfigError("classifier '" + c.name + "' accuracy outside [0,1]");
        if (!(c.cost >= 0.0)) throw ConfigError("classifier '" + c.name + "' has negative cost");
    }
}

inline ResponseTable synthesize_table(const SyntheticPoolConfig& cfg, Split split, std::size_t n, Rng& rng)
{
    const std::size_t C = cfg.n_classes;
    const std::size_t N = cfg.classifiers.size();
    ResponseTable t(n, N, C, split);
    std::vector<double> prior = cfg.label_prior.empty() ? std::vector<double>(C, 1.0) : cfg.label_prior;
    double prior_sum = 0.0;
    for (auto p : prior) prior_sum += p;

    if (cfg.stratified) {
        // Largest-remainder apportionment, then a shuffle.
        std::vector<std::size_t> counts(C);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const double exact = prior[c] / prior_sum * static_cast<double>(n);
            counts[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += counts[c];
            remainders.push_back({-(exact - std::floor(exact)), c});
        }
        std::sort(remainders.begin(), remainders.end());
        for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % C].second];
        std::size_t pos = 0;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < counts[c]; ++i) t.labels[pos++] = static_cast<std::uint16_t>(c);
        rng.shuffle(std::span<std::uint16_t>(t.labels));
    } else {
        for (auto& y : t.labels) y = static_cast<std::uint16_t>(rng.categorical(std::span<const double>(prior)));
    }

    detail::Chooser chooser(rng, cfg.stratified);
    enum Purpose : std::uint64_t { wrong_class = 0, off_subset = 1, wrong_group = 2 };
    auto key = [C](std::size_t k, std::size_t y, Purpose p) -> std::uint64_t {
        return (static_cast<std::uint64_t>(k) * (C + 1) + y) * 4 + p;
    };

    for (std::size_t e = 0; e < n; ++e) {
        const std::size_t y = t.labels[e];
        for (std::size_t k = 0; k < N; ++k) {
            const auto& spec = cfg.classifiers[k];
            auto row = t.response(e, k);
            const auto subset = spec.groups.empty() ? spec.class_subset : detail::union_of(spec.groups);
            auto fill_uniform = [&](const std::vector<std::size_t>& classes) {
                for (auto c : classes) row[c] = 1.0f / static_cast<float>(classes.size());
            };

            std::size_t group = spec.groups.size();
            for (std::size_t g = 0; g < spec.groups.size(); ++g)
                if (std::find(spec.groups[g].begin(), spec.groups[g].end(), y) != spec.groups[g].end()) group = g;
            const bool in_subset = std::find(subset.begin(), subset.end(), y) != subset.end();

            if (!spec.groups.empty() && group < spec.groups.size()) {
                std::size_t shown = group;
                if (!rng.bernoulli(spec.in_subset_accuracy) && spec.groups.size() > 1) {
                    shown = chooser.pick(key(k, y, wrong_group), spec.groups.size() - 1);
                    if (shown >= group) ++shown;
                }
                fill_uniform(spec.groups[shown]);
            } else if (in_subset) {
                std::size_t shown = y;
                if (!rng.bernoulli(spec.in_subset_accuracy) && subset.size() > 1) {
                    std::vector<std::size_t> others;
                    for (auto c : subset)
                        if (c != y) others.push_back(c);
                    shown = others[chooser.pick(key(k, y, wrong_class), others.size())];
                }
                row[shown] = 1.0f;
            } else {
                switch (spec.off_subset) {
                case OffSubsetBehavior::uniform_over_subset: fill_uniform(subset); break;
                case OffSubsetBehavior::confident_random_in_subset:
                    row[subset[chooser.pick(key(k, y, off_subset), subset.size())]] = 1.0f;
                    break;
                case OffSubsetBehavior::uniform_over_all:
                    for (auto& v : row) v = 1.0f / static_cast<float>(C);
                    break;
                }
            }
        }
    }
    return t;
}

inline Pool generate_synthetic(const SyntheticPoolConfig& cfg)
{
    validate_config(cfg);
    Pool pool;
    pool.name = cfg.name;
    pool.n_classes = cfg.n_classes;
    for (std::size_t k = 0; k < cfg.classifiers.size(); ++k) {
        const auto& c = cfg.classifiers[k];
        ClassifierSpec s;
        s.id = k;
        s.origin_id = k;
        s.name = c.name.empty() ? "c" + std::to_string(k) : c.name;
        s.cost = c.cost;
        s.class_subset = c.groups.empty() ? c.class_subset : detail::union_of(c.groups);
        std::sort(s.class_subset.begin(), s.class_subset.end());
        s.source = ClassifierSource::synthetic;
        s.arch = "synthetic";
        pool.specs.push_back(std::move(s));
    }
    const std::array<std::size_t, 3> sizes{cfg.n_train, cfg.n_val, cfg.n_test};
    for (auto split : kAllSplits) {
        const auto i = static_cast<std::size_t>(split);
        if (sizes[i] == 0 && split != Split::train) continue;
        Rng rng(mix_seed({cfg.seed, 0x5EED00ull + i}));
        pool.tables[i] = synthesize_table(cfg, split, sizes[i], rng);
        validate_table(*pool.tables[i]);
    }
    if (pool.has(Split::test))
        for (auto& s : pool.specs) s.test_accuracy = classifier_accuracy(pool.table(Split::test), s.id);
    return pool;
}

/// Three members over four classes: a router R that only reveals whether the
/// label is in {0,1} or {2,3}, and specialists S01 / S23 that are exact on
/// their pair and answer confidently at random elsewhere. Two well-chosen
/// calls always suffice; no fixed pair does better than 0.75.
inline SyntheticPoolConfig router_pool_config(std::size_t n_train = 4000, std::size_t n_val = 2000,
    std::size_t n_test = 2000, std::uint64_t seed = 7)
{
    SyntheticPoolConfig cfg;
    cfg.name = "router";
    cfg.n_classes = 4;
    cfg.n_train = n_train;
    cfg.n_val = n_val;
    cfg.n_test = n_test;
    cfg.stratified = true;
    cfg.seed = seed;
    SyntheticClassifier r{"R", {}, 1.0, OffSubsetBehavior::uniform_over_all, 1.0, {{0, 1}, {2, 3}}};
    SyntheticClassifier s01{"S01", {0, 1}, 1.0, OffSubsetBehavior::confident_random_in_subset, 1.0, {}};
    SyntheticClassifier s23{"S23", {2, 3}, 1.0, OffSubsetBehavior::confident_random_in_subset, 1.0, {}};
    cfg.classifiers = {r, s01, s23};
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const SyntheticPoolConfig& cfg)
{
    nlohmann::json j;
    j["name"] = cfg.name;
    j["n_classes"] = cfg.n_classes;
    j["n_train"] = cfg.n_train;
    j["n_val"] = cfg.n_val;
    j["n_test"] = cfg.n_test;
    j["label_prior"] = cfg.label_prior;
    j["stratified"] = cfg.stratified;
    j["seed"] = cfg.seed;
    j["classifiers"] = nlohmann::json::array();
    for (const auto& c : cfg.classifiers) {
        nlohmann::json cj;
        cj["name"] = c.name;
        cj["class_subset"] = c.class_subset;
        cj["in_subset_accuracy"] = c.in_subset_accuracy;
        cj["off_subset_behavior"] = to_string(c.off_subset);
        cj["cost"] = c.cost;
        if (!c.groups.empty()) cj["groups"] = c.groups;
        j["classifiers"].push_back(cj);
    }
    return j;
}

inline SyntheticPoolConfig synthetic_config_from_json(const nlohmann::json& j)
{
    try {
        SyntheticPoolConfig cfg;
        cfg.name = j.value("name", std::string("synthetic"));
        cfg.n_classes = j.at("n_classes").get<std::size_t>();
        cfg.n_train = j.value("n_train", std::size_t{0});
        cfg.n_val = j.value("n_val", std::size_t{0});
        cfg.n_test = j.value("n_test", std::size_t{0});
        cfg.label_prior = j.value("label_prior", std::vector<double>{});
        cfg.stratified = j.value("stratified", false);
        cfg.seed = j.value("seed", std::uint64_t{0});
        for (const auto& cj : j.at("classifiers")) {
            SyntheticClassifier c;
            c.name = cj.value("name", std::string{});
            c.class_subset = cj.value("class_subset", std::vector<std::size_t>{});
            c.in_subset_accuracy = cj.value("in_subset_accuracy", 1.0);
            c.off_subset = off_subset_from_string(cj.value("off_subset_behavior", std::string("uniform_over_all")));
            c.cost = cj.value("cost", 1.0);
            c.groups = cj.value("groups", std::vector<std::vector<std::size_t>>{});
            cfg.classifiers.push_back(std::move(c));
        }
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed synthetic pool config: ") + e.what());
    }
}

inline nlohmann::json manifest_json(const Pool& pool)
{
    nlohmann::json j;
    j["name"] = pool.name;
    j["n_classes"] = pool.n_classes;
    j["classifiers"] = nlohmann::json::array();
    for (const auto& s : pool.specs) {
        nlohmann::json cj;
        cj["id"] = s.id;
        cj["name"] = s.name;
        cj["cost"] = s.cost;
        cj["class_subset"] = s.class_subset;
        cj["arch"] = s.arch;
        cj["test_accuracy"] = s.test_accuracy ? nlohmann::json(*s.test_accuracy) : nlohmann::json();
        cj["source"] = s.source == ClassifierSource::synthetic ? "synthetic" : "imported";
        cj["origin_id"] = s.origin_id;
        j["classifiers"].push_back(cj);
    }
    return j;
}

/// Parses a manifest; members default to `imported` provenance.
inline Pool pool_from_manifest(const nlohmann::json& j)
{
    try {
        Pool pool;
        pool.name = j.at("name").get<std::string>();
        pool.n_classes = j.at("n_classes").get<std::size_t>();
        for (const auto& cj : j.at("classifiers")) {
            ClassifierSpec s;
            s.id = cj.at("id").get<std::size_t>();
            s.name = cj.at("name").get<std::string>();
            s.cost = cj.value("cost", 1.0);
            s.class_subset = cj.at("class_subset").get<std::vector<std::size_t>>();
            s.arch = cj.value("arch", std::string{});
            if (cj.contains("test_accuracy") && !cj["test_accuracy"].is_null())
                s.test_accuracy = cj["test_accuracy"].get<double>();
            s.source = cj.value("source", std::string("imported")) == "synthetic" ? ClassifierSource::synthetic
                                                                                 : ClassifierSource::imported;
            s.origin_id = cj.value("origin_id", s.id);
            pool.specs.push_back(std::move(s));
        }
        return pool;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorCode::bad_manifest, 0, e.what());
    }
}

// ---------------------------------------------------------------------------
// Binary response tables
//
//   0..7   "LACRT1\0\0"
//   8      u32 n_examples
//   12     u32 n_classifiers
//   16     u32 n_classes
//   20     u32 split (0 train, 1 val, 2 test)
//   24     8 reserved zero bytes
//   32     u16 labels[n_examples]
//          f32 responses[n_examples][n_classifiers][n_classes]

inline std::vector<std::uint8_t> encode_table(const ResponseTable& t)
{
    std::vector<std::uint8_t> out;
    out.reserve(kTableHeaderBytes + 2 * t.n_examples + 4 * t.responses.size());
    io::put_bytes(out, kTableMagic);
    io::put_u32(out, static_cast<std::uint32_t>(t.n_examples));
    io::put_u32(out, static_cast<std::uint32_t>(t.n_classifiers));
    io::put_u32(out, static_cast<std::uint32_t>(t.n_classes));
    io::put_u32(out, static_cast<std::uint32_t>(t.split));
    for (int i = 0; i < 8; ++i) io::put_u8(out, 0);
    for (auto y : t.labels) io::put_u16(out, y);
    for (auto v : t.responses) io::put_f32(out, v);
    return out;
}

inline ResponseTable decode_table(const std::vector<std::uint8_t>& bytes)
{
    io::Reader in(bytes);
    if (bytes.size() < kTableMagic.size() || in.bytes(kTableMagic.size(), "magic") != kTableMagic)
        throw FormatError(FormatErrorCode::bad_magic, 0, "expected LACRT1 magic");
    ResponseTable t;
    t.n_examples = in.u32("n_examples");
    t.n_classifiers = in.u32("n_classifiers");
    t.n_classes = in.u32("n_classes");
    const std::size_t split_offset = in.offset();
    const std::uint32_t split = in.u32("split tag");
    if (split > 2) throw FormatError(FormatErrorCode::out_of_range, split_offset, "split tag must be 0, 1 or 2");
    t.split = static_cast<Split>(split);
    in.bytes(8, "reserved header bytes");
    const std::size_t body = 2 * t.n_examples + 4 * t.n_examples * t.n_classifiers * t.n_classes;
    if (in.remaining() < body)
        throw FormatError(FormatErrorCode::truncated, bytes.size(),
            "file holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                std::to_string(kTableHeaderBytes + body));
    if (in.remaining() > body)
        throw FormatError(FormatErrorCode::truncated, kTableHeaderBytes + body, "trailing bytes after responses");
    t.labels.resize(t.n_examples);
    for (auto& y : t.labels) y = in.u16("labels");
    t.responses.resize(t.n_examples * t.n_classifiers * t.n_classes);
    for (auto& v : t.responses) v = in.f32("responses");
    validate_table(t);
    return t;
}

inline void save_table(const ResponseTable& t, const std::string& path) { io::write_file(path, encode_table(t)); }

inline ResponseTable load_table(const std::string& path) { return decode_table(io::read_file(path)); }

inline std::string table_filename(Split s) { return std::string(to_string(s)) + ".lacrt"; }

inline void save_manifest(const Pool& pool, const std::string& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::io, 0, "cannot write " + path);
    out << manifest_json(pool).dump(2) << '\n';
    if (!out) throw FormatError(FormatErrorCode::io, 0, "short write to " + path);
}

/// Writes manifest.json plus one <split>.lacrt per present split.
inline void save_pool(const Pool& pool, const std::string& dir)
{
    validate_pool(pool);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw FormatError(FormatErrorCode::io, 0, "cannot create " + dir + ": " + ec.message());
    save_manifest(pool, (std::filesystem::path(dir) / "manifest.json").string());
    for (auto split : kAllSplits)
        if (pool.has(split)) save_table(pool.table(split), (std::filesystem::path(dir) / table_filename(split)).string());
}

inline Pool load_pool(const std::string& manifest_path, const std::vector<std::string>& table_paths)
{
    std::ifstream in(manifest_path);
    if (!in) throw FormatError(FormatErrorCode::io, 0, "cannot open manifest " + manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorCode::bad_manifest, 0, manifest_path + ": " + e.what());
    }
    Pool pool = pool_from_manifest(j);
    for (const auto& path : table_paths) {
        auto t = load_table(path);
        auto& slot = pool.tables[static_cast<std::size_t>(t.split)];
        if (slot) throw FormatError(FormatErrorCode::count_mismatch, 20, "two tables for split " + std::string(to_string(t.split)));
        slot = std::move(t);
    }
    validate_pool(pool);
    return pool;
}

/// Loads a directory written by save_pool.
inline Pool load_pool_dir(const std::string& dir)
{
    namespace fs = std::filesystem;
    const fs::path root(dir);
    std::vector<std::string> tables;
    for (auto split : kAllSplits) {
        const auto p = root / table_filename(split);
        if (fs::exists(p)) tables.push_back(p.string());
    }
    return load_pool((root / "manifest.json").string(), tables);
}

} // namespace lac
