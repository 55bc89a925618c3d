#pragma once

// Multi-class gradient boosting with codeword targets (GD-MC) and bagging,
// over small dense regressors on feature vectors.

#include "lac/error.hpp"
#include "lac/format.hpp"
#include "lac/numkit.hpp"
#include "lac/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace lac {

/// Codeword z is +1 at z and -1/(M-1) elsewhere.
class Codebook {
public:
    explicit Codebook(std::size_t n_classes) : m_(n_classes)
    {
        if (n_classes < 2) throw ConfigError("a codebook needs at least two classes");
    }

    std::size_t size() const { return m_; }

    double entry(std::size_t z, std::size_t i) const { return z == i ? 1.0 : -1.0 / static_cast<double>(m_ - 1); }

    std::vector<double> codeword(std::size_t z) const
    {
        std::vector<double> y(m_);
        for (std::size_t i = 0; i < m_; ++i) y[i] = entry(z, i);
        return y;
    }

    template <class T>
    double project(std::size_t z, std::span<const T> f) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < m_; ++i) s += entry(z, i) * static_cast<double>(f[i]);
        return s;
    }

private:
    std::size_t m_;
};

using Outputs = BasicMatrix<double>; // n x M committee outputs

struct FeatureDataset {
    Matrix features; // n x d
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
};

struct BlobConfig {
    std::size_t n_classes = 3;
    std::size_t dim = 2;
    std::size_t n_train = 600;
    std::size_t n_val = 600;
    double radius = 2.0;      // class centres sit on a circle in the first two coordinates
    double spread = 1.0;      // per-coordinate standard deviation
    double label_noise = 0.0; // probability of replacing the label by a uniform draw
    std::uint64_t seed = 0;
};

inline FeatureDataset make_blobs(const BlobConfig& cfg, std::size_t n, std::uint64_t stream)
{
    if (cfg.n_classes < 2 || cfg.dim < 2) throw ConfigError("blobs need >= 2 classes and >= 2 dimensions");
    Rng rng(mix_seed({cfg.seed, 0xB10Bull, stream}));
    FeatureDataset ds;
    ds.n_classes = cfg.n_classes;
    ds.features = Matrix(n, cfg.dim);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t z = i % cfg.n_classes;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(z) / static_cast<double>(cfg.n_classes);
        for (std::size_t d = 0; d < cfg.dim; ++d) {
            double centre = 0.0;
            if (d == 0) centre = cfg.radius * std::cos(angle);
            if (d == 1) centre = cfg.radius * std::sin(angle);
            ds.features(i, d) = static_cast<float>(centre + cfg.spread * rng.normal());
        }
        ds.labels[i] = rng.bernoulli(cfg.label_noise) ? rng.below(cfg.n_classes) : z;
    }
    return ds;
}

/// Train and validation splits drawn from independent streams.
inline std::pair<FeatureDataset, FeatureDataset> make_blob_splits(const BlobConfig& cfg)
{
    return {make_blobs(cfg, cfg.n_train, 0), make_blobs(cfg, cfg.n_val, 1)};
}

// ---------------------------------------------------------------------------
// Loss and its functional gradient

/// sum_i sum_{j != z_i} exp(0.5 * (<y_j, f_i> - <y_z, f_i>))
inline double gdmc_loss(const Outputs& f, std::span<const std::size_t> labels, const Codebook& code)
{
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = f.row(i);
        const double own = code.project(labels[i], row);
        for (std::size_t j = 0; j < code.size(); ++j)
            if (j != labels[i]) total += std::exp(0.5 * (code.project(j, row) - own));
    }
    return total;
}

/// -dL/df(x_i) per sample.
inline Outputs gradient_targets(const Outputs& f, std::span<const std::size_t> labels, const Codebook& code)
{
    const std::size_t M = code.size();
    Outputs g(labels.size(), M, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = f.row(i);
        const std::size_t z = labels[i];
        const double own = code.project(z, row);
        for (std::size_t j = 0; j < M; ++j) {
            if (j == z) continue;
            const double w = 0.5 * std::exp(0.5 * (code.project(j, row) - own));
            for (std::size_t c = 0; c < M; ++c) g(i, c) -= w * (code.entry(j, c) - code.entry(z, c));
        }
    }
    return g;
}

/// Class with the largest codeword projection.
template <class T>
std::size_t decode(std::span<const T> f, const Codebook& code)
{
    std::size_t best = 0;
    double best_v = code.project(0, f);
    for (std::size_t z = 1; z < code.size(); ++z) {
        const double v = code.project(z, f);
        if (v > best_v) {
            best = z;
            best_v = v;
        }
    }
    return best;
}

inline double codeword_accuracy(const Outputs& f, std::span<const std::size_t> labels, const Codebook& code)
{
    if (labels.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += decode(f.row(i), code) == labels[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Base learners

inline std::vector<LayerSpec> regressor_layers(std::size_t in_dim, const std::vector<std::size_t>& hidden,
    std::size_t out_dim)
{
    std::vector<LayerSpec> specs;
    std::size_t prev = in_dim;
    for (auto h : hidden) {
        specs.push_back({prev, h, Activation::relu, 0.0});
        prev = h;
    }
    specs.push_back({prev, out_dim, Activation::identity, 0.0});
    return specs;
}

inline Outputs net_outputs(const DenseNet& net, const Matrix& features)
{
    Outputs out(features.rows, net.output_dim());
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto y = predict(net, features.row(i));
        for (std::size_t c = 0; c < y.size(); ++c) out(i, c) = y[c];
    }
    return out;
}


/// MSE regression of `targets` from features. `init`, when given, seeds the
/// parameters (weight transfer); otherwise a fresh Glorot net is drawn.
inline DenseNet fit_base_learner(const Matrix& features, const Outputs& targets, const std::vector<std::size_t>& hidden,
    const FitConfig& cfg, const DenseNet* init = nullptr)
{
    if (targets.rows != features.rows) throw ConfigError("targets and features are not aligned");
    DenseNet net;
    if (init != nullptr) {
        net = *init;
    } else {
        Rng rng(mix_seed({cfg.seed, 0x1417ull}));
        net = DenseNet(regressor_layers(features.cols, hidden, targets.cols), rng);
    }
    fit_minibatch(net, features, cfg, [&](std::size_t i, const std::vector<float>& out) {
        std::vector<float> d(out.size());
        for (std::size_t c = 0; c < out.size(); ++c) d[c] = 2.0f * (out[c] - static_cast<float>(targets(i, c)));
        return d;
    });
    if (!net.all_finite()) throw NumericError("base learner diverged");
    return net;
}

/// Cross-entropy classifier on one-hot labels, the reference single learner.
inline DenseNet fit_softmax_classifier(const FeatureDataset& ds, const std::vector<std::size_t>& hidden,
    const FitConfig& cfg)
{
    Rng rng(mix_seed({cfg.seed, 0x1417ull}));
    DenseNet net(regressor_layers(ds.dim(), hidden, ds.n_classes), rng);
    fit_minibatch(net, ds.features, cfg, [&](std::size_t i, const std::vector<float>& out) {
        const auto p = softmax(out);
        std::vector<float> d(out.size());
        for (std::size_t c = 0; c < out.size(); ++c)
            d[c] = static_cast<float>(p[c] - (c == ds.labels[i] ? 1.0 : 0.0));
        return d;
    });
    if (!net.all_finite()) throw NumericError("classifier diverged");
    return net;
}

/// Targets are the codewords of the labels.
inline Outputs codeword_targets(std::span<const std::size_t> labels, const Codebook& code)
{
    Outputs t(labels.size(), code.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t c = 0; c < code.size(); ++c) t(i, c) = code.entry(labels[i], c);
    return t;
}

inline double argmax_accuracy(const DenseNet& net, const FeatureDataset& ds)
{
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) correct += argmax(predict(net, ds.features.row(i))) == ds.labels[i];
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Step size

struct BetaSearch {
    double beta = 0.0;
    bool descent = true; // false when dL/dbeta >= 0 at beta = 0
};

/// dL/dbeta of gdmc_loss(f + beta * phi).
inline double gdmc_directional_derivative(const Outputs& f, const Outputs& phi, std::span<const std::size_t> labels,
    const Codebook& code, double beta)
{
    double d = 0.0;
    std::vector<double> g(code.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t c = 0; c < code.size(); ++c) g[c] = f(i, c) + beta * phi(i, c);
        const std::span<const double> row(g);
        const double own = code.project(labels[i], row);
        const double own_phi = code.project(labels[i], phi.row(i));
        for (std::size_t j = 0; j < code.size(); ++j) {
            if (j == labels[i]) continue;
            d += 0.5 * std::exp(0.5 * (code.project(j, row) - own)) * (code.project(j, phi.row(i)) - own_phi);
        }
    }
    return d;
}

/// Bisection on the sign of dL/dbeta over [0, beta_max]. The loss is convex
/// in beta, so the bracket holds the line minimum unless it lies past beta_max.
inline BetaSearch binary_search_beta(const Outputs& f, const Outputs& phi, std::span<const std::size_t> labels,
    const Codebook& code, double beta_max = 8.0, std::size_t iters = 20)
{
    if (!(beta_max > 0.0)) throw ConfigError("beta_max must be positive");
    if (gdmc_directional_derivative(f, phi, labels, code, 0.0) >= 0.0) return {0.0, false};
    if (gdmc_directional_derivative(f, phi, labels, code, beta_max) <= 0.0) return {beta_max, true};
    double lo = 0.0;
    double hi = beta_max;
    for (std::size_t k = 0; k < iters; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (gdmc_directional_derivative(f, phi, labels, code, mid) < 0.0) lo = mid;
        else hi = mid;
    }
    return {0.5 * (lo + hi), true};
}

// ---------------------------------------------------------------------------
// Committees

struct Member {
    DenseNet net;
    double weight = 1.0; // beta_m for boosting, 1 for bagging
};

/// f(x) = scale * sum_m weight_m * phi_m(x)
struct Committee {
    std::size_t n_classes = 0;
    double scale = 1.0;
    std::vector<Member> members;

    Outputs outputs(const Matrix& features) const
    {
        Outputs f(features.rows, n_classes, 0.0);
        for (const auto& m : members) {
            const auto phi = net_outputs(m.net, features);
            for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] += scale * m.weight * phi.data[k];
        }
        return f;
    }
};

inline void save_committee(const Committee& c, const std::string& dir, const std::string& kind)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError(FormatErrorCode::io, 0, "cannot create " + dir);
    nlohmann::json j{{"kind", kind}, {"n_classes", c.n_classes}, {"rounds", c.members.size()}, {"scale", c.scale}};
    j["weights"] = nlohmann::json::array();
    for (std::size_t m = 0; m < c.members.size(); ++m) {
        j["weights"].push_back(c.members[m].weight);
        char name[48];
        std::snprintf(name, sizeof name, "member_%03zu.lacnn", m);
        save_checkpoint(c.members[m].net, (fs::path(dir) / name).string());
    }
    std::ofstream out(fs::path(dir) / "committee.json", std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::io, 0, "cannot write committee.json");
    out << j.dump(2) << '\n';
}

inline Committee load_committee(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "committee.json");
    if (!in) throw FormatError(FormatErrorCode::io, 0, "no committee.json in " + dir);
    Committee c;
    try {
        const auto j = nlohmann::json::parse(in);
        c.n_classes = j.at("n_classes").get<std::size_t>();
        c.scale = j.at("scale").get<double>();
        const auto weights = j.at("weights").get<std::vector<double>>();
        for (std::size_t m = 0; m < weights.size(); ++m) {
            char name[48];
            std::snprintf(name, sizeof name, "member_%03zu.lacnn", m);
            c.members.push_back({load_checkpoint((fs::path(dir) / name).string()), weights[m]});
            if (c.members.back().net.output_dim() != c.n_classes)
                throw FormatError(FormatErrorCode::count_mismatch, 0, "member output size disagrees with committee");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorCode::bad_manifest, 0, e.what());
    }
    return c;
}

struct RoundRecord {
    std::size_t round = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double beta = 0.0;
    bool accepted = true;
    double member_val_acc = 0.0; // the round's learner on its own
};

inline void write_curve_csv(std::ostream& os, const std::vector<RoundRecord>& curve)
{
    os << "round,train_loss,val_loss,train_acc,val_acc\n";
    for (const auto& r : curve)
        os << r.round << ',' << format_real(r.train_loss) << ',' << format_real(r.val_loss) << ','
           << format_real(r.train_acc) << ',' << format_real(r.val_acc) << '\n';
}

struct BoostConfig {
    std::size_t rounds = 10;
    double shrinkage = 0.5;
    std::vector<std::size_t> hidden{32};
    FitConfig fit{};
    bool weight_transfer = true;
    double beta_max = 8.0;
    std::size_t search_iters = 20;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rounds == 0) throw ConfigError("rounds must be positive");
        if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0, 1]");
        if (fit.epochs == 0 || fit.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
    }
};

struct EnsembleResult {
    Committee committee;
    std::vector<RoundRecord> curve;
};

inline EnsembleResult boost(const FeatureDataset& train, const FeatureDataset& val, const BoostConfig& cfg)
{
    cfg.validate();
    const Codebook code(train.n_classes);
    EnsembleResult res;
    res.committee.n_classes = train.n_classes;
    res.committee.scale = 1.0;
    Outputs f_train(train.size(), code.size(), 0.0);
    Outputs f_val(val.size(), code.size(), 0.0);
    double loss = gdmc_loss(f_train, train.labels, code);
    const DenseNet* previous = nullptr;
    DenseNet last;
    for (std::size_t m = 0; m < cfg.rounds; ++m) {
        const auto targets = gradient_targets(f_train, train.labels, code);
        FitConfig fit = cfg.fit;
        fit.seed = mix_seed({cfg.seed, 0xB005ull, m});
        auto phi_net = fit_base_learner(train.features, targets, cfg.hidden, fit,
            cfg.weight_transfer ? previous : nullptr);
        const auto phi_train = net_outputs(phi_net, train.features);
        const auto phi_val = net_outputs(phi_net, val.features);
        const auto search = binary_search_beta(f_train, phi_train, train.labels, code, cfg.beta_max, cfg.search_iters);

        RoundRecord rec;
        rec.round = m + 1;
        rec.beta = search.beta;
        rec.member_val_acc = codeword_accuracy(phi_val, val.labels, code);
        const double step = cfg.shrinkage * search.beta;
        Outputs next_train = f_train;
        for (std::size_t k = 0; k < next_train.data.size(); ++k) next_train.data[k] += step * phi_train.data[k];
        const double next_loss = gdmc_loss(next_train, train.labels, code);
        rec.accepted = search.descent && search.beta > 0.0 && next_loss <= loss;
        if (rec.accepted) {
            f_train = std::move(next_train);
            for (std::size_t k = 0; k < f_val.data.size(); ++k) f_val.data[k] += step * phi_val.data[k];
            loss = next_loss;
            res.committee.members.push_back({phi_net, step});
        }
        last = std::move(phi_net);
        previous = &last;
        rec.train_loss = loss;
        rec.val_loss = gdmc_loss(f_val, val.labels, code);
        rec.train_acc = codeword_accuracy(f_train, train.labels, code);
        rec.val_acc = codeword_accuracy(f_val, val.labels, code);
        res.curve.push_back(rec);
    }
    return res;
}

struct BagConfig {
    std::size_t rounds = 10;
    std::size_t bag_size = 0; // 0 = training-set size
    std::vector<std::size_t> hidden{32};
    FitConfig fit{};
    bool weight_transfer = false;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rounds == 0) throw ConfigError("rounds must be positive");
        if (fit.epochs == 0 || fit.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
    }
};

/// Indices drawn with replacement for bagging round `round`.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::size_t bag_size, std::uint64_t seed,
    std::size_t round)
{
    Rng rng(mix_seed({seed, 0xBA66ull, round}));
    std::vector<std::size_t> idx(bag_size == 0 ? n : bag_size);
    for (auto& i : idx) i = rng.below(n);
    return idx;
}

/// Averaged ensemble of codeword regressors on bootstrap resamples.
inline EnsembleResult bag(const FeatureDataset& train, const FeatureDataset& val, const BagConfig& cfg)
{
    cfg.validate();
    const Codebook code(train.n_classes);
    EnsembleResult res;
    res.committee.n_classes = train.n_classes;
    Outputs sum_train(train.size(), code.size(), 0.0);
    Outputs sum_val(val.size(), code.size(), 0.0);
    res.committee.members.reserve(cfg.rounds);
    const DenseNet* previous = nullptr;
    for (std::size_t m = 0; m < cfg.rounds; ++m) {
        const auto idx = bootstrap_indices(train.size(), cfg.bag_size, cfg.seed, m);
        Matrix x(idx.size(), train.dim());
        std::vector<std::size_t> y(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy(train.features.row(idx[r]).begin(), train.features.row(idx[r]).end(), x.row(r).begin());
            y[r] = train.labels[idx[r]];
        }
        FitConfig fit = cfg.fit;
        fit.seed = mix_seed({cfg.seed, 0xBA6Full, m});
        auto net = fit_base_learner(x, codeword_targets(y, code), cfg.hidden, fit,
            cfg.weight_transfer ? previous : nullptr);
        const auto phi_train = net_outputs(net, train.features);
        const auto phi_val = net_outputs(net, val.features);
        for (std::size_t k = 0; k < sum_train.data.size(); ++k) sum_train.data[k] += phi_train.data[k];
        for (std::size_t k = 0; k < sum_val.data.size(); ++k) sum_val.data[k] += phi_val.data[k];
        res.committee.members.push_back({std::move(net), 1.0});
        previous = &res.committee.members.back().net;

        const double inv = 1.0 / static_cast<double>(m + 1);
        Outputs avg_train = sum_train;
        Outputs avg_val = sum_val;
        for (auto& v : avg_train.data) v *= inv;
        for (auto& v : avg_val.data) v *= inv;
        RoundRecord rec;
        rec.round = m + 1;
        rec.beta = 1.0;
        rec.member_val_acc = codeword_accuracy(phi_val, val.labels, code);
        rec.train_loss = gdmc_loss(avg_train, train.labels, code);
        rec.val_loss = gdmc_loss(avg_val, val.labels, code);
        rec.train_acc = codeword_accuracy(avg_train, train.labels, code);
        rec.val_acc = codeword_accuracy(avg_val, val.labels, code);
        res.curve.push_back(rec);
    }
    res.committee.scale = 1.0 / static_cast<double>(cfg.rounds);
    return res;
}

} // namespace lac
