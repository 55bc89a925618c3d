#pragma once

// Short-memory agent: the hidden state is a table of raw responses plus a
// table of call masks; three dense heads read the flattened state.

#include "lac/error.hpp"
#include "lac/numkit.hpp"
#include "lac/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace lac {

/// N x C response table followed by N x C mask table, flattened row-major.
class HiddenState {
public:
    HiddenState() = default;
    HiddenState(std::size_t n_classifiers, std::size_t n_classes)
        : n_(n_classifiers), c_(n_classes), values_(2 * n_classifiers * n_classes, 0.0f)
    {
    }

    std::size_t n_classifiers() const { return n_; }
    std::size_t n_classes() const { return c_; }

    bool called(std::size_t classifier) const { return values_[n_ * c_ + classifier * c_] != 0.0f; }

    std::size_t n_called() const
    {
        std::size_t n = 0;
        for (std::size_t k = 0; k < n_; ++k) n += called(k) ? 1 : 0;
        return n;
    }

    std::span<const float> response(std::size_t classifier) const { return {values_.data() + classifier * c_, c_}; }
    std::span<const float> mask(std::size_t classifier) const { return {values_.data() + (n_ + classifier) * c_, c_}; }

    /// The network input, 2*N*C long.
    std::span<const float> vector() const { return values_; }

    void encode(std::size_t classifier, std::span<const float> response)
    {
        if (classifier >= n_) throw UsageError("classifier id " + std::to_string(classifier) + " out of range");
        if (response.size() != c_) throw UsageError("response has wrong length");
        if (called(classifier)) throw UsageError("classifier " + std::to_string(classifier) + " already encoded");
        std::copy(response.begin(), response.end(), values_.begin() + static_cast<std::ptrdiff_t>(classifier * c_));
        std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>((n_ + classifier) * c_), c_, 1.0f);
    }

    bool operator==(const HiddenState&) const = default;

private:
    std::size_t n_ = 0;
    std::size_t c_ = 0;
    std::vector<float> values_;
};

inline HiddenState encode_response(HiddenState state, std::size_t classifier, std::span<const float> response)
{
    state.encode(classifier, response);
    return state;
}

struct AgentConfig {
    std::size_t n_classifiers = 0;
    std::size_t n_classes = 0;
    std::size_t action_hidden = 64;
    std::size_t decision_hidden = 128;
    int baseline_depth = 1;
    std::size_t baseline_hidden = 64;
    double baseline_dropout = 0.2;
    bool hard_mask = true;
    std::uint64_t seed = 0;

    std::size_t state_dim() const { return 2 * n_classifiers * n_classes; }

    void validate() const
    {
        if (n_classifiers == 0 || n_classes == 0) throw ConfigError("agent needs classifiers and classes");
        if (action_hidden == 0 || decision_hidden == 0 || baseline_hidden == 0)
            throw ConfigError("hidden sizes must be positive");
        if (baseline_depth != 1 && baseline_depth != 2) throw ConfigError("baseline depth must be 1 or 2");
    }
};

// Layer layouts of the three heads.

inline std::vector<LayerSpec> action_generator_layers(const AgentConfig& c)
{
    return {{c.state_dim(), c.action_hidden, Activation::relu, 0.0},
        {c.action_hidden, c.n_classifiers, Activation::identity, 0.0}};
}

inline std::vector<LayerSpec> decision_maker_layers(const AgentConfig& c)
{
    return {{c.state_dim(), c.decision_hidden, Activation::relu, 0.0},
        {c.decision_hidden, c.decision_hidden, Activation::relu, 0.0},
        {c.decision_hidden, c.n_classes, Activation::identity, 0.0}};
}

inline std::vector<LayerSpec> baseline_layers(const AgentConfig& c)
{
    if (c.baseline_depth == 1) return {{c.state_dim(), 1, Activation::identity, 0.0}};
    return {{c.state_dim(), c.baseline_hidden, Activation::relu, c.baseline_dropout},
        {c.baseline_hidden, 1, Activation::identity, 0.0}};
}

struct LacNets {
    AgentConfig config;
    DenseNet action_generator;
    DenseNet decision_maker;
    DenseNet baseline;

    static LacNets create(const AgentConfig& config)
    {
        config.validate();
        Rng rng(mix_seed({config.seed, 0xA6E17ull}));
        LacNets nets;
        nets.config = config;
        nets.action_generator = DenseNet(action_generator_layers(config), rng);
        nets.decision_maker = DenseNet(decision_maker_layers(config), rng);
        nets.baseline = DenseNet(baseline_layers(config), rng);
        return nets;
    }

    bool operator==(const LacNets& o) const
    {
        return action_generator == o.action_generator && decision_maker == o.decision_maker && baseline == o.baseline;
    }
};

/// Softmax restricted to `allowed` entries; the rest get exactly zero.
template <class T>
std::vector<double> masked_softmax(std::span<const T> logits, std::span<const std::uint8_t> allowed)
{
    std::vector<double> p(logits.size(), 0.0);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!allowed[i]) continue;
        if (!std::isfinite(static_cast<double>(logits[i]))) throw NumericError("non-finite action logit");
        m = std::max(m, static_cast<double>(logits[i]));
    }
    if (m == -std::numeric_limits<double>::infinity()) throw UsageError("no classifier left to call");
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (allowed[i]) sum += (p[i] = std::exp(static_cast<double>(logits[i]) - m));
    for (auto& v : p) v /= sum;
    return p;
}

inline std::vector<std::uint8_t> allowed_actions(const HiddenState& state, bool hard_mask)
{
    std::vector<std::uint8_t> allowed(state.n_classifiers(), 1);
    if (hard_mask)
        for (std::size_t k = 0; k < allowed.size(); ++k) allowed[k] = state.called(k) ? 0 : 1;
    return allowed;
}

/// Distribution over the next classifier to call.
inline std::vector<double> policy(const LacNets& nets, const HiddenState& state)
{
    const auto logits = predict(nets.action_generator, state.vector());
    const auto allowed = allowed_actions(state, nets.config.hard_mask);
    return masked_softmax(std::span<const float>(logits), std::span<const std::uint8_t>(allowed));
}

enum class SelectMode { sample, argmax };

/// Argmax breaks ties toward the lowest id.
inline std::size_t select_action(std::span<const double> probs, SelectMode mode, Rng* rng = nullptr)
{
    if (mode == SelectMode::argmax) return argmax(probs);
    if (rng == nullptr) throw UsageError("sampling needs a random stream");
    return rng->categorical(probs);
}

/// Distribution over classes given what has been revealed so far.
inline std::vector<double> decide(const LacNets& nets, const HiddenState& state)
{
    return softmax(predict(nets.decision_maker, state.vector()));
}

inline double baseline_value(const LacNets& nets, const HiddenState& state)
{
    return predict(nets.baseline, state.vector())[0];
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory holding agent.json and one LACNN1 file per head.

inline nlohmann::json to_json(const AgentConfig& c)
{
    return {{"n_classifiers", c.n_classifiers}, {"n_classes", c.n_classes}, {"action_hidden", c.action_hidden},
        {"decision_hidden", c.decision_hidden}, {"baseline_depth", c.baseline_depth},
        {"baseline_hidden", c.baseline_hidden}, {"baseline_dropout", c.baseline_dropout},
        {"hard_mask", c.hard_mask}, {"seed", c.seed}};
}

inline AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig c = {})
{
    try {
        c.n_classifiers = j.value("n_classifiers", c.n_classifiers);
        c.n_classes = j.value("n_classes", c.n_classes);
        c.action_hidden = j.value("action_hidden", c.action_hidden);
        c.decision_hidden = j.value("decision_hidden", c.decision_hidden);
        c.baseline_depth = j.value("baseline_depth", c.baseline_depth);
        c.baseline_hidden = j.value("baseline_hidden", c.baseline_hidden);
        c.baseline_dropout = j.value("baseline_dropout", c.baseline_dropout);
        c.hard_mask = j.value("hard_mask", c.hard_mask);
        c.seed = j.value("seed", c.seed);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed agent config: ") + e.what());
    }
}

inline void save_agent(const LacNets& nets, const std::string& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError(FormatErrorCode::io, 0, "cannot create " + dir);
    std::ofstream out(fs::path(dir) / "agent.json", std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::io, 0, "cannot write agent.json in " + dir);
    out << to_json(nets.config).dump(2) << '\n';
    save_checkpoint(nets.action_generator, (fs::path(dir) / "action_generator.lacnn").string());
    save_checkpoint(nets.decision_maker, (fs::path(dir) / "decision_maker.lacnn").string());
    save_checkpoint(nets.baseline, (fs::path(dir) / "baseline.lacnn").string());
}

inline LacNets load_agent(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "agent.json");
    if (!in) throw FormatError(FormatErrorCode::io, 0, "no agent.json in " + dir);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorCode::bad_manifest, 0, e.what());
    }
    LacNets nets;
    nets.config = agent_config_from_json(j);
    nets.config.validate();
    nets.action_generator = load_checkpoint((fs::path(dir) / "action_generator.lacnn").string());
    nets.decision_maker = load_checkpoint((fs::path(dir) / "decision_maker.lacnn").string());
    nets.baseline = load_checkpoint((fs::path(dir) / "baseline.lacnn").string());
    const auto d = nets.config.state_dim();
    if (nets.action_generator.input_dim() != d || nets.decision_maker.input_dim() != d ||
        nets.baseline.input_dim() != d || nets.action_generator.output_dim() != nets.config.n_classifiers ||
        nets.decision_maker.output_dim() != nets.config.n_classes || nets.baseline.output_dim() != 1)
        throw FormatError(FormatErrorCode::count_mismatch, 0, "checkpoint shapes disagree with agent.json");
    return nets;
}

} // namespace lac
