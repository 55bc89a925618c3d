#pragma once

// One episode classifies one example: a fixed number of classifier queries
// against the stored response table, then a terminal prediction and reward.

#include "lac/error.hpp"
#include "lac/pool.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <vector>

namespace lac {

struct RewardConfig {
    double lambda = 0.0;     // price per unit of classifier cost
    std::size_t horizon = 1; // number of classifier calls per episode
    bool hard_mask = true;   // forbid calling a classifier twice
};

struct EpisodeState {
    std::size_t example_index = 0;
    std::size_t step = 0;
    std::vector<std::size_t> called;
    double accumulated_cost = 0.0;

    bool operator==(const EpisodeState&) const = default;
};

/// R = 1[prediction == label] - lambda * cost.
inline double episode_reward(std::size_t prediction, std::size_t label, double lambda, double cost)
{
    return (prediction == label ? 1.0 : 0.0) - lambda * cost;
}

class Environment {
public:
    struct Observation {
        std::span<const float> response;
        double cost = 0.0;
    };

    Environment(const Pool& pool, Split split, RewardConfig config)
        : pool_(&pool), table_(&pool.table(split)), config_(config)
    {
        if (config_.horizon == 0) throw ConfigError("horizon must be positive");
        if (!(config_.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
        if (config_.hard_mask && config_.horizon > pool.size())
            throw ConfigError("horizon " + std::to_string(config_.horizon) + " exceeds pool size " +
                std::to_string(pool.size()) + " under hard masking");
    }

    const RewardConfig& config() const { return config_; }
    const ResponseTable& table() const { return *table_; }
    std::size_t n_examples() const { return table_->n_examples; }
    std::size_t n_classifiers() const { return table_->n_classifiers; }
    std::size_t n_classes() const { return table_->n_classes; }
    std::size_t label(std::size_t example) const { return table_->label(example); }

    EpisodeState reset(std::size_t example) const
    {
        if (example >= table_->n_examples)
            throw UsageError("example " + std::to_string(example) + " outside split of " +
                std::to_string(table_->n_examples));
        EpisodeState s;
        s.example_index = example;
        return s;
    }

    /// Returns the stored response of `classifier` and charges its cost.
    Observation query(EpisodeState& state, std::size_t classifier) const
    {
        if (state.step >= config_.horizon)
            throw UsageError("episode already used its " + std::to_string(config_.horizon) + " calls");
        if (classifier >= pool_->size()) throw UsageError("classifier id " + std::to_string(classifier) + " out of range");
        if (config_.hard_mask &&
            std::find(state.called.begin(), state.called.end(), classifier) != state.called.end())
            throw PolicyError("classifier " + std::to_string(classifier) + " requested twice under hard mask");
        const double cost = pool_->specs[classifier].cost;
        state.called.push_back(classifier);
        state.accumulated_cost += cost;
        ++state.step;
        return {table_->response(state.example_index, classifier), cost};
    }

    double finalize(const EpisodeState& state, std::size_t prediction) const
    {
        if (state.step != config_.horizon)
            throw UsageError("finalize after " + std::to_string(state.step) + " of " +
                std::to_string(config_.horizon) + " calls");
        return episode_reward(prediction, label(state.example_index), config_.lambda, state.accumulated_cost);
    }

private:
    const Pool* pool_;
    const ResponseTable* table_;
    RewardConfig config_;
};

} // namespace lac
