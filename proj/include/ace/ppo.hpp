#pragma once

// ACE-PPO: softmax policy from a logit head over rolled-out SE-states, GAE
// along the chain of SE decision states, clipped PPO update.

#include <cstdint>
#include <span>
#include <vector>

#include "ace/learner.hpp"
#include "ace/model.hpp"

namespace ace::ppo {

using learner::EvalResult;
using learner::MetricsSink;
using learner::OrderMode;
using learner::TrainSummary;
using mmdp::AgentOrder;
using spiders::EnvState;

struct PPOConfig {
    spiders::GridConfig grid;
    int collector_env_num = 8;
    /// whole episodes per collection
    int n_episode = 32;
    /// epochs over each collection
    int update_per_collect = 4;
    /// SE decisions per minibatch
    int batch_size = 256;
    double learning_rate = 0.0005;
    double discount = 0.99;
    double gae_lambda = 0.95;
    double clip_ratio = 0.05;
    bool use_value_clip = true;
    double value_clip_ratio = 0.3;
    double value_weight = 1.0;
    double entropy_weight = 0.01;
    bool recompute_adv = true;
    bool adv_norm = true;
    bool value_norm = true;
    int hidden = 128;
    OrderMode order_mode = OrderMode::sorted;
    bool ia_enabled = true;
    std::uint64_t seed = 1;
    std::int64_t eval_interval = 8192;
    int eval_episodes = 1000;
    int final_eval_episodes = 1000;
    int success_steps = 10;
    int solve_streak = 3;
    bool stop_on_solve = false;

    void validate() const;
};

std::vector<double> softmax(std::span<const double> logits);
double entropy(std::span<const double> probs);

/// One episode flattened to SE decisions, step-major: values[t * agents + k]
/// is V of the state where the k-th agent of step t decides. The reward of
/// step t arrives on its last decision.
struct SeTrajectory {
    int agents = 0;
    std::vector<double> values;
    std::vector<double> rewards;
    /// false when the episode was cut by the step cap
    bool terminal = true;
    /// V of the first decision state after the cap; ignored when terminal
    double bootstrap_value = 0.0;
};

/// A_j = sum_k (gamma lambda)^k delta_{j+k}; delta_j = gamma V_{j+1} - V_j
/// inside a step and r + gamma V_{j+1} - V_j across a step boundary.
std::vector<double> gae_advantages(const SeTrajectory& traj, double gamma, double lambda);

/// One SE decision ready for the update. `ret` and `old_value` live in the
/// value head's output space (scaled when value_norm is on).
struct PpoSample {
    EnvState state;
    AgentOrder order;
    std::vector<int> prefix;
    int action = 0;
    double old_logp = 0.0;
    double advantage = 0.0;
    double ret = 0.0;
    double old_value = 0.0;
};

struct PpoTerms {
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    double total = 0.0;
    /// d total / d logit, spider::kActions per sample
    std::vector<double> dlogits;
    std::vector<double> dvalues;
};

/// Clipped surrogate, clipped value loss 0.5 max(...) and mean entropy on
/// given logits (kActions per sample) and values. Advantages are used as
/// stored; normalization happens upstream.
PpoTerms ppo_objective(std::span<const double> logits, std::span<const double> values,
                       std::span<const PpoSample> samples, const PPOConfig& cfg);

/// Runs the network on the samples and accumulates gradients of the total
/// loss into `model`. Throws DivergenceError on a non-finite loss.
template <class T>
PpoTerms ppo_loss_and_grad(model::AceModel<T>& model, std::span<const PpoSample> samples, const PPOConfig& cfg);

/// Running variance of returns; value_norm divides by its std.
class ReturnScale {
public:
    void update(std::span<const double> xs);
    double scale() const;
    double mean() const { return mean_; }
    double count() const { return count_; }

private:
    double mean_ = 0.0;
    double m2_ = 0.0;
    double count_ = 0.0;
};

class PpoLearner {
public:
    PpoLearner(const PPOConfig& cfg, double oracle_mean_steps);

    /// Collects n_episode whole episodes; returns environment steps taken.
    std::int64_t collect();
    /// update_per_collect epochs over the last collection; returns mean total loss.
    double train();
    EvalResult evaluate(int episodes, std::uint64_t seed) const;
    TrainSummary run(std::int64_t budget, const MetricsSink& sink = {});

    /// Policy probabilities at the decision state reached by `prefix`.
    std::vector<double> policy_distribution(const EnvState& s, const AgentOrder& order,
                                            std::span<const int> prefix) const;

    std::int64_t samples() const { return samples_; }
    std::int64_t episodes() const { return episodes_; }
    std::int64_t decisions() const;
    model::AceModel<float>& online() { return online_; }
    const model::AceModel<float>& online() const { return online_; }
    void refresh_snapshot() { snapshot_ = model::InferenceNet<float>(online_); }
    const ReturnScale& return_scale() const { return scale_; }

private:
    struct Decision {
        EnvState state;
        AgentOrder order;
        std::vector<int> prefix;
        int action = 0;
        double logp = 0.0;
    };
    struct Episode {
        std::vector<Decision> decisions;
        std::vector<double> rewards;
        bool terminal = true;
        EnvState last_state;
        AgentOrder last_order;
    };

    AgentOrder next_order(Rng& rng) const;
    std::vector<SeTrajectory> value_trajectories(const model::InferenceNet<float>& net) const;

    PPOConfig cfg_;
    double oracle_mean_steps_;
    std::vector<spiders::Env> envs_;
    std::vector<Rng> policy_rngs_;
    Rng update_rng_;
    model::AceModel<float> online_;
    model::InferenceNet<float> snapshot_;
    ReturnScale scale_;
    std::vector<Episode> batch_;
    std::int64_t samples_ = 0;
    std::int64_t episodes_ = 0;
};

}  // namespace ace::ppo
