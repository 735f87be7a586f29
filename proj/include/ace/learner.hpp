#pragma once

// ACE value learning over the sequentially expanded MDP: epsilon-greedy
// sequential action selection, uniform replay of environment transitions,
// rollout Bellman targets, TD regression with a soft-updated target network.

#include <array>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ace/mmdp.hpp"
#include "ace/model.hpp"
#include "ace/oracle.hpp"
#include "ace/spiders_fly.hpp"

namespace ace::learner {

using spiders::EnvState;
using Transition = mmdp::Transition<EnvState>;
using mmdp::AgentOrder;
using mmdp::JointAction;

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::int64_t decay_steps = 150000;

    /// Linear from start to end over decay_steps samples, then flat.
    double at(std::int64_t samples) const;
    void validate() const;
};

enum class OrderMode { sorted, shuffle };
enum class Optimizer { adam, rmsprop };

struct TrainConfig {
    spiders::GridConfig grid;
    EpsilonSchedule epsilon;
    int collector_env_num = 8;
    int sample_per_collect = 1024;
    std::int64_t replay_buffer_size = 1'000'000;
    int update_per_collect = 10;
    int batch_size = 256;
    double learning_rate = 0.0005;
    double target_update_theta = 0.02;
    double discount = 0.99;
    Optimizer optimizer = Optimizer::adam;
    double weight_decay = 0.0;
    int hidden = 128;
    model::Pooling head_pooling = model::Pooling::mean;
    bool pooled_hidden = false;
    OrderMode order_mode = OrderMode::sorted;
    bool ia_enabled = true;
    std::uint64_t seed = 1;
    // evaluation protocol
    std::int64_t eval_interval = 8192;
    int eval_episodes = 1000;
    int final_eval_episodes = 1000;
    int success_steps = 10;
    int solve_streak = 3;
    bool stop_on_solve = false;

    void validate() const;
};

/// Ring buffer of environment transitions with uniform sampling.
class ReplayBuffer {
public:
    ReplayBuffer(std::int64_t capacity, std::uint64_t seed);

    void push(const Transition& t);
    std::int64_t size() const { return static_cast<std::int64_t>(items_.size()); }
    std::int64_t capacity() const { return capacity_; }
    const Transition& operator[](std::int64_t i) const { return items_.at(i); }

    /// Uniform with replacement.
    std::vector<std::int64_t> sample_indices(int count);
    std::vector<Transition> sample(int count);

private:
    std::int64_t capacity_;
    std::int64_t next_ = 0;
    std::vector<Transition> items_;
    Rng rng_;
};

/// Anything that can score the successors of an SE-state.
/// root(s) does the per-state work once; rollout(root, prefix, order) returns
/// one value per action id of the agent at position prefix.size().
template <class E>
concept SeEvaluator = requires(const E& e, const EnvState& s, std::span<const int> prefix, const AgentOrder& o) {
    typename E::Root;
    { e.root(s) } -> std::convertible_to<typename E::Root>;
    { e.rollout(e.root(s), prefix, o) } -> std::convertible_to<std::vector<double>>;
};

class NetworkEvaluator {
public:
    using Root = model::InferenceNet<float>::Embedding;

    NetworkEvaluator(const model::InferenceNet<float>& net, int side) : net_(&net), side_(side) {}

    Root root(const EnvState& s) const;
    std::vector<double> rollout(const Root& root, std::span<const int> prefix, const AgentOrder& order) const;

private:
    const model::InferenceNet<float>* net_;
    int side_;
};

/// Exact SE value table (sorted agent order only).
class TabularEvaluator {
public:
    using Root = std::int64_t;

    explicit TabularEvaluator(const oracle::ValueTable& table) : table_(&table) {}

    Root root(const EnvState& s) const { return spiders::state_index(s, table_->side); }
    std::vector<double> rollout(Root root, std::span<const int> prefix, const AgentOrder& order) const;

private:
    const oracle::ValueTable* table_;
};

std::vector<model::ComposedAction> composed_prefix(std::span<const int> prefix, const AgentOrder& order);

int argmax_lowest(std::span<const double> values);

/// Agents decide in `order`; each picks uniformly with probability eps,
/// otherwise the argmax of the rolled-out successor values given the
/// committed prefix (ties toward the lowest id).
template <SeEvaluator E>
JointAction select_joint_action(const EnvState& s, double eps, const E& evaluator, const AgentOrder& order, Rng& rng) {
    JointAction ja;
    const int n = order.size();
    ja.actions.reserve(n);
    std::optional<typename E::Root> root;
    for (int k = 0; k < n; ++k) {
        const bool explore = eps >= 1.0 || (eps > 0.0 && uniform01(rng) < eps);
        if (explore) {
            ja.actions.push_back(uniform_int(rng, 0, spiders::kActions - 1));
            continue;
        }
        if (!root) root.emplace(evaluator.root(s));
        const auto values = evaluator.rollout(*root, ja.actions, order);
        ja.actions.push_back(argmax_lowest(values));
    }
    return ja;
}

enum class Exec { serial, parallel };

/// n targets per transition, flattened: out[t * n + (i - 1)] is the target
/// of V(s_{a_{1:i}}), i = 1..n.
template <SeEvaluator E>
std::vector<double> bellman_targets(std::span<const Transition> batch, const E& target, double discount,
                                    Exec exec = Exec::parallel) {
    if (batch.empty()) return {};
    const int n = batch.front().order.size();
    std::vector<double> out(batch.size() * n, 0.0);
    const std::int64_t count = static_cast<std::int64_t>(batch.size());
    const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t b = 0; b < count; ++b) {
        const Transition& t = batch[b];
        const std::span<const int> actions = t.joint_action.actions;
        if (n > 1) {
            const auto root = target.root(t.state);
            for (int i = 1; i < n; ++i) {
                const auto v = target.rollout(root, actions.first(i), t.order);
                out[b * n + i - 1] = discount * v[argmax_lowest(v)];
            }
        }
        double last = t.reward;
        if (!(t.done && !t.timeout)) {
            const auto v = target.rollout(target.root(t.next_state), {}, t.order);
            last += discount * v[argmax_lowest(v)];
        }
        out[b * n + n - 1] = last;
    }
    return out;
}

struct EvalResult {
    double success_rate = 0.0;  // caught within success_steps
    double mean_steps = 0.0;    // capped episodes count max_steps
    double steps_gap = 0.0;     // mean_steps - oracle mean
    int episodes = 0;
};

/// policy(state, rng) -> actions indexed by spider.
using EvalPolicy = std::function<std::array<int, 2>(const EnvState&, Rng&)>;

/// Episode e draws its start and fly moves from derive_seed(seed, evaluation, e)
/// and any policy randomness from derive_seed(seed, evaluation_order, e).
EvalResult evaluate_policy(const spiders::GridConfig& cfg, const EvalPolicy& policy, int episodes, std::uint64_t seed,
                           double oracle_mean_steps, int success_steps = 10, Exec exec = Exec::parallel);

struct MetricsRecord {
    std::int64_t samples = 0;
    std::int64_t episodes = 0;
    double eps = 0.0;
    double loss = 0.0;
    double success_rate_10 = 0.0;
    double mean_steps = 0.0;
    double steps_gap = 0.0;
    double wall_time_s = 0.0;
};

std::string to_json_line(const MetricsRecord& r);
MetricsRecord parse_metrics_line(const std::string& line);

struct TrainSummary {
    std::optional<std::int64_t> samples_to_solve;
    EvalResult final_eval;
    std::int64_t samples = 0;
    std::vector<MetricsRecord> records;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Tracks "success == 1 for `streak` consecutive evaluations".
class SolveTracker {
public:
    explicit SolveTracker(int streak) : streak_(streak) {}
    /// Returns true once solved; samples_to_solve is the first evaluation of the streak.
    bool update(std::int64_t samples, double success_rate);
    std::optional<std::int64_t> samples_to_solve() const { return solved_at_; }

private:
    int streak_;
    int run_ = 0;
    std::int64_t run_start_ = 0;
    std::optional<std::int64_t> solved_at_;
};

class AceLearner {
public:
    AceLearner(const TrainConfig& cfg, double oracle_mean_steps);

    /// Appends exactly `count` transitions to replay using the current snapshot.
    void collect(int count);
    /// One gradient step on a uniform batch; returns the TD loss.
    double train_step();
    /// Greedy evaluation with the current snapshot.
    EvalResult evaluate(int episodes, std::uint64_t seed) const;

    TrainSummary run(std::int64_t budget, const MetricsSink& sink = {});

    std::int64_t samples() const { return samples_; }
    std::int64_t episodes() const { return episodes_; }
    double current_epsilon() const { return cfg_.epsilon.at(samples_); }
    const ReplayBuffer& replay() const { return replay_; }
    const TrainConfig& config() const { return cfg_; }
    model::AceModel<float>& online() { return online_; }
    const model::AceModel<float>& online() const { return online_; }
    const model::AceModel<float>& target() const { return target_; }
    const model::InferenceNet<float>& snapshot() const { return snapshot_; }
    void refresh_snapshot() { snapshot_ = model::InferenceNet<float>(online_); }

    /// JointAction for one state under the current snapshot.
    JointAction act(const EnvState& s, double eps, const AgentOrder& order, Rng& rng) const;

private:
    AgentOrder next_order(Rng& rng) const;

    TrainConfig cfg_;
    double oracle_mean_steps_;
    std::vector<spiders::Env> envs_;
    std::vector<Rng> policy_rngs_;
    ReplayBuffer replay_;
    model::AceModel<float> online_;
    model::AceModel<float> target_;
    model::InferenceNet<float> snapshot_;
    std::int64_t samples_ = 0;
    std::int64_t episodes_ = 0;
    std::chrono::steady_clock::time_point start_;
};

/// TD loss of a batch against precomputed targets, with gradients
/// accumulated into `model` (no optimizer step). Returns the loss.
template <class T>
double td_loss_and_grad(model::AceModel<T>& model, std::span<const Transition> batch, std::span<const double> targets,
                        int side);

/// Full train step: targets from `target_model`, gradient on `online`,
/// optimizer step, then one soft target update.
double train_step(std::span<const Transition> batch, model::AceModel<float>& online, model::AceModel<float>& target,
                  const TrainConfig& cfg);

}  // namespace ace::learner
