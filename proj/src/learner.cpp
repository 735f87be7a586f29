#include "ace/learner.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "ace/error.hpp"

namespace ace::learner {

double EpsilonSchedule::at(std::int64_t samples) const {
    if (decay_steps <= 0 || samples >= decay_steps) return end;
    const double frac = static_cast<double>(std::max<std::int64_t>(samples, 0)) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

void EpsilonSchedule::validate() const {
    if (start < 0.0 || start > 1.0 || end < 0.0 || end > 1.0) throw Error("invalid config", "epsilon outside [0, 1]");
    if (decay_steps < 0) throw Error("invalid config", "negative epsilon decay");
}

void TrainConfig::validate() const {
    grid.validate();
    epsilon.validate();
    if (collector_env_num < 1) throw Error("invalid config", "collector_env_num must be positive");
    if (sample_per_collect < 1) throw Error("invalid config", "n_sample must be positive");
    if (replay_buffer_size < 1) throw Error("invalid config", "replay_buffer_size must be positive");
    if (update_per_collect < 0) throw Error("invalid config", "update_per_collect must be non-negative");
    if (batch_size < 1) throw Error("invalid config", "batch_size must be positive");
    if (!(learning_rate > 0.0)) throw Error("invalid config", "learning_rate must be positive");
    if (target_update_theta < 0.0 || target_update_theta > 1.0) throw Error("invalid config", "theta outside [0, 1]");
    if (!(discount > 0.0) || discount > 1.0) throw Error("invalid config", "discount outside (0, 1]");
    if (weight_decay < 0.0) throw Error("invalid config", "negative weight decay");
    if (hidden < 1) throw Error("invalid config", "hidden must be positive");
    if (eval_interval < 1 || eval_episodes < 1 || final_eval_episodes < 1)
        throw Error("invalid config", "evaluation sizes must be positive");
    if (success_steps < 1 || solve_streak < 1) throw Error("invalid config", "solve criterion");
}

ReplayBuffer::ReplayBuffer(std::int64_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity < 1) throw Error("invalid config", "replay capacity");
}

void ReplayBuffer::push(const Transition& t) {
    if (size() < capacity_) {
        items_.push_back(t);
    } else {
        items_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::int64_t> ReplayBuffer::sample_indices(int count) {
    if (items_.empty()) throw Error("empty replay buffer");
    std::uniform_int_distribution<std::int64_t> dist(0, size() - 1);
    std::vector<std::int64_t> out(count);
    for (auto& i : out) i = dist(rng_);
    return out;
}

std::vector<Transition> ReplayBuffer::sample(int count) {
    std::vector<Transition> out;
    out.reserve(count);
    for (auto i : sample_indices(count)) out.push_back(items_[i]);
    return out;
}

std::vector<model::ComposedAction> composed_prefix(std::span<const int> prefix, const AgentOrder& order) {
    std::vector<model::ComposedAction> out;
    out.reserve(prefix.size());
    for (std::size_t k = 0; k < prefix.size(); ++k)
        out.push_back({order.agent_at(static_cast<int>(k)), prefix[k], -1});
    return out;
}

int argmax_lowest(std::span<const double> values) {
    if (values.empty()) throw Error("empty legal set");
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

NetworkEvaluator::Root NetworkEvaluator::root(const EnvState& s) const {
    return net_->encode(model::from_features(spiders::features(s, side_)));
}

std::vector<double> NetworkEvaluator::rollout(const Root& root, std::span<const int> prefix,
                                              const AgentOrder& order) const {
    if (static_cast<int>(prefix.size()) >= order.size()) throw Error("sequence complete");
    const int executor = order.agent_at(static_cast<int>(prefix.size()));
    std::vector<float> v;
    if (prefix.empty()) {
        v = net_->rollout(root, executor, spiders::kAllActions);
    } else {
        const auto composed = net_->compose(root, composed_prefix(prefix, order));
        v = net_->rollout(composed, executor, spiders::kAllActions);
    }
    return {v.begin(), v.end()};
}

std::vector<double> TabularEvaluator::rollout(Root root, std::span<const int> prefix, const AgentOrder& order) const {
    if (order != AgentOrder::sorted(spiders::kSpiders)) throw Error("tabular evaluator requires sorted order");
    const auto base = root * oracle::kSeSlots;
    std::vector<double> out(spiders::kActions);
    for (int a = 0; a < spiders::kActions; ++a) {
        switch (prefix.size()) {
            case 0: out[a] = table_->values[base + oracle::se_slot(1, a)]; break;
            case 1: out[a] = table_->values[base + oracle::se_slot(2, prefix[0], a)]; break;
            default: throw Error("sequence complete");
        }
    }
    return out;
}

EvalResult evaluate_policy(const spiders::GridConfig& cfg, const EvalPolicy& policy, int episodes, std::uint64_t seed,
                           double oracle_mean_steps, int success_steps, Exec exec) {
    if (episodes < 1) throw Error("invalid config", "episode count");
    std::vector<int> steps(episodes, 0);
    std::vector<char> success(episodes, 0);
    const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(dynamic, 8) if (par)
    for (int e = 0; e < episodes; ++e) {
        Rng env_rng = make_rng(seed, Stream::evaluation, e);
        Rng pol_rng = make_rng(seed, Stream::evaluation_order, e);
        EnvState s = spiders::reset(cfg, env_rng);
        bool caught = false;
        while (true) {
            const auto a = policy(s, pol_rng);
            const auto r = spiders::step(cfg, s, a, env_rng);
            s = r.state;
            if (r.caught) caught = true;
            if (r.done) break;
        }
        steps[e] = caught ? s.step_count : cfg.max_steps;
        success[e] = caught && s.step_count <= success_steps;
    }
    EvalResult out;
    out.episodes = episodes;
    double total = 0.0, wins = 0.0;
    for (int e = 0; e < episodes; ++e) {
        total += steps[e];
        wins += success[e];
    }
    out.mean_steps = total / episodes;
    out.success_rate = wins / episodes;
    out.steps_gap = out.mean_steps - oracle_mean_steps;
    return out;
}

std::string to_json_line(const MetricsRecord& r) {
    nlohmann::json j = {{"samples", r.samples},
                        {"episodes", r.episodes},
                        {"eps", r.eps},
                        {"loss", r.loss},
                        {"success_rate_10", r.success_rate_10},
                        {"mean_steps", r.mean_steps},
                        {"steps_gap", r.steps_gap},
                        {"wall_time_s", r.wall_time_s}};
    return j.dump();
}

MetricsRecord parse_metrics_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        MetricsRecord r;
        r.samples = j.at("samples").get<std::int64_t>();
        r.episodes = j.at("episodes").get<std::int64_t>();
        r.eps = j.at("eps").get<double>();
        r.loss = j.at("loss").get<double>();
        r.success_rate_10 = j.at("success_rate_10").get<double>();
        r.mean_steps = j.at("mean_steps").get<double>();
        r.steps_gap = j.at("steps_gap").get<double>();
        r.wall_time_s = j.at("wall_time_s").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed metrics line", e.what());
    }
}

bool SolveTracker::update(std::int64_t samples, double success_rate) {
    if (success_rate >= 1.0) {
        if (run_ == 0) run_start_ = samples;
        ++run_;
        if (run_ >= streak_ && !solved_at_) solved_at_ = run_start_;
    } else {
        run_ = 0;
    }
    return solved_at_.has_value();
}

template <class T>
double td_loss_and_grad(model::AceModel<T>& model, std::span<const Transition> batch, std::span<const double> targets,
                        int side) {
    if (batch.empty()) return 0.0;
    const int n = batch.front().order.size();
    if (targets.size() != batch.size() * n) throw Error("dimension mismatch", "targets");
    std::vector<model::GraphInput> inputs;
    std::vector<model::SeQuery> queries;
    inputs.reserve(batch.size());
    queries.reserve(batch.size() * n);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& t = batch[b];
        inputs.push_back(model::from_features(spiders::features(t.state, side)));
        const std::span<const int> actions = t.joint_action.actions;
        for (int i = 1; i <= n; ++i)
            queries.push_back({static_cast<int>(b), composed_prefix(actions.first(i), t.order)});
    }
    model::BatchGraph<T> graph;
    graph.forward(model, inputs, queries);
    const auto& v = graph.values();
    const double count = static_cast<double>(queries.size());
    std::vector<T> dv(v.size());
    double loss = 0.0;
    for (std::size_t q = 0; q < v.size(); ++q) {
        const double diff = static_cast<double>(v[q]) - targets[q];
        loss += diff * diff;
        dv[q] = static_cast<T>(2.0 * diff / count);
    }
    graph.backward(model, dv);
    return loss / count;
}

template double td_loss_and_grad<float>(model::AceModel<float>&, std::span<const Transition>, std::span<const double>,
                                        int);
template double td_loss_and_grad<double>(model::AceModel<double>&, std::span<const Transition>,
                                         std::span<const double>, int);

double train_step(std::span<const Transition> batch, model::AceModel<float>& online, model::AceModel<float>& target,
                  const TrainConfig& cfg) {
    const model::InferenceNet<float> target_net(target);
    const NetworkEvaluator evaluator(target_net, cfg.grid.side);
    const auto targets = bellman_targets(batch, evaluator, cfg.discount);
    online.params().zero_grad();
    const double loss = td_loss_and_grad(online, batch, targets, cfg.grid.side);
    if (!std::isfinite(loss)) throw DivergenceError("non-finite TD loss");
    if (cfg.optimizer == Optimizer::adam) {
        nn::AdamConfig opt;
        opt.lr = cfg.learning_rate;
        opt.weight_decay = cfg.weight_decay;
        nn::adam_step(online.params(), opt);
    } else {
        nn::RmsPropConfig opt;
        opt.lr = cfg.learning_rate;
        opt.weight_decay = cfg.weight_decay;
        nn::rmsprop_step(online.params(), opt);
    }
    nn::soft_update(target.params(), online.params(), cfg.target_update_theta);
    return loss;
}

namespace {

model::ModelConfig model_config(const TrainConfig& cfg) {
    model::ModelConfig m;
    m.hidden = cfg.hidden;
    m.ia_enabled = cfg.ia_enabled;
    m.head_pooling = cfg.head_pooling;
    m.pooled_hidden = cfg.pooled_hidden;
    return m;
}

}  // namespace

AceLearner::AceLearner(const TrainConfig& cfg, double oracle_mean_steps)
    : cfg_(cfg),
      oracle_mean_steps_(oracle_mean_steps),
      replay_((cfg.validate(), cfg.replay_buffer_size), derive_seed(cfg.seed, Stream::replay)),
      online_(model_config(cfg), derive_seed(cfg.seed, Stream::init)),
      target_(online_),
      snapshot_(online_),
      start_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < cfg.collector_env_num; ++i) {
        envs_.emplace_back(cfg.grid, derive_seed(cfg.seed, Stream::collector, i));
        policy_rngs_.push_back(make_rng(cfg.seed, Stream::policy, i));
    }
}

AgentOrder AceLearner::next_order(Rng& rng) const {
    return cfg_.order_mode == OrderMode::shuffle ? AgentOrder::shuffled(spiders::kSpiders, rng)
                                                 : AgentOrder::sorted(spiders::kSpiders);
}

JointAction AceLearner::act(const EnvState& s, double eps, const AgentOrder& order, Rng& rng) const {
    const NetworkEvaluator evaluator(snapshot_, cfg_.grid.side);
    return select_joint_action(s, eps, evaluator, order, rng);
}

void AceLearner::collect(int count) {
    int produced = 0;
    while (produced < count) {
        for (std::size_t i = 0; i < envs_.size() && produced < count; ++i) {
            auto& env = envs_[i];
            if (env.finished()) env.reset();
            Rng& rng = policy_rngs_[i];
            const AgentOrder order = next_order(rng);
            Transition t;
            t.state = env.state();
            t.order = order;
            t.joint_action = act(t.state, cfg_.epsilon.at(samples_), order, rng);
            const auto r = env.step(t.joint_action.by_agent(order));
            t.reward = r.reward;
            t.next_state = r.state;
            t.done = r.done;
            t.timeout = r.timeout;
            replay_.push(t);
            ++samples_;
            ++produced;
            if (r.done) ++episodes_;
        }
    }
}

double AceLearner::train_step() {
    const auto batch = replay_.sample(cfg_.batch_size);
    return learner::train_step(batch, online_, target_, cfg_);
}

EvalResult AceLearner::evaluate(int episodes, std::uint64_t seed) const {
    const EvalPolicy policy = [this](const EnvState& s, Rng& rng) {
        const AgentOrder order = next_order(rng);
        const auto a = act(s, 0.0, order, rng).by_agent(order);
        return std::array<int, 2>{a[0], a[1]};
    };
    return evaluate_policy(cfg_.grid, policy, episodes, seed, oracle_mean_steps_, cfg_.success_steps);
}

TrainSummary AceLearner::run(std::int64_t budget, const MetricsSink& sink) {
    TrainSummary summary;
    SolveTracker tracker(cfg_.solve_streak);
    std::int64_t next_eval = cfg_.eval_interval;
    std::uint64_t eval_index = 0;
    double last_loss = 0.0;
    start_ = std::chrono::steady_clock::now();
    while (samples_ < budget) {
        const int chunk = static_cast<int>(std::min<std::int64_t>(cfg_.sample_per_collect, budget - samples_));
        collect(chunk);
        if (replay_.size() >= cfg_.batch_size) {
            for (int u = 0; u < cfg_.update_per_collect; ++u) last_loss = train_step();
            refresh_snapshot();
        }
        if (samples_ >= next_eval || samples_ >= budget) {
            while (next_eval <= samples_) next_eval += cfg_.eval_interval;
            const auto ev = evaluate(cfg_.eval_episodes, derive_seed(cfg_.seed, Stream::evaluation, eval_index++));
            MetricsRecord rec;
            rec.samples = samples_;
            rec.episodes = episodes_;
            rec.eps = current_epsilon();
            rec.loss = last_loss;
            rec.success_rate_10 = ev.success_rate;
            rec.mean_steps = ev.mean_steps;
            rec.steps_gap = ev.steps_gap;
            rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
            summary.records.push_back(rec);
            if (sink) sink(rec);
            if (tracker.update(samples_, ev.success_rate) && cfg_.stop_on_solve) break;
        }
    }
    summary.samples_to_solve = tracker.samples_to_solve();
    summary.samples = samples_;
    // distinct from every periodic evaluation index
    summary.final_eval =
        evaluate(cfg_.final_eval_episodes, derive_seed(cfg_.seed, Stream::evaluation, (std::uint64_t{1} << 40)));
    if (summary.records.empty()) {
        MetricsRecord rec;
        rec.samples = samples_;
        rec.episodes = episodes_;
        rec.eps = current_epsilon();
        rec.success_rate_10 = summary.final_eval.success_rate;
        rec.mean_steps = summary.final_eval.mean_steps;
        rec.steps_gap = summary.final_eval.steps_gap;
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        summary.records.push_back(rec);
        if (sink) sink(rec);
    }
    return summary;
}

}  // namespace ace::learner
