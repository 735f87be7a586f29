#include "ace/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ace/error.hpp"

namespace ace::ppo {

using learner::composed_prefix;
using learner::MetricsRecord;
using learner::SolveTracker;

void PPOConfig::validate() const {
    grid.validate();
    if (collector_env_num < 1) throw Error("invalid config", "collector_env_num must be positive");
    if (n_episode < 1) throw Error("invalid config", "n_episode must be positive");
    if (update_per_collect < 1) throw Error("invalid config", "update_per_collect must be positive");
    if (batch_size < 1) throw Error("invalid config", "batch_size must be positive");
    if (!(learning_rate > 0.0)) throw Error("invalid config", "learning_rate must be positive");
    if (!(discount > 0.0) || discount > 1.0) throw Error("invalid config", "discount outside (0, 1]");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw Error("invalid config", "gae_lambda outside [0, 1]");
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw Error("invalid config", "clip_ratio outside (0, 1)");
    if (!(value_clip_ratio > 0.0 && value_clip_ratio < 1.0))
        throw Error("invalid config", "value_clip_ratio outside (0, 1)");
    if (value_weight < 0.0 || entropy_weight < 0.0) throw Error("invalid config", "negative loss weight");
    if (hidden < 1) throw Error("invalid config", "hidden must be positive");
    if (eval_interval < 1 || eval_episodes < 1 || final_eval_episodes < 1)
        throw Error("invalid config", "evaluation sizes must be positive");
    if (success_steps < 1 || solve_streak < 1) throw Error("invalid config", "solve criterion");
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw Error("empty legal set");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - top));
    for (auto& x : p) x /= z;
    return p;
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

std::vector<double> gae_advantages(const SeTrajectory& traj, double gamma, double lambda) {
    const std::size_t steps = traj.rewards.size();
    if (traj.agents < 1 || steps == 0 || traj.values.size() != steps * traj.agents)
        throw Error("malformed trajectory", "values must hold agents entries per step");
    for (double v : traj.values)
        if (!std::isfinite(v)) throw Error("malformed trajectory", "non-finite value");
    const std::size_t count = traj.values.size();
    const double tail = traj.terminal ? 0.0 : traj.bootstrap_value;
    std::vector<double> adv(count);
    double running = 0.0;
    for (std::size_t j = count; j-- > 0;) {
        const bool boundary = (j + 1) % traj.agents == 0;
        const double next = j + 1 < count ? traj.values[j + 1] : tail;
        const double delta = (boundary ? traj.rewards[j / traj.agents] : 0.0) + gamma * next - traj.values[j];
        running = delta + gamma * lambda * running;
        adv[j] = running;
    }
    return adv;
}

PpoTerms ppo_objective(std::span<const double> logits, std::span<const double> values,
                       std::span<const PpoSample> samples, const PPOConfig& cfg) {
    constexpr int A = spiders::kActions;
    const std::size_t count = samples.size();
    if (logits.size() != count * A || values.size() != count) throw Error("dimension mismatch", "ppo batch");
    PpoTerms out;
    out.dlogits.assign(count * A, 0.0);
    out.dvalues.assign(count, 0.0);
    if (count == 0) return out;
    const double inv = 1.0 / static_cast<double>(count);
    const double lo = 1.0 - cfg.clip_ratio, hi = 1.0 + cfg.clip_ratio;
    for (std::size_t b = 0; b < count; ++b) {
        const auto& s = samples[b];
        const auto l = logits.subspan(b * A, A);
        const auto p = softmax(l);
        const double top = *std::max_element(l.begin(), l.end());
        double z = 0.0;
        for (double x : l) z += std::exp(x - top);
        const double log_z = top + std::log(z);
        const double logp = l[s.action] - log_z;
        const double rho = std::exp(logp - s.old_logp);
        const double surr1 = rho * s.advantage;
        const double surr2 = std::clamp(rho, lo, hi) * s.advantage;
        out.policy -= std::min(surr1, surr2) * inv;
        const double g_logp = surr1 <= surr2 ? -surr1 : 0.0;
        double h = 0.0;
        for (int j = 0; j < A; ++j) h -= p[j] * (l[j] - log_z);
        out.entropy += h * inv;
        for (int j = 0; j < A; ++j) {
            const double logp_j = l[j] - log_z;
            double d = g_logp * ((j == s.action ? 1.0 : 0.0) - p[j]);
            d += cfg.entropy_weight * p[j] * (logp_j + h);
            out.dlogits[b * A + j] = d * inv;
        }

        const double v = values[b];
        double vloss, dv;
        if (cfg.use_value_clip) {
            const double dclip = std::clamp(v - s.old_value, -cfg.value_clip_ratio, cfg.value_clip_ratio);
            const double vc = s.old_value + dclip;
            const double l1 = (v - s.ret) * (v - s.ret), l2 = (vc - s.ret) * (vc - s.ret);
            if (l1 >= l2) {
                vloss = 0.5 * l1;
                dv = v - s.ret;
            } else {
                vloss = 0.5 * l2;
                const bool inside = std::abs(v - s.old_value) < cfg.value_clip_ratio;
                dv = inside ? vc - s.ret : 0.0;
            }
        } else {
            vloss = 0.5 * (v - s.ret) * (v - s.ret);
            dv = v - s.ret;
        }
        out.value += vloss * inv;
        out.dvalues[b] = cfg.value_weight * dv * inv;
    }
    out.total = out.policy + cfg.value_weight * out.value - cfg.entropy_weight * out.entropy;
    return out;
}

template <class T>
PpoTerms ppo_loss_and_grad(model::AceModel<T>& model, std::span<const PpoSample> samples, const PPOConfig& cfg) {
    if (!model.config().logit_head) throw Error("invalid config", "ACE-PPO needs the logit head");
    const int side = cfg.grid.side;
    std::vector<model::GraphInput> inputs;
    std::vector<model::SeQuery> vq, lq;
    inputs.reserve(samples.size());
    vq.reserve(samples.size());
    lq.reserve(samples.size() * spiders::kActions);
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& s = samples[b];
        if (static_cast<int>(s.prefix.size()) >= s.order.size()) throw Error("sequence complete");
        inputs.push_back(model::from_features(spiders::features(s.state, side)));
        auto prefix = composed_prefix(s.prefix, s.order);
        vq.push_back({static_cast<int>(b), prefix});
        const int executor = s.order.agent_at(static_cast<int>(s.prefix.size()));
        for (int a = 0; a < spiders::kActions; ++a) {
            auto cand = prefix;
            cand.push_back({executor, a, -1});
            lq.push_back({static_cast<int>(b), std::move(cand)});
        }
    }
    model::BatchGraph<T> graph;
    graph.forward(model, inputs, vq, lq);
    const std::vector<double> logits(graph.logits().begin(), graph.logits().end());
    const std::vector<double> values(graph.values().begin(), graph.values().end());
    auto terms = ppo_objective(logits, values, samples, cfg);
    if (!std::isfinite(terms.total)) throw DivergenceError("non-finite PPO loss");
    const std::vector<T> dv(terms.dvalues.begin(), terms.dvalues.end());
    const std::vector<T> dl(terms.dlogits.begin(), terms.dlogits.end());
    graph.backward(model, dv, dl);
    return terms;
}

template PpoTerms ppo_loss_and_grad<float>(model::AceModel<float>&, std::span<const PpoSample>, const PPOConfig&);
template PpoTerms ppo_loss_and_grad<double>(model::AceModel<double>&, std::span<const PpoSample>, const PPOConfig&);

void ReturnScale::update(std::span<const double> xs) {
    // Chan et al. batch merge
    if (xs.empty()) return;
    const double n = static_cast<double>(xs.size());
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double m2 = 0.0;
    for (double x : xs) m2 += (x - m) * (x - m);
    const double total = count_ + n;
    const double delta = m - mean_;
    mean_ += delta * n / total;
    m2_ += m2 + delta * delta * count_ * n / total;
    count_ = total;
}

double ReturnScale::scale() const {
    if (count_ < 2.0) return 1.0;
    return std::max(std::sqrt(m2_ / count_), 1e-4);
}

namespace {

model::ModelConfig model_config(const PPOConfig& cfg) {
    model::ModelConfig m;
    m.hidden = cfg.hidden;
    m.ia_enabled = cfg.ia_enabled;
    m.logit_head = true;
    return m;
}

int sample_index(std::span<const double> p, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

}  // namespace

PpoLearner::PpoLearner(const PPOConfig& cfg, double oracle_mean_steps)
    : cfg_((cfg.validate(), cfg)),
      oracle_mean_steps_(oracle_mean_steps),
      update_rng_(derive_seed(cfg.seed, Stream::update)),
      online_(model_config(cfg), derive_seed(cfg.seed, Stream::init)),
      snapshot_(online_) {
    for (int i = 0; i < cfg.collector_env_num; ++i) {
        envs_.emplace_back(cfg.grid, derive_seed(cfg.seed, Stream::collector, i));
        policy_rngs_.push_back(make_rng(cfg.seed, Stream::policy, i));
    }
}

AgentOrder PpoLearner::next_order(Rng& rng) const {
    return cfg_.order_mode == OrderMode::shuffle ? AgentOrder::shuffled(spiders::kSpiders, rng)
                                                 : AgentOrder::sorted(spiders::kSpiders);
}

std::vector<double> PpoLearner::policy_distribution(const EnvState& s, const AgentOrder& order,
                                                    std::span<const int> prefix) const {
    if (static_cast<int>(prefix.size()) >= order.size()) throw Error("sequence complete");
    auto e = snapshot_.encode(model::from_features(spiders::features(s, cfg_.grid.side)));
    if (!prefix.empty()) e = snapshot_.compose(e, composed_prefix(prefix, order));
    const auto l = snapshot_.rollout(e, order.agent_at(static_cast<int>(prefix.size())), spiders::kAllActions,
                                     model::Head::logit);
    return softmax(std::vector<double>(l.begin(), l.end()));
}

std::int64_t PpoLearner::decisions() const {
    std::int64_t n = 0;
    for (const auto& ep : batch_) n += static_cast<std::int64_t>(ep.decisions.size());
    return n;
}

std::int64_t PpoLearner::collect() {
    batch_.clear();
    std::int64_t steps = 0;
    const int n = spiders::kSpiders;
    for (int e = 0; e < cfg_.n_episode; ++e) {
        const std::size_t w = static_cast<std::size_t>(e) % envs_.size();
        auto& env = envs_[w];
        Rng& rng = policy_rngs_[w];
        env.reset();
        Episode ep;
        while (true) {
            const EnvState s = env.state();
            const AgentOrder order = next_order(rng);
            auto emb = snapshot_.encode(model::from_features(spiders::features(s, cfg_.grid.side)));
            std::vector<int> prefix;
            for (int k = 0; k < n; ++k) {
                const int executor = order.agent_at(k);
                if (k > 0) {
                    const model::ComposedAction last[1] = {{order.agent_at(k - 1), prefix.back(), -1}};
                    emb = snapshot_.compose(emb, last);
                }
                const auto lf = snapshot_.rollout(emb, executor, spiders::kAllActions, model::Head::logit);
                const auto p = softmax(std::vector<double>(lf.begin(), lf.end()));
                const int a = sample_index(p, rng);
                ep.decisions.push_back({s, order, prefix, a, std::log(p[a])});
                prefix.push_back(a);
            }
            const auto r = env.step(mmdp::JointAction{prefix}.by_agent(order));
            ep.rewards.push_back(r.reward);
            ++steps;
            if (r.done) {
                ep.terminal = !r.timeout;
                ep.last_state = r.state;
                break;
            }
        }
        batch_.push_back(std::move(ep));
        ++episodes_;
    }
    samples_ += steps;
    return steps;
}

std::vector<SeTrajectory> PpoLearner::value_trajectories(const model::InferenceNet<float>& net) const {
    const double scale = cfg_.value_norm ? scale_.scale() : 1.0;
    std::vector<SeTrajectory> out(batch_.size());
    const int n = spiders::kSpiders;
    const std::int64_t count = static_cast<std::int64_t>(batch_.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < count; ++i) {
        const auto& ep = batch_[i];
        auto& tr = out[i];
        tr.agents = n;
        tr.rewards = ep.rewards;
        tr.terminal = ep.terminal;
        tr.values.resize(ep.decisions.size());
        for (std::size_t t = 0; t < ep.rewards.size(); ++t) {
            const auto& first = ep.decisions[t * n];
            const auto base = net.encode(model::from_features(spiders::features(first.state, cfg_.grid.side)));
            for (int k = 0; k < n; ++k) {
                const auto& d = ep.decisions[t * n + k];
                const auto e = k == 0 ? base : net.compose(base, composed_prefix(d.prefix, d.order));
                tr.values[t * n + k] = scale * static_cast<double>(net.evaluate(e));
            }
        }
        if (!ep.terminal) {
            const auto e = net.encode(model::from_features(spiders::features(ep.last_state, cfg_.grid.side)));
            tr.bootstrap_value = scale * static_cast<double>(net.evaluate(e));
        }
    }
    return out;
}

double PpoLearner::train() {
    if (batch_.empty()) return 0.0;
    std::vector<PpoSample> samples;
    for (const auto& ep : batch_)
        for (const auto& d : ep.decisions) samples.push_back({d.state, d.order, d.prefix, d.action, d.logp});
    nn::AdamConfig opt;
    opt.lr = cfg_.learning_rate;
    double loss_sum = 0.0;
    int minibatches = 0;
    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg_.update_per_collect; ++epoch) {
        if (epoch == 0 || cfg_.recompute_adv) {
            const model::InferenceNet<float> net(online_);
            const auto trajs = value_trajectories(net);
            std::vector<double> adv, values;
            for (const auto& tr : trajs) {
                const auto a = gae_advantages(tr, cfg_.discount, cfg_.gae_lambda);
                adv.insert(adv.end(), a.begin(), a.end());
                values.insert(values.end(), tr.values.begin(), tr.values.end());
            }
            std::vector<double> returns(adv.size());
            for (std::size_t j = 0; j < adv.size(); ++j) returns[j] = adv[j] + values[j];
            if (cfg_.value_norm && epoch == 0) scale_.update(returns);
            const double scale = cfg_.value_norm ? scale_.scale() : 1.0;
            for (std::size_t j = 0; j < samples.size(); ++j) {
                samples[j].advantage = adv[j];
                samples[j].ret = returns[j] / scale;
                samples[j].old_value = values[j] / scale;
            }
        }
        std::shuffle(perm.begin(), perm.end(), update_rng_);
        for (std::size_t start = 0; start < perm.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<PpoSample> mb;
            mb.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) mb.push_back(samples[perm[k]]);
            if (cfg_.adv_norm && mb.size() > 1) {
                double mean = 0.0, var = 0.0;
                for (const auto& s : mb) mean += s.advantage;
                mean /= static_cast<double>(mb.size());
                for (const auto& s : mb) var += (s.advantage - mean) * (s.advantage - mean);
                const double sd = std::sqrt(var / static_cast<double>(mb.size()));
                for (auto& s : mb) s.advantage = (s.advantage - mean) / (sd + 1e-8);
            }
            online_.params().zero_grad();
            const auto terms = ppo_loss_and_grad(online_, mb, cfg_);
            nn::adam_step(online_.params(), opt);
            loss_sum += terms.total;
            ++minibatches;
        }
    }
    snapshot_ = model::InferenceNet<float>(online_);
    return minibatches ? loss_sum / minibatches : 0.0;
}

EvalResult PpoLearner::evaluate(int episodes, std::uint64_t seed) const {
    const learner::EvalPolicy policy = [this](const EnvState& s, Rng& rng) {
        const AgentOrder order = next_order(rng);
        auto emb = snapshot_.encode(model::from_features(spiders::features(s, cfg_.grid.side)));
        std::vector<int> prefix;
        for (int k = 0; k < order.size(); ++k) {
            if (k > 0) {
                const model::ComposedAction last[1] = {{order.agent_at(k - 1), prefix.back(), -1}};
                emb = snapshot_.compose(emb, last);
            }
            const auto l = snapshot_.rollout(emb, order.agent_at(k), spiders::kAllActions, model::Head::logit);
            prefix.push_back(learner::argmax_lowest(std::vector<double>(l.begin(), l.end())));
        }
        const auto a = mmdp::JointAction{prefix}.by_agent(order);
        return std::array<int, 2>{a[0], a[1]};
    };
    return learner::evaluate_policy(cfg_.grid, policy, episodes, seed, oracle_mean_steps_, cfg_.success_steps);
}

TrainSummary PpoLearner::run(std::int64_t budget, const MetricsSink& sink) {
    TrainSummary summary;
    SolveTracker tracker(cfg_.solve_streak);
    std::int64_t next_eval = cfg_.eval_interval;
    std::uint64_t eval_index = 0;
    double last_loss = 0.0;
    const auto start = std::chrono::steady_clock::now();
    auto record = [&](const EvalResult& ev) {
        MetricsRecord rec;
        rec.samples = samples_;
        rec.episodes = episodes_;
        rec.loss = last_loss;
        rec.success_rate_10 = ev.success_rate;
        rec.mean_steps = ev.mean_steps;
        rec.steps_gap = ev.steps_gap;
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        summary.records.push_back(rec);
        if (sink) sink(rec);
    };
    while (samples_ < budget) {
        collect();
        last_loss = train();
        if (samples_ >= next_eval || samples_ >= budget) {
            while (next_eval <= samples_) next_eval += cfg_.eval_interval;
            const auto ev = evaluate(cfg_.eval_episodes, derive_seed(cfg_.seed, Stream::evaluation, eval_index++));
            record(ev);
            if (tracker.update(samples_, ev.success_rate) && cfg_.stop_on_solve) break;
        }
    }
    summary.samples_to_solve = tracker.samples_to_solve();
    summary.samples = samples_;
    summary.final_eval =
        evaluate(cfg_.final_eval_episodes, derive_seed(cfg_.seed, Stream::evaluation, (std::uint64_t{1} << 40)));
    if (summary.records.empty()) record(summary.final_eval);
    return summary;
}

}  // namespace ace::ppo
