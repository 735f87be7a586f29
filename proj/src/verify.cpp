#include "ace/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "ace/gradcheck.hpp"
#include "ace/learner.hpp"
#include "ace/oracle.hpp"
#include "ace/ppo.hpp"

namespace ace::verify {

namespace {

Property make(std::string suite, std::string name, double measured, double tol, bool pass, std::string detail = {}) {
    return {std::move(suite), std::move(name), measured, tol, pass, std::move(detail)};
}

spiders::EnvState random_state(int side, Rng& rng) {
    spiders::EnvState s;
    for (auto& c : s.spiders) c = {uniform_int(rng, 0, side - 1), uniform_int(rng, 0, side - 1)};
    s.fly = {uniform_int(rng, 0, side - 1), uniform_int(rng, 0, side - 1)};
    return s;
}

std::vector<learner::Transition> random_transitions(int count, Rng& rng) {
    spiders::GridConfig g;
    std::vector<learner::Transition> out;
    auto s = spiders::reset(g, rng);
    while (static_cast<int>(out.size()) < count) {
        learner::Transition t;
        t.state = s;
        t.order = uniform01(rng) < 0.5 ? mmdp::AgentOrder::sorted(2) : mmdp::AgentOrder(std::vector<int>{1, 0});
        t.joint_action.actions = {uniform_int(rng, 0, 4), uniform_int(rng, 0, 4)};
        const auto r = spiders::step(g, s, t.joint_action.by_agent(t.order), rng);
        t.reward = r.reward;
        t.next_state = r.state;
        t.done = r.done;
        t.timeout = r.timeout;
        out.push_back(t);
        s = r.done ? spiders::reset(g, rng) : r.state;
    }
    return out;
}

constexpr double kGradTol = 1e-4;

}  // namespace

std::vector<Property> equivalence_suite() {
    constexpr double g = 0.99;
    spiders::GridConfig cfg;
    cfg.side = 3;
    const auto joint = oracle::value_iteration_mmdp(cfg, g * g, 1e-13);
    const auto se = oracle::value_iteration_semdp(cfg, g, 1e-13);
    const std::int64_t n = spiders::state_count(cfg);
    double worst = 0.0;
    std::int64_t inside = 0;
    for (std::int64_t s = 0; s < n; ++s) {
        const auto st = spiders::state_from_index(s, cfg.side);
        double best = 0.0;
        if (!spiders::caught(st)) {
            best = -1e300;
            for (int a = 0; a < spiders::kActions; ++a)
                best = std::max(best, se.values[s * oracle::kSeSlots + oracle::se_slot(1, a)]);
        }
        worst = std::max(worst, std::abs(best - g * joint.table.values[s]));
        if (spiders::caught(st)) {
            ++inside;
            continue;
        }
        const auto q = oracle::joint_q(cfg, joint.table.values, g * g, st);
        const auto set = oracle::greedy_set(q, 1e-9);
        const auto a = oracle::sequential_greedy(se, s);
        inside += std::find(set.begin(), set.end(), oracle::joint_index(a[0], a[1])) != set.end();
    }
    std::vector<Property> out;
    out.push_back(make("equivalence", "scaling identity sup-norm", worst, 1e-8, worst <= 1e-8));
    out.push_back(make("equivalence", "sequential greedy outside joint greedy set", static_cast<double>(n - inside), 0.0,
                       inside == n, std::to_string(inside) + "/" + std::to_string(n) + " states"));
    return out;
}

std::vector<Property> gradients_suite(std::uint64_t seed) {
    std::vector<Property> out;
    Rng rng(seed);

    {
        model::ModelConfig mc;
        mc.hidden = 6;
        mc.logit_head = true;
        model::AceModel<double> m(mc, seed);
        gradcheck::randomize(m.params(), seed + 1, 0.5);
        std::vector<model::GraphInput> inputs;
        for (int i = 0; i < 3; ++i) inputs.push_back(model::from_features(spiders::features(random_state(5, rng), 5)));
        // passive targets reach the passive encoder
        const std::vector<model::SeQuery> vq{
            {0, {}}, {0, {{0, 2, 2}}}, {1, {{1, 0, 0}, {0, 4, 2}}}, {2, {{2, 3, 1}}}};
        const std::vector<model::SeQuery> lq{{1, {{0, 1, -1}}}, {2, {{1, 2, 2}, {0, 0, -1}}}};
        const std::vector<double> cv{0.7, -1.3, 0.4, 2.0}, cl{-0.5, 1.1};
        auto loss = [&] {
            model::BatchGraph<double> gph;
            gph.forward(m, inputs, vq, lq);
            double l = 0.0;
            for (std::size_t i = 0; i < cv.size(); ++i) l += cv[i] * gph.values()[i] + 0.5 * gph.values()[i] * gph.values()[i];
            for (std::size_t i = 0; i < cl.size(); ++i) l += cl[i] * gph.logits()[i];
            return l;
        };
        auto analytic = [&] {
            model::BatchGraph<double> gph;
            gph.forward(m, inputs, vq, lq);
            std::vector<double> dv(cv.size());
            for (std::size_t i = 0; i < cv.size(); ++i) dv[i] = cv[i] + gph.values()[i];
            gph.backward(m, dv, cl);
        };
        const auto rep = gradcheck::check_gradients(m.params(), loss, analytic);
        std::map<std::string, double> groups;
        for (const auto& [name, err] : rep.per_tensor) {
            const auto group = name.substr(0, name.find('.'));
            groups[group] = std::max(groups[group], err);
        }
        for (const char* path : {"node", "edge", "active", "passive", "value", "logit"}) {
            const double e = groups.count(path) ? groups[path] : 1.0;
            out.push_back(make("gradients", std::string(path) + " path", e, kGradTol, e < kGradTol));
        }
    }

    {
        model::ModelConfig mc;
        mc.hidden = 5;
        model::AceModel<double> m(mc, seed + 2);
        gradcheck::randomize(m.params(), seed + 3, 0.5);
        const auto batch = random_transitions(4, rng);
        std::vector<double> targets(batch.size() * 2);
        for (auto& t : targets) t = uniform01(rng) * 4 - 2;
        auto loss = [&] {
            m.params().zero_grad();
            return learner::td_loss_and_grad(m, batch, targets, 5);
        };
        auto analytic = [&] {
            m.params().zero_grad();
            learner::td_loss_and_grad(m, batch, targets, 5);
        };
        const auto rep = gradcheck::check_gradients(m.params(), loss, analytic);
        out.push_back(make("gradients", "TD loss", rep.max_rel_error, kGradTol, rep.max_rel_error < kGradTol,
                           "worst " + rep.worst));
    }

    {
        model::ModelConfig mc;
        mc.hidden = 5;
        mc.logit_head = true;
        model::AceModel<double> m(mc, seed + 4);
        gradcheck::randomize(m.params(), seed + 5, 0.6);
        ppo::PPOConfig cfg;
        cfg.entropy_weight = 0.05;
        const model::InferenceNet<double> net(m);
        std::vector<ppo::PpoSample> batch;
        for (int b = 0; b < 6; ++b) {
            ppo::PpoSample s;
            s.state = random_state(5, rng);
            s.order = b % 2 ? mmdp::AgentOrder(std::vector<int>{1, 0}) : mmdp::AgentOrder::sorted(2);
            if (b % 3) s.prefix = {uniform_int(rng, 0, 4)};
            s.action = uniform_int(rng, 0, 4);
            auto e = net.encode(model::from_features(spiders::features(s.state, 5)));
            if (!s.prefix.empty()) e = net.compose(e, learner::composed_prefix(s.prefix, s.order));
            const auto l = net.rollout(e, s.order.agent_at(static_cast<int>(s.prefix.size())), spiders::kAllActions,
                                       model::Head::logit);
            const auto p = ppo::softmax(l);
            // ratios both inside and outside the clip band
            s.old_logp = std::log(p[s.action]) + (b < 3 ? 0.01 * (b - 1) : 0.3 * (b - 4.5));
            s.advantage = uniform01(rng) * 2 - 1;
            const double v = net.evaluate(e);
            s.old_value = v + (b % 2 ? 0.1 : 0.6);
            s.ret = v + uniform01(rng) * 2 - 1;
            batch.push_back(s);
        }
        auto loss = [&] {
            m.params().zero_grad();
            return ppo::ppo_loss_and_grad(m, batch, cfg).total;
        };
        auto analytic = [&] {
            m.params().zero_grad();
            ppo::ppo_loss_and_grad(m, batch, cfg);
        };
        const auto rep = gradcheck::check_gradients(m.params(), loss, analytic);
        out.push_back(make("gradients", "PPO loss", rep.max_rel_error, kGradTol, rep.max_rel_error < kGradTol,
                           "worst " + rep.worst));
    }
    return out;
}

std::vector<Property> env_suite(std::int64_t steps, std::uint64_t seed) {
    using spiders::Cell;
    spiders::GridConfig cfg;
    spiders::Env env(cfg, seed);
    Rng pick(seed + 1);
    std::int64_t unsafe = 0, off_grid = 0, bad_reward = 0, reward_mismatch = 0, bad_reset = 0, resets = 0;
    auto check_reset = [&](const spiders::EnvState& s) {
        ++resets;
        for (const Cell& sp : s.spiders)
            if (spiders::manhattan(sp, s.fly) <= 4) ++bad_reset;
    };
    check_reset(env.reset());
    auto inside = [&](Cell c) { return c.x >= 0 && c.y >= 0 && c.x < cfg.side && c.y < cfg.side; };
    for (std::int64_t i = 0; i < steps; ++i) {
        const auto prev = env.state();
        const int a[2] = {uniform_int(pick, 0, 4), uniform_int(pick, 0, 4)};
        const auto moved = spiders::move_spiders(prev, a, cfg.side);
        const auto r = env.step(a);
        for (const Cell& sp : r.state.spiders) off_grid += !inside(sp);
        off_grid += !inside(r.state.fly);
        bad_reward += r.reward != 0.0 && r.reward != 10.0;
        bool colocated = false;
        for (const Cell& sp : r.state.spiders) colocated = colocated || sp == r.state.fly;
        reward_mismatch += (r.reward == 10.0) != colocated;
        const bool caught_first = std::any_of(moved.spiders.begin(), moved.spiders.end(),
                                              [&](const Cell& sp) { return sp == moved.fly; });
        if (!caught_first) {
            // SAFE: in bounds, not on a spider, not next to one
            std::vector<Cell> safe;
            for (Cell d : {Cell{0, 1}, Cell{0, -1}, Cell{-1, 0}, Cell{1, 0}}) {
                const Cell c{moved.fly.x + d.x, moved.fly.y + d.y};
                if (!inside(c)) continue;
                bool ok = true;
                for (const Cell& sp : moved.spiders) ok = ok && spiders::manhattan(sp, c) > 1;
                if (ok) safe.push_back(c);
            }
            const bool legal = safe.empty() ? r.state.fly == moved.fly
                                            : std::find(safe.begin(), safe.end(), r.state.fly) != safe.end();
            unsafe += !legal;
        }
        if (r.done) check_reset(env.reset());
    }
    const std::string n = std::to_string(steps) + " steps, " + std::to_string(resets) + " resets";
    std::vector<Property> out;
    out.push_back(make("env", "fly moves outside the SAFE rule", static_cast<double>(unsafe), 0.0, unsafe == 0, n));
    out.push_back(make("env", "units off the grid", static_cast<double>(off_grid), 0.0, off_grid == 0, n));
    out.push_back(make("env", "reward outside {0, 10}", static_cast<double>(bad_reward), 0.0, bad_reward == 0, n));
    out.push_back(make("env", "reward 10 without co-location or vice versa", static_cast<double>(reward_mismatch), 0.0,
                       reward_mismatch == 0, n));
    out.push_back(make("env", "resets with a spider within distance 4", static_cast<double>(bad_reset), 0.0,
                       bad_reset == 0 && resets > 0, n));
    return out;
}

std::string format(const Property& p) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "[%s] %s / %s: measured %.3g (tolerance %.3g)", p.pass ? "PASS" : "FAIL",
                  p.suite.c_str(), p.name.c_str(), p.measured, p.tolerance);
    std::string line = buf;
    if (!p.detail.empty()) line += " " + p.detail;
    return line;
}

bool all_pass(const std::vector<Property>& ps) {
    return std::all_of(ps.begin(), ps.end(), [](const Property& p) { return p.pass; });
}

}  // namespace ace::verify
