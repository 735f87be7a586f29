#pragma once

// Sequential expansion of a multi-agent MDP: one joint decision becomes n
// single-agent decisions over SE-states (base state + committed action prefix).

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "ace/error.hpp"
#include "ace/rng.hpp"

namespace ace::mmdp {

using ActionId = int;

/// Order in which agents decide within one environment step.
/// position k -> agent index.
class AgentOrder {
public:
    AgentOrder() = default;
    explicit AgentOrder(std::vector<int> permutation) : perm_(std::move(permutation)) {
        std::vector<int> seen(perm_.size(), 0);
        for (int a : perm_) {
            if (a < 0 || a >= static_cast<int>(perm_.size()) || seen[a]++)
                throw Error("invalid agent order");
        }
    }

    static AgentOrder sorted(int n) {
        std::vector<int> p(n);
        std::iota(p.begin(), p.end(), 0);
        return AgentOrder(std::move(p));
    }

    static AgentOrder shuffled(int n, Rng& rng) {
        std::vector<int> p(n);
        std::iota(p.begin(), p.end(), 0);
        // Fisher-Yates with explicit draws so the sequence is library independent
        for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(rng, 0, i)]);
        return AgentOrder(std::move(p));
    }

    int size() const { return static_cast<int>(perm_.size()); }
    int agent_at(int position) const { return perm_.at(position); }
    std::span<const int> permutation() const { return perm_; }

    int position_of(int agent) const {
        auto it = std::find(perm_.begin(), perm_.end(), agent);
        if (it == perm_.end()) throw Error("invalid agent order", "unknown agent");
        return static_cast<int>(it - perm_.begin());
    }

    friend bool operator==(const AgentOrder&, const AgentOrder&) = default;

private:
    std::vector<int> perm_;
};

/// Actions listed by decision position: actions[k] belongs to order.agent_at(k).
struct JointAction {
    std::vector<ActionId> actions;

    int size() const { return static_cast<int>(actions.size()); }
    ActionId operator[](int position) const { return actions.at(position); }

    /// Re-index by agent: result[agent] = action of that agent.
    std::vector<ActionId> by_agent(const AgentOrder& order) const {
        if (order.size() != size()) throw Error("illegal action", "joint action / order size mismatch");
        std::vector<ActionId> out(actions.size());
        for (int k = 0; k < size(); ++k) out[order.agent_at(k)] = actions[k];
        return out;
    }

    friend bool operator==(const JointAction&, const JointAction&) = default;
};

template <class State>
struct SEState {
    State base{};
    std::vector<ActionId> prefix;
    AgentOrder order;

    int agents() const { return order.size(); }
    int depth() const { return static_cast<int>(prefix.size()); }
    bool complete() const { return depth() == agents(); }
    /// Agent that decides next; only valid when !complete().
    int next_agent() const { return order.agent_at(depth()); }

    friend bool operator==(const SEState&, const SEState&) = default;
};

template <class State>
struct Transition {
    State state{};
    JointAction joint_action;
    double reward = 0.0;
    State next_state{};
    bool done = false;
    /// done because of the step cap rather than a terminal state
    bool timeout = false;
    AgentOrder order;
};

template <class State>
struct IntermediateTransition {
    SEState<State> from;
    ActionId action = 0;
    double reward = 0.0;
    /// The last element of an expansion transits to the next base state
    /// (empty prefix) and carries done.
    SEState<State> to;
    bool done = false;
};

inline bool action_in(std::span<const ActionId> space, ActionId a) {
    return std::find(space.begin(), space.end(), a) != space.end();
}

template <class State>
SEState<State> se_successor(const SEState<State>& s, ActionId a, std::span<const ActionId> action_space) {
    if (s.complete()) throw Error("sequence complete");
    if (!action_in(action_space, a)) throw Error("illegal action", std::to_string(a));
    SEState<State> next = s;
    next.prefix.push_back(a);
    return next;
}

/// One successor per legal action, ascending action id.
template <class State>
std::vector<SEState<State>> enumerate_candidates(const SEState<State>& s, std::span<const ActionId> action_space) {
    if (s.complete()) throw Error("sequence complete");
    std::vector<ActionId> ids(action_space.begin(), action_space.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<SEState<State>> out;
    out.reserve(ids.size());
    for (ActionId a : ids) {
        SEState<State> next = s;
        next.prefix.push_back(a);
        out.push_back(std::move(next));
    }
    return out;
}

/// (s, a, r, s') -> [(s, a_1, 0, s_{a_1}), ..., (s_{a_{1:n-1}}, a_n, r, s')].
template <class State>
std::vector<IntermediateTransition<State>> expand_transition(const Transition<State>& t) {
    const int n = t.joint_action.size();
    if (n == 0 || n != t.order.size()) throw Error("malformed transition", "joint action / order size mismatch");
    std::vector<IntermediateTransition<State>> out;
    out.reserve(n);
    SEState<State> cur{t.state, {}, t.order};
    for (int k = 0; k < n; ++k) {
        IntermediateTransition<State> it;
        it.from = cur;
        it.action = t.joint_action[k];
        if (k + 1 < n) {
            cur.prefix.push_back(it.action);
            it.to = cur;
        } else {
            it.reward = t.reward;
            it.to = SEState<State>{t.next_state, {}, t.order};
            it.done = t.done;
        }
        out.push_back(std::move(it));
    }
    return out;
}

}  // namespace ace::mmdp
