#include "ace/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "ace/error.hpp"

namespace ace::oracle {
namespace {

using spiders::kActions;

/// Successor structure of every (state, joint) pair, enumerated once.
/// A pair either catches on the spider move (no successors) or lists the
/// equiprobable post-fly states.
struct Dynamics {
    std::int64_t states = 0;
    std::vector<std::uint8_t> terminal;  // per state
    std::vector<std::uint8_t> catches;   // per (state, joint)
    std::vector<std::int64_t> offsets;   // per (state, joint) + 1
    std::vector<std::int32_t> next;
};

Dynamics build_dynamics(const GridConfig& cfg) {
    cfg.validate();
    if (cfg.side > spiders::kMaxEnumerableSide) throw Error("state space too large", "side " + std::to_string(cfg.side));
    Dynamics d;
    d.states = spiders::state_count(cfg);
    d.terminal.resize(d.states);
    d.catches.assign(d.states * kJointActions, 0);
    d.offsets.assign(d.states * kJointActions + 1, 0);
    d.next.reserve(d.states * kJointActions * 3);
    for (std::int64_t i = 0; i < d.states; ++i) {
        const EnvState s = spiders::state_from_index(i, cfg.side);
        d.terminal[i] = spiders::caught(s);
        for (int j = 0; j < kJointActions; ++j) {
            const std::int64_t pair = i * kJointActions + j;
            if (!d.terminal[i]) {
                const auto acts = joint_actions(j);
                EnvState moved = spiders::move_spiders(s, acts, cfg.side);
                if (spiders::caught(moved)) {
                    d.catches[pair] = 1;
                } else {
                    auto safe = spiders::fly_safe_moves(moved, cfg.side);
                    if (safe.empty()) {
                        d.next.push_back(static_cast<std::int32_t>(spiders::state_index(moved, cfg.side)));
                    } else {
                        for (const auto& c : safe) {
                            EnvState n = moved;
                            n.fly = c;
                            d.next.push_back(static_cast<std::int32_t>(spiders::state_index(n, cfg.side)));
                        }
                    }
                }
            }
            d.offsets[pair + 1] = static_cast<std::int64_t>(d.next.size());
        }
    }
    return d;
}

constexpr double kCatchReward = 10.0;

/// r + discount * E[V(s')] for one (state, joint) pair.
inline double backup(const Dynamics& d, const std::vector<double>& v, double discount, std::int64_t pair) {
    if (d.catches[pair]) return kCatchReward;
    const std::int64_t lo = d.offsets[pair], hi = d.offsets[pair + 1];
    double acc = 0.0;
    for (std::int64_t k = lo; k < hi; ++k) acc += v[d.next[k]];
    return discount * acc / static_cast<double>(hi - lo);
}

void check_args(double discount, double tol) {
    if (!(tol > 0.0)) throw Error("invalid tolerance", "tol must be > 0");
    if (!(discount > 0.0 && discount < 1.0)) throw Error("invalid discount", "expected 0 < discount < 1");
}

int argmax_lowest(std::span<const double> q) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(q.size()); ++i)
        if (q[i] > q[best]) best = i;
    return best;
}

std::vector<std::int64_t> legal_starts(const GridConfig& cfg, std::int64_t n) {
    std::vector<std::int64_t> starts;
    for (std::int64_t i = 0; i < n; ++i)
        if (spiders::legal_start(spiders::state_from_index(i, cfg.side), cfg)) starts.push_back(i);
    if (starts.empty()) throw Error("infeasible start constraint");
    return starts;
}

}  // namespace

std::array<double, kJointActions> joint_q(const GridConfig& cfg, const std::vector<double>& values, double discount,
                                          const EnvState& s) {
    std::array<double, kJointActions> q{};
    if (spiders::caught(s)) return q;
    for (int j = 0; j < kJointActions; ++j) {
        const EnvState moved = spiders::move_spiders(s, joint_actions(j), cfg.side);
        if (spiders::caught(moved)) {
            q[j] = kCatchReward;
            continue;
        }
        auto safe = spiders::fly_safe_moves(moved, cfg.side);
        if (safe.empty()) {
            q[j] = discount * values.at(spiders::state_index(moved, cfg.side));
            continue;
        }
        double acc = 0.0;
        for (const auto& c : safe) {
            EnvState n = moved;
            n.fly = c;
            acc += values.at(spiders::state_index(n, cfg.side));
        }
        q[j] = discount * acc / static_cast<double>(safe.size());
    }
    return q;
}

std::vector<int> greedy_set(std::span<const double> q, double tol) {
    const double best = *std::max_element(q.begin(), q.end());
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(q.size()); ++i)
        if (q[i] >= best - tol) out.push_back(i);
    return out;
}

MmdpSolution value_iteration_mmdp(const GridConfig& cfg, double discount, double tol, Exec exec) {
    check_args(discount, tol);
    const Dynamics d = build_dynamics(cfg);
    const std::int64_t n = d.states;
    std::vector<double> v(n, 0.0), next(n, 0.0);
    MmdpSolution sol;
    sol.table.side = cfg.side;
    sol.table.discount = discount;
    const bool par = exec == Exec::parallel;
    for (;;) {
        double residual = 0.0;
#pragma omp parallel for schedule(static) reduction(max : residual) if (par)
        for (std::int64_t i = 0; i < n; ++i) {
            double best = 0.0;
            if (!d.terminal[i]) {
                best = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < kJointActions; ++j) best = std::max(best, backup(d, v, discount, i * kJointActions + j));
            }
            next[i] = best;
            residual = std::max(residual, std::abs(best - v[i]));
        }
        v.swap(next);
        ++sol.table.sweeps;
        sol.table.residual_history.push_back(residual);
        sol.table.residual = residual;
        if (residual <= tol) break;
    }
    sol.table.values = std::move(v);
    sol.policy.assign(n, -1);
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t i = 0; i < n; ++i) {
        if (d.terminal[i]) continue;
        std::array<double, kJointActions> q{};
        for (int j = 0; j < kJointActions; ++j) q[j] = backup(d, sol.table.values, discount, i * kJointActions + j);
        sol.policy[i] = argmax_lowest(q);
    }
    return sol;
}

ValueTable value_iteration_semdp(const GridConfig& cfg, double discount, double tol, Exec exec) {
    check_args(discount, tol);
    const Dynamics d = build_dynamics(cfg);
    const std::int64_t n = d.states;
    // W(s) = max_{a0} V(s_{a0}): value an incoming full-prefix state bootstraps from.
    std::vector<double> v(n * kSeSlots, 0.0), next(n * kSeSlots, 0.0), w(n, 0.0);
    ValueTable table;
    table.side = cfg.side;
    table.discount = discount;
    const bool par = exec == Exec::parallel;
    for (;;) {
        double residual = 0.0;
#pragma omp parallel for schedule(static) reduction(max : residual) if (par)
        for (std::int64_t i = 0; i < n; ++i) {
            const double* cur = &v[i * kSeSlots];
            double* out = &next[i * kSeSlots];
            if (d.terminal[i]) {
                std::fill(out, out + kSeSlots, 0.0);
                continue;
            }
            // full prefix: r + discount * max_{a0'} V(s'_{a0'})
            for (int j = 0; j < kJointActions; ++j) {
                const std::int64_t pair = i * kJointActions + j;
                double val;
                if (d.catches[pair]) {
                    val = kCatchReward;
                } else {
                    double acc = 0.0;
                    const std::int64_t lo = d.offsets[pair], hi = d.offsets[pair + 1];
                    for (std::int64_t k = lo; k < hi; ++k) acc += w[d.next[k]];
                    val = discount * acc / static_cast<double>(hi - lo);
                }
                out[se_slot(2, j / kActions, j % kActions)] = val;
            }
            // one-action prefix: discount * max_{a1} V(s_{a0, a1}) from the previous sweep
            double best0 = -std::numeric_limits<double>::infinity();
            for (int a0 = 0; a0 < kActions; ++a0) {
                double best = -std::numeric_limits<double>::infinity();
                for (int a1 = 0; a1 < kActions; ++a1) best = std::max(best, cur[se_slot(2, a0, a1)]);
                out[se_slot(1, a0)] = discount * best;
                best0 = std::max(best0, cur[se_slot(1, a0)]);
            }
            out[0] = discount * best0;
            double r = 0.0;
            for (int k = 0; k < kSeSlots; ++k) r = std::max(r, std::abs(out[k] - cur[k]));
            residual = std::max(residual, r);
        }
        v.swap(next);
#pragma omp parallel for schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a0 = 0; a0 < kActions; ++a0) best = std::max(best, v[i * kSeSlots + se_slot(1, a0)]);
            w[i] = d.terminal[i] ? 0.0 : best;
        }
        ++table.sweeps;
        table.residual_history.push_back(residual);
        table.residual = residual;
        if (residual <= tol) break;
    }
    table.values = std::move(v);
    return table;
}

std::array<int, 2> sequential_greedy(const ValueTable& se, std::int64_t state) {
    const double* row = &se.values.at(state * kSeSlots);
    std::array<double, kActions> q{};
    for (int a = 0; a < kActions; ++a) q[a] = row[se_slot(1, a)];
    const int a0 = argmax_lowest(q);
    for (int a = 0; a < kActions; ++a) q[a] = row[se_slot(2, a0, a)];
    return {a0, argmax_lowest(q)};
}

std::vector<double> policy_backup(const GridConfig& cfg, const std::vector<double>& values, double discount,
                                  const std::vector<int>& policy) {
    const Dynamics d = build_dynamics(cfg);
    std::vector<double> out(d.states, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < d.states; ++i) {
        if (d.terminal[i]) continue;
        out[i] = backup(d, values, discount, i * kJointActions + policy.at(i));
    }
    return out;
}

StepStatistics exact_step_statistics(const GridConfig& cfg, const std::vector<int>& policy, int success_steps) {
    const Dynamics d = build_dynamics(cfg);
    const std::int64_t n = d.states;
    // after k iterations: expected min(T, k), P(T <= k), and "caught within k for every fly move"
    std::vector<double> mean(n, 0.0), mean_next(n), prob(n, 0.0), prob_next(n);
    std::vector<std::uint8_t> sure(n, 0), sure_next(n);
    const auto starts = legal_starts(cfg, n);

    StepStatistics stats;
    stats.legal_starts = static_cast<std::int64_t>(starts.size());
    double success = 0.0;
    for (int k = 1; k <= cfg.max_steps; ++k) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (d.terminal[i]) {
                mean_next[i] = 0.0;
                prob_next[i] = 1.0;
                sure_next[i] = 1;
                continue;
            }
            const std::int64_t pair = i * kJointActions + policy.at(i);
            if (d.catches[pair]) {
                mean_next[i] = 1.0;
                prob_next[i] = 1.0;
                sure_next[i] = 1;
                continue;
            }
            const std::int64_t lo = d.offsets[pair], hi = d.offsets[pair + 1];
            double m = 0.0, p = 0.0;
            bool all = true;
            for (std::int64_t e = lo; e < hi; ++e) {
                m += mean[d.next[e]];
                p += prob[d.next[e]];
                all = all && sure[d.next[e]];
            }
            const double cnt = static_cast<double>(hi - lo);
            mean_next[i] = 1.0 + m / cnt;
            prob_next[i] = p / cnt;
            sure_next[i] = all;
        }
        mean.swap(mean_next);
        prob.swap(prob_next);
        sure.swap(sure_next);
        if (k == success_steps) {
            for (auto s : starts) success += prob[s];
        }
        if (stats.worst_case_steps < 0 &&
            std::all_of(starts.begin(), starts.end(), [&](std::int64_t s) { return sure[s] != 0; }))
            stats.worst_case_steps = k;
    }
    if (success_steps > cfg.max_steps)
        for (auto s : starts) success += prob[s];
    double total = 0.0;
    for (auto s : starts) total += mean[s];
    stats.mean_steps = total / static_cast<double>(starts.size());
    stats.success_rate = success / static_cast<double>(starts.size());
    return stats;
}

double max_success_probability(const GridConfig& cfg, int steps) {
    const Dynamics d = build_dynamics(cfg);
    const std::int64_t n = d.states;
    std::vector<double> p(n, 0.0), next(n);
    for (std::int64_t i = 0; i < n; ++i) p[i] = d.terminal[i] ? 1.0 : 0.0;
    for (int k = 1; k <= steps; ++k) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (d.terminal[i]) {
                next[i] = 1.0;
                continue;
            }
            double best = 0.0;
            for (int j = 0; j < kJointActions; ++j) {
                const std::int64_t pair = i * kJointActions + j;
                double v = 1.0;
                if (!d.catches[pair]) {
                    const std::int64_t lo = d.offsets[pair], hi = d.offsets[pair + 1];
                    double acc = 0.0;
                    for (std::int64_t e = lo; e < hi; ++e) acc += p[d.next[e]];
                    v = acc / static_cast<double>(hi - lo);
                }
                best = std::max(best, v);
            }
            next[i] = best;
        }
        p.swap(next);
    }
    const auto starts = legal_starts(cfg, n);
    double total = 0.0;
    for (auto s : starts) total += p[s];
    return total / static_cast<double>(starts.size());
}

int minimax_capture_steps(const GridConfig& cfg, int limit) {
    const Dynamics d = build_dynamics(cfg);
    const std::int64_t n = d.states;
    std::vector<std::uint8_t> g(n), next(n);
    for (std::int64_t i = 0; i < n; ++i) g[i] = d.terminal[i];
    const auto starts = legal_starts(cfg, n);
    for (int k = 1; k <= limit; ++k) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            bool ok = d.terminal[i];
            for (int j = 0; j < kJointActions && !ok; ++j) {
                const std::int64_t pair = i * kJointActions + j;
                bool all = true;
                if (!d.catches[pair]) {
                    for (std::int64_t e = d.offsets[pair]; e < d.offsets[pair + 1] && all; ++e) all = g[d.next[e]];
                }
                ok = all;
            }
            next[i] = ok;
        }
        g.swap(next);
        if (std::all_of(starts.begin(), starts.end(), [&](std::int64_t s) { return g[s] != 0; })) return k;
    }
    return -1;
}

MonteCarloResult oracle_average_steps(const GridConfig& cfg, const Policy& policy, int episodes, std::uint64_t seed,
                                      int success_steps, Exec exec) {
    std::vector<int> steps(episodes, 0);
    std::vector<std::uint8_t> ok(episodes, 0);
    const bool par = exec == Exec::parallel;
#pragma omp parallel for schedule(dynamic, 16) if (par)
    for (int e = 0; e < episodes; ++e) {
        Rng rng = make_rng(seed, Stream::evaluation, static_cast<std::uint64_t>(e));
        EnvState s = spiders::reset(cfg, rng);
        int t = 0;
        bool caught = false;
        while (!spiders::terminal(s, cfg)) {
            const auto acts = policy(s);
            auto r = spiders::step(cfg, s, acts, rng);
            s = r.state;
            ++t;
            caught = r.caught;
        }
        steps[e] = t;
        ok[e] = caught && t <= success_steps;
    }
    MonteCarloResult res;
    res.episodes = episodes;
    if (episodes == 0) return res;
    double sum = 0.0, sq = 0.0, succ = 0.0;
    for (int e = 0; e < episodes; ++e) {
        sum += steps[e];
        sq += static_cast<double>(steps[e]) * steps[e];
        succ += ok[e];
    }
    res.mean_steps = sum / episodes;
    const double var = episodes > 1 ? (sq - episodes * res.mean_steps * res.mean_steps) / (episodes - 1) : 0.0;
    res.std_error = std::sqrt(std::max(var, 0.0) / episodes);
    res.success_rate = succ / episodes;
    return res;
}

Policy table_policy(const GridConfig& cfg, const std::vector<int>& policy) {
    const int side = cfg.side;
    return [side, &policy](const EnvState& s) {
        const int j = policy.at(spiders::state_index(s, side));
        return joint_actions(j < 0 ? 0 : j);
    };
}

namespace {

constexpr char kMagic[8] = {'A', 'C', 'E', 'V', 'T', 'B', 'L', '1'};

template <class T>
void put_le(std::ostream& os, T value) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::istream& is) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = is.get();
        if (c == EOF) throw Error("malformed table file", "truncated");
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
}

}  // namespace

Reference reference(const GridConfig& cfg, double discount, int success_steps) {
    Reference r;
    r.solution = value_iteration_mmdp(cfg, discount * discount, 1e-12);
    r.stats = exact_step_statistics(cfg, r.solution.policy, success_steps);
    return r;
}

void save_table(const std::string& path, int side, double discount, const std::vector<double>& values) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open file", path);
    os.write(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(side));
    put_le<double>(os, discount);
    put_le<std::uint64_t>(os, values.size());
    for (double v : values) put_le<double>(os, v);
    if (!os) throw Error("write failed", path);
}

ValueTable load_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open file", path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("malformed table file", "bad magic");
    ValueTable t;
    t.side = static_cast<int>(get_le<std::uint32_t>(is));
    t.discount = get_le<double>(is);
    const auto count = get_le<std::uint64_t>(is);
    t.values.resize(count);
    for (auto& v : t.values) v = get_le<double>(is);
    return t;
}

}  // namespace ace::oracle
