#include "ace/spiders_fly.hpp"

#include <sstream>

#include "ace/error.hpp"

namespace ace::spiders {

void GridConfig::validate() const {
    if (side < 3) throw Error("invalid config", "grid side must be >= 3");
    if (max_steps < 1) throw Error("invalid config", "max_steps must be >= 1");
    if (min_start_distance < 0) throw Error("invalid config", "min_start_distance must be >= 0");
}

bool in_bounds(Cell c, int side) { return c.x >= 0 && c.y >= 0 && c.x < side && c.y < side; }

Cell apply_move(Cell c, int action, int side) {
    Cell n = c;
    switch (action) {
        case kUp: ++n.y; break;
        case kDown: --n.y; break;
        case kLeft: --n.x; break;
        case kRight: ++n.x; break;
        case kStay: break;
        default: throw Error("illegal action", std::to_string(action));
    }
    return in_bounds(n, side) ? n : c;
}

bool caught(const EnvState& s) { return s.spiders[0] == s.fly || s.spiders[1] == s.fly; }

bool terminal(const EnvState& s, const GridConfig& cfg) { return caught(s) || s.step_count >= cfg.max_steps; }

std::vector<Cell> fly_safe_moves(const EnvState& s, int side) {
    std::vector<Cell> safe;
    safe.reserve(4);
    for (int a : {kUp, kDown, kLeft, kRight}) {
        Cell n = s.fly;
        switch (a) {
            case kUp: ++n.y; break;
            case kDown: --n.y; break;
            case kLeft: --n.x; break;
            default: ++n.x; break;
        }
        if (!in_bounds(n, side)) continue;
        bool ok = true;
        for (const Cell& sp : s.spiders) ok = ok && manhattan(sp, n) > 1;
        if (ok) safe.push_back(n);
    }
    return safe;
}

Cell fly_move(const EnvState& s, int side, Rng& rng) {
    auto safe = fly_safe_moves(s, side);
    if (safe.empty()) return s.fly;
    return safe[uniform_int(rng, 0, static_cast<int>(safe.size()) - 1)];
}

bool legal_start(const EnvState& s, const GridConfig& cfg) {
    const int thr = cfg.start_distance();
    for (const Cell& sp : s.spiders) {
        if (!in_bounds(sp, cfg.side) || manhattan(sp, s.fly) <= thr) return false;
    }
    return in_bounds(s.fly, cfg.side) && s.step_count == 0;
}

EnvState reset(const GridConfig& cfg, Rng& rng) {
    cfg.validate();
    // Spiders may share a cell, so a start exists iff the farthest pair of
    // cells is beyond the threshold.
    if (2 * (cfg.side - 1) <= cfg.start_distance()) throw Error("infeasible start constraint");
    auto cell = [&] { return Cell{uniform_int(rng, 0, cfg.side - 1), uniform_int(rng, 0, cfg.side - 1)}; };
    for (;;) {
        EnvState s;
        s.spiders[0] = cell();
        s.spiders[1] = cell();
        s.fly = cell();
        if (legal_start(s, cfg)) return s;
    }
}

EnvState move_spiders(const EnvState& s, std::span<const int> actions, int side) {
    if (actions.size() != kSpiders) throw Error("illegal action", "expected one action per spider");
    EnvState n = s;
    for (int i = 0; i < kSpiders; ++i) {
        if (actions[i] < 0 || actions[i] >= kActions) throw Error("illegal action", std::to_string(actions[i]));
        n.spiders[i] = apply_move(s.spiders[i], actions[i], side);
    }
    return n;
}

StepResult step(const GridConfig& cfg, const EnvState& s, std::span<const int> actions, Rng& rng) {
    if (terminal(s, cfg)) throw Error("episode finished");
    StepResult r;
    r.state = move_spiders(s, actions, cfg.side);
    r.state.step_count = s.step_count + 1;
    if (!caught(r.state)) r.state.fly = fly_move(r.state, cfg.side, rng);
    if (caught(r.state)) {
        r.reward = 10.0;
        r.caught = true;
        r.done = true;
    } else if (r.state.step_count >= cfg.max_steps) {
        r.timeout = true;
        r.done = true;
    }
    return r;
}

UnitFeatures features(const EnvState& s, int side) {
    UnitFeatures f;
    const std::array<Cell, kUnits> units{s.spiders[0], s.spiders[1], s.fly};
    const double inv = 1.0 / side;
    for (int j = 0; j < kUnits; ++j) {
        auto& node = f.node[j];
        node.fill(0.0);
        node[j] = 1.0;
        node[kUnits] = units[j].x * inv;
        node[kUnits + 1] = units[j].y * inv;
        for (int r = 0; r < UnitFeatures::kEdgesPerUnit; ++r) {
            const Cell& t = units[UnitFeatures::edge_target(j, r)];
            auto& e = f.edge[j * UnitFeatures::kEdgesPerUnit + r];
            e[0] = (t.x - units[j].x) * inv;
            e[1] = (t.y - units[j].y) * inv;
        }
    }
    return f;
}

std::int64_t state_count(const GridConfig& cfg) {
    const std::int64_t cells = static_cast<std::int64_t>(cfg.side) * cfg.side;
    return cells * cells * cells;
}

std::int64_t state_index(const EnvState& s, int side) {
    auto c = [side](Cell x) { return static_cast<std::int64_t>(x.x) * side + x.y; };
    const std::int64_t cells = static_cast<std::int64_t>(side) * side;
    return (c(s.spiders[0]) * cells + c(s.spiders[1])) * cells + c(s.fly);
}

EnvState state_from_index(std::int64_t index, int side) {
    const std::int64_t cells = static_cast<std::int64_t>(side) * side;
    auto cell = [side](std::int64_t c) { return Cell{static_cast<int>(c / side), static_cast<int>(c % side)}; };
    EnvState s;
    s.fly = cell(index % cells);
    index /= cells;
    s.spiders[1] = cell(index % cells);
    s.spiders[0] = cell(index / cells);
    return s;
}

std::vector<EnvState> enumerate_states(const GridConfig& cfg) {
    cfg.validate();
    if (cfg.side > kMaxEnumerableSide) throw Error("state space too large", "side " + std::to_string(cfg.side));
    const std::int64_t count = state_count(cfg);
    std::vector<EnvState> out;
    out.reserve(count);
    for (std::int64_t i = 0; i < count; ++i) out.push_back(state_from_index(i, cfg.side));
    return out;
}

std::string render(const EnvState& s, int side) {
    std::ostringstream os;
    for (int y = side - 1; y >= 0; --y) {
        for (int x = 0; x < side; ++x) {
            Cell c{x, y};
            char ch = '.';
            if (c == s.fly) ch = 'F';
            if (c == s.spiders[0]) ch = ch == 'F' ? '*' : '0';
            if (c == s.spiders[1]) ch = ch == 'F' ? '*' : (ch == '0' ? '2' : '1');
            os << ch;
        }
        os << '\n';
    }
    return os.str();
}

Env::Env(GridConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) { cfg_.validate(); }

const EnvState& Env::reset() {
    state_ = spiders::reset(cfg_, rng_);
    finished_ = false;
    return state_;
}

StepResult Env::step(std::span<const int> actions) {
    if (finished_) throw Error("episode finished");
    StepResult r = spiders::step(cfg_, state_, actions, rng_);
    state_ = r.state;
    finished_ = r.done;
    return r;
}

}  // namespace ace::spiders
