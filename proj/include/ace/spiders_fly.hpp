#pragma once

// Spiders-and-Fly: two controlled spiders chase an evasive fly on an L x L grid.

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ace/rng.hpp"

namespace ace::spiders {

inline constexpr int kSpiders = 2;
inline constexpr int kUnits = 3;  // spider 0, spider 1, fly
inline constexpr int kActions = 5;
inline constexpr int kMaxEnumerableSide = 7;

/// Action ids. "up" increases y.
enum Move : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };

inline constexpr std::array<int, kActions> kAllActions{kUp, kDown, kLeft, kRight, kStay};

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

struct GridConfig {
    int side = 5;
    int max_steps = 100;
    int min_start_distance = 4;

    /// Start threshold actually applied: grids below 5 cannot honor 4.
    int start_distance() const { return side < 5 ? std::min(min_start_distance, side - 1) : min_start_distance; }
    void validate() const;
};

struct EnvState {
    std::array<Cell, kSpiders> spiders{};
    Cell fly{};
    int step_count = 0;
    friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct UnitFeatures {
    static constexpr int kNodeDim = kUnits + 2;
    static constexpr int kEdgeDim = 2;
    static constexpr int kEdgesPerUnit = kUnits - 1;
    static constexpr int kEdges = kUnits * kEdgesPerUnit;

    /// one-hot unit id ++ (x/L, y/L)
    std::array<std::array<double, kNodeDim>, kUnits> node{};
    /// edge j*(m-1)+r is (j -> k), k the r-th unit other than j in ascending
    /// order; value ((x_k - x_j)/L, (y_k - y_j)/L)
    std::array<std::array<double, kEdgeDim>, kEdges> edge{};

    static constexpr int edge_target(int source, int r) { return r < source ? r : r + 1; }
    friend bool operator==(const UnitFeatures&, const UnitFeatures&) = default;
};

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;
    bool caught = false;
    bool timeout = false;
};

Cell apply_move(Cell c, int action, int side);
bool caught(const EnvState& s);
bool terminal(const EnvState& s, const GridConfig& cfg);
bool in_bounds(Cell c, int side);

/// In-bounds 4-neighbours of the fly that are neither a spider cell nor
/// Manhattan-adjacent to a spider, in up/down/left/right order.
std::vector<Cell> fly_safe_moves(const EnvState& s, int side);
Cell fly_move(const EnvState& s, int side, Rng& rng);

bool legal_start(const EnvState& s, const GridConfig& cfg);
EnvState reset(const GridConfig& cfg, Rng& rng);

/// Move spiders simultaneously, check catch, move fly, check catch again.
/// `actions` is indexed by spider.
StepResult step(const GridConfig& cfg, const EnvState& s, std::span<const int> actions, Rng& rng);

/// Spider move only; the fly response is handled by the caller. Used by the
/// exact solvers which enumerate the fly's moves.
EnvState move_spiders(const EnvState& s, std::span<const int> actions, int side);

UnitFeatures features(const EnvState& s, int side);

std::int64_t state_count(const GridConfig& cfg);
std::int64_t state_index(const EnvState& s, int side);
EnvState state_from_index(std::int64_t index, int side);
std::vector<EnvState> enumerate_states(const GridConfig& cfg);

std::string render(const EnvState& s, int side);

/// An environment instance with its own random stream.
class Env {
public:
    Env(GridConfig cfg, std::uint64_t seed);

    const EnvState& reset();
    StepResult step(std::span<const int> actions);

    const EnvState& state() const { return state_; }
    const GridConfig& config() const { return cfg_; }
    bool finished() const { return finished_; }
    Rng& rng() { return rng_; }

private:
    GridConfig cfg_;
    Rng rng_;
    EnvState state_{};
    bool finished_ = true;
};

}  // namespace ace::spiders
