#include <doctest.h>

#include <cmath>
#include <map>

#include "ace/error.hpp"
#include "ace/spiders_fly.hpp"

using namespace ace;
using namespace ace::spiders;

namespace {

EnvState make(Cell s0, Cell s1, Cell fly, int steps = 0) {
    EnvState s;
    s.spiders = {s0, s1};
    s.fly = fly;
    s.step_count = steps;
    return s;
}

}  // namespace

TEST_CASE("moves follow the action table and clamp at walls") {
    CHECK(apply_move({2, 2}, kUp, 5) == Cell{2, 3});
    CHECK(apply_move({2, 2}, kDown, 5) == Cell{2, 1});
    CHECK(apply_move({2, 2}, kLeft, 5) == Cell{1, 2});
    CHECK(apply_move({2, 2}, kRight, 5) == Cell{3, 2});
    CHECK(apply_move({2, 2}, kStay, 5) == Cell{2, 2});
    CHECK(apply_move({0, 0}, kLeft, 5) == Cell{0, 0});
    CHECK(apply_move({0, 0}, kDown, 5) == Cell{0, 0});
    CHECK(apply_move({4, 4}, kUp, 5) == Cell{4, 4});
    CHECK_THROWS_WITH(apply_move({0, 0}, 5, 5), doctest::Contains("illegal action"));
}

TEST_CASE("fly avoids spider cells and their neighbours") {
    // open board: all four moves
    CHECK(fly_safe_moves(make({0, 0}, {4, 4}, {2, 2}), 5).size() == 4);
    // only right is clear
    auto safe = fly_safe_moves(make({2, 4}, {1, 1}, {2, 2}), 5);
    REQUIRE(safe.size() == 1);
    CHECK(safe[0] == Cell{3, 2});
    // cornered: no safe move, fly stays
    auto s = make({1, 1}, {4, 4}, {0, 0});
    CHECK(fly_safe_moves(s, 5).empty());
    Rng rng(3);
    CHECK(fly_move(s, 5, rng) == Cell{0, 0});
}

TEST_CASE("fly picks uniformly among safe moves") {
    Rng rng(11);
    std::map<std::pair<int, int>, int> counts;
    const int draws = 40000;
    auto s = make({0, 0}, {4, 4}, {2, 2});
    for (int i = 0; i < draws; ++i) {
        Cell c = fly_move(s, 5, rng);
        ++counts[{c.x, c.y}];
    }
    REQUIRE(counts.size() == 4);
    // 5 sigma of a binomial(draws, 1/4)
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (auto& [k, n] : counts) CHECK(std::abs(n - draws / 4.0) < 5 * sigma);
}

TEST_CASE("spider stepping onto the fly catches before the fly moves") {
    Rng rng(1);
    GridConfig cfg;
    const int a[2] = {kRight, kStay};
    auto r = step(cfg, make({1, 0}, {4, 4}, {2, 0}), a, rng);
    CHECK(r.caught);
    CHECK(r.done);
    CHECK_FALSE(r.timeout);
    CHECK(r.reward == 10.0);
    CHECK(r.state.fly == Cell{2, 0});
    CHECK(r.state.step_count == 1);
}

TEST_CASE("no catch gives zero reward and the fly responds to the new spider cells") {
    Rng rng(1);
    GridConfig cfg;
    const int a[2] = {kUp, kStay};
    auto r = step(cfg, make({2, 2}, {0, 0}, {3, 0}), a, rng);
    CHECK(r.reward == 0.0);
    CHECK_FALSE(r.done);
    for (Cell sp : r.state.spiders) CHECK(manhattan(sp, r.state.fly) >= 1);
}

TEST_CASE("episode times out at max_steps") {
    Rng rng(2);
    GridConfig cfg;
    cfg.max_steps = 2;
    const int a[2] = {kStay, kStay};
    auto s = make({0, 0}, {0, 0}, {4, 4});
    auto r1 = step(cfg, s, a, rng);
    CHECK_FALSE(r1.done);
    auto r2 = step(cfg, r1.state, a, rng);
    CHECK(r2.done);
    CHECK(r2.timeout);
    CHECK(r2.reward == 0.0);
    CHECK_THROWS_WITH(step(cfg, r2.state, a, rng), doctest::Contains("episode finished"));
}

TEST_CASE("reset honours the start distance") {
    for (int side : {3, 4, 5, 7}) {
        GridConfig cfg;
        cfg.side = side;
        Rng rng(side);
        const int thr = cfg.start_distance();
        for (int i = 0; i < 5000; ++i) {
            auto s = reset(cfg, rng);
            CHECK(s.step_count == 0);
            for (Cell sp : s.spiders) REQUIRE(manhattan(sp, s.fly) > thr);
        }
    }
    GridConfig bad;
    bad.min_start_distance = 8;
    Rng rng(0);
    CHECK_THROWS_WITH(reset(bad, rng), doctest::Contains("infeasible start constraint"));
}

TEST_CASE("features encode id, scaled position and relative offsets") {
    auto f = features(make({0, 0}, {4, 4}, {2, 1}), 5);
    using A5 = std::array<double, 5>;
    CHECK(f.node[0] == A5{1, 0, 0, 0.0, 0.0});
    CHECK(f.node[1] == A5{0, 1, 0, 0.8, 0.8});
    CHECK(f.node[2] == A5{0, 0, 1, 0.4, 0.2});
    auto near = [](std::array<double, 2> e, double x, double y) {
        return std::abs(e[0] - x) < 1e-12 && std::abs(e[1] - y) < 1e-12;
    };
    CHECK(near(f.edge[0], 0.8, 0.8));    // 0 -> 1
    CHECK(near(f.edge[1], 0.4, 0.2));    // 0 -> fly
    CHECK(near(f.edge[2], -0.8, -0.8));  // 1 -> 0
    CHECK(near(f.edge[3], -0.4, -0.6));  // 1 -> fly
    CHECK(near(f.edge[4], -0.4, -0.2));  // fly -> 0
    CHECK(near(f.edge[5], 0.4, 0.6));    // fly -> 1
}

TEST_CASE("state index round trips") {
    GridConfig cfg;
    cfg.side = 3;
    auto all = enumerate_states(cfg);
    REQUIRE(all.size() == 729);
    for (std::int64_t i = 0; i < 729; ++i) {
        CHECK(state_index(all[i], 3) == i);
        CHECK(state_from_index(i, 3) == all[i]);
    }
    GridConfig big;
    big.side = 8;
    CHECK_THROWS_WITH(enumerate_states(big), doctest::Contains("state space too large"));
}

TEST_CASE("env fuzz keeps every rule") {
    GridConfig cfg;
    Env env(cfg, 99);
    Rng pick(5);
    env.reset();
    for (int i = 0; i < 100000; ++i) {
        const auto prev = env.state();
        const int a[2] = {uniform_int(pick, 0, 4), uniform_int(pick, 0, 4)};
        const auto moved = move_spiders(prev, a, cfg.side);
        auto r = env.step(a);
        for (Cell sp : r.state.spiders) REQUIRE(in_bounds(sp, cfg.side));
        REQUIRE((r.reward == 0.0 || r.reward == 10.0));
        REQUIRE((r.reward == 10.0) == caught(r.state));
        if (!caught(moved) && r.state.fly != prev.fly) {
            for (Cell sp : moved.spiders) REQUIRE(manhattan(sp, r.state.fly) > 1);
        }
        if (r.done) env.reset();
    }
}

TEST_CASE("render marks units") {
    auto s = make({0, 0}, {0, 0}, {2, 2});
    auto out = render(s, 3);
    CHECK(out == "..F\n...\n2..\n");
}
