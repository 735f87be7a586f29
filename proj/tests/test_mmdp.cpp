#include <doctest.h>

#include <set>

#include "ace/mmdp.hpp"

using namespace ace;
using namespace ace::mmdp;

namespace {

struct Toy {
    int id = 0;
    friend bool operator==(const Toy&, const Toy&) = default;
};

const std::vector<ActionId> kSpace{0, 1, 2, 3, 4};

}  // namespace

TEST_CASE("agent order rejects non-permutations") {
    CHECK_THROWS_AS(AgentOrder({0, 0}), Error);
    CHECK_THROWS_AS(AgentOrder({1, 2}), Error);
    CHECK_NOTHROW(AgentOrder({1, 0}));
    const auto o = AgentOrder({2, 0, 1});
    CHECK(o.agent_at(0) == 2);
    CHECK(o.position_of(1) == 2);
}

TEST_CASE("shuffled orders cover every permutation of three agents") {
    Rng rng(7);
    std::set<std::vector<int>> seen;
    for (int i = 0; i < 600; ++i) {
        const auto o = AgentOrder::shuffled(3, rng);
        seen.emplace(o.permutation().begin(), o.permutation().end());
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("joint action maps positions back to agents") {
    JointAction ja{{3, 1}};
    CHECK(ja.by_agent(AgentOrder::sorted(2)) == std::vector<int>{3, 1});
    CHECK(ja.by_agent(AgentOrder({1, 0})) == std::vector<int>{1, 3});
    CHECK_THROWS_AS(ja.by_agent(AgentOrder::sorted(3)), Error);
}

TEST_CASE("successor appends the action and keeps the base") {
    SEState<Toy> s{{5}, {}, AgentOrder::sorted(2)};
    CHECK(s.next_agent() == 0);
    auto s1 = se_successor(s, 2, kSpace);
    CHECK(s1.prefix == std::vector<int>{2});
    CHECK(s1.base.id == 5);
    CHECK(s1.next_agent() == 1);
    auto s2 = se_successor(s1, 4, kSpace);
    CHECK(s2.complete());
    CHECK_THROWS_WITH(se_successor(s2, 0, kSpace), doctest::Contains("sequence complete"));
    CHECK_THROWS_WITH(se_successor(s, 9, kSpace), doctest::Contains("illegal action"));
}

TEST_CASE("candidates are unique and ascending") {
    SEState<Toy> s{{1}, {3}, AgentOrder::sorted(2)};
    const std::vector<ActionId> space{4, 0, 2, 0};
    auto c = enumerate_candidates(s, space);
    REQUIRE(c.size() == 3);
    CHECK(c[0].prefix == std::vector<int>{3, 0});
    CHECK(c[1].prefix == std::vector<int>{3, 2});
    CHECK(c[2].prefix == std::vector<int>{3, 4});
}

TEST_CASE("expansion yields n intermediate transitions") {
    Transition<Toy> t{{1}, JointAction{{2, 3}}, 10.0, {2}, true, false, AgentOrder({1, 0})};
    auto e = expand_transition(t);
    REQUIRE(e.size() == 2);
    CHECK(e[0].from.prefix.empty());
    CHECK(e[0].action == 2);
    CHECK(e[0].reward == 0.0);
    CHECK_FALSE(e[0].done);
    CHECK(e[0].to.prefix == std::vector<int>{2});
    CHECK(e[1].from == e[0].to);
    CHECK(e[1].reward == 10.0);
    CHECK(e[1].done);
    CHECK(e[1].to.base.id == 2);
    CHECK(e[1].to.prefix.empty());
    CHECK(e[1].to.order == t.order);

    Transition<Toy> bad = t;
    bad.joint_action.actions = {1};
    CHECK_THROWS_WITH(expand_transition(bad), doctest::Contains("malformed transition"));
}

TEST_CASE("single agent expansion is the original transition") {
    Transition<Toy> t{{1}, JointAction{{4}}, 0.0, {3}, false, false, AgentOrder::sorted(1)};
    auto e = expand_transition(t);
    REQUIRE(e.size() == 1);
    CHECK(e[0].to.base.id == 3);
}

TEST_CASE("derived seeds do not depend on other indices") {
    CHECK(derive_seed(1, Stream::collector, 3) == derive_seed(1, Stream::collector, 3));
    CHECK(derive_seed(1, Stream::collector, 3) != derive_seed(1, Stream::collector, 4));
    CHECK(derive_seed(1, Stream::collector, 0) != derive_seed(1, Stream::replay, 0));
    CHECK(derive_seed(1, Stream::collector, 0) != derive_seed(2, Stream::collector, 0));
}
