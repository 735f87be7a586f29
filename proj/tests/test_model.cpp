#include <doctest.h>

#include "ace/error.hpp"
#include "ace/model.hpp"
#include "support.hpp"

using namespace ace;
using namespace ace::model;
using ace::testing::check_gradients;
using ace::testing::random_input;
using ace::testing::randomize;

namespace {

ModelConfig small_config(bool logit = false) {
    ModelConfig cfg;
    cfg.hidden = 6;
    cfg.logit_head = logit;
    return cfg;
}

// Plain-loop unit encoder straight from the parameter tensors.
Matrix<double> naive_units(const AceModel<double>& m, const GraphInput& in) {
    const auto& p = m.params();
    const auto& nw = p[m.node_encoder().weight_id()].value;
    const auto& nb = p[m.node_encoder().bias_id()].value;
    const auto& ew = p[m.edge_encoder().weight_id()].value;
    const auto& eb = p[m.edge_encoder().bias_id()].value;
    const int units = m.config().units, h = m.config().hidden, em = units - 1;
    Matrix<double> out = Matrix<double>::Zero(units, h);
    for (int j = 0; j < units; ++j) {
        for (int k = 0; k < h; ++k) {
            double node = nb(0, k);
            for (int c = 0; c < in.node.cols(); ++c) node += nw(k, c) * in.node(j, c);
            double edge = 0.0;
            for (int r = 0; r < em; ++r) {
                double e = eb(0, k);
                for (int c = 0; c < in.edge.cols(); ++c) e += ew(k, c) * in.edge(j * em + r, c);
                edge += std::max(e, 0.0);
            }
            out(j, k) = std::max(node, 0.0) + edge / em;
        }
    }
    return out;
}

double naive_value(const AceModel<double>& m, const Matrix<double>& units, Head head = Head::value) {
    const auto& p = m.params();
    const auto& hw = p[m.head_hidden(head).weight_id()].value;
    const auto& hb = p[m.head_hidden(head).bias_id()].value;
    const auto& ow = p[m.head_out(head).weight_id()].value;
    const auto& ob = p[m.head_out(head).bias_id()].value;
    const int h = m.config().hidden;
    double total = 0.0;
    for (int k = 0; k < h; ++k) {
        double pooled = 0.0;
        for (int j = 0; j < units.rows(); ++j) {
            double z = hb(0, k);
            for (int c = 0; c < h; ++c) z += hw(k, c) * units(j, c);
            pooled += std::max(z, 0.0);
        }
        total += ow(0, k) * pooled / units.rows();
    }
    return total + ob(0, 0);
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
    ModelConfig cfg;
    CHECK(cfg.parameter_count() == 19201);
    AceModel<float> m(cfg, 1);
    CHECK(m.params().parameter_count() == 19201);
    cfg.logit_head = true;
    CHECK(cfg.parameter_count() == 19201 + 16641);
    AceModel<float> ml(cfg, 1);
    CHECK(ml.params().parameter_count() == cfg.parameter_count());
    cfg.logit_head = false;
    cfg.pooled_hidden = true;
    CHECK(cfg.parameter_count() == 19201 + 128 * 129);
    AceModel<float> mp(cfg, 1);
    CHECK(mp.params().parameter_count() == cfg.parameter_count());
}

TEST_CASE("active table starts at zero and dense weights within the init bound") {
    AceModel<double> m(ModelConfig{}, 3);
    CHECK(m.params()[m.active_table()].value.isZero());
    const auto& w = m.params()[m.head_hidden(Head::value).weight_id()].value;
    CHECK(w.cwiseAbs().maxCoeff() <= std::sqrt(1.0 / 128));
    CHECK(m.params()[m.node_encoder().bias_id()].value.isZero());
}

TEST_CASE("encoder matches a plain-loop recomputation") {
    AceModel<double> m(small_config(), 4);
    randomize(m.params(), 40);
    InferenceNet<double> net(m);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        auto in = random_input(5, rng);
        auto e = net.encode(in);
        CHECK((e.units - naive_units(m, in)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(net.evaluate(e) - naive_value(m, e.units)) < 1e-12);
    }
}

TEST_CASE("composition adds active rows to executors and passive rows to targets") {
    AceModel<double> m(small_config(), 5);
    randomize(m.params(), 50);
    InferenceNet<double> net(m);
    Rng rng(2);
    auto e = net.encode(random_input(5, rng));
    const auto& active = m.params()[m.active_table()].value;
    const ComposedAction seq[2] = {{0, 3, 2}, {1, 1, -1}};
    auto c = net.compose(e, seq);
    CHECK((c.units.row(0) - (e.units.row(0) + active.row(3))).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((c.units.row(1) - (e.units.row(1) + active.row(1))).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((c.units.row(2) - (e.units.row(2) + e.passive.row(0))).cwiseAbs().maxCoeff() < 1e-15);

    SUBCASE("incremental composition is bitwise identical") {
        auto step = net.compose(net.compose(e, std::span(seq, 1)), std::span(seq + 1, 1));
        CHECK(step.units == c.units);
    }
    SUBCASE("order of independent contributions only matters to rounding") {
        const ComposedAction rev[2] = {seq[1], seq[0]};
        CHECK((net.compose(e, rev).units - c.units).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("disabling interaction awareness drops passive terms") {
        AceModel<double> off = m;
        off.set_ia_enabled(false);
        InferenceNet<double> net_off(off);
        auto c_off = net_off.compose(e, seq);
        CHECK(c_off.units.row(2) == e.units.row(2));
    }
}

TEST_CASE("fast rollout equals evaluating each composed successor") {
    AceModel<double> m(small_config(), 6);
    randomize(m.params(), 60);
    InferenceNet<double> net(m);
    Rng rng(3);
    auto e = net.encode(random_input(5, rng));
    const ComposedAction first[1] = {{1, 2, -1}};
    auto base = net.compose(e, first);
    const std::vector<int> actions{0, 1, 2, 3, 4};
    auto fast = net.rollout(base, 0, actions);
    std::vector<ComposedAction> cands;
    for (int a : actions) cands.push_back({0, a, -1});
    auto general = net.rollout(base, cands);
    for (int a : actions) {
        const ComposedAction one[1] = {{0, a, -1}};
        const double direct = net.evaluate(net.compose(base, one));
        CHECK(std::abs(fast[a] - direct) < 1e-12);
        CHECK(general[a] == direct);
    }
    CHECK_THROWS_WITH(net.rollout(base, 0, std::vector<int>{}), doctest::Contains("empty legal set"));
    CHECK_THROWS_WITH(net.rollout(base, 0, std::vector<int>{7}), doctest::Contains("unknown action id"));
}

TEST_CASE("rollouts reuse the base encoding") {
    AceModel<float> m(ModelConfig{}, 7);
    InferenceNet<float> net(m);
    Rng rng(4);
    auto e = net.encode(random_input(5, rng));
    const std::vector<int> actions{0, 1, 2, 3, 4};
    for (int i = 0; i < 10; ++i) net.rollout(e, i % 2, actions);
    CHECK(net.encode_calls() == 1);
}

TEST_CASE("batched forward agrees with single-state inference") {
    AceModel<double> m(small_config(true), 8);
    randomize(m.params(), 80);
    InferenceNet<double> net(m);
    Rng rng(5);
    std::vector<GraphInput> inputs{random_input(5, rng), random_input(5, rng)};
    std::vector<SeQuery> queries{{0, {}}, {0, {{0, 1, -1}}}, {1, {{1, 4, 0}, {0, 2, -1}}}, {0, {{0, 1, -1}}}};
    BatchGraph<double> g;
    g.forward(m, inputs, queries, queries);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto e = net.compose(net.encode(inputs[queries[q].base]), queries[q].prefix);
        CHECK(std::abs(g.values()[q] - net.evaluate(e, Head::value)) < 1e-12);
        CHECK(std::abs(g.logits()[q] - net.evaluate(e, Head::logit)) < 1e-12);
    }
    // base 0: 3 plain rows + executor 0 after action 1; base 1: two modified rows + plain fly row
    CHECK(g.slot_rows() == 3 + 1 + 3);
}

TEST_CASE("batch errors") {
    AceModel<double> m(small_config(), 9);
    Rng rng(6);
    std::vector<GraphInput> inputs{random_input(5, rng)};
    BatchGraph<double> g;
    CHECK_THROWS_WITH(g.forward(m, inputs, std::vector<SeQuery>{{1, {}}}), doctest::Contains("invalid query"));
    CHECK_THROWS_WITH(g.forward(m, inputs, std::vector<SeQuery>{{0, {{0, 9, -1}}}}),
                      doctest::Contains("unknown action id"));
    CHECK_THROWS_WITH(g.forward(m, inputs, std::vector<SeQuery>{{0, {{5, 0, -1}}}}),
                      doctest::Contains("invalid executor or target unit"));
    CHECK_THROWS_WITH(g.forward(m, inputs, std::vector<SeQuery>{{0, {}}}, std::vector<SeQuery>{{0, {}}}),
                      doctest::Contains("invalid query"));
    BatchGraph<double> fresh;
    const std::vector<double> d{1.0};
    CHECK_THROWS_WITH(fresh.backward(m, d), doctest::Contains("no cached activations"));
}

TEST_CASE("value path is identical with or without the logit head") {
    AceModel<float> plain(ModelConfig{}, 11);
    ModelConfig with = ModelConfig{};
    with.logit_head = true;
    AceModel<float> both(with, 11);
    for (int i = 0; i < plain.params().size(); ++i) CHECK(plain.params()[i].value == both.params()[i].value);
    Rng rng(7);
    auto in = random_input(5, rng);
    InferenceNet<float> a(plain), b(both);
    CHECK(a.evaluate(a.encode(in)) == b.evaluate(b.encode(in)));
}

TEST_CASE("without passive targets the interaction flag changes nothing") {
    AceModel<float> m(ModelConfig{}, 12);
    randomize(m.params(), 120);
    AceModel<float> off = m;
    off.set_ia_enabled(false);
    InferenceNet<float> a(m), b(off);
    Rng rng(8);
    const ComposedAction seq[2] = {{0, 1, -1}, {1, 3, -1}};
    for (int i = 0; i < 50; ++i) {
        auto in = random_input(5, rng);
        CHECK(a.evaluate(a.compose(a.encode(in), seq)) == b.evaluate(b.compose(b.encode(in), seq)));
    }
}

TEST_CASE("gradients of every trainable path pass finite differences") {
    AceModel<double> m(small_config(true), 13);
    randomize(m.params(), 130);
    Rng rng(9);
    std::vector<GraphInput> inputs{random_input(5, rng), random_input(5, rng), random_input(5, rng)};
    // passive targets exercise the action encoder
    std::vector<SeQuery> vq{{0, {}}, {0, {{0, 2, 2}}}, {1, {{1, 0, 0}, {0, 4, 2}}}, {2, {{2, 3, 1}}}};
    std::vector<SeQuery> lq{{1, {{0, 1, -1}}}, {2, {{1, 2, 2}, {0, 0, -1}}}};
    const std::vector<double> cv{0.7, -1.3, 0.4, 2.0}, cl{-0.5, 1.1};
    auto loss_of = [&](BatchGraph<double>& g) {
        double l = 0.0;
        for (std::size_t i = 0; i < cv.size(); ++i) l += cv[i] * g.values()[i] + 0.5 * g.values()[i] * g.values()[i];
        for (std::size_t i = 0; i < cl.size(); ++i) l += cl[i] * g.logits()[i];
        return l;
    };
    auto loss = [&] {
        BatchGraph<double> g;
        g.forward(m, inputs, vq, lq);
        return loss_of(g);
    };
    auto analytic = [&] {
        BatchGraph<double> g;
        g.forward(m, inputs, vq, lq);
        std::vector<double> dv(cv.size());
        for (std::size_t i = 0; i < cv.size(); ++i) dv[i] = cv[i] + g.values()[i];
        g.backward(m, dv, cl);
    };
    auto rep = check_gradients(m.params(), loss, analytic);
    INFO("worst " << rep.worst);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.checked == m.params().parameter_count());
    for (const auto& t : m.params()) CHECK_MESSAGE(!t.grad.isZero(), t.name);
}

TEST_CASE("head variants: batch matches inference and gradients pass finite differences") {
    for (Pooling pool : {Pooling::mean, Pooling::max}) {
        for (bool ph : {false, true}) {
            CAPTURE(static_cast<int>(pool));
            CAPTURE(ph);
            ModelConfig cfg = small_config(true);
            cfg.head_pooling = pool;
            cfg.pooled_hidden = ph;
            AceModel<double> m(cfg, 14);
            randomize(m.params(), 140);
            InferenceNet<double> net(m);
            Rng rng(10);
            std::vector<GraphInput> inputs{random_input(5, rng), random_input(5, rng)};
            std::vector<SeQuery> vq{{0, {}}, {0, {{0, 3, 2}}}, {1, {{1, 1, 0}, {0, 2, -1}}}};
            std::vector<SeQuery> lq{{1, {{0, 4, -1}}}};
            BatchGraph<double> g;
            g.forward(m, inputs, vq, lq);
            for (std::size_t q = 0; q < vq.size(); ++q) {
                auto e = net.compose(net.encode(inputs[vq[q].base]), vq[q].prefix);
                CHECK(std::abs(g.values()[q] - net.evaluate(e)) < 1e-12);
            }
            const std::vector<int> acts{0, 1, 2, 3, 4};
            auto base = net.encode(inputs[0]);
            auto fast = net.rollout(base, 1, acts);
            for (int a : acts) {
                const ComposedAction one[1] = {{1, a, -1}};
                CHECK(std::abs(fast[a] - net.evaluate(net.compose(base, one))) < 1e-12);
            }
            const std::vector<double> cv{0.3, -0.8, 1.2};
            auto loss = [&] {
                BatchGraph<double> b;
                b.forward(m, inputs, vq, lq);
                double l = b.logits()[0];
                for (std::size_t i = 0; i < cv.size(); ++i) l += cv[i] * b.values()[i];
                return l;
            };
            auto analytic = [&] {
                BatchGraph<double> b;
                b.forward(m, inputs, vq, lq);
                const std::vector<double> dl{1.0};
                b.backward(m, cv, dl);
            };
            auto rep = check_gradients(m.params(), loss, analytic);
            INFO("worst " << rep.worst);
            CHECK(rep.max_rel_error < 1e-4);
        }
    }
}
