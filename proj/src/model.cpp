#include "ace/model.hpp"

#include <map>

namespace ace::model {

std::int64_t ModelConfig::parameter_count() const {
    const std::int64_t h = hidden;
    const std::int64_t head = h * (h + 1) * (pooled_hidden ? 2 : 1) + h + 1;
    return h * (node_dim + 1) + h * (edge_dim + 1) + static_cast<std::int64_t>(actions) * h + h * (node_dim + 1) +
           head * (logit_head ? 2 : 1);
}

GraphInput from_features(const spiders::UnitFeatures& f) {
    using F = spiders::UnitFeatures;
    GraphInput in;
    in.node.resize(spiders::kUnits, F::kNodeDim);
    in.edge.resize(F::kEdges, F::kEdgeDim);
    for (int j = 0; j < spiders::kUnits; ++j)
        for (int c = 0; c < F::kNodeDim; ++c) in.node(j, c) = f.node[j][c];
    for (int e = 0; e < F::kEdges; ++e)
        for (int c = 0; c < F::kEdgeDim; ++c) in.edge(e, c) = f.edge[e][c];
    return in;
}

template <class T>
AceModel<T>::AceModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.hidden < 1 || cfg.units < 1 || cfg.actions < 1) throw Error("invalid config", "model dimensions");
    const int h = cfg.hidden;
    node_ = nn::DenseBlock<T>(params_, "node", cfg.node_dim, h, nn::Activation::relu);
    edge_ = nn::DenseBlock<T>(params_, "edge", cfg.edge_dim, h, nn::Activation::relu);
    active_ = params_.add("active.table", cfg.actions, h);
    passive_ = nn::DenseBlock<T>(params_, "passive", cfg.node_dim, h, nn::Activation::relu);
    value_hidden_ = nn::DenseBlock<T>(params_, "value.hidden", h, h, nn::Activation::relu);
    if (cfg.pooled_hidden)
        value_pooled_ = nn::DenseBlock<T>(params_, "value.pooled", h, h, nn::Activation::relu);
    value_out_ = nn::DenseBlock<T>(params_, "value.out", h, 1, nn::Activation::identity);
    if (cfg.logit_head) {
        logit_hidden_ = nn::DenseBlock<T>(params_, "logit.hidden", h, h, nn::Activation::relu);
        if (cfg.pooled_hidden)
            logit_pooled_ = nn::DenseBlock<T>(params_, "logit.pooled", h, h, nn::Activation::relu);
        logit_out_ = nn::DenseBlock<T>(params_, "logit.out", h, 1, nn::Activation::identity);
    }
    // Initialisation order is fixed so that the value path is identical with
    // or without the logit head. The active table starts at zero.
    Rng rng(seed);
    node_.init(params_, rng);
    edge_.init(params_, rng);
    passive_.init(params_, rng);
    value_hidden_.init(params_, rng);
    if (cfg.pooled_hidden) value_pooled_.init(params_, rng);
    value_out_.init(params_, rng);
    if (cfg.logit_head) {
        logit_hidden_.init(params_, rng);
        if (cfg.pooled_hidden) logit_pooled_.init(params_, rng);
        logit_out_.init(params_, rng);
    }
}

template <class T>
std::vector<std::vector<int>> BatchGraph<T>::build_groups(const ModelConfig& cfg, std::span<const SeQuery> queries) {
    const int m = cfg.units;
    std::vector<std::vector<int>> groups;
    groups.reserve(queries.size());
    std::map<std::vector<int>, int> index;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        std::vector<int> key{slots_[s].unit_row};
        for (auto [k, id] : slots_[s].adds) {
            key.push_back(k);
            key.push_back(id);
        }
        index.emplace(std::move(key), static_cast<int>(s));
    }
    for (const auto& q : queries) {
        if (q.base < 0 || q.base >= bases_) throw Error("invalid query", "base index out of range");
        for (const auto& a : q.prefix) {
            if (a.action < 0 || a.action >= cfg.actions) throw Error("unknown action id", std::to_string(a.action));
            if (a.executor < 0 || a.executor >= m || a.target >= m) throw Error("invalid executor or target unit");
        }
        std::vector<int> group(m);
        for (int j = 0; j < m; ++j) {
            Slot slot;
            slot.unit_row = q.base * m + j;
            for (const auto& a : q.prefix) {
                if (a.executor == j) slot.adds.emplace_back(0, a.action);
                if (cfg.ia_enabled && a.target == j) slot.adds.emplace_back(1, q.base * m + a.executor);
            }
            std::vector<int> key{slot.unit_row};
            for (auto [k, id] : slot.adds) {
                key.push_back(k);
                key.push_back(id);
            }
            auto [it, inserted] = index.emplace(std::move(key), static_cast<int>(slots_.size()));
            if (inserted) slots_.push_back(std::move(slot));
            group[j] = it->second;
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

template <class T>
void BatchGraph<T>::forward(const AceModel<T>& model, std::span<const GraphInput> inputs,
                            std::span<const SeQuery> value_queries, std::span<const SeQuery> logit_queries) {
    const auto& cfg = model.config();
    const auto& params = model.params();
    const int m = cfg.units;
    const int em = m - 1;
    bases_ = static_cast<std::int64_t>(inputs.size());
    if (!logit_queries.empty() && !cfg.logit_head) throw Error("invalid query", "model has no logit head");

    Matrix<T> xn(bases_ * m, cfg.node_dim);
    Matrix<T> xe(bases_ * m * em, cfg.edge_dim);
    for (std::int64_t b = 0; b < bases_; ++b) {
        const auto& in = inputs[b];
        if (in.node.rows() != m || in.node.cols() != cfg.node_dim || in.edge.rows() != m * em ||
            in.edge.cols() != cfg.edge_dim)
            throw Error("dimension mismatch", "feature shape");
        xn.middleRows(b * m, m) = in.node.template cast<T>();
        xe.middleRows(b * m * em, m * em) = in.edge.template cast<T>();
    }
    Matrix<T> nodes = model.node_encoder().forward(params, xn, &node_cache_);
    Matrix<T> edges = model.edge_encoder().forward(params, xe, &edge_cache_);
    edge_groups_.assign(bases_ * m, {});
    for (std::int64_t u = 0; u < bases_ * m; ++u)
        for (int r = 0; r < em; ++r) edge_groups_[u].push_back(static_cast<int>(u * em + r));
    units_ = nodes + nn::mean_pool<T>(edges, edge_groups_);

    slots_.clear();
    value_head_.groups = build_groups(cfg, value_queries);
    logit_head_.groups = build_groups(cfg, logit_queries);

    passive_used_ = false;
    for (const auto& s : slots_)
        for (auto [k, id] : s.adds) passive_used_ = passive_used_ || k == 1;
    if (passive_used_) passive_ = model.passive_encoder().forward(params, xn, &passive_cache_);

    const auto& active = params[model.active_table()].value;
    slot_values_.resize(static_cast<Eigen::Index>(slots_.size()), cfg.hidden);
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        auto row = slot_values_.row(s);
        row = units_.row(slots_[s].unit_row);
        for (auto [k, id] : slots_[s].adds) {
            if (k == 0)
                row += active.row(id);
            else
                row += passive_.row(id);
        }
    }
    values_ = head_forward(model, Head::value, value_head_);
    logits_ = head_forward(model, Head::logit, logit_head_);
}

template <class T>
std::vector<T> BatchGraph<T>::head_forward(const AceModel<T>& model, Head head, HeadCache& cache) {
    cache.used = !cache.groups.empty();
    if (!cache.used) return {};
    const auto& params = model.params();
    Matrix<T> hidden = model.head_hidden(head).forward(params, slot_values_, &cache.hidden);
    Matrix<T> pooled = model.config().head_pooling == Pooling::max ? nn::max_pool<T>(hidden, cache.groups, &cache.argmax)
                                                                   : nn::mean_pool<T>(hidden, cache.groups);
    if (model.config().pooled_hidden) pooled = model.head_pooled(head).forward(params, pooled, &cache.pooled);
    Matrix<T> out = model.head_out(head).forward(params, pooled, &cache.out);
    return std::vector<T>(out.data(), out.data() + out.size());
}

template <class T>
void BatchGraph<T>::head_backward(AceModel<T>& model, Head head, HeadCache& cache, std::span<const T> dout,
                                  Matrix<T>& dslots) {
    if (!cache.used) return;
    if (dout.size() != cache.groups.size()) throw Error("dimension mismatch", "upstream gradient");
    auto& params = model.params();
    Matrix<T> d(static_cast<Eigen::Index>(dout.size()), 1);
    for (std::size_t i = 0; i < dout.size(); ++i) d(i, 0) = dout[i];
    Matrix<T> dpooled = model.head_out(head).backward(params, d, cache.out);
    if (model.config().pooled_hidden) dpooled = model.head_pooled(head).backward(params, dpooled, cache.pooled);
    Matrix<T> dhidden = model.config().head_pooling == Pooling::max
                            ? nn::max_pool_backward<T>(dpooled, cache.argmax, dslots.rows())
                            : nn::mean_pool_backward<T>(dpooled, cache.groups, dslots.rows());
    dslots += model.head_hidden(head).backward(params, dhidden, cache.hidden);
}

template <class T>
void BatchGraph<T>::backward(AceModel<T>& model, std::span<const T> dvalues, std::span<const T> dlogits) {
    if (!node_cache_.valid) throw Error("no cached activations");
    auto& params = model.params();
    Matrix<T> dslots = Matrix<T>::Zero(slot_values_.rows(), slot_values_.cols());
    head_backward(model, Head::value, value_head_, dvalues, dslots);
    head_backward(model, Head::logit, logit_head_, dlogits, dslots);

    Matrix<T> dunits = Matrix<T>::Zero(units_.rows(), units_.cols());
    Matrix<T> dpassive;
    if (passive_used_) dpassive = Matrix<T>::Zero(passive_.rows(), passive_.cols());
    auto& dactive = params[model.active_table()].grad;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        const auto row = dslots.row(s);
        dunits.row(slots_[s].unit_row) += row;
        for (auto [k, id] : slots_[s].adds) {
            if (k == 0)
                dactive.row(id) += row;
            else
                dpassive.row(id) += row;
        }
    }
    const Matrix<T> dedges = nn::mean_pool_backward<T>(dunits, edge_groups_, edge_cache_.pre.rows());
    model.node_encoder().backward(params, dunits, node_cache_);
    model.edge_encoder().backward(params, dedges, edge_cache_);
    if (passive_used_) model.passive_encoder().backward(params, dpassive, passive_cache_);
}

template <class T>
InferenceNet<T>::InferenceNet(const AceModel<T>& model) : cfg_(model.config()) {
    const auto& p = model.params();
    auto take = [&](const nn::DenseBlock<T>& d, Matrix<T>& w, nn::RowVector<T>& b) {
        w = p[d.weight_id()].value;
        b = p[d.bias_id()].value.row(0);
    };
    take(model.node_encoder(), node_w_, node_b_);
    take(model.edge_encoder(), edge_w_, edge_b_);
    take(model.passive_encoder(), passive_w_, passive_b_);
    active_ = p[model.active_table()].value;
    auto head = [&](Head h, HeadWeights& hw) {
        take(model.head_hidden(h), hw.hidden_w, hw.hidden_b);
        if (cfg_.pooled_hidden) take(model.head_pooled(h), hw.pooled_w, hw.pooled_b);
        hw.out_w = p[model.head_out(h).weight_id()].value.row(0);
        hw.out_b = p[model.head_out(h).bias_id()].value(0, 0);
        hw.active_proj = active_ * hw.hidden_w.transpose();
    };
    head(Head::value, value_);
    if (cfg_.logit_head) head(Head::logit, logit_);
}

template <class T>
const typename InferenceNet<T>::HeadWeights& InferenceNet<T>::head(Head h) const {
    if (h == Head::logit && !cfg_.logit_head) throw Error("invalid query", "model has no logit head");
    return h == Head::value ? value_ : logit_;
}

template <class T>
Matrix<T> InferenceNet<T>::dense_relu(const Matrix<T>& x, const Matrix<T>& w, const nn::RowVector<T>& b) const {
    Matrix<T> y = x * w.transpose();
    y.rowwise() += b;
    return y.cwiseMax(T(0));
}

template <class T>
typename InferenceNet<T>::Embedding InferenceNet<T>::encode(const GraphInput& input) const {
    const int m = cfg_.units, em = m - 1;
    if (input.node.rows() != m || input.node.cols() != cfg_.node_dim || input.edge.rows() != m * em ||
        input.edge.cols() != cfg_.edge_dim)
        throw Error("dimension mismatch", "feature shape");
    encode_calls_->fetch_add(1, std::memory_order_relaxed);
    const Matrix<T> xn = input.node.template cast<T>();
    const Matrix<T> edges = dense_relu(input.edge.template cast<T>(), edge_w_, edge_b_);
    Embedding e;
    e.units = dense_relu(xn, node_w_, node_b_);
    if (em > 0) {
        const T scale = T(1) / static_cast<T>(em);
        for (int j = 0; j < m; ++j) {
            nn::RowVector<T> acc = nn::RowVector<T>::Zero(cfg_.hidden);
            for (int r = 0; r < em; ++r) acc += edges.row(j * em + r);
            acc *= scale;
            e.units.row(j) += acc;
        }
    }
    if (cfg_.ia_enabled) e.passive = dense_relu(xn, passive_w_, passive_b_);
    return e;
}

template <class T>
typename InferenceNet<T>::Embedding InferenceNet<T>::compose(const Embedding& e,
                                                              std::span<const ComposedAction> prefix) const {
    Embedding out = e;
    for (const auto& a : prefix) {
        if (a.action < 0 || a.action >= cfg_.actions) throw Error("unknown action id", std::to_string(a.action));
        if (a.executor < 0 || a.executor >= cfg_.units || a.target >= cfg_.units)
            throw Error("invalid executor or target unit");
        out.units.row(a.executor) += active_.row(a.action);
        if (cfg_.ia_enabled && a.target >= 0) out.units.row(a.target) += e.passive.row(a.executor);
    }
    return out;
}

template <class T>
T InferenceNet<T>::readout(const HeadWeights& hw, const Matrix<T>& hidden) const {
    nn::RowVector<T> pooled;
    if (cfg_.head_pooling == Pooling::max) {
        pooled = hidden.row(0);
        for (int j = 1; j < cfg_.units; ++j) pooled = pooled.cwiseMax(hidden.row(j));
    } else {
        pooled = nn::RowVector<T>::Zero(cfg_.hidden);
        for (int j = 0; j < cfg_.units; ++j) pooled += hidden.row(j);
        pooled *= T(1) / static_cast<T>(cfg_.units);
    }
    if (cfg_.pooled_hidden) {
        nn::RowVector<T> z = pooled * hw.pooled_w.transpose() + hw.pooled_b;
        pooled = z.cwiseMax(T(0));
    }
    return pooled.dot(hw.out_w) + hw.out_b;
}

template <class T>
T InferenceNet<T>::evaluate(const Embedding& composed, Head h) const {
    const auto& hw = head(h);
    return readout(hw, dense_relu(composed.units, hw.hidden_w, hw.hidden_b));
}

template <class T>
std::vector<T> InferenceNet<T>::rollout(const Embedding& composed, int executor, std::span<const int> actions,
                                        Head h) const {
    if (actions.empty()) throw Error("empty legal set");
    if (executor < 0 || executor >= cfg_.units) throw Error("invalid executor or target unit");
    const auto& hw = head(h);
    Matrix<T> pre = composed.units * hw.hidden_w.transpose();
    pre.rowwise() += hw.hidden_b;
    Matrix<T> hidden = pre.cwiseMax(T(0));
    std::vector<T> out;
    out.reserve(actions.size());
    for (int a : actions) {
        if (a < 0 || a >= cfg_.actions) throw Error("unknown action id", std::to_string(a));
        hidden.row(executor) = (pre.row(executor) + hw.active_proj.row(a)).cwiseMax(T(0));
        out.push_back(readout(hw, hidden));
    }
    return out;
}

template <class T>
std::vector<T> InferenceNet<T>::rollout(const Embedding& composed, std::span<const ComposedAction> candidates,
                                        Head h) const {
    if (candidates.empty()) throw Error("empty legal set");
    std::vector<T> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        const ComposedAction one[1] = {c};
        out.push_back(evaluate(compose(composed, one), h));
    }
    return out;
}

template class AceModel<float>;
template class AceModel<double>;
template class BatchGraph<float>;
template class BatchGraph<double>;
template class InferenceNet<float>;
template class InferenceNet<double>;

}  // namespace ace::model
