#pragma once

// SE-state network: unit encoder (node + mean-pooled edge embeddings),
// active/passive action embeddings composed additively onto unit slots,
// and per-unit fc-relu -> mean-pool -> fc heads for values and logits.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ace/neural.hpp"
#include "ace/spiders_fly.hpp"

namespace ace::model {

template <class T>
using Matrix = nn::Matrix<T>;

/// How the heads reduce per-unit hidden rows. Edges are always mean-pooled.
enum class Pooling { mean, max };

struct ModelConfig {
    int hidden = 128;
    int units = spiders::kUnits;
    int node_dim = spiders::UnitFeatures::kNodeDim;
    int edge_dim = spiders::UnitFeatures::kEdgeDim;
    int actions = spiders::kActions;
    /// Interaction-aware embedding: add passive vectors to target slots.
    bool ia_enabled = true;
    /// Second head with the value head's architecture, used by ACE-PPO.
    bool logit_head = false;
    Pooling head_pooling = Pooling::mean;
    /// fc-relu between the pooled vector and the scalar output.
    bool pooled_hidden = false;

    /// node H(d_n+1) + edge H(d_e+1) + active A*H + passive H(d_n+1)
    /// + per head [H(H+1) + H + 1]
    std::int64_t parameter_count() const;
};

/// Per-state encoder input. Edge rows are source-major: row j*(m-1)+r is
/// (j -> r-th other unit in ascending order).
struct GraphInput {
    Matrix<double> node;
    Matrix<double> edge;
};

GraphInput from_features(const spiders::UnitFeatures& f);

/// One committed decision: `action` by unit `executor`; `target` >= 0 when
/// the action carries a passive embedding onto that unit.
struct ComposedAction {
    int executor = 0;
    int action = 0;
    int target = -1;
};

enum class Head { value, logit };

/// One SE-state in a batch: base state index plus its prefix.
struct SeQuery {
    int base = 0;
    std::vector<ComposedAction> prefix;
};

template <class T>
class AceModel {
public:
    AceModel(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    const nn::DenseBlock<T>& node_encoder() const { return node_; }
    const nn::DenseBlock<T>& edge_encoder() const { return edge_; }
    const nn::DenseBlock<T>& passive_encoder() const { return passive_; }
    const nn::DenseBlock<T>& head_hidden(Head h) const { return h == Head::value ? value_hidden_ : logit_hidden_; }
    const nn::DenseBlock<T>& head_out(Head h) const { return h == Head::value ? value_out_ : logit_out_; }
    const nn::DenseBlock<T>& head_pooled(Head h) const { return h == Head::value ? value_pooled_ : logit_pooled_; }
    int active_table() const { return active_; }

    void set_ia_enabled(bool on) { cfg_.ia_enabled = on; }

private:
    ModelConfig cfg_;
    nn::ParamStore<T> params_;
    nn::DenseBlock<T> node_, edge_, passive_;
    int active_ = -1;
    nn::DenseBlock<T> value_hidden_, value_pooled_, value_out_;
    nn::DenseBlock<T> logit_hidden_, logit_pooled_, logit_out_;
};

/// Batched forward/backward over many SE-states sharing base encodings.
/// Unit slots with identical (base, unit, contributions) are evaluated once.
template <class T>
class BatchGraph {
public:
    void forward(const AceModel<T>& model, std::span<const GraphInput> inputs, std::span<const SeQuery> value_queries,
                 std::span<const SeQuery> logit_queries = {});

    const std::vector<T>& values() const { return values_; }
    const std::vector<T>& logits() const { return logits_; }
    int slot_rows() const { return static_cast<int>(slots_.size()); }

    /// Accumulates parameter gradients into model.params().
    void backward(AceModel<T>& model, std::span<const T> dvalues, std::span<const T> dlogits = {});

private:
    struct Slot {
        int unit_row = 0;
        // (0, action id) active, (1, unit row) passive; in prefix order
        std::vector<std::pair<int, int>> adds;
    };
    struct HeadCache {
        nn::DenseCache<T> hidden;
        nn::DenseCache<T> pooled;
        nn::DenseCache<T> out;
        std::vector<std::vector<int>> groups;
        nn::IndexMatrix argmax;
        bool used = false;
    };

    std::vector<std::vector<int>> build_groups(const ModelConfig& cfg, std::span<const SeQuery> queries);
    std::vector<T> head_forward(const AceModel<T>& model, Head head, HeadCache& cache);
    void head_backward(AceModel<T>& model, Head head, HeadCache& cache, std::span<const T> dout, Matrix<T>& dslots);

    nn::DenseCache<T> node_cache_, edge_cache_, passive_cache_;
    std::vector<std::vector<int>> edge_groups_;
    Matrix<T> units_;
    Matrix<T> passive_;
    bool passive_used_ = false;
    std::vector<Slot> slots_;
    Matrix<T> slot_values_;
    HeadCache value_head_, logit_head_;
    std::vector<T> values_, logits_;
    std::int64_t bases_ = 0;
};

/// Frozen parameter snapshot for inference. Safe to share between threads.
template <class T>
class InferenceNet {
public:
    struct Embedding {
        Matrix<T> units;    // m x H
        Matrix<T> passive;  // m x H, row j = passive vector of actions executed by j
    };

    explicit InferenceNet(const AceModel<T>& model);

    const ModelConfig& config() const { return cfg_; }

    Embedding encode(const GraphInput& input) const;
    Embedding compose(const Embedding& e, std::span<const ComposedAction> prefix) const;
    T evaluate(const Embedding& composed, Head head = Head::value) const;

    /// Values of compose(e, [executor does a]) for each a, without re-encoding.
    std::vector<T> rollout(const Embedding& composed, int executor, std::span<const int> actions,
                           Head head = Head::value) const;
    /// General candidates (may carry passive targets).
    std::vector<T> rollout(const Embedding& composed, std::span<const ComposedAction> candidates,
                           Head head = Head::value) const;

    std::int64_t encode_calls() const { return encode_calls_->load(); }

private:
    struct HeadWeights {
        Matrix<T> hidden_w;  // H x H
        nn::RowVector<T> hidden_b;
        Matrix<T> pooled_w;  // H x H when pooled_hidden
        nn::RowVector<T> pooled_b;
        nn::RowVector<T> out_w;
        T out_b{};
        Matrix<T> active_proj;  // A x H, active table through hidden_w
    };
    const HeadWeights& head(Head h) const;
    Matrix<T> dense_relu(const Matrix<T>& x, const Matrix<T>& w, const nn::RowVector<T>& b) const;
    T readout(const HeadWeights& hw, const Matrix<T>& hidden) const;

    ModelConfig cfg_;
    Matrix<T> node_w_, edge_w_, passive_w_, active_;
    nn::RowVector<T> node_b_, edge_b_, passive_b_;
    HeadWeights value_, logit_;
    std::shared_ptr<std::atomic<std::int64_t>> encode_calls_ = std::make_shared<std::atomic<std::int64_t>>(0);
};

}  // namespace ace::model
