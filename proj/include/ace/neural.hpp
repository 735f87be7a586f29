#pragma once

// Small dense-network engine: parameter storage, dense+ReLU blocks with a
// hand-written backward pass, grouped mean pooling, optimizers, soft target
// updates and a flat checkpoint format. Templated on the scalar so the same
// graph trains in float and is gradient-checked in double.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ace/error.hpp"
#include "ace/rng.hpp"

namespace ace::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Tensor {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    // optimizer moments (Adam m/v, RMSprop uses v)
    Matrix<T> m;
    Matrix<T> v;

    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
};

/// Named learnable tensors. Ids are stable insertion indices.
template <class T>
class ParamStore {
public:
    int add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    Tensor<T>& operator[](int id) { return tensors_.at(id); }
    const Tensor<T>& operator[](int id) const { return tensors_.at(id); }
    int find(const std::string& name) const;
    int size() const { return static_cast<int>(tensors_.size()); }
    std::int64_t parameter_count() const;

    void zero_grad();
    bool same_structure(const ParamStore& other) const;
    /// Copy values from a store of the same structure (any scalar type).
    template <class U>
    void assign_values(const ParamStore<U>& other);

    /// Optimizer step counter.
    std::int64_t step_count = 0;

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

private:
    std::vector<Tensor<T>> tensors_;
};

enum class Activation { relu, identity };

template <class T>
struct DenseCache {
    Matrix<T> input;
    Matrix<T> pre;
    bool valid = false;
};

/// y = act(x W^T + b) rowwise, W stored out x in. Parameters live in a
/// ParamStore; the block only records ids.
template <class T>
class DenseBlock {
public:
    DenseBlock() = default;
    DenseBlock(ParamStore<T>& store, const std::string& name, int in, int out, Activation act);

    /// Uniform in +-sqrt(1/fan_in), zero bias.
    void init(ParamStore<T>& store, Rng& rng) const;

    Matrix<T> forward(const ParamStore<T>& store, const Matrix<T>& x, DenseCache<T>* cache = nullptr) const;
    /// Accumulates parameter gradients into the store, returns d input.
    Matrix<T> backward(ParamStore<T>& store, const Matrix<T>& dy, const DenseCache<T>& cache) const;

    int in() const { return in_; }
    int out() const { return out_; }
    int weight_id() const { return weight_; }
    int bias_id() const { return bias_; }
    Activation activation() const { return act_; }

private:
    int weight_ = -1;
    int bias_ = -1;
    int in_ = 0;
    int out_ = 0;
    Activation act_ = Activation::identity;
};

/// Row r of the result is the mean of rows groups[r] of `rows`. Empty
/// groups pool to zero. Summation runs in the listed order.
template <class T>
Matrix<T> mean_pool(const Matrix<T>& rows, std::span<const std::vector<int>> groups);

/// Distributes d pooled / |group| onto each member row.
template <class T>
Matrix<T> mean_pool_backward(const Matrix<T>& dpooled, std::span<const std::vector<int>> groups, Eigen::Index rows);

/// Column-wise max over each group. `argmax` (optional) receives the winning
/// row per (group, column), first index on ties, -1 for empty groups, which
/// pool to zero.
template <class T>
Matrix<T> max_pool(const Matrix<T>& rows, std::span<const std::vector<int>> groups,
                   IndexMatrix* argmax = nullptr);

/// Routes each pooled gradient to its winning row.
template <class T>
Matrix<T> max_pool_backward(const Matrix<T>& dpooled,
                            const IndexMatrix& argmax,
                            Eigen::Index rows);

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct RmsPropConfig {
    double lr = 5e-4;
    double alpha = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Decoupled weight decay, bias-corrected Adam. Clears gradients and bumps
/// step_count. Throws DivergenceError on a non-finite gradient.
template <class T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg);

template <class T>
void rmsprop_step(ParamStore<T>& store, const RmsPropConfig& cfg);

/// target <- (1 - theta) target + theta online
template <class T>
void soft_update(ParamStore<T>& target, const ParamStore<T>& online, double theta);

/// Writes `prefix`.manifest (lines "name rows cols offset") and `prefix`.bin
/// (little-endian float32 values in manifest order).
template <class T>
void save_checkpoint(const ParamStore<T>& store, const std::string& prefix);

/// Loads values into an already-constructed store; names and shapes must match.
template <class T>
void load_checkpoint(ParamStore<T>& store, const std::string& prefix);

template <class T>
template <class U>
void ParamStore<T>::assign_values(const ParamStore<U>& other) {
    if (other.size() != size()) throw Error("structure mismatch", "tensor count");
    for (int i = 0; i < size(); ++i) {
        const auto& src = other[i];
        auto& dst = tensors_[i];
        if (src.name != dst.name || src.rows() != dst.rows() || src.cols() != dst.cols())
            throw Error("structure mismatch", dst.name);
        dst.value = src.value.template cast<T>();
    }
}

}  // namespace ace::nn
