#include "ace/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ace::nn {

template <class T>
int ParamStore<T>::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (find(name) >= 0) throw Error("duplicate parameter", name);
    Tensor<T> t;
    t.name = name;
    t.value = Matrix<T>::Zero(rows, cols);
    t.grad = Matrix<T>::Zero(rows, cols);
    t.m = Matrix<T>::Zero(rows, cols);
    t.v = Matrix<T>::Zero(rows, cols);
    tensors_.push_back(std::move(t));
    return size() - 1;
}

template <class T>
int ParamStore<T>::find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (tensors_[i].name == name) return i;
    return -1;
}

template <class T>
std::int64_t ParamStore<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& t : tensors_) t.grad.setZero();
}

template <class T>
bool ParamStore<T>::same_structure(const ParamStore& other) const {
    if (other.size() != size()) return false;
    for (int i = 0; i < size(); ++i) {
        const auto& a = tensors_[i];
        const auto& b = other.tensors_[i];
        if (a.name != b.name || a.rows() != b.rows() || a.cols() != b.cols()) return false;
    }
    return true;
}

template <class T>
DenseBlock<T>::DenseBlock(ParamStore<T>& store, const std::string& name, int in, int out, Activation act)
    : weight_(store.add(name + ".weight", out, in)), bias_(store.add(name + ".bias", 1, out)), in_(in), out_(out),
      act_(act) {}

template <class T>
void DenseBlock<T>::init(ParamStore<T>& store, Rng& rng) const {
    const double bound = std::sqrt(1.0 / in_);
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = store[weight_].value;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
    store[bias_].value.setZero();
}

template <class T>
Matrix<T> DenseBlock<T>::forward(const ParamStore<T>& store, const Matrix<T>& x, DenseCache<T>* cache) const {
    if (x.cols() != in_)
        throw Error("dimension mismatch", "expected width " + std::to_string(in_) + ", got " + std::to_string(x.cols()));
    Matrix<T> pre = x * store[weight_].value.transpose();
    pre.rowwise() += store[bias_].value.row(0);
    Matrix<T> y = act_ == Activation::relu ? Matrix<T>(pre.cwiseMax(T(0))) : pre;
    if (cache) {
        cache->input = x;
        cache->pre = std::move(pre);
        cache->valid = true;
    }
    return y;
}

template <class T>
Matrix<T> DenseBlock<T>::backward(ParamStore<T>& store, const Matrix<T>& dy, const DenseCache<T>& cache) const {
    if (!cache.valid) throw Error("no cached activations");
    if (dy.rows() != cache.pre.rows() || dy.cols() != out_) throw Error("dimension mismatch", "upstream gradient");
    Matrix<T> dpre = dy;
    if (act_ == Activation::relu) dpre = (cache.pre.array() > T(0)).select(dy, T(0));
    store[weight_].grad.noalias() += dpre.transpose() * cache.input;
    store[bias_].grad.row(0) += dpre.colwise().sum();
    return dpre * store[weight_].value;
}

template <class T>
Matrix<T> mean_pool(const Matrix<T>& rows, std::span<const std::vector<int>> groups) {
    Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(groups.size()), rows.cols());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) continue;
        for (int r : groups[g]) out.row(g) += rows.row(r);
        out.row(g) *= T(1) / static_cast<T>(groups[g].size());
    }
    return out;
}

template <class T>
Matrix<T> mean_pool_backward(const Matrix<T>& dpooled, std::span<const std::vector<int>> groups, Eigen::Index rows) {
    Matrix<T> out = Matrix<T>::Zero(rows, dpooled.cols());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) continue;
        const T scale = T(1) / static_cast<T>(groups[g].size());
        for (int r : groups[g]) out.row(r) += dpooled.row(g) * scale;
    }
    return out;
}

template <class T>
Matrix<T> max_pool(const Matrix<T>& rows, std::span<const std::vector<int>> groups,
                   IndexMatrix* argmax) {
    const auto g = static_cast<Eigen::Index>(groups.size());
    Matrix<T> out = Matrix<T>::Zero(g, rows.cols());
    if (argmax) argmax->setConstant(g, rows.cols(), -1);
    for (Eigen::Index i = 0; i < g; ++i) {
        const auto& members = groups[i];
        if (members.empty()) continue;
        out.row(i) = rows.row(members[0]);
        if (argmax) argmax->row(i).setConstant(members[0]);
        for (std::size_t k = 1; k < members.size(); ++k) {
            const int r = members[k];
            for (Eigen::Index c = 0; c < rows.cols(); ++c) {
                if (rows(r, c) > out(i, c)) {
                    out(i, c) = rows(r, c);
                    if (argmax) (*argmax)(i, c) = r;
                }
            }
        }
    }
    return out;
}

template <class T>
Matrix<T> max_pool_backward(const Matrix<T>& dpooled,
                            const IndexMatrix& argmax,
                            Eigen::Index rows) {
    if (argmax.rows() != dpooled.rows() || argmax.cols() != dpooled.cols())
        throw Error("dimension mismatch", "max-pool routing");
    Matrix<T> out = Matrix<T>::Zero(rows, dpooled.cols());
    for (Eigen::Index i = 0; i < dpooled.rows(); ++i)
        for (Eigen::Index c = 0; c < dpooled.cols(); ++c)
            if (argmax(i, c) >= 0) out(argmax(i, c), c) += dpooled(i, c);
    return out;
}

namespace {

template <class T>
void check_finite_grads(const ParamStore<T>& store) {
    for (const auto& t : store) {
        if (!t.grad.allFinite()) throw DivergenceError("non-finite gradient in " + t.name);
    }
}

}  // namespace

template <class T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
    check_finite_grads(store);
    ++store.step_count;
    const double k = static_cast<double>(store.step_count);
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, k));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, k));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    for (auto& t : store) {
        if (cfg.weight_decay != 0.0) t.value *= decay;
        t.m = b1 * t.m + (T(1) - b1) * t.grad;
        t.v = b2 * t.v + (T(1) - b2) * t.grad.cwiseAbs2();
        t.value.array() -= lr * (t.m.array() / c1) / ((t.v.array() / c2).sqrt() + eps);
        t.grad.setZero();
    }
}

template <class T>
void rmsprop_step(ParamStore<T>& store, const RmsPropConfig& cfg) {
    check_finite_grads(store);
    ++store.step_count;
    const T alpha = static_cast<T>(cfg.alpha), lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    for (auto& t : store) {
        if (cfg.weight_decay != 0.0) t.value *= decay;
        t.v = alpha * t.v + (T(1) - alpha) * t.grad.cwiseAbs2();
        t.value.array() -= lr * t.grad.array() / (t.v.array().sqrt() + eps);
        t.grad.setZero();
    }
}

template <class T>
void soft_update(ParamStore<T>& target, const ParamStore<T>& online, double theta) {
    if (!target.same_structure(online)) throw Error("structure mismatch");
    const T th = static_cast<T>(theta);
    for (int i = 0; i < target.size(); ++i) {
        if (theta == 1.0) {
            target[i].value = online[i].value;
        } else if (theta != 0.0) {
            target[i].value = (T(1) - th) * target[i].value + th * online[i].value;
        }
    }
}

template <class T>
void save_checkpoint(const ParamStore<T>& store, const std::string& prefix) {
    std::ofstream manifest(prefix + ".manifest");
    std::ofstream blob(prefix + ".bin", std::ios::binary);
    if (!manifest || !blob) throw Error("cannot open file", prefix);
    std::int64_t offset = 0;
    for (const auto& t : store) {
        manifest << t.name << ' ' << t.rows() << ' ' << t.cols() << ' ' << offset << '\n';
        for (Eigen::Index i = 0; i < t.value.size(); ++i) {
            const float f = static_cast<float>(t.value.data()[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                                   static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
            blob.write(bytes, 4);
        }
        offset += t.value.size();
    }
    if (!manifest || !blob) throw Error("write failed", prefix);
}

template <class T>
void load_checkpoint(ParamStore<T>& store, const std::string& prefix) {
    std::ifstream manifest(prefix + ".manifest");
    std::ifstream blob(prefix + ".bin", std::ios::binary);
    if (!manifest || !blob) throw Error("cannot open file", prefix);
    std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    std::string line;
    int seen = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        std::int64_t offset = 0;
        if (!(ls >> name >> rows >> cols >> offset)) throw Error("malformed checkpoint", line);
        const int id = store.find(name);
        if (id < 0) throw Error("checkpoint mismatch", "unknown tensor " + name);
        auto& t = store[id];
        if (t.rows() != rows || t.cols() != cols) throw Error("checkpoint mismatch", "shape of " + name);
        if (static_cast<std::size_t>((offset + rows * cols) * 4) > bytes.size())
            throw Error("malformed checkpoint", "blob too short for " + name);
        for (Eigen::Index i = 0; i < rows * cols; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + (offset + i) * 4;
            const std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
            float f;
            std::memcpy(&f, &bits, sizeof f);
            t.value.data()[i] = static_cast<T>(f);
        }
        ++seen;
    }
    if (seen != store.size()) throw Error("checkpoint mismatch", "tensor count");
}

#define ACE_NN_INSTANTIATE(T)                                                                              \
    template class ParamStore<T>;                                                                          \
    template class DenseBlock<T>;                                                                          \
    template Matrix<T> mean_pool<T>(const Matrix<T>&, std::span<const std::vector<int>>);                  \
    template Matrix<T> mean_pool_backward<T>(const Matrix<T>&, std::span<const std::vector<int>>,          \
                                             Eigen::Index);                                                \
    template Matrix<T> max_pool<T>(const Matrix<T>&, std::span<const std::vector<int>>, IndexMatrix*);      \
    template Matrix<T> max_pool_backward<T>(const Matrix<T>&, const IndexMatrix&, Eigen::Index);           \
    template void adam_step<T>(ParamStore<T>&, const AdamConfig&);                                         \
    template void rmsprop_step<T>(ParamStore<T>&, const RmsPropConfig&);                                   \
    template void soft_update<T>(ParamStore<T>&, const ParamStore<T>&, double);                           \
    template void save_checkpoint<T>(const ParamStore<T>&, const std::string&);                            \
    template void load_checkpoint<T>(ParamStore<T>&, const std::string&);

ACE_NN_INSTANTIATE(float)
ACE_NN_INSTANTIATE(double)

}  // namespace ace::nn
