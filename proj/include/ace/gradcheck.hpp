#pragma once

// Central finite-difference check of hand-written backward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ace/neural.hpp"

namespace ace::gradcheck {

struct GradReport {
    double max_rel_error = 0.0;
    std::string worst;
    int checked = 0;
    /// (tensor name, max relative error) in store order
    std::vector<std::pair<std::string, double>> per_tensor;
};

/// Perturbs every entry of every tensor. `analytic` must leave d loss / d param
/// in the grads; those are copied before `loss` is probed, so `loss` may
/// overwrite them.
inline GradReport check_gradients(nn::ParamStore<double>& store, const std::function<double()>& loss,
                                  const std::function<void()>& analytic, double h = 1e-6) {
    store.zero_grad();
    analytic();
    std::vector<nn::Matrix<double>> exact;
    for (const auto& t : store) exact.push_back(t.grad);
    GradReport rep;
    int id = 0;
    for (auto& t : store) {
        double tensor_max = 0.0;
        for (Eigen::Index i = 0; i < t.value.size(); ++i) {
            double& w = t.value.data()[i];
            const double keep = w;
            w = keep + h;
            const double up = loss();
            w = keep - h;
            const double down = loss();
            w = keep;
            const double numeric = (up - down) / (2 * h);
            const double a = exact[id].data()[i];
            const double rel = std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-6});
            ++rep.checked;
            tensor_max = std::max(tensor_max, rel);
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst = t.name + "[" + std::to_string(i) + "]";
            }
        }
        rep.per_tensor.emplace_back(t.name, tensor_max);
        ++id;
    }
    // leave the analytic gradient in place for callers that inspect it
    id = 0;
    for (auto& t : store) t.grad = exact[id++];
    return rep;
}

/// Fills every tensor (including the zero-initialised ones) with uniform noise.
template <class T>
void randomize(nn::ParamStore<T>& store, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& t : store)
        for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<T>(d(rng));
}

}  // namespace ace::gradcheck
