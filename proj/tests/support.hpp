#pragma once

#include "ace/gradcheck.hpp"
#include "ace/model.hpp"
#include "ace/neural.hpp"
#include "ace/spiders_fly.hpp"

namespace ace::testing {

using gradcheck::check_gradients;
using gradcheck::GradReport;
using gradcheck::randomize;

inline spiders::EnvState random_state(int side, Rng& rng) {
    spiders::EnvState s;
    for (auto& c : s.spiders) c = {uniform_int(rng, 0, side - 1), uniform_int(rng, 0, side - 1)};
    s.fly = {uniform_int(rng, 0, side - 1), uniform_int(rng, 0, side - 1)};
    return s;
}

inline model::GraphInput random_input(int side, Rng& rng) {
    return model::from_features(spiders::features(random_state(side, rng), side));
}

}  // namespace ace::testing
