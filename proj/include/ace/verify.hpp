#pragma once

// Property suites behind `ace verify`: each property reports a measured
// error against its tolerance.

#include <cstdint>
#include <string>
#include <vector>

namespace ace::verify {

struct Property {
    std::string suite;
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

/// 3x3 grid: rescaled SE values against the joint MMDP at gamma^2, and
/// sequential greedy inside the joint greedy set at every state.
std::vector<Property> equivalence_suite();

/// Finite differences in double on randomized small models: every
/// trainable path, the TD loss and the PPO loss.
std::vector<Property> gradients_suite(std::uint64_t seed = 1);

/// Random-action fuzz of the 5x5 environment.
std::vector<Property> env_suite(std::int64_t steps = 1'000'000, std::uint64_t seed = 1);

std::string format(const Property& p);
bool all_pass(const std::vector<Property>& ps);

}  // namespace ace::verify
