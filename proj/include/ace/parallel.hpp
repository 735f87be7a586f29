#pragma once

namespace ace::parallel {

/// Caps the OpenMP worker count; n <= 0 leaves the runtime default.
void set_threads(int n);
int max_threads();

/// Reads ACE_THREADS from the environment and applies it when set.
void apply_env_threads();

}  // namespace ace::parallel
