#pragma once

// Run configuration: a flat "key = value" document with dotted sections.
// Defaults reproduce the Spiders-and-Fly hyper-parameter table.

#include <cstdint>
#include <string>
#include <vector>

#include "ace/learner.hpp"
#include "ace/ppo.hpp"

namespace ace::config {

enum class Algo { ace, ace_ppo };

struct RunConfig {
    Algo algo = Algo::ace;
    std::int64_t budget = 200000;
    std::string out = "runs/default";
    /// env, seed, order, ia, hidden and evaluation keys live here and are
    /// mirrored into `ppo` by resolved_ppo().
    learner::TrainConfig ace;
    ppo::PPOConfig ppo;

    ppo::PPOConfig resolved_ppo() const;
    void validate() const;
};

/// Every normative key, in echo order.
std::vector<std::string> keys();

/// Throws Error("invalid config", ...) naming the key on unknown keys or bad values.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_value(const RunConfig& cfg, const std::string& key);

/// '#' starts a comment; blank lines are ignored. Errors carry the line number.
void apply_text(RunConfig& cfg, const std::string& text);
RunConfig load_file(const std::string& path);

/// Fully resolved config, one "key = value" line per key.
std::string echo(const RunConfig& cfg);

std::string algo_name(Algo a);
Algo parse_algo(const std::string& s);

}  // namespace ace::config
