#pragma once

// Command-line surface: train, eval, oracle, verify, export.
// Exit codes: 0 success, 1 property or criterion failure, 2 usage error.

#include <iosfwd>
#include <string>
#include <vector>

#include "ace/config.hpp"
#include "ace/learner.hpp"
#include "ace/oracle.hpp"

namespace ace::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct TrainOutcome {
    learner::TrainSummary summary;
    double oracle_mean_steps = 0.0;
    double wall_time_s = 0.0;
};

/// Oracle mean catch steps for the configured grid and evaluation horizon.
double oracle_mean_steps(const config::RunConfig& cfg);

/// Trains with the configured algorithm. A non-empty checkpoint prefix gets
/// the final online parameters.
TrainOutcome train(const config::RunConfig& cfg, const learner::MetricsSink& sink = {},
                   const std::string& checkpoint_prefix = {});

/// summary.json contents.
std::string summary_json(const config::RunConfig& cfg, const TrainOutcome& outcome);

/// Metrics stream (one JSON record per line) to CSV. Blank lines are skipped;
/// malformed records throw Error naming the line.
std::string export_csv(const std::string& metrics);

/// Oracle fixture text: side, mean_steps, success_rate_10, worst_case_steps.
std::string oracle_fixture(int side, const oracle::StepStatistics& stats);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ace::cli
