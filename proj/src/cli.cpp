#include "ace/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "ace/error.hpp"
#include "ace/neural.hpp"
#include "ace/parallel.hpp"
#include "ace/ppo.hpp"
#include "ace/verify.hpp"

namespace ace::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io error", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("io error", "cannot write " + path.string());
    os << text;
    if (!os) throw Error("io error", "write failed " + path.string());
}

bool is_config_error(const Error& e) { return std::string(e.what()).rfind("invalid config", 0) == 0; }

// Flags shared by train and eval; applied over the config file, --set last.
struct RunFlags {
    std::string config_path;
    std::optional<std::string> seed, grid, algo, budget, order, out;
    bool no_ia = false;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key = value config file");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--grid", grid, "grid side");
        app->add_option("--algo", algo, "ace or ace_ppo");
        app->add_option("--budget", budget, "environment samples");
        app->add_option("--order", order, "sorted or shuffle");
        app->add_flag("--no-ia", no_ia, "disable the interaction-aware passive embedding");
        app->add_option("--out", out, "output directory");
        app->add_option("--set", sets, "key=value override, repeatable");
    }

    config::RunConfig resolve(config::RunConfig cfg) const {
        if (!config_path.empty()) config::apply_text(cfg, read_file(config_path));
        auto apply = [&](const char* key, const std::optional<std::string>& v) {
            if (v) config::set_value(cfg, key, *v);
        };
        apply("run.seed", seed);
        apply("env.side", grid);
        apply("run.algo", algo);
        apply("run.budget", budget);
        apply("run.order", order);
        apply("run.out", out);
        if (no_ia) cfg.ace.ia_enabled = false;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw Error("invalid config", "--set expects key=value, got '" + kv + "'");
            config::set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.validate();
        return cfg;
    }
};

std::string eval_json(const learner::EvalResult& ev, double oracle_mean) {
    nlohmann::ordered_json j;
    j["episodes"] = ev.episodes;
    j["success_rate_10"] = ev.success_rate;
    j["mean_steps"] = ev.mean_steps;
    j["oracle_mean_steps"] = oracle_mean;
    j["steps_gap"] = ev.steps_gap;
    return j.dump(2) + "\n";
}

int cmd_train(const RunFlags& flags, std::ostream& out) {
    const auto cfg = flags.resolve({});
    const fs::path dir = cfg.out;
    fs::create_directories(dir);
    write_file(dir / "config.txt", config::echo(cfg));
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw Error("io error", "cannot write " + (dir / "metrics.jsonl").string());
    const auto outcome = train(
        cfg,
        [&](const learner::MetricsRecord& r) {
            metrics << learner::to_json_line(r) << "\n";
            metrics.flush();
        },
        (dir / "model").string());
    const auto summary = summary_json(cfg, outcome);
    write_file(dir / "summary.json", summary);
    out << summary;
    return kExitOk;
}

int cmd_eval(const RunFlags& flags, int episodes, std::ostream& out) {
    if (!flags.out) throw Error("invalid config", "eval needs --out pointing at a training run");
    config::RunConfig base;
    config::apply_text(base, read_file((fs::path(*flags.out) / "config.txt").string()));
    const auto cfg = flags.resolve(base);
    const auto prefix = (fs::path(*flags.out) / "model").string();
    const int n = episodes > 0 ? episodes : cfg.ace.final_eval_episodes;
    const auto seed = derive_seed(cfg.ace.seed, Stream::evaluation, std::uint64_t{1} << 40);
    const double oracle_mean = oracle_mean_steps(cfg);
    learner::EvalResult ev;
    if (cfg.algo == config::Algo::ace) {
        learner::AceLearner l(cfg.ace, oracle_mean);
        nn::load_checkpoint(l.online().params(), prefix);
        l.refresh_snapshot();
        ev = l.evaluate(n, seed);
    } else {
        ppo::PpoLearner l(cfg.resolved_ppo(), oracle_mean);
        nn::load_checkpoint(l.online().params(), prefix);
        l.refresh_snapshot();
        ev = l.evaluate(n, seed);
    }
    out << eval_json(ev, oracle_mean);
    return kExitOk;
}

int cmd_oracle(int side, const std::string& out_dir, std::ostream& out) {
    spiders::GridConfig grid;
    grid.side = side;
    if (side < 2 || side > spiders::kMaxEnumerableSide)
        throw Error("invalid config", "oracle side must be in [2, " + std::to_string(spiders::kMaxEnumerableSide) + "]");
    const config::RunConfig defaults;
    const auto ref = oracle::reference(grid, defaults.ace.discount, defaults.ace.success_steps);
    const fs::path dir = out_dir;
    fs::create_directories(dir);
    const auto stem = "oracle_" + std::to_string(side);
    oracle::save_table((dir / (stem + ".tbl")).string(), side, ref.solution.table.discount, ref.solution.table.values);
    const auto fixture = oracle_fixture(side, ref.stats);
    write_file(dir / (stem + ".txt"), fixture);
    out << fixture;
    if (side <= 5 && ref.stats.success_rate < 1.0) {
        out << "oracle fails to catch within " << defaults.ace.success_steps << " steps from every start\n";
        return kExitFailure;
    }
    return kExitOk;
}

int cmd_verify(const std::string& suite, std::int64_t env_steps, std::uint64_t seed, std::ostream& out) {
    std::vector<verify::Property> props;
    auto add = [&](std::vector<verify::Property> ps) {
        for (auto& p : ps) {
            out << verify::format(p) << "\n";
            props.push_back(std::move(p));
        }
    };
    if (suite == "equivalence" || suite == "all") add(verify::equivalence_suite());
    if (suite == "gradients" || suite == "all") add(verify::gradients_suite(seed));
    if (suite == "env" || suite == "all") add(verify::env_suite(env_steps, seed));
    const bool ok = verify::all_pass(props);
    out << (ok ? "all properties pass" : "property failures") << "\n";
    return ok ? kExitOk : kExitFailure;
}

int cmd_export(const std::string& path, const std::string& out_path, std::ostream& out) {
    const auto csv = export_csv(read_file(path));
    if (out_path.empty())
        out << csv;
    else
        write_file(out_path, csv);
    return kExitOk;
}

}  // namespace

double oracle_mean_steps(const config::RunConfig& cfg) {
    return oracle::reference(cfg.ace.grid, cfg.ace.discount, cfg.ace.success_steps).stats.mean_steps;
}

TrainOutcome train(const config::RunConfig& cfg, const learner::MetricsSink& sink, const std::string& checkpoint_prefix) {
    cfg.validate();
    TrainOutcome o;
    const auto start = std::chrono::steady_clock::now();
    o.oracle_mean_steps = oracle_mean_steps(cfg);
    if (cfg.algo == config::Algo::ace) {
        learner::AceLearner l(cfg.ace, o.oracle_mean_steps);
        o.summary = l.run(cfg.budget, sink);
        if (!checkpoint_prefix.empty()) nn::save_checkpoint(l.online().params(), checkpoint_prefix);
    } else {
        ppo::PpoLearner l(cfg.resolved_ppo(), o.oracle_mean_steps);
        o.summary = l.run(cfg.budget, sink);
        if (!checkpoint_prefix.empty()) nn::save_checkpoint(l.online().params(), checkpoint_prefix);
    }
    o.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return o;
}

std::string summary_json(const config::RunConfig& cfg, const TrainOutcome& o) {
    nlohmann::ordered_json j;
    j["algo"] = config::algo_name(cfg.algo);
    j["seed"] = cfg.ace.seed;
    j["side"] = cfg.ace.grid.side;
    j["budget"] = cfg.budget;
    j["samples"] = o.summary.samples;
    if (o.summary.samples_to_solve)
        j["samples_to_solve"] = *o.summary.samples_to_solve;
    else
        j["samples_to_solve"] = nullptr;
    j["final_steps_gap"] = o.summary.final_eval.steps_gap;
    j["final_success_rate_10"] = o.summary.final_eval.success_rate;
    j["final_mean_steps"] = o.summary.final_eval.mean_steps;
    j["final_eval_episodes"] = o.summary.final_eval.episodes;
    j["oracle_mean_steps"] = o.oracle_mean_steps;
    j["wall_time_s"] = o.wall_time_s;
    return j.dump(2) + "\n";
}

std::string export_csv(const std::string& metrics) {
    std::string csv = "samples,episodes,eps,loss,success_rate_10,mean_steps,steps_gap,wall_time_s\n";
    std::istringstream in(metrics);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        learner::MetricsRecord r;
        try {
            r = learner::parse_metrics_line(line);
        } catch (const Error& e) {
            throw Error("malformed metrics", "line " + std::to_string(number) + ": " + e.what());
        }
        csv += std::to_string(r.samples) + "," + std::to_string(r.episodes) + "," + num(r.eps) + "," + num(r.loss) +
               "," + num(r.success_rate_10) + "," + num(r.mean_steps) + "," + num(r.steps_gap) + "," +
               num(r.wall_time_s) + "\n";
    }
    return csv;
}

std::string oracle_fixture(int side, const oracle::StepStatistics& stats) {
    return "side = " + std::to_string(side) + "\nmean_steps = " + num(stats.mean_steps) +
           "\nsuccess_rate_10 = " + num(stats.success_rate) + "\nworst_case_steps = " +
           std::to_string(stats.worst_case_steps) + "\nlegal_starts = " + std::to_string(stats.legal_starts) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    parallel::apply_env_threads();
    CLI::App app{"ACE on Spiders-and-Fly"};
    app.require_subcommand(1);

    RunFlags train_flags, eval_flags;
    auto* train_cmd = app.add_subcommand("train", "train and write metrics, checkpoint and summary");
    train_flags.attach(train_cmd);

    int eval_episodes = 0;
    auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a saved run");
    eval_flags.attach(eval_cmd);
    eval_cmd->add_option("--episodes", eval_episodes, "episodes (default eval.final_episodes)");

    int oracle_side = 5;
    std::string oracle_out = "oracle";
    auto* oracle_cmd = app.add_subcommand("oracle", "value-iteration oracle table and fixture");
    oracle_cmd->add_option("--grid", oracle_side, "grid side");
    oracle_cmd->add_option("--out", oracle_out, "output directory");

    std::string suite = "all";
    std::int64_t env_steps = 1'000'000;
    std::uint64_t verify_seed = 1;
    auto* verify_cmd = app.add_subcommand("verify", "property suites");
    verify_cmd->add_option("--suite", suite, "equivalence, gradients, env or all")
        ->check(CLI::IsMember({"equivalence", "gradients", "env", "all"}));
    verify_cmd->add_option("--env-steps", env_steps, "fuzz length");
    verify_cmd->add_option("--seed", verify_seed, "seed");

    std::string metrics_path, export_out;
    auto* export_cmd = app.add_subcommand("export", "metrics stream to CSV");
    export_cmd->add_option("metrics", metrics_path, "metrics.jsonl")->required();
    export_cmd->add_option("--out", export_out, "CSV path (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags, out);
        if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_episodes, out);
        if (oracle_cmd->parsed()) return cmd_oracle(oracle_side, oracle_out, out);
        if (verify_cmd->parsed()) return cmd_verify(suite, env_steps, verify_seed, out);
        if (export_cmd->parsed()) return cmd_export(metrics_path, export_out, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        const std::string what = e.what();
        const bool usage = is_config_error(e) || what.rfind("malformed metrics", 0) == 0 ||
                           what.rfind("io error", 0) == 0;
        return usage ? kExitUsage : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace ace::cli
