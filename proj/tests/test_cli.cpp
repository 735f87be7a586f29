#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ace/cli.hpp"
#include "ace/error.hpp"
#include "ace/parallel.hpp"

using namespace ace;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ace_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> small_run(const fs::path& out) {
    return {"train",       "--budget", "3000",   "--out",  out.string(), "--set", "eval.interval=1000",
            "--set",       "eval.episodes=20",   "--set",  "eval.final_episodes=40", "--set",
            "ace.sample_per_collect=250",        "--set",  "model.hidden=16"};
}

std::string strip_wall_time(const std::string& jsonl) {
    std::istringstream in(jsonl);
    std::string line, out;
    while (std::getline(in, line)) {
        const auto r = learner::parse_metrics_line(line);
        auto copy = r;
        copy.wall_time_s = 0.0;
        out += learner::to_json_line(copy) + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("config defaults follow the hyper-parameter table and echo round-trips") {
    const config::RunConfig d;
    CHECK(config::get_value(d, "run.algo") == "ace");
    CHECK(config::get_value(d, "env.side") == "5");
    CHECK(config::get_value(d, "ace.learning_rate") == "0.0005");
    CHECK(config::get_value(d, "ace.batch_size") == "256");
    CHECK(config::get_value(d, "ace.target_update_theta") == "0.02");
    CHECK(config::get_value(d, "ace.discount") == "0.99");
    CHECK(config::get_value(d, "ace.replay_buffer_size") == "1000000");
    CHECK(config::get_value(d, "ace.epsilon.decay_steps") == std::to_string(d.ace.epsilon.decay_steps));
    CHECK(config::get_value(d, "model.hidden") == "128");

    config::RunConfig c;
    config::set_value(c, "ace.learning_rate", "0.00031");
    config::set_value(c, "run.order", "shuffle");
    config::set_value(c, "ppo.entropy_weight", "0.1");
    config::RunConfig back;
    config::apply_text(back, config::echo(c));
    CHECK(config::echo(back) == config::echo(c));
    CHECK(back.ace.learning_rate == 0.00031);
    CHECK(back.ace.order_mode == learner::OrderMode::shuffle);

    const auto text = config::echo(d);
    for (const auto& k : config::keys()) CHECK(text.find(k + " = ") != std::string::npos);
}

TEST_CASE("config errors name the field and the line") {
    config::RunConfig c;
    CHECK_THROWS_WITH(config::set_value(c, "ace.nope", "1"), doctest::Contains("unknown key 'ace.nope'"));
    CHECK_THROWS_WITH(config::set_value(c, "ace.batch_size", "1.5"), doctest::Contains("ace.batch_size"));
    CHECK_THROWS_WITH(config::set_value(c, "model.ia_enabled", "yes"), doctest::Contains("model.ia_enabled"));
    CHECK_THROWS_WITH(config::apply_text(c, "# comment\n\nrun.seed = 3\nrun.order = diagonal\n"),
                      "invalid config: line 4: run.order: expected sorted or shuffle, got 'diagonal'");
    CHECK_THROWS_WITH(config::apply_text(c, "run.seed 3\n"), doctest::Contains("line 1"));
    config::RunConfig big;
    big.ace.grid.side = 9;
    CHECK_THROWS_WITH(big.validate(), doctest::Contains("env.side"));
}

TEST_CASE("train writes config echo, metrics, checkpoint and summary") {
    TempDir tmp("train");
    const auto dir = tmp.path / "run";
    auto args = small_run(dir);
    args.insert(args.end(), {"--set", "ace.epsilon.decay_steps=150000"});
    const auto r = run(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* f : {"config.txt", "metrics.jsonl", "summary.json", "model.manifest", "model.bin"})
        CHECK(fs::exists(dir / f));
    CHECK(slurp(dir / "config.txt").find("ace.epsilon.decay_steps = 150000\n") != std::string::npos);
    const auto summary = slurp(dir / "summary.json");
    CHECK(summary.find("\"samples_to_solve\"") != std::string::npos);
    CHECK(summary.find("\"final_steps_gap\"") != std::string::npos);
    CHECK(summary == r.out);

    SUBCASE("eval of the checkpoint reproduces the final evaluation") {
        const auto e = run({"eval", "--out", dir.string()});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        const auto gap = [](const std::string& s, const std::string& key) {
            const auto p = s.find("\"" + key + "\"");
            return std::stod(s.substr(s.find(':', p) + 1));
        };
        CHECK(gap(e.out, "steps_gap") == gap(summary, "final_steps_gap"));
        CHECK(gap(e.out, "success_rate_10") == gap(summary, "final_success_rate_10"));
    }

    SUBCASE("rerunning from the echo reproduces the run single-threaded") {
        const int threads = parallel::max_threads();
        parallel::set_threads(1);
        const auto a = tmp.path / "a";
        const auto b = tmp.path / "b";
        REQUIRE(run(small_run(a)).code == 0);
        REQUIRE(run({"train", "--config", (a / "config.txt").string(), "--out", b.string()}).code == 0);
        parallel::set_threads(threads);
        CHECK(strip_wall_time(slurp(a / "metrics.jsonl")) == strip_wall_time(slurp(b / "metrics.jsonl")));
        CHECK(slurp(a / "model.bin") == slurp(b / "model.bin"));
    }
}

TEST_CASE("usage errors exit with 2") {
    TempDir tmp("usage");
    CHECK(run({"train", "--algo", "bogus", "--out", (tmp.path / "x").string()}).code == 2);
    const auto r = run({"train", "--set", "ace.nope=1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("ace.nope") != std::string::npos);
    CHECK(run({"train", "--set", "missing_equals"}).code == 2);
    CHECK(run({"train", "--order", "diagonal"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"verify", "--suite", "nonsense"}).code == 2);
    CHECK(run({"oracle", "--grid", "8"}).code == 2);
    CHECK(run({"eval"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("oracle writes an idempotent table and fixture") {
    TempDir tmp("oracle");
    const auto out = (tmp.path / "o").string();
    const auto r = run({"oracle", "--grid", "3", "--out", out});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("success_rate_10 = 1\n") != std::string::npos);
    const auto table = slurp(tmp.path / "o" / "oracle_3.tbl");
    const auto fixture = slurp(tmp.path / "o" / "oracle_3.txt");
    REQUIRE(run({"oracle", "--grid", "3", "--out", out}).code == 0);
    CHECK(slurp(tmp.path / "o" / "oracle_3.tbl") == table);
    CHECK(slurp(tmp.path / "o" / "oracle_3.txt") == fixture);
    const auto loaded = oracle::load_table((tmp.path / "o" / "oracle_3.tbl").string());
    CHECK(loaded.side == 3);
    CHECK(loaded.values.size() == 729);
}

TEST_CASE("verify reports each property and exits 0 when all pass") {
    const auto r = run({"verify", "--suite", "env", "--env-steps", "20000"});
    CHECK(r.code == 0);
    CHECK(r.out.find("[PASS] env / fly moves outside the SAFE rule") != std::string::npos);
    CHECK(r.out.find("[FAIL]") == std::string::npos);
    const auto e = run({"verify", "--suite", "equivalence"});
    CHECK(e.code == 0);
    CHECK(e.out.find("729/729") != std::string::npos);
}

TEST_CASE("export: header only, one row per record, exact round trip, line-numbered errors") {
    CHECK(cli::export_csv("") == "samples,episodes,eps,loss,success_rate_10,mean_steps,steps_gap,wall_time_s\n");
    std::vector<learner::MetricsRecord> recs(3);
    for (int i = 0; i < 3; ++i) {
        recs[i].samples = 1000 * (i + 1);
        recs[i].episodes = 7 * i;
        recs[i].eps = 1.0 / (i + 3);
        recs[i].loss = 0.1 * i + 1e-9;
        recs[i].success_rate_10 = 0.25 * i;
        recs[i].mean_steps = 100.0 / (i + 1);
        recs[i].steps_gap = recs[i].mean_steps - 5.624074282334516;
        recs[i].wall_time_s = 0.3 * i;
    }
    std::string jsonl;
    for (const auto& r : recs) jsonl += learner::to_json_line(r) + "\n";
    const auto csv = cli::export_csv(jsonl);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    int row = 0;
    while (std::getline(in, line)) {
        std::vector<double> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(std::stod(cell));
        REQUIRE(f.size() == 8);
        const auto& r = recs[row++];
        CHECK(f[0] == r.samples);
        CHECK(f[1] == r.episodes);
        CHECK(f[2] == r.eps);
        CHECK(f[3] == r.loss);
        CHECK(f[4] == r.success_rate_10);
        CHECK(f[5] == r.mean_steps);
        CHECK(f[6] == r.steps_gap);
        CHECK(f[7] == r.wall_time_s);
    }
    CHECK(row == 3);

    CHECK_THROWS_WITH(cli::export_csv(learner::to_json_line(recs[0]) + "\n{\"samples\": 1}\n"),
                      doctest::Contains("line 2"));
    CHECK_THROWS_AS(cli::export_csv("not json\n"), Error);

    TempDir tmp("export");
    std::ofstream(tmp.path / "m.jsonl") << jsonl << "garbage\n";
    const auto r = run({"export", (tmp.path / "m.jsonl").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 4") != std::string::npos);
}
