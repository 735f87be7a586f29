#include "ace/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "ace/error.hpp"

namespace ace::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw Error("invalid config", key + ": expected an integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw Error("invalid config", key + ": expected a number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("invalid config", key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    // prefer the shortest form that reads back exactly
    for (int prec = 1; prec <= 17; ++prec) {
        char tmp[64];
        std::snprintf(tmp, sizeof tmp, "%.*g", prec, x);
        if (std::stod(tmp) == x) return tmp;
    }
    return buf;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

struct Entry {
    std::string key;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define ACE_INT(K, FIELD)                                                                                    \
    Entry {                                                                                                  \
        K, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_int(k, v); },        \
            [](const RunConfig& c) { return std::to_string(c.FIELD); }                                       \
    }
#define ACE_DOUBLE(K, FIELD)                                                                                 \
    Entry {                                                                                                  \
        K, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); },     \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                                  \
    }
#define ACE_BOOL(K, FIELD)                                                                                   \
    Entry {                                                                                                  \
        K, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); },       \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                                  \
    }

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = {
        Entry{"run.algo", [](RunConfig& c, const std::string&, const std::string& v) { c.algo = parse_algo(v); },
              [](const RunConfig& c) { return algo_name(c.algo); }},
        ACE_INT("run.seed", ace.seed),
        ACE_INT("run.budget", budget),
        Entry{"run.out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
              [](const RunConfig& c) { return c.out; }},
        Entry{"run.order",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "sorted")
                      c.ace.order_mode = learner::OrderMode::sorted;
                  else if (v == "shuffle")
                      c.ace.order_mode = learner::OrderMode::shuffle;
                  else
                      throw Error("invalid config", k + ": expected sorted or shuffle, got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.ace.order_mode == learner::OrderMode::sorted ? "sorted" : "shuffle");
              }},
        ACE_INT("env.side", ace.grid.side),
        ACE_INT("env.max_steps", ace.grid.max_steps),
        ACE_INT("env.min_start_distance", ace.grid.min_start_distance),
        ACE_INT("model.hidden", ace.hidden),
        ACE_BOOL("model.ia_enabled", ace.ia_enabled),
        Entry{"model.head_pooling",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "mean")
                      c.ace.head_pooling = model::Pooling::mean;
                  else if (v == "max")
                      c.ace.head_pooling = model::Pooling::max;
                  else
                      throw Error("invalid config", k + ": expected mean or max, got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.ace.head_pooling == model::Pooling::mean ? "mean" : "max");
              }},
        ACE_BOOL("model.pooled_hidden", ace.pooled_hidden),
        ACE_INT("eval.interval", ace.eval_interval),
        ACE_INT("eval.episodes", ace.eval_episodes),
        ACE_INT("eval.final_episodes", ace.final_eval_episodes),
        ACE_INT("eval.success_steps", ace.success_steps),
        ACE_INT("eval.solve_streak", ace.solve_streak),
        ACE_BOOL("eval.stop_on_solve", ace.stop_on_solve),
        ACE_INT("ace.collector_env_num", ace.collector_env_num),
        ACE_INT("ace.sample_per_collect", ace.sample_per_collect),
        ACE_INT("ace.replay_buffer_size", ace.replay_buffer_size),
        ACE_INT("ace.update_per_collect", ace.update_per_collect),
        ACE_INT("ace.batch_size", ace.batch_size),
        ACE_DOUBLE("ace.learning_rate", ace.learning_rate),
        ACE_DOUBLE("ace.target_update_theta", ace.target_update_theta),
        ACE_DOUBLE("ace.discount", ace.discount),
        Entry{"ace.optimizer",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v == "adam")
                      c.ace.optimizer = learner::Optimizer::adam;
                  else if (v == "rmsprop")
                      c.ace.optimizer = learner::Optimizer::rmsprop;
                  else
                      throw Error("invalid config", k + ": expected adam or rmsprop, got '" + v + "'");
              },
              [](const RunConfig& c) {
                  return std::string(c.ace.optimizer == learner::Optimizer::adam ? "adam" : "rmsprop");
              }},
        ACE_DOUBLE("ace.weight_decay", ace.weight_decay),
        ACE_DOUBLE("ace.epsilon.start", ace.epsilon.start),
        ACE_DOUBLE("ace.epsilon.end", ace.epsilon.end),
        ACE_INT("ace.epsilon.decay_steps", ace.epsilon.decay_steps),
        ACE_INT("ppo.collector_env_num", ppo.collector_env_num),
        ACE_INT("ppo.n_episode", ppo.n_episode),
        ACE_INT("ppo.update_per_collect", ppo.update_per_collect),
        ACE_INT("ppo.batch_size", ppo.batch_size),
        ACE_DOUBLE("ppo.learning_rate", ppo.learning_rate),
        ACE_DOUBLE("ppo.discount", ppo.discount),
        ACE_DOUBLE("ppo.gae_lambda", ppo.gae_lambda),
        ACE_DOUBLE("ppo.clip_ratio", ppo.clip_ratio),
        ACE_BOOL("ppo.use_value_clip", ppo.use_value_clip),
        ACE_DOUBLE("ppo.value_clip_ratio", ppo.value_clip_ratio),
        ACE_DOUBLE("ppo.value_weight", ppo.value_weight),
        ACE_DOUBLE("ppo.entropy_weight", ppo.entropy_weight),
        ACE_BOOL("ppo.recompute_adv", ppo.recompute_adv),
        ACE_BOOL("ppo.adv_norm", ppo.adv_norm),
        ACE_BOOL("ppo.value_norm", ppo.value_norm),
    };
    return entries;
}

#undef ACE_INT
#undef ACE_DOUBLE
#undef ACE_BOOL

const Entry& find(const std::string& key) {
    for (const auto& e : registry())
        if (e.key == key) return e;
    throw Error("invalid config", "unknown key '" + key + "'");
}

}  // namespace

std::string algo_name(Algo a) { return a == Algo::ace ? "ace" : "ace_ppo"; }

Algo parse_algo(const std::string& s) {
    if (s == "ace") return Algo::ace;
    if (s == "ace_ppo") return Algo::ace_ppo;
    throw Error("invalid config", "run.algo: expected ace or ace_ppo, got '" + s + "'");
}

ppo::PPOConfig RunConfig::resolved_ppo() const {
    ppo::PPOConfig p = ppo;
    p.grid = ace.grid;
    p.seed = ace.seed;
    p.order_mode = ace.order_mode;
    p.ia_enabled = ace.ia_enabled;
    p.hidden = ace.hidden;
    p.eval_interval = ace.eval_interval;
    p.eval_episodes = ace.eval_episodes;
    p.final_eval_episodes = ace.final_eval_episodes;
    p.success_steps = ace.success_steps;
    p.solve_streak = ace.solve_streak;
    p.stop_on_solve = ace.stop_on_solve;
    return p;
}

void RunConfig::validate() const {
    if (budget < 0) throw Error("invalid config", "run.budget must be non-negative");
    if (ace.grid.side > spiders::kMaxEnumerableSide)
        throw Error("invalid config", "env.side above " + std::to_string(spiders::kMaxEnumerableSide));
    ace.validate();
    resolved_ppo().validate();
}

std::vector<std::string> keys() {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.key);
    return out;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    find(key).set(cfg, key, trim(value));
}

std::string get_value(const RunConfig& cfg, const std::string& key) { return find(key).get(cfg); }

void apply_text(RunConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("invalid config", "line " + std::to_string(number) + ": expected key = value");
        try {
            set_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const Error& e) {
            std::string msg = e.what();
            const std::string prefix = "invalid config: ";
            if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
            throw Error("invalid config", "line " + std::to_string(number) + ": " + msg);
        }
    }
}

RunConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io error", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg;
    apply_text(cfg, ss.str());
    return cfg;
}

std::string echo(const RunConfig& cfg) {
    std::string out;
    for (const auto& e : registry()) out += e.key + " = " + e.get(cfg) + "\n";
    return out;
}

}  // namespace ace::config
