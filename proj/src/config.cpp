#include "cgar/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "cgar/curriculum.hpp"

namespace cgar {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Doubles are serialized with enough digits to round-trip exactly, so the
// config hash and checkpoint echo are lossless.
std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<bool(TrainConfig&, const std::string&)> set;
};

template <typename T>
bool parse_num(const std::string& s, T& out) {
    try {
        std::size_t pos = 0;
        if constexpr (std::is_same_v<T, double>) out = std::stod(s, &pos);
        else if constexpr (std::is_same_v<T, std::uint64_t>) out = std::stoull(s, &pos);
        else if constexpr (std::is_same_v<T, long>) out = std::stol(s, &pos);
        else out = static_cast<T>(std::stol(s, &pos));
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

bool parse_bool(const std::string& s, bool& out) {
    if (s == "true" || s == "1") { out = true; return true; }
    if (s == "false" || s == "0") { out = false; return true; }
    return false;
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = [] {
        std::map<std::string, Field> m;
        auto num = [&m](const std::string& key, auto member) {
            using T = std::decay_t<decltype(TrainConfig{}.*member)>;
            m[key] = {[member](const TrainConfig& c) {
                          if constexpr (std::is_same_v<T, double>)
                              return fmt_double(c.*member);
                          else
                              return std::to_string(c.*member);
                      },
                      [member](TrainConfig& c, const std::string& v) {
                          return parse_num<T>(v, c.*member);
                      }};
        };
        auto boolean = [&m](const std::string& key, bool TrainConfig::* member) {
            m[key] = {[member](const TrainConfig& c) {
                          return std::string(c.*member ? "true" : "false");
                      },
                      [member](TrainConfig& c, const std::string& v) {
                          return parse_bool(v, c.*member);
                      }};
        };
        auto str = [&m](const std::string& key, std::string TrainConfig::* member) {
            m[key] = {[member](const TrainConfig& c) { return c.*member; },
                      [member](TrainConfig& c, const std::string& v) {
                          c.*member = v;
                          return true;
                      }};
        };
        num("grid", &TrainConfig::grid);
        num("d_model", &TrainConfig::d_model);
        num("heads", &TrainConfig::heads);
        num("d_ffn", &TrainConfig::d_ffn);
        num("epochs", &TrainConfig::epochs);
        num("batch_size", &TrainConfig::batch_size);
        num("lr", &TrainConfig::lr);
        num("warmup_steps", &TrainConfig::warmup_steps);
        num("weight_decay", &TrainConfig::weight_decay);
        num("clip_norm", &TrainConfig::clip_norm);
        num("seed", &TrainConfig::seed);
        num("lambda", &TrainConfig::lambda);
        num("beta", &TrainConfig::beta);
        num("n_sup", &TrainConfig::n_sup);
        str("schedule", &TrainConfig::schedule);
        boolean("early_halt", &TrainConfig::early_halt);
        boolean("bce_inside_normalizer", &TrainConfig::bce_inside_normalizer);
        str("train_halt_rule", &TrainConfig::train_halt_rule);
        str("eval_halt_rule", &TrainConfig::eval_halt_rule);
        num("checkpoint_every", &TrainConfig::checkpoint_every);
        num("eval_every", &TrainConfig::eval_every);
        num("eval_subset", &TrainConfig::eval_subset);
        num("threads", &TrainConfig::threads);
        str("train_data", &TrainConfig::train_data);
        str("test_data", &TrainConfig::test_data);
        return m;
    }();
    return f;
}

}  // namespace

void apply_preset(TrainConfig& cfg, const std::string& name) {
    if (name == "cgar-default") {
        cfg.lambda = 0.7;
        cfg.schedule = "default";
    } else if (name == "trm-baseline") {
        cfg.lambda = 1.0;
        cfg.schedule = "fixed-full";
    } else if (name == "pdc-only") {
        cfg.lambda = 1.0;
        cfg.schedule = "default";
    } else if (name == "hsw-only") {
        cfg.lambda = 0.7;
        cfg.schedule = "fixed-full";
    } else if (name.rfind("lambda-", 0) == 0) {
        double v = 0;
        if (!parse_num(name.substr(7), v) || !(v > 0.0 && v <= 1.0))
            throw ValidationError("unknown preset '" + name + "'");
        cfg.lambda = v;
        cfg.schedule = "default";
    } else {
        throw ValidationError("unknown preset '" + name + "'");
    }
}

std::vector<std::string> preset_names() {
    return {"cgar-default", "trm-baseline", "pdc-only",
            "hsw-only",     "lambda-0.5",   "lambda-0.7", "lambda-0.9"};
}

void apply_assignment(TrainConfig& cfg, const std::string& key,
                      const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end())
        throw ValidationError("unknown config key '" + key + "'");
    if (!it->second.set(cfg, value))
        throw ValidationError("cannot parse value '" + value + "' for config key '" +
                              key + "'");
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::vector<std::string> errs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            errs.push_back("line " + std::to_string(lineno) + ": expected key=value");
            continue;
        }
        try {
            apply_assignment(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ValidationError& e) {
            errs.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!errs.empty()) {
        std::string msg = "config file '" + path + "':";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ValidationError(msg);
    }
}

std::vector<std::string> validate_config(const TrainConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.grid != 4 && cfg.grid != 9) errs.push_back("grid must be 4 or 9");
    if (cfg.d_model < 1) errs.push_back("d_model must be positive");
    if (cfg.heads < 1 || (cfg.d_model >= 1 && cfg.d_model % cfg.heads != 0))
        errs.push_back("heads must divide d_model");
    if (cfg.d_ffn < 1) errs.push_back("d_ffn must be positive");
    if (cfg.epochs < 1) errs.push_back("epochs must be positive");
    if (cfg.batch_size < 1) errs.push_back("batch_size must be positive");
    if (!(cfg.lr > 0)) errs.push_back("lr must be positive");
    if (cfg.warmup_steps < 0) errs.push_back("warmup_steps must be nonnegative");
    if (cfg.warmup_steps >= cfg.epochs)
        errs.push_back("warmup_steps must be smaller than epochs");
    if (cfg.weight_decay < 0) errs.push_back("weight_decay must be nonnegative");
    if (!(cfg.clip_norm > 0)) errs.push_back("clip_norm must be positive");
    if (!(cfg.lambda > 0.0 && cfg.lambda <= 1.0))
        errs.push_back("lambda must lie in (0, 1]");
    if (cfg.beta < 0) errs.push_back("beta must be nonnegative");
    if (cfg.n_sup < 1) errs.push_back("n_sup must be positive");
    try {
        resolve_schedule(cfg.schedule);
    } catch (const ValidationError& e) {
        errs.push_back(e.what());
    }
    for (const std::string* rule : {&cfg.train_halt_rule, &cfg.eval_halt_rule})
        if (*rule != "max" && *rule != "all")
            errs.push_back("halt rule must be 'max' or 'all', got '" + *rule + "'");
    if (cfg.checkpoint_every < 0) errs.push_back("checkpoint_every must be nonnegative");
    if (cfg.eval_every < 0) errs.push_back("eval_every must be nonnegative");
    if (cfg.eval_subset < 0) errs.push_back("eval_subset must be nonnegative");
    if (cfg.threads < 1) errs.push_back("threads must be positive");
    return errs;
}

void validate_config_or_throw(const TrainConfig& cfg) {
    auto errs = validate_config(cfg);
    if (errs.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
}

std::map<std::string, std::string> config_kv(const TrainConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
    return out;
}

std::string serialize_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : config_kv(cfg)) out += key + "=" + value + "\n";
    return out;
}

std::string config_hash(const TrainConfig& cfg) {
    std::uint64_t h = fnv1a64(serialize_config(cfg));
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError("malformed config echo line: " + line);
        apply_assignment(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

}  // namespace cgar
