#include "core/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace gadan::pipeline {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct RawEntry {
    std::string value;
    int line = 0;
};

using RawConfig = std::map<std::string, RawEntry>;

[[noreturn]] void fail(const std::string& origin, const std::string& key, int line,
                       const std::string& why) {
    std::ostringstream os;
    os << origin << ": key '" << key << "'";
    if (line > 0) os << " (line " << line << ")";
    os << ": " << why;
    throw ConfigError(os.str());
}

class Reader {
public:
    Reader(RawConfig raw, std::string origin) : raw_(std::move(raw)), origin_(std::move(origin)) {}

    bool has(const std::string& key) {
        seen_.insert(key);
        return raw_.count(key) > 0;
    }

    std::string str(const std::string& key) {
        seen_.insert(key);
        auto it = raw_.find(key);
        if (it == raw_.end()) fail(origin_, key, 0, "required key is missing");
        return it->second.value;
    }

    std::string str_or(const std::string& key, const std::string& fallback) {
        return has(key) ? str(key) : fallback;
    }

    int64_t integer(const std::string& key, int64_t fallback, bool required,
                    int64_t lo, int64_t hi) {
        if (!has(key)) {
            if (required) fail(origin_, key, 0, "required key is missing");
            return fallback;
        }
        const RawEntry& e = raw_.at(key);
        try {
            size_t used = 0;
            const int64_t v = std::stoll(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing characters");
            if (v < lo || v > hi)
                fail(origin_, key, e.line,
                     "value " + e.value + " out of range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            fail(origin_, key, e.line, "not an integer: '" + e.value + "'");
        }
    }

    double real(const std::string& key, double fallback, bool required, double lo) {
        if (!has(key)) {
            if (required) fail(origin_, key, 0, "required key is missing");
            return fallback;
        }
        const RawEntry& e = raw_.at(key);
        try {
            size_t used = 0;
            const double v = std::stod(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing characters");
            if (!std::isfinite(v) || v < lo)
                fail(origin_, key, e.line, "value must be finite and >= " + std::to_string(lo));
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            fail(origin_, key, e.line, "not a number: '" + e.value + "'");
        }
    }

    void check_unknown() const {
        for (const auto& [key, entry] : raw_)
            if (!seen_.count(key))
                fail(origin_, key, entry.line, "unknown key");
    }

    const std::string& origin() const { return origin_; }

private:
    RawConfig raw_;
    std::string origin_;
    std::set<std::string> seen_;
};

RawConfig tokenize(const std::string& text, const std::string& origin) {
    RawConfig raw;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ": line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ": line " + std::to_string(lineno) + ": empty key");
        if (raw.count(key))
            throw ConfigError(origin + ": line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        raw[key] = {value, lineno};
    }
    return raw;
}

}  // namespace

networks::NetConfig TrainConfig::net_config() const {
    networks::NetConfig nc;
    nc.kind = kind;
    nc.tps_grid = tps_grid;
    nc.code_dim = code_dim;
    nc.channels = channels;
    nc.image_size = image_size;
    nc.loc_size = loc_size;
    nc.ngf = ngf;
    nc.ndf = ndf;
    nc.n_res = n_res;
    return nc;
}

std::string TrainConfig::resolved_metrics_path() const {
    if (!metrics_path.empty()) return metrics_path;
    return checkpoint_dir + "/metrics.jsonl";
}

void TrainConfig::validate() const {
    net_config().validate();
    weights.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("learning rates must be positive");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (domain_x_dir.empty() || domain_y_dir.empty())
        throw ConfigError("domain directories must be set");
    if (checkpoint_dir.empty()) throw ConfigError("checkpoint_dir must be set");
}

std::string TrainConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "transform_kind = " << geometry::kind_name(kind) << "\n"
       << "tps_grid = " << tps_grid << "\n"
       << "image_size = " << image_size << "\n"
       << "code_dim = " << code_dim << "\n"
       << "channels = " << channels << "\n"
       << "loc_size = " << loc_size << "\n"
       << "ngf = " << ngf << "\n"
       << "ndf = " << ndf << "\n"
       << "n_res = " << n_res << "\n"
       << "batch_size = " << batch_size << "\n"
       << "steps = " << steps << "\n"
       << "lr_g = " << lr_g << "\n"
       << "lr_d = " << lr_d << "\n"
       << "lambda_acl = " << weights.lambda_acl << "\n"
       << "lambda_scl = " << weights.lambda_scl << "\n"
       << "lambda_idt = " << weights.lambda_idt << "\n"
       << "lambda_adv = " << weights.lambda_adv << "\n"
       << "lambda_rml = " << weights.lambda_rml << "\n"
       << "seed = " << seed << "\n"
       << "domain_x_dir = " << domain_x_dir << "\n"
       << "domain_y_dir = " << domain_y_dir << "\n"
       << "checkpoint_dir = " << checkpoint_dir << "\n"
       << "checkpoint_every = " << checkpoint_every << "\n"
       << "use_replay_buffer = " << (use_replay_buffer ? 1 : 0) << "\n";
    if (!metrics_path.empty()) os << "metrics_path = " << metrics_path << "\n";
    return os.str();
}

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
    Reader r(tokenize(text, origin), origin);
    TrainConfig cfg;
    cfg.kind = geometry::kind_from_name(r.str("transform_kind"));
    cfg.tps_grid = static_cast<int>(r.integer("tps_grid", 4, false, 2, 16));
    cfg.image_size = static_cast<int>(r.integer("image_size", 256, false, 8, 4096));
    cfg.code_dim = static_cast<int>(r.integer("code_dim", 16, false, 1, 4096));
    cfg.channels = static_cast<int>(r.integer("channels", 3, false, 1, 3));
    cfg.loc_size = static_cast<int>(r.integer("loc_size", 256, false, 32, 4096));
    cfg.ngf = static_cast<int>(r.integer("ngf", 64, false, 1, 1024));
    cfg.ndf = static_cast<int>(r.integer("ndf", 64, false, 1, 1024));
    cfg.n_res = static_cast<int>(r.integer("n_res", -1, false, -1, 64));
    cfg.batch_size = static_cast<int>(r.integer("batch_size", 0, true, 1, 4096));
    cfg.steps = r.integer("steps", 0, true, 0, INT64_MAX);
    cfg.lr_g = r.real("lr_g", 0.0, true, 1e-12);
    cfg.lr_d = r.real("lr_d", 0.0, true, 1e-12);
    cfg.weights.lambda_acl = r.real("lambda_acl", 10.0, false, 0.0);
    cfg.weights.lambda_scl = r.real("lambda_scl", 1.0, false, 0.0);
    cfg.weights.lambda_idt = r.real("lambda_idt", 5.0, false, 0.0);
    cfg.weights.lambda_adv = r.real("lambda_adv", 1.0, false, 0.0);
    cfg.weights.lambda_rml = r.real("lambda_rml", 1.0, false, 0.0);
    cfg.seed = static_cast<uint64_t>(r.integer("seed", 0, true, 0, INT64_MAX));
    cfg.domain_x_dir = r.str("domain_x_dir");
    cfg.domain_y_dir = r.str("domain_y_dir");
    cfg.checkpoint_dir = r.str("checkpoint_dir");
    cfg.checkpoint_every = r.integer("checkpoint_every", 0, true, 1, INT64_MAX);
    cfg.metrics_path = r.str_or("metrics_path", "");
    cfg.use_replay_buffer = r.integer("use_replay_buffer", 0, false, 0, 1) != 0;
    r.check_unknown();
    cfg.validate();
    return cfg;
}

TrainConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str(), path);
}

}  // namespace gadan::pipeline
