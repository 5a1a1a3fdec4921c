#pragma once

#include "sparse_eq/simulation.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sparse_eq {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed key/value document with the source line of every key ("section.key").
struct ConfigDocument {
    nlohmann::json root = nlohmann::json::object();
    std::map<std::string, int> lines;

    std::string where(const std::string& key) const {
        auto it = lines.find(key);
        return it == lines.end() || it->second <= 0 ? "key '" + key + "'" : "line " + std::to_string(it->second) + ": key '" + key + "'";
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] == '"' && (k == 0 || s[k - 1] != '\\')) in_str = !in_str;
        if (s[k] == '#' && !in_str) return s.substr(0, k);
    }
    return s;
}

inline int bracket_depth(const std::string& s) {
    int depth = 0;
    bool in_str = false;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] == '"' && (k == 0 || s[k - 1] != '\\')) in_str = !in_str;
        if (in_str) continue;
        if (s[k] == '[') ++depth;
        if (s[k] == ']') --depth;
    }
    return depth;
}

class ValueParser {
public:
    ValueParser(const std::string& text, int line) : s_(text), line_(line) {}

    nlohmann::json parse() {
        auto v = value();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters after value");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError("line " + std::to_string(line_) + ": " + msg); }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
    }

    nlohmann::json value() {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return string();
        if (c == '[') return array();
        if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            return true;
        }
        if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            return false;
        }
        return number();
    }

    nlohmann::json string() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
            out += s_[pos_++];
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    nlohmann::json array() {
        ++pos_;
        nlohmann::json arr = nlohmann::json::array();
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return arr;
        }
        while (true) {
            arr.push_back(value());
            skip_ws();
            if (pos_ >= s_.size()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    return arr;
                }
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return arr;
            }
            fail("expected ',' or ']' in array");
        }
    }

    nlohmann::json number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' || s_[pos_] == '-' ||
                                    s_[pos_] == '+' || s_[pos_] == '_'))
            ++pos_;
        std::string tok = s_.substr(start, pos_ - start);
        tok.erase(std::remove(tok.begin(), tok.end(), '_'), tok.end());
        if (tok.empty()) fail("unrecognized value");
        const bool is_float = tok.find_first_of(".eE") != std::string::npos;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double d = std::stod(tok, &used);
                if (used != tok.size()) fail("malformed number '" + tok + "'");
                return d;
            }
            if (tok[0] == '-') {
                const long long v = std::stoll(tok, &used);
                if (used != tok.size()) fail("malformed integer '" + tok + "'");
                return v;
            }
            const unsigned long long v = std::stoull(tok, &used);
            if (used != tok.size()) fail("malformed integer '" + tok + "'");
            return v;
        } catch (const std::logic_error&) {
            fail("malformed number '" + tok + "'");
        }
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_;
};

}  // namespace detail

/// TOML subset: [section] headers, key = value with strings, integers,
/// floats, booleans and (possibly multi-line) arrays, '#' comments.
inline ConfigDocument parse_toml_subset(const std::string& text) {
    ConfigDocument doc;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[' && s.find('=') == std::string::npos) {
            if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            if (doc.root.contains(section)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate section [" + section + "]");
            doc.root[section] = nlohmann::json::object();
            doc.lines[section] = lineno;
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        const int key_line = lineno;
        while (detail::bracket_depth(val) > 0) {
            if (!std::getline(in, line)) throw ConfigError("line " + std::to_string(key_line) + ": unterminated array for key '" + key + "'");
            ++lineno;
            val += " " + detail::trim(detail::strip_comment(line));
        }
        auto& target = section.empty() ? doc.root : doc.root[section];
        const std::string full = section.empty() ? key : section + "." + key;
        if (target.contains(key)) throw ConfigError("line " + std::to_string(key_line) + ": duplicate key '" + full + "'");
        target[key] = detail::ValueParser(val, key_line).parse();
        doc.lines[full] = key_line;
    }
    return doc;
}

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"", {"experiment", "seed", "channel", "equalizer", "run", "output"}},
        {"channel", {"n_i", "n_o", "v", "model"}},
        {"equalizer", {"kind", "N_f", "N_b", "delta", "designs", "dictionaries", "refit", "N_f_grid"}},
        {"run", {"snr_db", "eta_max", "sparsity_pct", "realizations", "symbols_per_burst", "threads"}},
        {"output", {"dir", "prefix"}},
    };
    return schema;
}

class Reader {
public:
    explicit Reader(const ConfigDocument& doc) : doc_(doc) {}

    const nlohmann::json* find(const std::string& section, const std::string& key) const {
        const auto& base = section.empty() ? doc_.root : doc_.root.value(section, nlohmann::json::object());
        if (!section.empty() && !doc_.root.contains(section)) return nullptr;
        const auto& obj = section.empty() ? doc_.root : doc_.root.at(section);
        (void)base;
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    static std::string name(const std::string& section, const std::string& key) { return section.empty() ? key : section + "." + key; }

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
        throw ConfigError(doc_.where(name(section, key)) + ": " + msg);
    }

    long long integer(const std::string& section, const std::string& key, long long def, long long lo, long long hi) const {
        const auto* v = find(section, key);
        if (!v) return def;
        if (!v->is_number_integer()) fail(section, key, "expected an integer");
        const long long x = v->is_number_unsigned() ? static_cast<long long>(v->get<unsigned long long>()) : v->get<long long>();
        if (x < lo || x > hi) fail(section, key, "value " + std::to_string(x) + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return x;
    }

    std::string string(const std::string& section, const std::string& key, const std::string& def) const {
        const auto* v = find(section, key);
        if (!v) return def;
        if (!v->is_string()) fail(section, key, "expected a string");
        return v->get<std::string>();
    }

    bool boolean(const std::string& section, const std::string& key, bool def) const {
        const auto* v = find(section, key);
        if (!v) return def;
        if (!v->is_boolean()) fail(section, key, "expected true or false");
        return v->get<bool>();
    }

    std::vector<double> numbers(const std::string& section, const std::string& key) const {
        const auto* v = find(section, key);
        if (!v) return {};
        if (!v->is_array() || v->empty()) fail(section, key, "expected a nonempty list of numbers");
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number()) fail(section, key, "list entries must be numbers");
            const double x = e.get<double>();
            if (!std::isfinite(x)) fail(section, key, "list entries must be finite");
            out.push_back(x);
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& section, const std::string& key) const {
        const auto* v = find(section, key);
        if (!v) return {};
        if (!v->is_array() || v->empty()) fail(section, key, "expected a nonempty list of strings");
        std::vector<std::string> out;
        for (const auto& e : *v) {
            if (!e.is_string()) fail(section, key, "list entries must be strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    bool has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

private:
    const ConfigDocument& doc_;
};

inline void check_unknown_keys(const ConfigDocument& doc) {
    const auto& schema = config_schema();
    for (auto it = doc.root.begin(); it != doc.root.end(); ++it) {
        if (!schema.at("").count(it.key())) throw ConfigError(doc.where(it.key()) + ": unknown key");
        if (schema.count(it.key())) {
            if (!it.value().is_object()) throw ConfigError(doc.where(it.key()) + ": expected a section");
            for (auto jt = it.value().begin(); jt != it.value().end(); ++jt)
                if (!schema.at(it.key()).count(jt.key())) throw ConfigError(doc.where(it.key() + "." + jt.key()) + ": unknown key");
        } else if (it.value().is_object()) {
            throw ConfigError(doc.where(it.key()) + ": expected a value, not a section");
        }
    }
}

}  // namespace detail

inline const std::set<std::string>& experiment_names() {
    static const std::set<std::string> names{"coherence-sweep", "taps-vs-loss", "ser-sweep", "circulant-gap", "design-dump"};
    return names;
}

/// Validates a parsed document into an ExperimentConfig with all defaults filled.
inline ExperimentConfig config_from_document(const ConfigDocument& doc) {
    detail::check_unknown_keys(doc);
    detail::Reader rd(doc);
    ExperimentConfig cfg;

    if (!rd.has("", "experiment")) throw ConfigError("missing key 'experiment'");
    cfg.experiment = rd.string("", "experiment", "");
    if (!experiment_names().count(cfg.experiment)) rd.fail("", "experiment", "unknown experiment '" + cfg.experiment + "'");
    if (!rd.has("", "seed")) throw ConfigError("missing key 'seed' (no entropy default)");
    {
        const auto* s = rd.find("", "seed");
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
            rd.fail("", "seed", "expected a nonnegative integer");
        cfg.seed = s->get<std::uint64_t>();
    }

    cfg.channel.n_i = int(rd.integer("channel", "n_i", 1, 1, 64));
    cfg.channel.n_o = int(rd.integer("channel", "n_o", 1, 1, 64));
    cfg.channel.v = int(rd.integer("channel", "v", 8, 1, 1024));
    cfg.channel.model = rd.string("channel", "model", "updp");
    if (cfg.channel.model != "updp" && cfg.channel.model != "worst-case") rd.fail("channel", "model", "expected \"updp\" or \"worst-case\"");
    if (cfg.channel.model == "worst-case" && (cfg.channel.n_i != 1 || cfg.channel.n_o != 1))
        rd.fail("channel", "model", "worst-case channels are SISO (n_i = n_o = 1)");

    cfg.equalizer = rd.string("equalizer", "kind", "LE");
    if (cfg.equalizer != "LE" && cfg.equalizer != "DFE") rd.fail("equalizer", "kind", "expected \"LE\" or \"DFE\"");
    cfg.N_f = int(rd.integer("equalizer", "N_f", 80, 1, 4096));
    cfg.N_b = int(rd.integer("equalizer", "N_b", cfg.equalizer == "DFE" ? cfg.channel.v : 0, 0, 4096));
    if (rd.has("equalizer", "delta")) cfg.delta = int(rd.integer("equalizer", "delta", 0, 0, 1 << 20));
    cfg.refit = rd.boolean("equalizer", "refit", true);
    for (const auto& name : rd.strings("equalizer", "designs")) {
        try {
            cfg.designs.push_back(parse_design_spec(name));
        } catch (const std::invalid_argument& e) {
            rd.fail("equalizer", "designs", e.what());
        }
    }
    cfg.dictionaries = rd.strings("equalizer", "dictionaries");
    for (const auto& name : cfg.dictionaries)
        if (name != "significant_taps" && !parse_dict_kind(name)) rd.fail("equalizer", "dictionaries", "unknown dictionary '" + name + "'");
    for (double x : rd.numbers("equalizer", "N_f_grid")) {
        if (x < 1 || x != std::floor(x)) rd.fail("equalizer", "N_f_grid", "entries must be positive integers");
        cfg.N_f_grid.push_back(int(x));
    }

    cfg.snr_db = rd.numbers("run", "snr_db");
    const bool has_eta = rd.has("run", "eta_max");
    const bool has_pct = rd.has("run", "sparsity_pct");
    if (has_eta && has_pct)
        throw ConfigError(doc.where("run.eta_max") + " and " + doc.where("run.sparsity_pct") + ": exactly one budget mode may be given");
    if (has_eta) {
        cfg.budget_mode = BudgetMode::EtaMax;
        cfg.budget_values = rd.numbers("run", "eta_max");
        for (double x : cfg.budget_values)
            if (x < 0) rd.fail("run", "eta_max", "entries must be >= 0");
    } else if (has_pct) {
        cfg.budget_mode = BudgetMode::SparsityPct;
        cfg.budget_values = rd.numbers("run", "sparsity_pct");
        for (double x : cfg.budget_values)
            if (x < 0 || x > 100) rd.fail("run", "sparsity_pct", "entries must lie in [0, 100]");
    }
    cfg.realizations = int(rd.integer("run", "realizations", 500, 1, 100000000));
    cfg.symbols_per_burst = int(rd.integer("run", "symbols_per_burst", 2000, 1, 100000000));
    cfg.threads = int(rd.integer("run", "threads", 1, 1, 1024));
    cfg.out_dir = rd.string("output", "dir", ".");
    cfg.prefix = rd.string("output", "prefix", cfg.experiment);

    // Per-experiment requirements.
    auto need = [&](bool ok, const std::string& key) {
        if (!ok) throw ConfigError("missing key '" + key + "' required by experiment '" + cfg.experiment + "'");
    };
    need(!cfg.snr_db.empty(), "run.snr_db");
    const std::string& e = cfg.experiment;
    if (e == "coherence-sweep") {
        need(!cfg.dictionaries.empty(), "equalizer.dictionaries");
    } else if (e == "taps-vs-loss") {
        need(!cfg.dictionaries.empty(), "equalizer.dictionaries");
        need(has_eta, "run.eta_max");
    } else if (e == "ser-sweep" || e == "design-dump") {
        need(!cfg.designs.empty(), "equalizer.designs");
        bool budgeted = false, dfe = false;
        for (const auto& d : cfg.designs) {
            budgeted = budgeted || d.uses_budget();
            dfe = dfe || d.is_dfe();
        }
        if (budgeted) need(has_eta || has_pct, "run.eta_max' or 'run.sparsity_pct");
        if (dfe && cfg.N_b < 1) rd.fail("equalizer", "N_b", "DFE designs need N_b >= 1");
    } else if (e == "circulant-gap") {
        need(!cfg.N_f_grid.empty(), "equalizer.N_f_grid");
        for (int n : cfg.N_f_grid)
            if (n < cfg.channel.v + 1) rd.fail("equalizer", "N_f_grid", "entries must be >= v + 1");
    }
    if (cfg.equalizer == "DFE" && (e == "taps-vs-loss" || e == "circulant-gap") && cfg.N_b < 1)
        rd.fail("equalizer", "N_b", "DFE experiments need N_b >= 1");
    if (cfg.N_b >= 1 && cfg.N_b > cfg.N_f + cfg.channel.v - 1) rd.fail("equalizer", "N_b", "must not exceed N_f + v - 1");
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text, bool json_format) {
    ConfigDocument doc;
    if (json_format) {
        try {
            doc.root = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("malformed JSON: ") + e.what());
        }
        if (!doc.root.is_object()) throw ConfigError("JSON config must be an object");
    } else {
        doc = parse_toml_subset(text);
    }
    return config_from_document(doc);
}

/// Reads a config file; ".json" selects strict JSON, anything else the TOML subset.
inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return parse_config_text(ss.str(), json);
}

/// Fully resolved configuration, defaults included.
inline nlohmann::json config_echo(const ExperimentConfig& cfg) {
    nlohmann::json designs = nlohmann::json::array();
    for (const auto& d : cfg.designs) designs.push_back(d.label);
    nlohmann::json j;
    j["experiment"] = cfg.experiment;
    j["seed"] = cfg.seed;
    j["channel"] = {{"n_i", cfg.channel.n_i}, {"n_o", cfg.channel.n_o}, {"v", cfg.channel.v}, {"model", cfg.channel.model}};
    j["equalizer"] = {{"kind", cfg.equalizer}, {"N_f", cfg.N_f},           {"N_b", cfg.N_b},       {"designs", designs},
                      {"dictionaries", cfg.dictionaries}, {"refit", cfg.refit}, {"N_f_grid", cfg.N_f_grid}};
    j["equalizer"]["delta"] = cfg.delta ? nlohmann::json(*cfg.delta) : nlohmann::json("default");
    j["run"] = {{"snr_db", cfg.snr_db},
                {"realizations", cfg.realizations},
                {"symbols_per_burst", cfg.symbols_per_burst},
                {"threads", cfg.threads}};
    if (!cfg.budget_values.empty()) j["run"][cfg.budget_mode == BudgetMode::EtaMax ? "eta_max" : "sparsity_pct"] = cfg.budget_values;
    j["output"] = {{"dir", cfg.out_dir}, {"prefix", cfg.prefix}};
    return j;
}

}  // namespace sparse_eq
