#include "fslpn/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fslpn/dataset.hpp"
#include "fslpn/errors.hpp"

namespace fslpn {

namespace {

struct KeyDef {
    const char* section;
    const char* key;
    const char* type_name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

long long parse_int(const std::string& v, const char* key) {
    try {
        std::size_t used = 0;
        long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw_parse(std::string("value '") + v + "' for key '" + key + "' is not an integer");
    }
}

double parse_double(const std::string& v, const char* key) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw_parse(std::string("value '") + v + "' for key '" + key + "' is not a number");
    }
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

#define INT_KEY(section, field)                                                       \
    KeyDef {                                                                          \
        section, #field, "integer",                                                   \
            [](RunConfig& c, const std::string& v) {                                  \
                c.field = static_cast<int>(parse_int(v, #field));                     \
            },                                                                        \
            [](const RunConfig& c) { return std::to_string(c.field); }                \
    }
#define DOUBLE_KEY(section, field)                                                    \
    KeyDef {                                                                          \
        section, #field, "number",                                                    \
            [](RunConfig& c, const std::string& v) { c.field = parse_double(v, #field); }, \
            [](const RunConfig& c) { return fmt_double(c.field); }                    \
    }
#define STRING_KEY(section, field)                                                    \
    KeyDef {                                                                          \
        section, #field, "string",                                                    \
            [](RunConfig& c, const std::string& v) { c.field = v; },                  \
            [](const RunConfig& c) { return c.field; }                                \
    }

const std::vector<KeyDef>& key_defs() {
    static const std::vector<KeyDef> defs = {
        STRING_KEY("data", dataset),
        STRING_KEY("data", test_dataset),
        STRING_KEY("data", schema),
        STRING_KEY("data", out_dir),
        STRING_KEY("data", checkpoint),
        INT_KEY("data", select_count),
        DOUBLE_KEY("data", correlation_threshold),
        INT_KEY("data", mi_bins),
        INT_KEY("model", conv_layers),
        INT_KEY("model", width),
        INT_KEY("model", out_dim),
        INT_KEY("model", head_hidden),
        INT_KEY("model", head_out),
        DOUBLE_KEY("model", bn_momentum),
        DOUBLE_KEY("model", bn_eps),
        DOUBLE_KEY("train", learning_rate),
        INT_KEY("train", episodes),
        INT_KEY("train", stage2_episodes),
        DOUBLE_KEY("train", tau),
        DOUBLE_KEY("train", beta),
        DOUBLE_KEY("train", alpha),
        STRING_KEY("train", stage2_loss),
        INT_KEY("train", ways),
        INT_KEY("train", shots),
        INT_KEY("train", queries),
        INT_KEY("eval", eval_episodes),
        STRING_KEY("eval", seeds),
        INT_KEY("eval", threads),
    };
    return defs;
}

#undef INT_KEY
#undef DOUBLE_KEY
#undef STRING_KEY

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

const KeyDef* find_key(const std::string& key) {
    for (const auto& def : key_defs())
        if (key == def.key) return &def;
    return nullptr;
}

std::string nearest_key(const std::string& key) {
    std::size_t best = static_cast<std::size_t>(-1);
    std::string name;
    for (const auto& def : key_defs()) {
        const std::size_t d = levenshtein(key, def.key);
        if (d < best) {
            best = d;
            name = def.key;
        }
    }
    return name;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<std::uint64_t> RunConfig::seed_list() const {
    std::vector<std::uint64_t> out;
    std::stringstream ss(seeds);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw_parse("seeds entry '" + item + "' is not an integer");
        }
    }
    if (out.empty()) throw_parse("seeds list is empty");
    return out;
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    const char* sections[] = {"data", "model", "train", "eval"};
    for (const char* section : sections) {
        os << "[" << section << "]\n";
        for (const auto& def : key_defs())
            if (std::string(def.section) == section) os << def.key << " = " << def.get(*this) << "\n";
    }
    return os.str();
}

void RunConfig::validate() const {
    if (learning_rate <= 0.0) throw_parse("learning_rate must be > 0");
    if (episodes < 1 || stage2_episodes < 1) throw_parse("episode counts must be >= 1");
    if (alpha < 0.0) throw_parse("alpha must be >= 0");
    if (!(tau > 0.0)) throw_parse("tau must be > 0");
    if (beta < tau) throw_parse("beta must satisfy beta >= tau");
    if (ways < 2) throw_parse("ways must be >= 2");
    if (shots < 1 || queries < 1) throw_parse("shots and queries must be >= 1");
    if (stage2_loss != "infomax" && stage2_loss != "nll")
        throw_parse("stage2_loss must be 'infomax' or 'nll', got '" + stage2_loss + "'");
    if (conv_layers < 1 || conv_layers % 2 == 0)
        throw_parse("conv_layers must be odd and >= 1 (stem + 2 per residual block)");
    if (width < 1 || out_dim < 1 || head_hidden < 1 || head_out < 1)
        throw_parse("model dimensions must be >= 1");
    if (eval_episodes < 1) throw_parse("eval_episodes must be >= 1");
    if (threads < 0) throw_parse("threads must be >= 0");
    seed_list();
    schema_from_string(schema);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream is(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw_parse(where + ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" && section != "eval")
                throw_parse(where + ": unknown section [" + section +
                            "] (expected data, model, train or eval)");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw_parse(where + ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const KeyDef* def = find_key(key);
        if (def == nullptr)
            throw_parse(where + ": unknown key '" + key + "' (nearest valid key: " +
                        nearest_key(key) + ")");
        if (!section.empty() && section != def->section)
            throw_parse(where + ": key '" + key + "' belongs to section [" + def->section +
                        "], found under [" + section + "]");
        def->set(cfg, value);
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_parse("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    RunConfig cfg;
    apply_config_text(cfg, buffer.str(), path);
    return cfg;
}

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    const KeyDef* def = find_key(key);
    if (def == nullptr)
        throw_parse("unknown config key '" + key + "' (nearest valid key: " + nearest_key(key) + ")");
    def->set(cfg, value);
}

void apply_env_overrides(RunConfig& cfg) {
    const char* out_dir = std::getenv("FSLPN_OUT_DIR");
    if (out_dir != nullptr && *out_dir != '\0') cfg.out_dir = out_dir;
}

}  // namespace fslpn
