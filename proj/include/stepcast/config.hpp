#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stepcast/common.hpp"
#include "stepcast/forecasters.hpp"
#include "stepcast/synthcohort.hpp"

namespace stepcast {

namespace toml {

/// Minimal TOML subset: `[section]` headers one level deep, `key = value`
/// lines, `#` comments, and values that are strings, integers, floats,
/// booleans, or flat arrays. Enough for experiment configs; anything else
/// is a ParseError.
struct Value {
    enum class Kind { string_v, integer_v, float_v, boolean_v, array_v };
    Kind kind = Kind::string_v;
    std::string str;
    long long integer = 0;
    double real = 0.0;
    bool boolean = false;
    std::vector<Value> array;

    std::string type_name() const {
        switch (kind) {
            case Kind::string_v: return "string";
            case Kind::integer_v: return "integer";
            case Kind::float_v: return "float";
            case Kind::boolean_v: return "boolean";
            case Kind::array_v: return "array";
        }
        return "?";
    }

    const std::string& as_string(const std::string& key) const {
        if (kind != Kind::string_v) throw ConfigError("config key '" + key + "' must be a string, got " + type_name());
        return str;
    }
    long long as_int(const std::string& key) const {
        if (kind != Kind::integer_v)
            throw ConfigError("config key '" + key + "' must be an integer, got " + type_name());
        return integer;
    }
    std::uint64_t as_uint64(const std::string& key) const {
        long long v = as_int(key);
        if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
        return static_cast<std::uint64_t>(v);
    }
    double as_double(const std::string& key) const {
        if (kind == Kind::integer_v) return static_cast<double>(integer);
        if (kind != Kind::float_v) throw ConfigError("config key '" + key + "' must be a number, got " + type_name());
        return real;
    }
    bool as_bool(const std::string& key) const {
        if (kind != Kind::boolean_v)
            throw ConfigError("config key '" + key + "' must be a boolean, got " + type_name());
        return boolean;
    }
    const std::vector<Value>& as_array(const std::string& key) const {
        if (kind != Kind::array_v) throw ConfigError("config key '" + key + "' must be an array, got " + type_name());
        return array;
    }
};

using Table = std::map<std::string, Value>;

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Strips a trailing comment, respecting quoted strings.
inline std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
        } else if (c == '"') {
            in_string = true;
        } else if (c == '#') {
            return s.substr(0, i);
        }
    }
    return s;
}

inline Value parse_value(const std::string& raw, int line_no);

inline Value parse_array(const std::string& raw, int line_no) {
    Value v;
    v.kind = Value::Kind::array_v;
    std::string inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    std::vector<std::string> parts;
    int depth = 0;
    bool in_string = false;
    std::string cur;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        char c = inner[i];
        if (in_string) {
            cur += c;
            if (c == '\\' && i + 1 < inner.size()) cur += inner[++i];
            else if (c == '"') in_string = false;
        } else if (c == '"') {
            cur += c;
            in_string = true;
        } else if (c == '[') {
            ++depth;
            cur += c;
        } else if (c == ']') {
            --depth;
            cur += c;
        } else if (c == ',' && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) parts.push_back(cur);
    for (const auto& p : parts) {
        std::string t = trim(p);
        if (t.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty array element");
        v.array.push_back(parse_value(t, line_no));
    }
    return v;
}

inline Value parse_value(const std::string& raw, int line_no) {
    Value v;
    if (raw.empty()) throw ParseError("config line " + std::to_string(line_no) + ": missing value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ParseError("config line " + std::to_string(line_no) + ": unterminated string");
        v.kind = Value::Kind::string_v;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            char c = raw[i];
            if (c == '\\') {
                if (i + 2 >= raw.size() + 1)
                    throw ParseError("config line " + std::to_string(line_no) + ": dangling escape");
                char e = raw[++i];
                if (e == 'n') v.str += '\n';
                else if (e == 't') v.str += '\t';
                else if (e == '"') v.str += '"';
                else if (e == '\\') v.str += '\\';
                else throw ParseError("config line " + std::to_string(line_no) + ": unsupported escape \\" + e);
            } else if (c == '"') {
                throw ParseError("config line " + std::to_string(line_no) + ": unexpected '\"' inside string");
            } else {
                v.str += c;
            }
        }
        return v;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']') throw ParseError("config line " + std::to_string(line_no) + ": unterminated array");
        return parse_array(raw, line_no);
    }
    if (raw == "true" || raw == "false") {
        v.kind = Value::Kind::boolean_v;
        v.boolean = raw == "true";
        return v;
    }
    // Integer, else float; both must consume the whole token.
    bool int_like = !raw.empty();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char c = raw[i];
        if (i == 0 && (c == '+' || c == '-')) continue;
        if (c < '0' || c > '9') {
            int_like = false;
            break;
        }
    }
    if (int_like && raw != "+" && raw != "-") {
        errno = 0;
        char* end = nullptr;
        long long x = std::strtoll(raw.c_str(), &end, 10);
        if (errno == 0 && end && *end == '\0') {
            v.kind = Value::Kind::integer_v;
            v.integer = x;
            return v;
        }
    }
    {
        errno = 0;
        char* end = nullptr;
        double x = std::strtod(raw.c_str(), &end);
        if (errno == 0 && end && *end == '\0') {
            v.kind = Value::Kind::float_v;
            v.real = x;
            return v;
        }
    }
    throw ParseError("config line " + std::to_string(line_no) + ": cannot parse value '" + raw + "'");
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

}  // namespace detail

/// Parses the TOML subset into a flat table keyed "section.key" (bare "key"
/// outside sections). Duplicate keys are a ParseError.
inline Table parse(const std::string& text) {
    Table table;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError("config line " + std::to_string(line_no) + ": unterminated section");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (!detail::valid_key(section))
                throw ParseError("config line " + std::to_string(line_no) + ": invalid section name '" + section + "'");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = detail::trim(s.substr(0, eq));
        if (!detail::valid_key(key))
            throw ParseError("config line " + std::to_string(line_no) + ": invalid key '" + key + "'");
        std::string full = section.empty() ? key : section + "." + key;
        if (table.count(full)) throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" + full + "'");
        table.emplace(full, detail::parse_value(detail::trim(s.substr(eq + 1)), line_no));
    }
    return table;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
}

}  // namespace toml

/// Everything one experiment run needs. The seed is mandatory and there are
/// no wall-clock defaults anywhere, so a config reproduces byte-identically.
struct ExperimentConfig {
    std::optional<std::uint64_t> seed;
    std::string dataset = "custom";
    std::string out_dir = "out";
    // Data source: a synthetic preset/spec, or explicit CSV paths.
    std::string preset;
    std::string activity_csv;
    std::string engagement_csv;
    synth::CohortSpec synth_spec;
    bool synth_seed_pinned = false;  // [synth] seed given explicitly
    // Protocol.
    ModelConfig model;
    double test_fraction = 0.2;
    double val_fraction = 0.1;
    std::vector<int> windows{3, 7, 14, 21};
    std::vector<double> goal_thresholds{6000.0, 8000.0};
    std::vector<int> percentiles{0, 25, 50, 75};
    int arima_min_days = 20;
    bool arima_auto_order = false;
    bool save_checkpoints = true;
    bool audit_splits = true;
    std::vector<std::string> stages;  // empty = all
    int jobs = 1;
};

inline const std::vector<std::string>& all_stage_names() {
    static const std::vector<std::string> names{"ingest",      "sweep",    "baselines", "classification",
                                                "percentiles", "per_user", "outcomes"};
    return names;
}

namespace detail {

inline std::vector<int> int_array(const toml::Value& v, const std::string& key) {
    std::vector<int> out;
    for (const auto& e : v.as_array(key)) out.push_back(static_cast<int>(e.as_int(key + "[]")));
    return out;
}

inline std::vector<double> double_array(const toml::Value& v, const std::string& key) {
    std::vector<double> out;
    for (const auto& e : v.as_array(key)) out.push_back(e.as_double(key + "[]"));
    return out;
}

inline std::vector<std::string> string_array(const toml::Value& v, const std::string& key) {
    std::vector<std::string> out;
    for (const auto& e : v.as_array(key)) out.push_back(e.as_string(key + "[]"));
    return out;
}

}  // namespace detail

/// Builds an ExperimentConfig from a parsed table. Unknown keys are a
/// ConfigError so typos fail loudly instead of silently using defaults.
inline ExperimentConfig config_from_table(const toml::Table& table) {
    ExperimentConfig cfg;
    static const std::set<std::string> known{
        "seed",           "dataset",          "out_dir",          "preset",
        "activity_csv",   "engagement_csv",   "test_fraction",    "val_fraction",
        "windows",        "goal_thresholds",  "percentiles",      "arima_min_days",
        "arima_auto_order", "save_checkpoints", "audit_splits",   "stages",
        "jobs",
        "model.window",   "model.hidden",     "model.late_hidden", "model.late_temp",
        "model.learning_rate", "model.max_epochs", "model.batch_size", "model.patience",
        "model.arima_order",
        "synth.n_users",  "synth.n_days",     "synth.seed",       "synth.coupling_beta",
        "synth.steps_target", "synth.wear_mean_hours", "synth.wear_std_hours",
        "synth.dow_multipliers", "synth.nonwear_day_prob", "synth.step_noise_sigma",
        "synth.user_level_sigma", "synth.engagement_level_minutes", "synth.engagement_noise_sigma",
        "synth.engagement_user_sigma", "synth.invalid_user_fraction", "synth.start_date"};
    for (const auto& [key, value] : table)
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    auto get = [&](const std::string& key) -> const toml::Value* {
        auto it = table.find(key);
        return it == table.end() ? nullptr : &it->second;
    };

    if (const auto* v = get("seed")) cfg.seed = v->as_uint64("seed");
    if (const auto* v = get("dataset")) cfg.dataset = v->as_string("dataset");
    if (const auto* v = get("out_dir")) cfg.out_dir = v->as_string("out_dir");
    if (const auto* v = get("preset")) cfg.preset = v->as_string("preset");
    if (const auto* v = get("activity_csv")) cfg.activity_csv = v->as_string("activity_csv");
    if (const auto* v = get("engagement_csv")) cfg.engagement_csv = v->as_string("engagement_csv");
    if (const auto* v = get("test_fraction")) cfg.test_fraction = v->as_double("test_fraction");
    if (const auto* v = get("val_fraction")) cfg.val_fraction = v->as_double("val_fraction");
    if (const auto* v = get("windows")) cfg.windows = detail::int_array(*v, "windows");
    if (const auto* v = get("goal_thresholds")) cfg.goal_thresholds = detail::double_array(*v, "goal_thresholds");
    if (const auto* v = get("percentiles")) cfg.percentiles = detail::int_array(*v, "percentiles");
    if (const auto* v = get("arima_min_days")) cfg.arima_min_days = static_cast<int>(v->as_int("arima_min_days"));
    if (const auto* v = get("arima_auto_order")) cfg.arima_auto_order = v->as_bool("arima_auto_order");
    if (const auto* v = get("save_checkpoints")) cfg.save_checkpoints = v->as_bool("save_checkpoints");
    if (const auto* v = get("audit_splits")) cfg.audit_splits = v->as_bool("audit_splits");
    if (const auto* v = get("stages")) cfg.stages = detail::string_array(*v, "stages");
    if (const auto* v = get("jobs")) cfg.jobs = static_cast<int>(v->as_int("jobs"));

    if (const auto* v = get("model.window")) cfg.model.window = static_cast<int>(v->as_int("model.window"));
    if (const auto* v = get("model.hidden")) cfg.model.hidden = static_cast<int>(v->as_int("model.hidden"));
    if (const auto* v = get("model.late_hidden"))
        cfg.model.late_hidden = static_cast<int>(v->as_int("model.late_hidden"));
    if (const auto* v = get("model.late_temp")) cfg.model.late_temp = static_cast<int>(v->as_int("model.late_temp"));
    if (const auto* v = get("model.learning_rate")) cfg.model.learning_rate = v->as_double("model.learning_rate");
    if (const auto* v = get("model.max_epochs")) cfg.model.max_epochs = static_cast<int>(v->as_int("model.max_epochs"));
    if (const auto* v = get("model.batch_size")) cfg.model.batch_size = static_cast<int>(v->as_int("model.batch_size"));
    if (const auto* v = get("model.patience")) cfg.model.patience = static_cast<int>(v->as_int("model.patience"));
    if (const auto* v = get("model.arima_order")) {
        std::vector<int> o = detail::int_array(*v, "model.arima_order");
        if (o.size() != 3) throw ConfigError("model.arima_order must be [p,d,q]");
        cfg.model.arima_order = {o[0], o[1], o[2]};
    }

    if (!cfg.preset.empty()) cfg.synth_spec = synth::preset_by_name(cfg.preset);
    if (const auto* v = get("synth.n_users")) cfg.synth_spec.n_users = static_cast<int>(v->as_int("synth.n_users"));
    if (const auto* v = get("synth.n_days")) cfg.synth_spec.n_days = static_cast<int>(v->as_int("synth.n_days"));
    if (const auto* v = get("synth.seed")) {
        cfg.synth_spec.seed = v->as_uint64("synth.seed");
        cfg.synth_seed_pinned = true;
    }
    if (const auto* v = get("synth.coupling_beta")) cfg.synth_spec.coupling_beta = v->as_double("synth.coupling_beta");
    if (const auto* v = get("synth.steps_target")) cfg.synth_spec.steps_target = v->as_double("synth.steps_target");
    if (const auto* v = get("synth.wear_mean_hours"))
        cfg.synth_spec.wear_mean_hours = v->as_double("synth.wear_mean_hours");
    if (const auto* v = get("synth.wear_std_hours"))
        cfg.synth_spec.wear_std_hours = v->as_double("synth.wear_std_hours");
    if (const auto* v = get("synth.dow_multipliers")) {
        std::vector<double> m = detail::double_array(*v, "synth.dow_multipliers");
        if (m.size() != 7) throw ConfigError("synth.dow_multipliers must have 7 entries");
        for (int i = 0; i < 7; ++i) cfg.synth_spec.dow_multipliers[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)];
    }
    if (const auto* v = get("synth.nonwear_day_prob"))
        cfg.synth_spec.nonwear_day_prob = v->as_double("synth.nonwear_day_prob");
    if (const auto* v = get("synth.step_noise_sigma"))
        cfg.synth_spec.step_noise_sigma = v->as_double("synth.step_noise_sigma");
    if (const auto* v = get("synth.user_level_sigma"))
        cfg.synth_spec.user_level_sigma = v->as_double("synth.user_level_sigma");
    if (const auto* v = get("synth.engagement_level_minutes"))
        cfg.synth_spec.engagement_level_minutes = v->as_double("synth.engagement_level_minutes");
    if (const auto* v = get("synth.engagement_noise_sigma"))
        cfg.synth_spec.engagement_noise_sigma = v->as_double("synth.engagement_noise_sigma");
    if (const auto* v = get("synth.engagement_user_sigma"))
        cfg.synth_spec.engagement_user_sigma = v->as_double("synth.engagement_user_sigma");
    if (const auto* v = get("synth.invalid_user_fraction"))
        cfg.synth_spec.invalid_user_fraction = v->as_double("synth.invalid_user_fraction");
    if (const auto* v = get("synth.start_date")) cfg.synth_spec.start_date = Date::parse(v->as_string("synth.start_date"));
    return cfg;
}

inline ExperimentConfig config_from_file(const std::string& path) { return config_from_table(toml::parse_file(path)); }

/// Full validation; call after CLI overrides are applied.
inline void validate_experiment(const ExperimentConfig& cfg) {
    if (!cfg.seed) throw ConfigError("seed is required (set it in the config file or pass --seed)");
    if (cfg.dataset.empty()) throw ConfigError("dataset name must not be empty");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        throw ConfigError("test_fraction must be in (0,1)");
    if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
        throw ConfigError("val_fraction must be in [0,1)");
    if (!(cfg.test_fraction + cfg.val_fraction < 1.0))
        throw ConfigError("test_fraction + val_fraction must leave room for training users");
    if (cfg.windows.empty()) throw ConfigError("windows must not be empty");
    for (int w : cfg.windows)
        if (w != 3 && w != 7 && w != 14 && w != 21)
            throw ConfigError("window " + std::to_string(w) + " not in {3,7,14,21}");
    if (cfg.goal_thresholds.empty()) throw ConfigError("goal_thresholds must not be empty");
    for (double t : cfg.goal_thresholds)
        if (!(t > 0.0)) throw ConfigError("goal thresholds must be positive");
    if (cfg.percentiles.empty()) throw ConfigError("percentiles must not be empty");
    for (int p : cfg.percentiles)
        if (p < 0 || p > 99) throw ConfigError("percentiles must be in [0,99]");
    if (cfg.arima_min_days < 5) throw ConfigError("arima_min_days must be at least 5");
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
    for (const auto& s : cfg.stages) {
        bool ok = false;
        for (const auto& name : all_stage_names()) ok = ok || name == s;
        if (!ok) throw ConfigError("unknown stage '" + s + "'");
    }
    bool has_csv = !cfg.activity_csv.empty() || !cfg.engagement_csv.empty();
    if (has_csv && (cfg.activity_csv.empty() || cfg.engagement_csv.empty()))
        throw ConfigError("activity_csv and engagement_csv must be given together");
    ModelConfig m = cfg.model;
    m.seed = cfg.seed.value_or(1);
    validate_config(m);
    synth::validate_spec(cfg.synth_spec);
}

}  // namespace stepcast
