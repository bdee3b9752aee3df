#include "manetl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "manetl/error.hpp"

namespace manetl {

namespace {

// Thrown by value parsers; parse_config adds key and location.
struct BadValue {
    std::string why;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
        throw BadValue{"expected a non-negative integer, got '" + v + "'"};
    }
    return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
        throw BadValue{"expected a number, got '" + v + "'"};
    }
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw BadValue{"expected true or false, got '" + v + "'"};
}

std::string from_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

std::pair<std::size_t, std::size_t> synthetic_pair(const std::string& text);

struct Key {
    std::string name;
    std::function<void(RunSpec&, const std::string&)> set;
    std::function<std::string(const RunSpec&)> get;
};

#define MANETL_SIZE_KEY(name, field)                                                  \
    Key { name, [](RunSpec& s, const std::string& v) { s.field = to_size(v); },        \
          [](const RunSpec& s) { return std::to_string(s.field); } }
#define MANETL_DOUBLE_KEY(name, field)                                                \
    Key { name, [](RunSpec& s, const std::string& v) { s.field = to_double(v); },      \
          [](const RunSpec& s) { return from_double(s.field); } }
#define MANETL_BOOL_KEY(name, field)                                                  \
    Key { name, [](RunSpec& s, const std::string& v) { s.field = to_bool(v); },        \
          [](const RunSpec& s) { return from_bool(s.field); } }

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = {
        Key{"dataset", [](RunSpec& s, const std::string& v) { s.dataset = v; },
            [](const RunSpec& s) { return s.dataset; }},
        Key{"synthetic",
            [](RunSpec& s, const std::string& v) {
                const auto [k, n] = synthetic_pair(v);
                s.synthetic_classes = k;
                s.synthetic_per_class = n;
            },
            [](const RunSpec& s) {
                return std::to_string(s.synthetic_classes) + "," + std::to_string(s.synthetic_per_class);
            }},
        Key{"data_seed", [](RunSpec& s, const std::string& v) { s.data_seed = to_u64(v); },
            [](const RunSpec& s) { return std::to_string(s.data_seed); }},
        MANETL_DOUBLE_KEY("train_fraction", train_fraction),
        MANETL_BOOL_KEY("preprocess", preprocess.enabled),
        MANETL_SIZE_KEY("input_size", model.input_size),
        MANETL_DOUBLE_KEY("max_rotation", preprocess.max_rotation),
        MANETL_SIZE_KEY("num_classes", model.num_classes),
        Key{"variant", [](RunSpec& s, const std::string& v) {
                try {
                    s.model.variant = parse_variant(v);
                } catch (const ConfigError& e) {
                    throw BadValue{e.what()};
                }
            },
            [](const RunSpec& s) { return variant_name(s.model.variant); }},
        MANETL_SIZE_KEY("stem_channels", model.stem_channels),
        MANETL_SIZE_KEY("branch_channels", model.branch_channels),
        MANETL_SIZE_KEY("aux_conv_channels", model.aux_conv_channels),
        MANETL_SIZE_KEY("aux_hidden", model.aux_hidden),
        MANETL_DOUBLE_KEY("aux_dropout", model.aux_dropout),
        MANETL_DOUBLE_KEY("head_dropout", model.head_dropout),
        MANETL_SIZE_KEY("attention_reduction", model.attention_reduction),
        MANETL_SIZE_KEY("epochs", train.epochs),
        MANETL_SIZE_KEY("batch_size", train.batch_size),
        MANETL_DOUBLE_KEY("learning_rate", train.learning_rate),
        Key{"optimizer", [](RunSpec& s, const std::string& v) {
                try {
                    s.train.optimizer = parse_optimizer(v);
                } catch (const ConfigError& e) {
                    throw BadValue{e.what()};
                }
            },
            [](const RunSpec& s) { return optimizer_name(s.train.optimizer); }},
        MANETL_DOUBLE_KEY("momentum", train.momentum),
        MANETL_DOUBLE_KEY("weight_decay", train.weight_decay),
        Key{"seed", [](RunSpec& s, const std::string& v) { s.train.seed = to_u64(v); },
            [](const RunSpec& s) { return std::to_string(s.train.seed); }},
        MANETL_DOUBLE_KEY("aux_weight", train.aux_weight),
        MANETL_BOOL_KEY("augment", train.augment),
        Key{"out", [](RunSpec& s, const std::string& v) { s.out = v; }, [](const RunSpec& s) { return s.out; }},
        Key{"checkpoint", [](RunSpec& s, const std::string& v) { s.checkpoint = v; },
            [](const RunSpec& s) { return s.checkpoint; }},
    };
    return keys;
}

#undef MANETL_SIZE_KEY
#undef MANETL_DOUBLE_KEY
#undef MANETL_BOOL_KEY

const Key* find_key(const std::string& name) {
    for (const Key& k : key_table()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

std::pair<std::size_t, std::size_t> synthetic_pair(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw BadValue{"expected K,n, got '" + text + "'"};
    return {to_size(trim(text.substr(0, comma))), to_size(trim(text.substr(comma + 1)))};
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_synthetic_spec(const std::string& text) {
    try {
        return synthetic_pair(text);
    } catch (const BadValue& e) {
        throw ConfigError("synthetic: " + e.why);
    }
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const Key& k : key_table()) out.push_back(k.name);
        return out;
    }();
    return names;
}

void validate_run(const RunSpec& spec) {
    spec.model.validate();
    spec.train.validate();
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction: must lie strictly between 0 and 1");
    }
    if (spec.synthetic_classes < 2 || spec.synthetic_classes > 50) {
        throw ConfigError("synthetic: class count must be in [2, 50]");
    }
    if (spec.synthetic_per_class < 2) throw ConfigError("synthetic: per-class count must be at least 2");
    if (!(spec.preprocess.max_rotation >= 0.0 && spec.preprocess.max_rotation <= 30.0)) {
        throw ConfigError("max_rotation: must lie in [0, 30] degrees");
    }
    if (spec.model.input_size != spec.preprocess.size) {
        throw ConfigError("input_size: preprocessing and model disagree");
    }
}

RunSpec parse_config(const std::string& text, const std::vector<ConfigOverride>& overrides) {
    RunSpec spec;
    std::vector<std::pair<std::string, std::string>> where;  // key -> location, last wins
    auto apply = [&](const std::string& key, const std::string& value, const std::string& location) {
        const Key* k = find_key(key);
        if (!k) throw ConfigError(location + ": unknown key '" + key + "'");
        try {
            k->set(spec, value);
        } catch (const BadValue& e) {
            throw ConfigError(location + ": key '" + key + "': " + e.why);
        }
        if (key == "input_size") spec.preprocess.size = spec.model.input_size;
        spec.explicit_keys.insert(key);
        where.emplace_back(key, location);
    };

    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string location = "line " + std::to_string(n);
        if (eq == std::string::npos) throw ConfigError(location + ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(location + ": missing key before '='");
        apply(key, trim(line.substr(eq + 1)), location);
    }
    for (const ConfigOverride& o : overrides) apply(o.key, o.value, "command line");

    try {
        validate_run(spec);
    } catch (const ConfigError& e) {
        // Messages start with the field name; point at where it was set.
        const std::string msg = e.what();
        const auto colon = msg.find(':');
        const std::string field = msg.substr(0, colon);
        const std::string rest = colon == std::string::npos ? "" : msg.substr(colon);
        std::string location = "defaults";
        for (auto it = where.rbegin(); it != where.rend(); ++it) {
            if (it->first == field) {
                location = it->second;
                break;
            }
        }
        throw ConfigError(location + ": key '" + field + "'" + rest);
    }
    return spec;
}

RunSpec load_config(const std::string& path, const std::vector<ConfigOverride>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_config(text.str(), overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string format_config(const RunSpec& spec) {
    std::string out;
    for (const Key& k : key_table()) out += k.name + " = " + k.get(spec) + "\n";
    return out;
}

}  // namespace manetl
