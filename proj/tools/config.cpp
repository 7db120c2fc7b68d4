#include "config.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/error.hpp"

#include <algorithm>
#include <cstdlib>

namespace conceptseg::cli {

using nlohmann::json;

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr || *v == '\0') {
            return std::nullopt;
        }
        return std::string(v);
    };
}

namespace {

bool kind_matches(OptionKind kind, const json& v) {
    switch (kind) {
    case OptionKind::String: return v.is_string();
    case OptionKind::Int: return v.is_number_integer();
    case OptionKind::Bool: return v.is_boolean();
    case OptionKind::List:
        if (!v.is_array()) {
            return false;
        }
        for (const auto& e : v) {
            if (!e.is_string()) {
                return false;
            }
        }
        return true;
    }
    return false;
}

std::string_view kind_name(OptionKind kind) {
    switch (kind) {
    case OptionKind::String: return "string";
    case OptionKind::Int: return "integer";
    case OptionKind::Bool: return "boolean";
    case OptionKind::List: return "array of strings";
    }
    return "?";
}

} // namespace

RunConfig resolve_config(const std::vector<OptionSpec>& options, const json& flags,
                         const EnvLookup& env, const std::optional<std::filesystem::path>& config_file) {
    json file = json::object();
    if (config_file) {
        try {
            file = json::parse(read_text_file(*config_file));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, config_file->string() + ": " + e.what());
        }
        if (!file.is_object()) {
            throw Error(ErrorCode::SchemaViolation, config_file->string() + ": expected an object");
        }
        for (const auto& [key, value] : file.items()) {
            const auto it = std::find_if(options.begin(), options.end(),
                                         [&](const OptionSpec& o) { return o.name == key; });
            if (it == options.end()) {
                throw Error(ErrorCode::SchemaViolation, "unknown config key: " + key);
            }
            if (!value.is_null() && !kind_matches(it->kind, value)) {
                throw Error(ErrorCode::SchemaViolation,
                            "config key " + key + " must be a " + std::string(kind_name(it->kind)));
            }
        }
    }

    RunConfig cfg;
    for (const auto& o : options) {
        json value;
        std::string origin;
        if (flags.contains(o.name)) {
            value = flags.at(o.name);
            origin = "flag";
        } else if (!o.env.empty() && env) {
            if (const auto raw = env(o.env)) {
                try {
                    value = o.from_env ? o.from_env(*raw) : json(*raw);
                } catch (const std::exception& e) {
                    throw Error(ErrorCode::InvalidArgument, o.env + ": " + e.what());
                }
                origin = "env";
            }
        }
        if (origin.empty() && file.contains(o.name) && !file.at(o.name).is_null()) {
            value = file.at(o.name);
            origin = "file";
        }
        if (origin.empty()) {
            if (o.required) {
                throw Error(ErrorCode::InvalidArgument, "missing required setting --" + o.name);
            }
            value = o.fallback;
            origin = "default";
        }
        cfg.values[o.name] = value;
        cfg.origin[o.name] = origin;
    }
    return cfg;
}

std::string RunConfig::str(const std::string& key) const {
    const auto& v = values.at(key);
    return v.is_null() ? std::string() : v.get<std::string>();
}

std::int64_t RunConfig::integer(const std::string& key) const { return values.at(key).get<std::int64_t>(); }

bool RunConfig::flag(const std::string& key) const { return values.at(key).get<bool>(); }

std::vector<std::string> RunConfig::list(const std::string& key) const {
    const auto& v = values.at(key);
    return v.is_null() ? std::vector<std::string>{} : v.get<std::vector<std::string>>();
}

bool RunConfig::has(const std::string& key) const {
    return values.contains(key) && !values.at(key).is_null() &&
           !(values.at(key).is_string() && values.at(key).get<std::string>().empty());
}

} // namespace conceptseg::cli
