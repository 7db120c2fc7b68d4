#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg::cli {

enum class OptionKind { String, Int, Bool, List };

/// One command setting. `env` names an environment variable that can supply it;
/// `from_env` maps the raw variable to the setting's value.
struct OptionSpec {
    std::string name;
    OptionKind kind = OptionKind::String;
    std::string help;
    nlohmann::json fallback;
    bool required = false;
    bool positional = false;
    std::string env;
    std::function<nlohmann::json(const std::string&)> from_env;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

struct RunConfig {
    nlohmann::json values = nlohmann::json::object();
    /// "flag", "env", "file" or "default" per key.
    std::map<std::string, std::string> origin;

    std::string str(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    bool has(const std::string& key) const;
};

/// Flags > environment > config file > fallback. File keys are option names;
/// unknown keys and type mismatches throw SchemaViolation. A required option
/// left unset throws InvalidArgument.
RunConfig resolve_config(const std::vector<OptionSpec>& options, const nlohmann::json& flags,
                         const EnvLookup& env,
                         const std::optional<std::filesystem::path>& config_file);

} // namespace conceptseg::cli
