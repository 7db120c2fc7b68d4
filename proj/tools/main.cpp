#include "commands.hpp"

#include "conceptseg/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <memory>

using namespace conceptseg;
using namespace conceptseg::cli;
using nlohmann::json;

namespace {

// Parsed values live here until they are folded into the flags object.
struct Slots {
    std::map<std::string, std::string> strings;
    std::map<std::string, std::int64_t> ints;
    std::map<std::string, bool> bools;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, CLI::Option*> handles;
    std::string config_file;
    CLI::Option* config_handle = nullptr;
};

void register_options(CLI::App& sub, const Command& cmd, Slots& slots) {
    for (const auto& o : cmd.options) {
        const std::string name = o.positional ? o.name : "--" + o.name;
        CLI::Option* opt = nullptr;
        switch (o.kind) {
        case OptionKind::String: opt = sub.add_option(name, slots.strings[o.name], o.help); break;
        case OptionKind::Int: opt = sub.add_option(name, slots.ints[o.name], o.help); break;
        case OptionKind::Bool: opt = sub.add_flag(name, slots.bools[o.name], o.help); break;
        case OptionKind::List:
            opt = sub.add_option(name, slots.lists[o.name], o.help)->delimiter(',')->allow_extra_args(false);
            break;
        }
        if (o.positional) {
            opt->required();
        }
        if (!o.env.empty()) {
            opt->description(o.help + " (env " + o.env + ")");
        }
        slots.handles[o.name] = opt;
    }
    if (cmd.configurable) {
        slots.config_handle =
            sub.add_option("--config", slots.config_file, "JSON file of settings; flags and env take precedence");
    }
}

json explicit_flags(const Command& cmd, const Slots& slots) {
    json flags = json::object();
    for (const auto& o : cmd.options) {
        if (slots.handles.at(o.name)->count() == 0) {
            continue;
        }
        switch (o.kind) {
        case OptionKind::String: flags[o.name] = slots.strings.at(o.name); break;
        case OptionKind::Int: flags[o.name] = slots.ints.at(o.name); break;
        case OptionKind::Bool: flags[o.name] = slots.bools.at(o.name); break;
        case OptionKind::List: flags[o.name] = slots.lists.at(o.name); break;
        }
    }
    return flags;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept segmentation evaluation harness"};
    app.require_subcommand(1);
    std::map<std::string, std::unique_ptr<Slots>> slots;
    for (const auto& cmd : commands()) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        auto& s = slots[cmd.name] = std::make_unique<Slots>();
        register_options(*sub, cmd, *s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    for (const auto& cmd : commands()) {
        if (app.got_subcommand(cmd.name)) {
            const Slots& s = *slots.at(cmd.name);
            RunConfig cfg;
            try {
                std::optional<std::filesystem::path> file;
                if (s.config_handle != nullptr && s.config_handle->count() > 0) {
                    file = s.config_file;
                }
                cfg = resolve_config(cmd.options, explicit_flags(cmd, s), process_env(), file);
            } catch (const Error& e) {
                std::cerr << "usage error: " << e.what() << "\n";
                return kExitUsage;
            }
            if (cmd.configurable) {
                std::cerr << "config " << cfg.values.dump() << "\n";
            }
            try {
                return cmd.run(cfg, std::cout, std::cerr);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kExitFailure;
            }
        }
    }
    return kExitUsage;
}
