#pragma once

#include "config.hpp"

#include "conceptseg/backend.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace conceptseg::cli {

/// Exit codes: 0 success, 1 violations / unit failures / errors, 2 usage.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct Command {
    std::string name;
    std::string help;
    std::vector<OptionSpec> options;
    /// Commands that write a run directory take --config and echo the resolved config.
    bool configurable = true;
    std::function<int(const RunConfig&, std::ostream& out, std::ostream& err)> run;
};

const std::vector<Command>& commands();

/// "toy:<world.json>[,<scenes.json>]", "remote:<url>", "replay:<fixture.jsonl>".
/// The scene index defaults to scenes.json beside the world file.
std::shared_ptr<SegmentationBackend> make_backend(const std::string& spec);

} // namespace conceptseg::cli
