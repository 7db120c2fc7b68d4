#include "conceptseg/report.hpp"

#include "conceptseg/codec.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace conceptseg {

using nlohmann::json;

std::vector<DeltaCell> compute_deltas(std::span<const MethodSummary> summaries,
                                      const std::set<std::string>& subjects) {
    std::map<std::string, std::vector<MethodSummary>> references;
    for (const auto& s : summaries) {
        if (!subjects.contains(s.method_id)) {
            references[s.dataset_id].push_back(s);
        }
    }
    std::vector<DeltaCell> out;
    for (const auto& s : summaries) {
        if (!subjects.contains(s.method_id)) {
            continue;
        }
        DeltaCell cell{s.dataset_id, s.method_id, s.mean_dice, std::nullopt};
        const auto it = references.find(s.dataset_id);
        if (it != references.end() && !it->second.empty()) {
            cell.delta = delta_vs_best(s, it->second);
        }
        out.push_back(cell);
    }
    return out;
}

std::string arrow_text(double delta) {
    const double r = round_half_even(delta, 4);
    if (r > 0.0) {
        return "↑" + format_dice(r);
    }
    if (r < 0.0) {
        return "↓" + format_dice(-r);
    }
    return "=" + format_dice(0.0);
}

namespace {

// Display width in code points so arrows do not skew column alignment.
std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        n += (c & 0xC0) != 0x80 ? 1 : 0;
    }
    return n;
}

std::string pad(const std::string& s, std::size_t width) {
    const auto w = display_width(s);
    return s + std::string(w < width ? width - w : 0, ' ');
}

} // namespace

std::string render_delta_table(std::span<const MethodSummary> summaries,
                               const std::set<std::string>& subjects) {
    std::vector<std::string> datasets;
    std::vector<std::string> methods;
    std::map<std::pair<std::string, std::string>, std::string> cells;
    for (const auto& s : summaries) {
        if (std::find(datasets.begin(), datasets.end(), s.dataset_id) == datasets.end()) {
            datasets.push_back(s.dataset_id);
        }
        if (std::find(methods.begin(), methods.end(), s.method_id) == methods.end()) {
            methods.push_back(s.method_id);
        }
        cells[{s.method_id, s.dataset_id}] = format_dice(s.mean_dice);
    }
    std::stable_partition(methods.begin(), methods.end(),
                          [&](const std::string& m) { return !subjects.contains(m); });
    for (const auto& d : compute_deltas(summaries, subjects)) {
        if (d.delta) {
            cells[{d.method_id, d.dataset_id}] += " " + arrow_text(*d.delta);
        }
    }

    std::vector<std::size_t> widths(datasets.size() + 1, 7);
    widths[0] = std::max<std::size_t>(widths[0], display_width("Method"));
    for (const auto& m : methods) {
        widths[0] = std::max(widths[0], display_width(m));
    }
    for (std::size_t c = 0; c < datasets.size(); ++c) {
        widths[c + 1] = std::max(widths[c + 1], display_width(datasets[c]));
        for (const auto& m : methods) {
            const auto it = cells.find({m, datasets[c]});
            if (it != cells.end()) {
                widths[c + 1] = std::max(widths[c + 1], display_width(it->second));
            }
        }
    }

    std::ostringstream out;
    out << pad("Method", widths[0]);
    for (std::size_t c = 0; c < datasets.size(); ++c) {
        out << "  " << pad(datasets[c], widths[c + 1]);
    }
    out << "\n";
    std::size_t total = widths[0];
    for (std::size_t c = 1; c < widths.size(); ++c) {
        total += widths[c] + 2;
    }
    out << std::string(total, '-') << "\n";
    bool separated = false;
    for (const auto& m : methods) {
        if (subjects.contains(m) && !separated) {
            separated = true;
            if (m != methods.front()) {
                out << std::string(total, '-') << "\n";
            }
        }
        out << pad(m, widths[0]);
        for (std::size_t c = 0; c < datasets.size(); ++c) {
            const auto it = cells.find({m, datasets[c]});
            out << "  " << pad(it == cells.end() ? "-" : it->second, widths[c + 1]);
        }
        out << "\n";
    }
    return out.str();
}

std::string conventions_text(Aggregation aggregation, int connectivity) {
    std::ostringstream out;
    out << "dice = 2|P∩G| / (|P| + |G|)\n"
        << "empty prediction and empty ground truth = 1.0; empty prediction vs nonempty ground truth = 0.0\n"
        << "3D aggregation = " << to_string(aggregation) << "\n"
        << "multi-target datasets: per-case score = mean over targets; dataset score = mean over cases\n"
        << "units are weighted equally (one unit per case)\n"
        << "means rounded half-to-even at 4 decimals\n"
        << "box prompts: largest connected component, connectivity = " << connectivity
        << ", inclusive pixel coordinates\n";
    return out.str();
}

json summaries_to_json(std::span<const MethodSummary> summaries,
                       const std::set<std::string>& subjects, Aggregation aggregation,
                       int connectivity) {
    std::map<std::pair<std::string, std::string>, std::optional<double>> deltas;
    for (const auto& d : compute_deltas(summaries, subjects)) {
        deltas[{d.method_id, d.dataset_id}] = d.delta;
    }
    json list = json::array();
    for (const auto& s : summaries) {
        json j{{"method_id", s.method_id},
               {"dataset_id", s.dataset_id},
               {"mean_dice", s.mean_dice},
               {"mean_dice_4dp", round_half_even(s.mean_dice, 4)},
               {"n_units", s.n_units}};
        const auto it = deltas.find({s.method_id, s.dataset_id});
        if (it != deltas.end() && it->second) {
            j["delta_vs_best"] = *it->second;
            j["arrow"] = arrow_text(*it->second);
        }
        list.push_back(std::move(j));
    }
    return {{"conventions",
             {{"aggregation", to_string(aggregation)},
              {"connectivity", connectivity},
              {"both_empty_dice", 1.0},
              {"multi_target", "mean over targets, then mean over cases"},
              {"rounding", "half-even, 4 decimals"}}},
            {"summaries", list}};
}

std::string summaries_to_csv(std::span<const MethodSummary> summaries) {
    std::ostringstream out;
    out << "method_id,dataset_id,mean_dice,n_units\n";
    for (const auto& s : summaries) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", s.mean_dice);
        out << s.method_id << ',' << s.dataset_id << ',' << buf << ',' << s.n_units << "\n";
    }
    return out.str();
}

std::vector<MethodSummary> summaries_from_json(const json& j) {
    const json& list = j.is_object() && j.contains("summaries") ? j.at("summaries") : j;
    if (!list.is_array()) {
        throw Error(ErrorCode::SchemaViolation, "summaries must be an array");
    }
    std::vector<MethodSummary> out;
    try {
        for (const auto& e : list) {
            MethodSummary s{e.at("method_id").get<std::string>(),
                            e.at("dataset_id").get<std::string>(),
                            e.at("mean_dice").get<double>(), e.value("n_units", std::size_t{1})};
            if (!(s.mean_dice >= 0.0 && s.mean_dice <= 1.0)) {
                throw Error(ErrorCode::SchemaViolation, "mean_dice outside [0, 1] for " + s.method_id);
            }
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("summary: ") + e.what());
    }
    return out;
}

std::vector<MethodSummary> load_summaries(const std::filesystem::path& path) {
    try {
        return summaries_from_json(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
}

json radar_series(std::span<const MethodSummary> summaries) {
    std::vector<std::string> axes;
    std::vector<std::string> methods;
    std::map<std::pair<std::string, std::string>, double> values;
    for (const auto& s : summaries) {
        if (std::find(axes.begin(), axes.end(), s.dataset_id) == axes.end()) {
            axes.push_back(s.dataset_id);
        }
        if (std::find(methods.begin(), methods.end(), s.method_id) == methods.end()) {
            methods.push_back(s.method_id);
        }
        values[{s.method_id, s.dataset_id}] = s.mean_dice;
    }
    json series = json::array();
    for (const auto& m : methods) {
        json vals = json::array();
        for (const auto& a : axes) {
            const auto it = values.find({m, a});
            vals.push_back(it == values.end() ? json(nullptr) : json(it->second));
        }
        series.push_back({{"method", m}, {"values", vals}});
    }
    return {{"axes", axes}, {"series", series}};
}

} // namespace conceptseg
