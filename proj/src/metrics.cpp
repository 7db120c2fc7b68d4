#include "conceptseg/metrics.hpp"

#include "conceptseg/codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace conceptseg {

DiceCounts dice_counts(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_shape(gt)) {
        throw Error(ErrorCode::DimensionMismatch, "dice: prediction and ground truth differ in size");
    }
    DiceCounts c;
    const auto p = pred.bits();
    const auto g = gt.bits();
    for (std::size_t i = 0; i < p.size(); ++i) {
        c.intersection += p[i] & g[i];
        c.pred += p[i];
        c.gt += g[i];
    }
    return c;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) { return dice_counts(pred, gt).dice(); }

namespace {

void check_volume(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
    if (pred.size() != gt.size()) {
        throw Error(ErrorCode::DimensionMismatch, "volume frame counts differ");
    }
}

} // namespace

double volume_dice(std::span<const BinaryMask> pred_frames, std::span<const BinaryMask> gt_frames) {
    check_volume(pred_frames, gt_frames);
    DiceCounts total;
    for (std::size_t i = 0; i < pred_frames.size(); ++i) {
        total += dice_counts(pred_frames[i], gt_frames[i]);
    }
    return total.dice();
}

double slice_mean_dice(std::span<const BinaryMask> pred_frames,
                       std::span<const BinaryMask> gt_frames) {
    check_volume(pred_frames, gt_frames);
    if (pred_frames.empty()) {
        return 1.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_frames.size(); ++i) {
        sum += dice(pred_frames[i], gt_frames[i]);
    }
    return sum / static_cast<double>(pred_frames.size());
}

std::string_view to_string(Aggregation a) { return a == Aggregation::Volume ? "volume" : "slice-mean"; }

Aggregation aggregation_from_string(std::string_view text) {
    if (text == "volume") {
        return Aggregation::Volume;
    }
    if (text == "slice-mean") {
        return Aggregation::SliceMean;
    }
    throw Error(ErrorCode::InvalidArgument, "aggregation must be volume or slice-mean");
}

namespace {

using GroupKey = std::tuple<std::string, std::string>;                 // dataset, method
using UnitKey = std::tuple<std::string, std::string>;                  // case, target

struct Grouped {
    // (dataset, method) -> (case, target) -> frame rows
    std::map<GroupKey, std::map<UnitKey, std::vector<const EvalRow*>>> groups;
};

Grouped group_rows(std::span<const EvalRow> rows) {
    Grouped g;
    std::set<std::tuple<std::string, std::string, std::string, int, std::string>> seen;
    for (const auto& r : rows) {
        if (!(r.dice >= 0.0 && r.dice <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "row dice outside [0, 1] for case " + r.case_id);
        }
        if (!seen.emplace(r.dataset_id, r.case_id, r.target_id, r.frame_index, r.method_id).second) {
            throw Error(ErrorCode::InvalidArgument,
                        "duplicate row key (" + r.dataset_id + ", " + r.case_id + ", " +
                            r.target_id + ", " + std::to_string(r.frame_index) + ", " +
                            r.method_id + ")");
        }
        g.groups[{r.dataset_id, r.method_id}][{r.case_id, r.target_id}].push_back(&r);
    }
    return g;
}

double reduce_frames(std::vector<const EvalRow*> frames, Aggregation aggregation) {
    if (frames.size() == 1) {
        return frames.front()->dice;
    }
    std::sort(frames.begin(), frames.end(),
              [](const EvalRow* a, const EvalRow* b) { return a->frame_index < b->frame_index; });
    if (aggregation == Aggregation::SliceMean) {
        double sum = 0.0;
        for (const auto* f : frames) {
            sum += f->dice;
        }
        return sum / static_cast<double>(frames.size());
    }
    DiceCounts total;
    for (const auto* f : frames) {
        if (!f->counts) {
            throw Error(ErrorCode::InvalidArgument,
                        "volume Dice needs pixel counts on every frame row (case " + f->case_id + ")");
        }
        total += *f->counts;
    }
    return total.dice();
}

} // namespace

std::vector<CaseScore> case_scores(std::span<const EvalRow> rows, Aggregation aggregation) {
    const auto grouped = group_rows(rows);
    std::vector<CaseScore> out;
    for (const auto& [gkey, units] : grouped.groups) {
        // case -> target scores (units are sorted by case then target)
        std::map<std::string, std::vector<double>> per_case;
        for (const auto& [ukey, frames] : units) {
            per_case[std::get<0>(ukey)].push_back(reduce_frames(frames, aggregation));
        }
        for (const auto& [case_id, targets] : per_case) {
            double sum = 0.0;
            for (double t : targets) {
                sum += t;
            }
            out.push_back({std::get<0>(gkey), std::get<1>(gkey), case_id,
                           sum / static_cast<double>(targets.size())});
        }
    }
    return out;
}

std::vector<MethodSummary> summarize(std::span<const EvalRow> rows, Aggregation aggregation) {
    std::map<GroupKey, std::vector<double>> per_group;
    for (const auto& c : case_scores(rows, aggregation)) {
        per_group[{c.dataset_id, c.method_id}].push_back(c.dice);
    }
    std::vector<MethodSummary> out;
    for (const auto& [key, scores] : per_group) {
        if (scores.empty()) {
            throw Error(ErrorCode::EmptyGroup, "no units for " + std::get<1>(key));
        }
        double sum = 0.0;
        for (double s : scores) {
            sum += s;
        }
        out.push_back({std::get<1>(key), std::get<0>(key), sum / static_cast<double>(scores.size()),
                       scores.size()});
    }
    return out;
}

double delta_vs_best(const MethodSummary& subject, std::span<const MethodSummary> others) {
    if (others.empty()) {
        throw Error(ErrorCode::EmptyGroup, "delta_vs_best needs at least one other method");
    }
    double best = -1.0;
    for (const auto& o : others) {
        if (o.dataset_id != subject.dataset_id) {
            throw Error(ErrorCode::DatasetMismatch, "comparing " + subject.dataset_id + " with " +
                                                        o.dataset_id);
        }
        best = std::max(best, o.mean_dice);
    }
    return subject.mean_dice - best;
}

std::vector<CaseDelta> per_case_series(std::span<const EvalRow> rows_a,
                                       std::span<const EvalRow> rows_b, Aggregation aggregation) {
    auto to_map = [&](std::span<const EvalRow> rows) {
        std::map<std::string, double> m;
        const auto scores = case_scores(rows, aggregation);
        std::set<std::pair<std::string, std::string>> groups;
        for (const auto& c : scores) {
            groups.emplace(c.dataset_id, c.method_id);
            m[c.case_id] = c.dice;
        }
        if (groups.size() > 1) {
            throw Error(ErrorCode::InvalidArgument,
                        "per-case series expects one dataset/method per side");
        }
        return m;
    };
    const auto a = to_map(rows_a);
    const auto b = to_map(rows_b);
    std::vector<CaseDelta> out;
    for (const auto& [case_id, da] : a) {
        const auto it = b.find(case_id);
        if (it == b.end()) {
            throw Error(ErrorCode::CaseSetMismatch, "case " + case_id + " missing from second method");
        }
        out.push_back({case_id, da, it->second, da - it->second});
    }
    if (a.size() != b.size()) {
        for (const auto& [case_id, _] : b) {
            if (!a.contains(case_id)) {
                throw Error(ErrorCode::CaseSetMismatch, "case " + case_id + " missing from first method");
            }
        }
    }
    return out;
}

double round_half_even(double value, int digits) {
    const double scale = std::pow(10.0, digits);
    const double scaled = value * scale;
    const double floor_v = std::floor(scaled);
    const double frac = scaled - floor_v;
    constexpr double eps = 1e-9;
    double rounded = 0.0;
    if (std::abs(frac - 0.5) < eps) {
        rounded = std::fmod(floor_v, 2.0) == 0.0 ? floor_v : floor_v + 1.0;
    } else {
        rounded = std::round(scaled);
    }
    return rounded / scale;
}

std::string format_dice(double value) {
    char buf[32];
    const double r = round_half_even(value, 4);
    std::snprintf(buf, sizeof buf, "%.4f", r == 0.0 ? 0.0 : r);
    return buf;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

constexpr const char* kRowsHeader =
    "dataset_id,case_id,target_id,frame_index,method_id,prompt_mode,dice,intersection,pred_area,gt_area";

} // namespace

std::string rows_to_csv(std::span<const EvalRow> rows) {
    std::ostringstream out;
    out << kRowsHeader << "\n";
    for (const auto& r : rows) {
        out << csv_field(r.dataset_id) << ',' << csv_field(r.case_id) << ','
            << csv_field(r.target_id) << ',' << r.frame_index << ',' << csv_field(r.method_id)
            << ',' << csv_field(r.prompt_mode) << ',' << exact(r.dice) << ',';
        if (r.counts) {
            out << r.counts->intersection << ',' << r.counts->pred << ',' << r.counts->gt;
        } else {
            out << ",,";
        }
        out << "\n";
    }
    return out.str();
}

void write_rows_csv(const std::filesystem::path& path, std::span<const EvalRow> rows) {
    write_file_atomic(path, rows_to_csv(rows));
}

std::vector<EvalRow> rows_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line).size() < 7) {
        throw Error(ErrorCode::SchemaViolation, "rows CSV lacks the expected header");
    }
    const auto header = split_csv_line(line);
    const bool has_counts = header.size() >= 10;
    std::vector<EvalRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw Error(ErrorCode::SchemaViolation, "rows CSV line " + std::to_string(lineno) +
                                                        " has " + std::to_string(f.size()) +
                                                        " fields");
        }
        EvalRow r;
        r.dataset_id = f[0];
        r.case_id = f[1];
        r.target_id = f[2];
        r.method_id = f[4];
        r.prompt_mode = f[5];
        try {
            r.frame_index = std::stoi(f[3]);
            r.dice = std::stod(f[6]);
            if (has_counts && !f[7].empty()) {
                r.counts = DiceCounts{std::stoull(f[7]), std::stoull(f[8]), std::stoull(f[9])};
            }
        } catch (const std::exception&) {
            throw Error(ErrorCode::SchemaViolation, "rows CSV line " + std::to_string(lineno) +
                                                        ": bad number");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<EvalRow> read_rows_csv(const std::filesystem::path& path) {
    return rows_from_csv(read_text_file(path));
}

std::string series_to_csv(std::span<const CaseDelta> series) {
    std::ostringstream out;
    out << "case_id,dice_a,dice_b,delta\n";
    for (const auto& s : series) {
        out << csv_field(s.case_id) << ',' << exact(s.dice_a) << ',' << exact(s.dice_b) << ','
            << exact(s.delta) << "\n";
    }
    return out.str();
}

} // namespace conceptseg
