#include "conceptseg/conformance.hpp"

#include "conceptseg/codec.hpp"
#include "embedded_data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace conceptseg {

using nlohmann::json;

std::vector<MethodSummary> ReferenceTable::summaries() const {
    std::vector<MethodSummary> out;
    for (const auto& [method, values] : rows) {
        for (std::size_t i = 0; i < datasets.size(); ++i) {
            out.push_back({method, datasets[i], values[i], 1});
        }
    }
    return out;
}

namespace {

std::vector<CellRef> cell_refs(const json& j, const char* key) {
    std::vector<CellRef> out;
    if (!j.contains(key)) {
        return out;
    }
    for (const auto& e : j.at(key)) {
        out.push_back({e.at("table").get<std::string>(), e.at("dataset").get<std::string>(),
                       e.at("method").get<std::string>(), e.value("note", std::string{})});
    }
    return out;
}

void require(bool cond, const std::string& message) {
    if (!cond) {
        throw Error(ErrorCode::SchemaViolation, message);
    }
}

} // namespace

ReferenceFixture ReferenceFixture::from_json(const json& j) {
    ReferenceFixture f;
    try {
        for (const auto& t : j.at("tables")) {
            ReferenceTable table;
            table.id = t.at("id").get<std::string>();
            table.title = t.value("title", std::string{});
            table.datasets = t.at("datasets").get<std::vector<std::string>>();
            table.reference_methods = t.value("reference_methods", std::vector<std::string>{});
            table.subjects = t.value("subjects", std::vector<std::string>{});
            table.rows = t.at("rows").get<std::map<std::string, std::vector<double>>>();
            table.arrows = t.value("arrows", std::map<std::string, std::vector<double>>{});
            for (const auto& [method, values] : table.rows) {
                require(values.size() == table.datasets.size(),
                        table.id + "/" + method + ": row length differs from dataset count");
                for (double v : values) {
                    require(v >= 0.0 && v <= 1.0, table.id + "/" + method + ": cell outside [0, 1]");
                }
            }
            for (const auto& [method, values] : table.arrows) {
                require(values.size() == table.datasets.size(),
                        table.id + "/" + method + ": arrow row length differs from dataset count");
                require(table.rows.contains(method), table.id + "/" + method + ": arrow without row");
                for (double v : values) {
                    require(std::isfinite(v), table.id + "/" + method + ": non-finite arrow");
                }
            }
            for (const auto& m : table.reference_methods) {
                require(table.rows.contains(m), table.id + ": unknown reference method " + m);
            }
            f.tables.push_back(std::move(table));
        }
        f.known_discrepancies = cell_refs(j, "known_discrepancies");
        f.same_run_unknown = cell_refs(j, "same_run_unknown");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("reference fixture: ") + e.what());
    }
    return f;
}

ReferenceFixture ReferenceFixture::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
}

const ReferenceFixture& ReferenceFixture::builtin() {
    static const ReferenceFixture fixture =
        from_json(json::parse(embedded::reference_tables_json()));
    return fixture;
}

const ReferenceTable& ReferenceFixture::table(const std::string& id) const {
    for (const auto& t : tables) {
        if (t.id == id) {
            return t;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "no reference table " + id);
}

bool ReferenceFixture::is_known_discrepancy(const std::string& t, const std::string& d,
                                            const std::string& m) const {
    return std::any_of(known_discrepancies.begin(), known_discrepancies.end(),
                       [&](const CellRef& c) { return c.matches(t, d, m); });
}

std::vector<ArrowCheck> check_arrow_consistency(const ReferenceTable& table,
                                                const ReferenceFixture& fixture) {
    std::vector<ArrowCheck> out;
    for (const auto& [method, printed] : table.arrows) {
        const auto& subject_row = table.rows.at(method);
        for (std::size_t i = 0; i < table.datasets.size(); ++i) {
            const auto& dataset = table.datasets[i];
            std::vector<MethodSummary> others;
            for (const auto& ref : table.reference_methods) {
                if (ref != method) {
                    others.push_back({ref, dataset, table.rows.at(ref)[i], 1});
                }
            }
            const MethodSummary subject{method, dataset, subject_row[i], 1};
            const double recomputed = delta_vs_best(subject, others);
            out.push_back({table.id, dataset, method, recomputed, printed[i],
                           std::abs(recomputed - printed[i]),
                           fixture.is_known_discrepancy(table.id, dataset, method)});
        }
    }
    return out;
}

std::vector<ArrowCheck> check_arrow_consistency(const ReferenceFixture& fixture) {
    std::vector<ArrowCheck> out;
    for (const auto& t : fixture.tables) {
        auto part = check_arrow_consistency(t, fixture);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

bool within_tolerance(const ArrowCheck& c, double tolerance) {
    // Printed values carry four decimals; the slack absorbs binary representation error.
    return c.abs_diff <= tolerance + 1e-12;
}

std::vector<ArrowCheck> unexpected_discrepancies(const std::vector<ArrowCheck>& checks,
                                                 double tolerance) {
    std::vector<ArrowCheck> out;
    for (const auto& c : checks) {
        if (!within_tolerance(c, tolerance) && !c.known_discrepancy) {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<PhraseCheck> check_phrase_fixture(const json& registry_doc,
                                              const std::vector<std::string>& injected) {
    std::vector<PhraseCheck> out;
    auto run = [&](const std::string& dataset, const std::string& target, const std::string& raw) {
        PhraseCheck c{dataset, target, raw, false, {}};
        try {
            c.phrase = validate_phrase(raw).text();
            c.passed = true;
        } catch (const Error& e) {
            c.message = e.what();
        }
        out.push_back(std::move(c));
    };
    try {
        for (const auto& [dataset, entries] : registry_doc.at("datasets").items()) {
            for (const auto& e : entries) {
                run(dataset, e.at("target_id").get<std::string>(), e.at("phrase").get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("phrase registry: ") + e.what());
    }
    for (const auto& raw : injected) {
        run("<injected>", "", raw);
    }
    return out;
}

std::vector<PhraseCheck> check_phrase_fixture(const std::vector<std::string>& injected) {
    return check_phrase_fixture(json::parse(embedded::phrase_registry_json()), injected);
}

std::string format_arrow_report(const std::vector<ArrowCheck>& checks) {
    std::ostringstream out;
    for (const auto& c : checks) {
        const char* status = within_tolerance(c) ? "ok" : (c.known_discrepancy ? "KNOWN" : "MISMATCH");
        char line[256];
        std::snprintf(line, sizeof line, "%-8s %-16s %-14s %-14s recomputed=%+.4f printed=%+.4f diff=%.4f\n",
                      status, c.table.c_str(), c.dataset.c_str(), c.method.c_str(), c.recomputed,
                      c.printed, c.abs_diff);
        out << line;
    }
    return out.str();
}

} // namespace conceptseg
