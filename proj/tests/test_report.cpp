#include "conceptseg/codec.hpp"
#include "conceptseg/conformance.hpp"
#include "conceptseg/report.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>

using namespace conceptseg;
using nlohmann::json;

namespace {

std::vector<MethodSummary> small_table() {
    return {{"U-Net", "A", 0.80, 10}, {"Other", "A", 0.70, 10}, {"Ours", "A", 0.85, 10},
            {"U-Net", "B", 0.60, 5},  {"Ours", "B", 0.50, 5},   {"Ours", "C", 0.40, 3}};
}

} // namespace

TEST_SUITE("report") {

TEST_CASE("arrow text") {
    CHECK(arrow_text(0.04970000001) == "↑0.0497");
    CHECK(arrow_text(-0.3016) == "↓0.3016");
    CHECK(arrow_text(0.0) == "=0.0000");
    CHECK(arrow_text(-0.00004) == "=0.0000");
}

TEST_CASE("deltas compare subjects with the best non-subject") {
    const auto s = small_table();
    const auto cells = compute_deltas(s, {"Ours"});
    REQUIRE(cells.size() == 3);
    CHECK(cells[0].dataset_id == "A");
    CHECK(*cells[0].delta == doctest::Approx(0.05));
    CHECK(*cells[1].delta == doctest::Approx(-0.10));
    CHECK_FALSE(cells[2].delta.has_value());  // C has no peer
}

TEST_CASE("rendered table lists peers before subjects") {
    const auto s = small_table();
    const auto text = render_delta_table(s, {"Ours"});
    const auto unet = text.find("U-Net");
    const auto ours = text.find("Ours");
    REQUIRE(unet != std::string::npos);
    REQUIRE(ours != std::string::npos);
    CHECK(unet < ours);
    CHECK(text.find("0.8500 ↑0.0500") != std::string::npos);
    CHECK(text.find("0.5000 ↓0.1000") != std::string::npos);
}

TEST_CASE("summaries json round trip and conventions") {
    const auto s = small_table();
    const auto j = summaries_to_json(s, {"Ours"}, Aggregation::Volume, 8);
    CHECK(j.at("conventions").at("aggregation") == "volume");
    CHECK(j.at("conventions").at("connectivity") == 8);
    const auto back = summaries_from_json(j);
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back[i].method_id == s[i].method_id);
        CHECK(back[i].mean_dice == s[i].mean_dice);
        CHECK(back[i].n_units == s[i].n_units);
    }
    CHECK(summaries_from_json(j.at("summaries")).size() == s.size());
    CHECK_THROWS_AS(summaries_from_json(json::array({{{"method_id", "m"}, {"dataset_id", "d"}, {"mean_dice", 1.2}}})),
                    Error);
    CHECK(conventions_text(Aggregation::SliceMean, 4).find("slice") != std::string::npos);
    CHECK(summaries_to_csv(s).find("U-Net,A,0.8") != std::string::npos);

    testutil::TempDir dir("report");
    write_file_atomic(dir / "s.json", j.dump());
    CHECK(load_summaries(dir / "s.json").size() == s.size());
}

TEST_CASE("radar series marks absent cells") {
    const auto s = small_table();
    const auto r = radar_series(s);
    CHECK(r.at("axes") == json::array({"A", "B", "C"}));
    bool saw_unet = false;
    for (const auto& series : r.at("series")) {
        if (series.at("method") == "U-Net") {
            saw_unet = true;
            CHECK(series.at("values")[2].is_null());
            CHECK(series.at("values")[0] == 0.8);
        }
    }
    CHECK(saw_unet);
}

TEST_CASE("reference 3d table arrows render from its means") {
    const auto& t = ReferenceFixture::builtin().table("benchmark_3d");
    const auto summaries = t.summaries();
    const auto cells = compute_deltas(summaries, {t.subjects.begin(), t.subjects.end()});
    REQUIRE(cells.size() == t.datasets.size());
    const auto& printed = t.arrows.at("SAM 3 T");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto col = static_cast<std::size_t>(
            std::find(t.datasets.begin(), t.datasets.end(), cells[i].dataset_id) - t.datasets.begin());
        REQUIRE(col < printed.size());
        CHECK(arrow_text(*cells[i].delta) == arrow_text(printed[col]));
    }
    const auto text = render_delta_table(summaries, {t.subjects.begin(), t.subjects.end()});
    CHECK(text.find("↓0.3016") != std::string::npos);
    CHECK(text.find("↓0.6536") != std::string::npos);
}

} // TEST_SUITE
