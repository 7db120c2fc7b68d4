#include "conceptseg/agent.hpp"
#include "conceptseg/codec.hpp"
#include "conceptseg/components.hpp"
#include "conceptseg/conformance.hpp"
#include "conceptseg/datasets.hpp"
#include "conceptseg/metrics.hpp"
#include "conceptseg/prompts.hpp"
#include "conceptseg/runner.hpp"
#include "conceptseg/toy.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace conceptseg;
using nlohmann::json;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const MaskArray& a) {
    if (a.ndim() != 2) {
        throw Error(ErrorCode::DimensionMismatch, "mask must be a 2D array");
    }
    const auto h = static_cast<int>(a.shape(0));
    const auto w = static_cast<int>(a.shape(1));
    return BinaryMask(w, h, std::span<const std::uint8_t>(a.data(), a.size()));
}

py::array_t<bool> from_mask(const BinaryMask& m) {
    py::array_t<bool> out({m.height(), m.width()});
    auto* dst = out.mutable_data();
    const auto bits = m.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) {
        dst[i] = bits[i] != 0;
    }
    return out;
}

py::object to_py(const json& j) {
    switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
        py::list l;
        for (const auto& e : j) {
            l.append(to_py(e));
        }
        return l;
    }
    case json::value_t::object: {
        py::dict d;
        for (const auto& [k, v] : j.items()) {
            d[py::str(k)] = to_py(v);
        }
        return d;
    }
    default: return py::none();
    }
}

json from_py(const py::handle& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::tuple box_tuple(const BoxPrompt& b) { return py::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max); }

py::dict row_dict(const EvalRow& r) {
    py::dict d;
    d["dataset_id"] = r.dataset_id;
    d["case_id"] = r.case_id;
    d["target_id"] = r.target_id;
    d["frame_index"] = r.frame_index;
    d["method_id"] = r.method_id;
    d["prompt_mode"] = r.prompt_mode;
    d["dice"] = r.dice;
    return d;
}

py::list summary_list(const std::vector<MethodSummary>& summaries) {
    py::list out;
    for (const auto& s : summaries) {
        py::dict d;
        d["method_id"] = s.method_id;
        d["dataset_id"] = s.dataset_id;
        d["mean_dice"] = s.mean_dice;
        d["n_units"] = s.n_units;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_conceptseg, m) {
    m.doc() = "Concept segmentation evaluation core";

    // Held for the interpreter's lifetime; carries the error code as `.code`.
    static PyObject* error_type = PyErr_NewException("conceptseg._conceptseg.ConceptSegError", PyExc_ValueError, nullptr);
    m.attr("ConceptSegError") = py::handle(error_type);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object err = py::handle(error_type)(e.what());
            err.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, err.ptr());
        }
    });

    m.def("validate_phrase", [](const std::string& raw) { return validate_phrase(raw).text(); },
          py::arg("phrase"), "Normalized phrase; raises when it breaks the 3-word rule.");

    m.def("dice", [](const MaskArray& pred, const MaskArray& gt) { return dice(to_mask(pred), to_mask(gt)); },
          py::arg("pred"), py::arg("gt"));
    m.def("dice_counts",
          [](const MaskArray& pred, const MaskArray& gt) {
              const auto c = dice_counts(to_mask(pred), to_mask(gt));
              return py::make_tuple(c.intersection, c.pred, c.gt);
          },
          py::arg("pred"), py::arg("gt"), "(intersection, |pred|, |gt|)");

    m.def("encode_rle", [](const MaskArray& mask) { return to_py(rle_to_json(encode_rle(to_mask(mask)))); },
          py::arg("mask"));
    m.def("decode_rle", [](const py::dict& rle) { return from_mask(decode_rle(rle_from_json(from_py(rle)))); },
          py::arg("rle"));

    m.def("largest_component_box",
          [](const MaskArray& mask, int connectivity) {
              return box_tuple(largest_component_box(to_mask(mask), connectivity_from_int(connectivity)));
          },
          py::arg("mask"), py::arg("connectivity") = 8, "(x_min, y_min, x_max, y_max), inclusive.");

    m.def("registry_phrases",
          [](const std::string& dataset_id) {
              std::vector<std::pair<std::string, std::string>> out;
              for (const auto& e : registry_phrases(dataset_id)) {
                  out.emplace_back(e.target_id, e.phrase.text());
              }
              return out;
          },
          py::arg("dataset_id"));
    m.def("registry_datasets", [] { return PhraseRegistry::builtin().dataset_ids(); });

    m.def("train_count", &train_count, py::arg("n_cases"));
    m.def("split_manifest",
          [](const std::string& path, std::uint64_t seed, const std::string& out) {
              save_manifest(split_cases(load_manifest(path), seed), out);
          },
          py::arg("manifest"), py::arg("seed"), py::arg("out"));
    m.def("validate_manifest",
          [](const std::string& path, bool lazy) {
              const auto report = validate_manifest(path, lazy ? FileCheck::Lazy : FileCheck::Strict);
              py::list out;
              for (const auto& c : report.checks) {
                  py::dict d;
                  d["name"] = c.name;
                  d["passed"] = c.passed;
                  d["code"] = std::string(to_string(c.code));
                  d["details"] = c.details;
                  out.append(d);
              }
              return out;
          },
          py::arg("manifest"), py::arg("lazy") = false);

    m.def("summarize_rows",
          [](const std::string& rows_csv, const std::string& aggregation) {
              return summary_list(summarize(read_rows_csv(rows_csv), aggregation_from_string(aggregation)));
          },
          py::arg("rows_csv"), py::arg("aggregation") = "volume");
    m.def("round_half_even", &round_half_even, py::arg("value"), py::arg("digits") = 4);

    m.def("arrow_checks", [] {
        py::list out;
        for (const auto& c : check_arrow_consistency(ReferenceFixture::builtin())) {
            py::dict d;
            d["table"] = c.table;
            d["dataset"] = c.dataset;
            d["method"] = c.method;
            d["recomputed"] = c.recomputed;
            d["printed"] = c.printed;
            d["known_discrepancy"] = c.known_discrepancy;
            d["within_tolerance"] = within_tolerance(c);
            out.append(d);
        }
        return out;
    });

    m.def("parse_action", [](const std::string& raw) { return to_py(parse_action(raw).to_json()); },
          py::arg("raw"));

    m.def("write_toy_suite",
          [](const std::string& out, int cases, std::uint64_t seed, std::vector<std::string> lexicon,
             std::vector<std::string> targets, int size) {
              ToySuiteSpec spec;
              spec.cases = cases;
              spec.seed = seed;
              spec.targets = std::move(targets);
              spec.scene.width = size;
              spec.scene.height = size;
              spec.scene.object_count = static_cast<int>(lexicon.size());
              spec.scene.shapes = {ShapeKind::Disk, ShapeKind::Rectangle};
              spec.scene.lexicon = std::move(lexicon);
              spec.scene.min_size = 4;
              spec.scene.max_size = 8;
              const auto suite = write_toy_suite(spec, out);
              return py::make_tuple(suite.manifest_path.string(), suite.scene_index_path.string());
          },
          py::arg("out"), py::arg("cases") = 10, py::arg("seed") = 0,
          py::arg("lexicon") = std::vector<std::string>{"tumor", "cyst"},
          py::arg("targets") = std::vector<std::string>{"tumor"}, py::arg("size") = 48,
          "Returns (manifest path, scene index path).");

    m.def("run_toy_eval",
          [](const std::string& manifest, const std::string& world, const std::string& scenes,
             const std::string& mode, int jobs) {
              ToyBackend backend(ToyWorldConfig::from_json(json::parse(read_text_file(world))),
                                 std::filesystem::path(scenes));
              RunSpec spec;
              spec.method_id = "toy " + std::string(mode_label(prompt_mode_from_string(mode)));
              spec.prompt_mode = prompt_mode_from_string(mode);
              spec.backend = "toy:" + world;
              spec.manifest = manifest;
              spec.jobs = jobs;
              RunResult result;
              {
                  py::gil_scoped_release release;
                  result = run_eval(spec, backend);
              }
              py::list rows;
              for (const auto& r : result.rows) {
                  rows.append(row_dict(r));
              }
              py::dict d;
              d["rows"] = rows;
              d["summaries"] = summary_list(summarize(result.rows));
              d["skipped"] = result.skipped.size();
              d["failed"] = result.failed.size();
              return d;
          },
          py::arg("manifest"), py::arg("world"), py::arg("scenes"), py::arg("mode") = "TEXT",
          py::arg("jobs") = 1);
}
